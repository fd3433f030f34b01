#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <vector>

#include "hill/common.hpp"
#include "hill/potential.hpp"

namespace hill {

using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

inline constexpr double cluster_radius_rel = 1e-6;   // algebraic multiplicity by clustering
inline constexpr double rank_gap_rel = 1e-7;         // geometric multiplicity by singular values
inline constexpr double certify_tol_rel = 1e-8;

// H(t) in the basis e^{i(2 pi k + t)x}, |k| <= M: diagonal (2 pi k + t)^2, entry (k, m) = q_{k-m}.
inline Mat floquet_matrix(const PotentialSpec& p, double t, int M)
{
    const int N = 2 * M + 1;
    Mat H = Mat::Zero(N, N);
    for (int i = 0; i < N; ++i) {
        const double w = two_pi * (i - M) + t;
        H(i, i) = w * w;
        for (int j = 0; j < N; ++j)
            if (i != j)
                H(i, j) = p[(i - M) - (j - M)];
    }
    return H;
}

// Order in which operator indices appear along the real axis for quasimomentum t;
// ties at t = 0 and t = pi are broken by the limit from inside (0, pi).
inline std::vector<int> index_order(double t, int M)
{
    double te = t;
    if (t == 0.0)
        te = 1e-9;
    else if (t == pi)
        te = pi - 1e-9;
    std::vector<int> idx(2 * M + 1);
    std::iota(idx.begin(), idx.end(), -M);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        const double wa = two_pi * a + te, wb = two_pi * b + te;
        return wa * wa < wb * wb;
    });
    return idx;
}

struct OracleSpectrum {
    double t = 0.0;
    int M = 0;
    Mat H;
    std::vector<cplx> eigenvalues;   // sorted by |lambda|
    Mat eigenvectors;                // unit columns, same order
    Mat duals;                       // chi: dual vectors with chi^H c = 1 on each cluster
    std::vector<double> residuals;   // ||(H - lambda) v||
    std::vector<int> cluster_size;   // eigenvalues within the clustering radius (self included)
    std::vector<int> geometric;      // dimension of the numerical null space for clustered values
    std::map<int, int> pairing;      // operator index n -> column
    std::map<int, bool> low_index_cluster;
    bool certified = false;
    int certified_up_to = -1;        // largest |n| compared against the refined truncation
    double certification_error = 0.0;

    int column(int n) const
    {
        auto it = pairing.find(n);
        if (it == pairing.end())
            throw std::out_of_range("index " + std::to_string(n) + " outside the truncation");
        return it->second;
    }
    cplx lambda(int n) const { return eigenvalues[column(n)]; }
    bool defective(int col) const { return cluster_size[col] > geometric[col]; }
    // Coefficient of e^{i(2 pi k + t)x} in a column vector.
    cplx coeff(const Vec& v, int k) const { return std::abs(k) > M ? cplx{} : v(k + M); }
};

struct OracleOptions {
    bool certify = true;
    int certify_M = 0;  // 0: 2M
    bool duals = true;  // adjoint eigensolve and multiplicity tests
};

namespace detail {

inline void sort_by_modulus(std::vector<cplx>& ev, Mat& V)
{
    std::vector<int> ord(ev.size());
    std::iota(ord.begin(), ord.end(), 0);
    std::stable_sort(ord.begin(), ord.end(), [&](int a, int b) {
        const double ma = std::abs(ev[a]), mb = std::abs(ev[b]);
        if (ma != mb)
            return ma < mb;
        if (ev[a].real() != ev[b].real())
            return ev[a].real() < ev[b].real();
        return ev[a].imag() < ev[b].imag();
    });
    std::vector<cplx> e2(ev.size());
    Mat V2(V.rows(), V.cols());
    for (std::size_t i = 0; i < ord.size(); ++i) {
        e2[i] = ev[ord[i]];
        V2.col(i) = V.col(ord[i]);
    }
    ev = std::move(e2);
    V = std::move(V2);
}

inline double cluster_radius(cplx lam) { return cluster_radius_rel * (1.0 + std::abs(lam)); }

inline double matrix_scale(const Mat& H) { return H.cwiseAbs().rowwise().sum().maxCoeff(); }

inline double rounding_radius(double hnorm) { return 100.0 * std::numeric_limits<double>::epsilon() * hnorm; }

}  // namespace detail

inline constexpr double parallel_overlap = 0.99;

// Geometric multiplicity as the dimension of the numerical null space of H - lambda I.
inline int svd_multiplicity(const Mat& H, cplx lambda)
{
    const int N = int(H.rows());
    Eigen::BDCSVD<Mat> svd(H - lambda * Mat::Identity(N, N));
    const auto& sv = svd.singularValues();
    int g = 0;
    for (int k = 0; k < sv.size(); ++k)
        if (sv(k) < rank_gap_rel * (1.0 + std::abs(lambda)))
            ++g;
    return g;
}

struct ReducedMultiplicity {
    bool ok = false;
    int geometric = 0;
    double nilpotent = 0.0;  // max entry of the trace-free reduced matrix
    double splitting = 0.0;  // |mu|, half the eigenvalue split it implies
    double noise = 0.0;
};

// Multiplicity test on the Schur complement of H - lambda I onto the m basis
// vectors nearest to lambda. Its trace-free part N vanishes for a semisimple
// multiple eigenvalue and is nonzero nilpotent for a Jordan block; entries
// carry running error bounds, so exponentially small couplings are still seen.
inline ReducedMultiplicity reduced_multiplicity(const Mat& H, double t, int M, cplx lambda, int m, double spread)
{
    ReducedMultiplicity r;
    const int N = int(H.rows());
    std::vector<int> idx(N);
    std::iota(idx.begin(), idx.end(), 0);
    auto energy = [&](int i) { return std::pow(two_pi * (i - M) + t, 2); };
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return std::abs(energy(a) - lambda) < std::abs(energy(b) - lambda); });
    std::vector<int> P(idx.begin(), idx.begin() + m), Q(idx.begin() + m, idx.end());
    std::sort(P.begin(), P.end());
    std::sort(Q.begin(), Q.end());
    const int nq = int(Q.size());
    Mat HQQ(nq, nq), HQP(nq, m), HPQ(m, nq), HPP(m, m);
    for (int a = 0; a < nq; ++a) {
        for (int b = 0; b < nq; ++b)
            HQQ(a, b) = H(Q[a], Q[b]);
        HQQ(a, a) -= lambda;
        for (int b = 0; b < m; ++b) {
            HQP(a, b) = H(Q[a], P[b]);
            HPQ(b, a) = H(P[b], Q[a]);
        }
    }
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b)
            HPP(a, b) = a == b ? cplx{} : H(P[a], P[b]);
    double gapQ = std::numeric_limits<double>::infinity();
    for (int q : Q)
        gapQ = std::min(gapQ, std::abs(energy(q) - lambda));
    const double hnorm = detail::matrix_scale(H);
    if (gapQ < 1e-6 * hnorm)
        return r;
    Eigen::PartialPivLU<Mat> lu(HQQ);
    const Mat X = lu.solve(HQP);
    const Mat R = HPQ * X;
    const Eigen::MatrixXd Rabs = HPQ.cwiseAbs() * X.cwiseAbs();
    const double eps = std::numeric_limits<double>::epsilon();
    const double cond = hnorm / gapQ;
    const double dl = spread + detail::rounding_radius(hnorm);
    double Ebar = 0.0;
    for (int p : P)
        Ebar += energy(p);
    Ebar /= m;
    cplx Rbar{};
    double Rabs_bar = 0.0;
    for (int a = 0; a < m; ++a) {
        Rbar += R(a, a);
        Rabs_bar += Rabs(a, a);
    }
    Rbar /= double(m);
    Rabs_bar /= m;
    Mat Nm(m, m);
    double noise = 0.0;
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) {
            double nz = 0.0;
            if (a == b) {
                // E_a - Ebar from exact integer differences: (w_a - w_c)(w_a + w_c) averaged
                double dE = 0.0, dEabs = 0.0;
                const double wa = two_pi * (P[a] - M) + t;
                for (int c : P) {
                    const double wc = two_pi * (c - M) + t;
                    const double term = two_pi * double(P[a] - c) * (wa + wc);
                    dE += term;
                    dEabs += std::abs(term);
                }
                dE /= m;
                Nm(a, a) = dE - (R(a, a) - Rbar);
                nz = eps * (4.0 * dEabs / m + cond * (Rabs(a, a) + Rabs_bar));
            } else {
                Nm(a, b) = HPP(a, b) - R(a, b);
                nz = eps * (4.0 * std::abs(HPP(a, b)) + cond * Rabs(a, b));
            }
            nz += dl * Rabs(a, b) / gapQ;
            noise = std::max(noise, nz);
        }
    r.ok = true;
    r.noise = noise;
    r.nilpotent = Nm.cwiseAbs().maxCoeff();
    const double thr = 100.0 * noise;
    if (m == 2) {
        r.splitting = std::abs(std::sqrt(Nm(0, 0) * Nm(0, 0) + Nm(0, 1) * Nm(1, 0)));
        if (r.nilpotent <= thr)
            r.geometric = 2;
        else
            r.geometric = r.splitting < 1e-2 * r.nilpotent ? 1 : 2;
        return r;
    }
    Eigen::JacobiSVD<Mat> svd(Nm);
    int rank = 0;
    for (int k = 0; k < m; ++k)
        if (svd.singularValues()(k) > thr)
            ++rank;
    r.geometric = m - rank;
    return r;
}

inline OracleSpectrum oracle_spectrum(const PotentialSpec& p, double t, int M, const OracleOptions& opt = {})
{
    if (M < 8)
        throw ValidationError("truncation M must be at least 8");
    if (!(t > -pi && t <= pi))
        throw ValidationError("quasimomentum must lie in (-pi, pi]");
    OracleSpectrum S;
    S.t = t;
    S.M = M;
    S.H = floquet_matrix(p, t, M);
    const int N = 2 * M + 1;

    Eigen::ComplexEigenSolver<Mat> es(S.H, true);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("eigen-solver failure");
    S.eigenvalues.assign(es.eigenvalues().data(), es.eigenvalues().data() + N);
    S.eigenvectors = es.eigenvectors();
    for (int i = 0; i < N; ++i)
        S.eigenvectors.col(i).normalize();
    detail::sort_by_modulus(S.eigenvalues, S.eigenvectors);

    S.residuals.resize(N);
    for (int i = 0; i < N; ++i)
        S.residuals[i] = (S.H * S.eigenvectors.col(i) - S.eigenvalues[i] * S.eigenvectors.col(i)).norm();

    // Clusters: eigenvalues equal to rounding, or close with nearly parallel
    // eigenvectors (a split Jordan pair).
    const double hnorm = detail::matrix_scale(S.H);
    S.cluster_size.assign(N, 1);
    S.geometric.assign(N, 1);
    std::vector<int> cluster_id(N, -1);
    std::vector<std::vector<int>> clusters;
    auto joined = [&](int i, int j) {
        const double d = std::abs(S.eigenvalues[j] - S.eigenvalues[i]);
        if (d < detail::rounding_radius(hnorm))
            return true;
        return d < detail::cluster_radius(S.eigenvalues[i]) &&
               std::abs(S.eigenvectors.col(i).dot(S.eigenvectors.col(j))) > parallel_overlap;
    };
    for (int i = 0; i < N; ++i) {
        if (cluster_id[i] >= 0)
            continue;
        std::vector<int> members{i};
        cluster_id[i] = int(clusters.size());
        for (std::size_t m = 0; m < members.size(); ++m)
            for (int j = 0; j < N; ++j)
                if (cluster_id[j] < 0 && joined(members[m], j)) {
                    cluster_id[j] = cluster_id[i];
                    members.push_back(j);
                }
        clusters.push_back(members);
    }

    // Dual vectors: on each cluster, take the adjoint eigenvectors for the conjugate
    // values and form the basis dual to the right eigenvectors.
    std::vector<cplx> aev;
    Mat AV;
    if (opt.duals) {
        Eigen::ComplexEigenSolver<Mat> as(S.H.adjoint(), true);
        if (as.info() != Eigen::Success)
            throw std::runtime_error("adjoint eigen-solver failure");
        aev.assign(as.eigenvalues().data(), as.eigenvalues().data() + N);
        AV = as.eigenvectors();
        for (int i = 0; i < N; ++i)
            AV.col(i).normalize();
        S.duals = Mat::Zero(N, N);
    }
    std::vector<bool> used(N, false);
    for (const auto& members : clusters) {
        const int m = int(members.size());
        cplx mean{};
        for (int i : members)
            mean += S.eigenvalues[i];
        mean /= double(m);
        for (int i : members)
            S.cluster_size[i] = m;
        if (m > 1) {
            double spread = 0.0;
            for (int i : members)
                spread = std::max(spread, std::abs(S.eigenvalues[i] - mean));
            const auto red = reduced_multiplicity(S.H, t, M, mean, m, spread);
            const int g = red.ok ? red.geometric : svd_multiplicity(S.H, mean);
            for (int i : members)
                S.geometric[i] = std::max(1, std::min(g, m));
        }
        if (!opt.duals)
            continue;
        // m adjoint eigenvectors nearest to conj(mean)
        std::vector<int> ord(N);
        std::iota(ord.begin(), ord.end(), 0);
        std::partial_sort(ord.begin(), ord.begin() + m, ord.end(), [&](int a, int b) {
            const double da = used[a] ? 1e300 : std::abs(aev[a] - std::conj(mean));
            const double db = used[b] ? 1e300 : std::abs(aev[b] - std::conj(mean));
            return da < db;
        });
        Mat C(N, m), D(N, m);
        for (int k = 0; k < m; ++k) {
            C.col(k) = S.eigenvectors.col(members[k]);
            D.col(k) = AV.col(ord[k]);
            used[ord[k]] = true;
        }
        if (m == 1) {
            const cplx a = D.col(0).dot(C.col(0));  // d^H c
            S.duals.col(members[0]) = std::abs(a) > 0.0 ? Vec(D.col(0) / std::conj(a)) : Vec(D.col(0) * 0.0);
            if (std::abs(a) == 0.0)
                S.duals.col(members[0]).setConstant(cplx{std::numeric_limits<double>::infinity(), 0.0});
        } else {
            // Orthonormal basis of the adjoint cluster space, then dual basis.
            Eigen::HouseholderQR<Mat> qr(D);
            Mat Q = qr.householderQ() * Mat::Identity(N, m);
            Mat G = Q.adjoint() * C;  // m x m
            Eigen::FullPivLU<Mat> lu(G);
            if (lu.rank() < m) {
                for (int k = 0; k < m; ++k)
                    S.duals.col(members[k]).setConstant(cplx{std::numeric_limits<double>::infinity(), 0.0});
            } else {
                Mat Dd = Q * lu.inverse().adjoint();  // Dd^H C = I
                for (int k = 0; k < m; ++k)
                    S.duals.col(members[k]) = Dd.col(k);
            }
        }
    }

    // Labels: sort by (Re, Im) and match to the unperturbed order.
    std::vector<int> byre(N);
    std::iota(byre.begin(), byre.end(), 0);
    std::stable_sort(byre.begin(), byre.end(), [&](int a, int b) {
        if (S.eigenvalues[a].real() != S.eigenvalues[b].real())
            return S.eigenvalues[a].real() < S.eigenvalues[b].real();
        return S.eigenvalues[a].imag() < S.eigenvalues[b].imag();
    });
    const auto order = index_order(t, M);
    for (int i = 0; i < N; ++i)
        S.pairing[order[i]] = byre[i];
    for (int n = -M; n <= M; ++n) {
        const double w = two_pi * n + t;
        const double key = w * w;
        double gap = std::numeric_limits<double>::infinity();
        for (int m = -M; m <= M; ++m) {
            if (m == n)
                continue;
            const double wm = two_pi * m + t;
            const double d = std::abs(wm * wm - key);
            // the partner of n in the current pair may be arbitrarily close
            if (d > 1e-9 * (1.0 + key))
                gap = std::min(gap, d);
        }
        S.low_index_cluster[n] = std::abs(S.lambda(n) - key) > 0.25 * gap;
    }

    // Normalize phases: coefficient at the own index real and positive.
    for (const auto& [n, col] : S.pairing) {
        cplx c = S.eigenvectors(n + M, col);
        if (std::abs(c) > 0.0) {
            const cplx ph = std::abs(c) / c;
            S.eigenvectors.col(col) *= ph;
            if (opt.duals)
                S.duals.col(col) *= ph;  // keeps chi^H c = 1
        }
    }

    if (opt.certify) {
        const int M2 = opt.certify_M > 0 ? opt.certify_M : 2 * M;
        if (M2 <= M)
            throw ValidationError("certification truncation must exceed M");
        Mat H2 = floquet_matrix(p, t, M2);
        Eigen::ComplexEigenSolver<Mat> es2(H2, false);
        if (es2.info() != Eigen::Success)
            throw std::runtime_error("eigen-solver failure in certification run");
        const auto& ev2 = es2.eigenvalues();
        double worst = 0.0;
        for (int n = -M / 2; n <= M / 2; ++n) {
            const cplx lam = S.lambda(n);
            double best = std::numeric_limits<double>::infinity();
            for (int i = 0; i < ev2.size(); ++i)
                best = std::min(best, std::abs(ev2(i) - lam));
            worst = std::max(worst, best / (1.0 + std::abs(lam)));
        }
        S.certification_error = worst;
        if (worst > certify_tol_rel)
            throw NotCertified("central eigenvalues moved by " + std::to_string(worst) +
                               " (relative) under refinement; increase M");
        S.certified = true;
        S.certified_up_to = M / 2;
    }
    return S;
}

struct BiorthogonalData {
    int n = 0;
    double t = 0.0;
    cplx lambda;
    cplx alpha;       // (Psi, Psi*) with both unit vectors
    cplx u, v;        // coefficients at 2 pi |n| + t and -2 pi |n| + t
    double tail_norm = 0.0;
    bool defect = false;
    int cluster_size = 1;
    Vec psi;          // unit eigenvector
    Vec psi_star;     // unit adjoint eigenvector (within its cluster, the dual direction)
};

inline BiorthogonalData biorthogonal(const OracleSpectrum& S, int n)
{
    if (std::abs(n) > S.M / 2 && S.M >= 2)
        throw ValidationError("index beyond M/2");
    if (S.duals.size() == 0)
        throw ValidationError("spectrum was computed without dual vectors");
    const int col = S.column(n);
    BiorthogonalData b;
    b.n = n;
    b.t = S.t;
    b.lambda = S.eigenvalues[col];
    b.cluster_size = S.cluster_size[col];
    b.psi = S.eigenvectors.col(col);
    const int a = std::abs(n);
    b.u = S.coeff(b.psi, a);
    b.v = a == 0 ? cplx{} : S.coeff(b.psi, -a);
    b.tail_norm = std::sqrt(std::max(0.0, b.psi.squaredNorm() - std::norm(b.u) - std::norm(b.v)));
    b.defect = S.defective(col);
    const Vec& chi = S.duals.col(col);
    if (b.defect || !std::isfinite(chi.norm()) || chi.norm() == 0.0) {
        b.defect = true;
        b.alpha = 0.0;
        b.psi_star = Vec::Zero(b.psi.size());
        return b;
    }
    // chi = Psi*/conj(alpha) with chi^H psi = 1, so |alpha| = 1/|chi|.
    b.psi_star = chi / chi.norm();
    b.alpha = b.psi_star.dot(b.psi);  // (Psi, Psi*) = sum psi_k conj(psi*_k)
    if (std::abs(b.alpha) < 1e-6) {
        b.defect = true;
        b.alpha = 0.0;
    }
    return b;
}

inline BiorthogonalData pair_and_alpha(const PotentialSpec& p, double t, int M, int n)
{
    OracleOptions o;
    o.certify = false;
    return biorthogonal(oracle_spectrum(p, t, M, o), n);
}

// Half-closed rectangle [x0, x1) x [y0, y1) in the lambda-plane.
struct Rect {
    double x0, x1, y0, y1;
    bool contains(cplx z) const { return z.real() >= x0 && z.real() < x1 && z.imag() >= y0 && z.imag() < y1; }
    double boundary_distance(cplx z) const
    {
        const double dx = std::min(std::abs(z.real() - x0), std::abs(z.real() - x1));
        const double dy = std::min(std::abs(z.imag() - y0), std::abs(z.imag() - y1));
        if (contains(z))
            return std::min(dx, dy);
        // outside: distance to the rectangle
        const double ex = std::max({x0 - z.real(), 0.0, z.real() - x1});
        const double ey = std::max({y0 - z.imag(), 0.0, z.imag() - y1});
        return std::hypot(ex, ey);
    }
};

struct ProjectionNorm {
    double norm = 0.0;               // +inf when a defective eigenvalue is inside
    double idempotence_defect = 0.0; // ||E^2 - E||
    std::vector<int> members;        // operator indices inside the region
    std::optional<int> defect_index;
};

inline ProjectionNorm projection_norm(const OracleSpectrum& S, const std::vector<Rect>& region,
                                      double boundary_floor_rel = 1e-9)
{
    ProjectionNorm r;
    std::vector<int> cols;
    for (const auto& [n, col] : S.pairing) {
        const cplx lam = S.eigenvalues[col];
        for (const auto& R : region) {
            if (R.boundary_distance(lam) < boundary_floor_rel * (1.0 + std::abs(lam)))
                throw std::domain_error("eigenvalue of index " + std::to_string(n) + " lies on the region boundary");
        }
        if (std::any_of(region.begin(), region.end(), [&](const Rect& R) { return R.contains(lam); })) {
            r.members.push_back(n);
            cols.push_back(col);
            if (S.defective(col) && !r.defect_index)
                r.defect_index = n;
        }
    }
    if (S.duals.size() == 0)
        throw ValidationError("spectrum was computed without dual vectors");
    if (r.defect_index) {
        r.norm = std::numeric_limits<double>::infinity();
        return r;
    }
    if (cols.empty())
        return r;
    const int N = int(S.H.rows()), m = int(cols.size());
    Mat C(N, m), X(N, m);
    for (int k = 0; k < m; ++k) {
        C.col(k) = S.eigenvectors.col(cols[k]);
        X.col(k) = S.duals.col(cols[k]);
    }
    // E = C X^H; with C = Q1 R1, X = Q2 R2 the norm is that of R1 R2^H.
    Eigen::HouseholderQR<Mat> q1(C), q2(X);
    const Mat R1 = q1.matrixQR().topRows(m).triangularView<Eigen::Upper>();
    const Mat R2 = q2.matrixQR().topRows(m).triangularView<Eigen::Upper>();
    Eigen::JacobiSVD<Mat> s1(R1 * R2.adjoint());
    r.norm = s1.singularValues()(0);
    const Mat G = X.adjoint() * C - Mat::Identity(m, m);
    Eigen::JacobiSVD<Mat> s2(R1 * G * R2.adjoint());
    r.idempotence_defect = s2.singularValues()(0);
    return r;
}

inline ProjectionNorm projection_norm(const PotentialSpec& p, double t, int M, const std::vector<Rect>& region)
{
    OracleOptions o;
    o.certify = false;
    return projection_norm(oracle_spectrum(p, t, M, o), region);
}

// Smallest n0 such that for all n in [n0, M/2] and every grid t the pair disk
// holds exactly the two expected eigenvalues (near-endpoint t) and all are simple.
inline int estimate_N(const PotentialSpec& p, const std::vector<double>& t_grid, int M, double rho = default_rho)
{
    int n0 = 1;
    OracleOptions o;
    o.certify = false;
    for (double t : t_grid) {
        const auto S = oracle_spectrum(p, t, M, o);
        for (int n = M / 2; n >= 1; --n) {
            bool ok = S.cluster_size[S.column(n)] == 1 && S.cluster_size[S.column(-n)] == 1;
            const double at = std::abs(t);
            if (ok && at <= rho) {
                const double w = two_pi * n + at;
                const cplx center{w * w, 0.0};
                const double radius = 15.0 * pi * n * rho;
                int count = 0;
                for (const auto& lam : S.eigenvalues)
                    if (std::abs(lam - center) < radius)
                        ++count;
                ok = count == 2;
            }
            if (!ok) {
                n0 = std::max(n0, n + 1);
                break;
            }
        }
    }
    return n0;
}

}  // namespace hill
