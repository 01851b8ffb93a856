#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sqreg/errors.hpp"
#include "sqreg/instances.hpp"
#include "sqreg/oracles.hpp"
#include "sqreg/query.hpp"
#include "sqreg/random.hpp"
#include "sqreg/rng.hpp"
#include "sqreg/testing_params.hpp"

namespace sqreg {

inline Vector project_unit_ball(Vector b) {
    const double n = b.norm();
    if (n > 1.0) b /= n;
    return b;
}

// ---------------------------------------------------------------------------
// Clipped-Huber SQ estimator

struct HuberConfig {
    double L = 3.0;
    double step = 0.5;
    int iterations = 1;
    double m = 1.0;
    double eps = 0.4;

    /// L = 3 sqrt(log(d n)), T = ceil((8 / alpha) log(4 / (alpha eps))).
    static HuberConfig defaults(int d, double n, double alpha, double eps = 0.4) {
        if (d < 1 || !(n >= 1.0)) throw InvalidParameter("Huber defaults need d >= 1 and n >= 1");
        if (!(alpha > 0.0 && alpha <= 1.0) || !(eps > 0.0)) throw InvalidParameter("Huber defaults need alpha in (0,1] and eps > 0");
        HuberConfig c;
        c.L = std::max(1.0, 3.0 * std::sqrt(std::log(static_cast<double>(d) * n)));
        c.eps = eps;
        c.iterations = static_cast<int>(std::ceil((8.0 / alpha) * std::log(std::max(4.0 / (alpha * eps), 1.0 + 1e-9))));
        c.iterations = std::max(c.iterations, 1);
        c.m = simulation_strength(n, static_cast<double>(d) * c.iterations);
        return c;
    }

    void validate() const {
        if (!(L >= 1.0)) throw InvalidParameter("Huber clipping scale L must be at least 1");
        if (!(step > 0.0 && step < 2.0)) throw InvalidParameter("Huber step must lie in (0, 2)");
        if (iterations < 1) throw InvalidParameter("Huber iterations must be at least 1");
    }
};

inline Query huber_gradient_query(const Vector& beta, int coord, double radius, int iteration) {
    return Query("huber:" + std::to_string(iteration) + ":" + std::to_string(coord), HuberGradientQuery{beta, coord, radius, radius});
}

/// Projected gradient descent on E[g(x) Huber(y - x^T beta)] over the unit ball,
/// every gradient coordinate obtained from one rescaled statistical query.
inline Vector huber_sq_estimate(Oracle& oracle, int d, double alpha, double eps, const HuberConfig& cfg,
                                std::vector<Vector>* trace = nullptr) {
    cfg.validate();
    if (d < 1) throw InvalidParameter("dimension must be positive");
    if (!(alpha > 0.0 && alpha <= 1.0) || !(eps > 0.0)) throw InvalidParameter("alpha must lie in (0,1] and eps must be positive");
    const double radius = cfg.L * std::sqrt(static_cast<double>(d));
    Vector beta = Vector::Zero(d);
    if (trace) trace->push_back(beta);
    std::vector<Query> qs;
    qs.reserve(static_cast<std::size_t>(d));
    for (int t = 0; t < cfg.iterations; ++t) {
        qs.clear();
        for (int j = 0; j < d; ++j) qs.push_back(huber_gradient_query(beta, j, radius, t));
        const std::vector<double> v = oracle.answer_batch(qs);
        Vector ascent(d);
        for (int j = 0; j < d; ++j) ascent(j) = 2.0 * radius * v[static_cast<std::size_t>(j)] - radius;
        beta = project_unit_ball(beta + cfg.step * ascent);
        if (trace) trace->push_back(beta);
    }
    return beta;
}

using SampleEstimator = std::function<Vector(const SampleSet&)>;

/// Huber estimator over the sample-based oracle, configured from the sample size.
inline SampleEstimator huber_sample_estimator(double alpha, double eps = 0.4, std::function<void(const SampleOracle&)> on_done = {}) {
    return [alpha, eps, on_done = std::move(on_done)](const SampleSet& s) {
        const HuberConfig cfg = HuberConfig::defaults(s.dim(), static_cast<double>(s.size()), alpha, eps);
        SampleOracle o(s, cfg.m);
        Vector b = huber_sq_estimate(o, s.dim(), alpha, eps, cfg);
        if (on_done) on_done(o);
        return b;
    };
}

// ---------------------------------------------------------------------------
// Cover estimator

inline constexpr int kMaxCoverDim = 3;
inline constexpr long long kMaxCoverPoints = 50'000'000;

/// Cubic lattice of spacing 2 tau' / sqrt(d) (covering radius tau') intersected with
/// the (1 + tau')-ball and projected onto the unit ball; `anchor`, if given, is the
/// first point. Points are the columns of the result.
inline Matrix make_lattice_cover(int d, double tau_prime, const std::optional<Vector>& anchor = std::nullopt) {
    if (d < 1 || d > kMaxCoverDim) throw UnsupportedSize("cover construction supports 1 <= d <= 3");
    if (!(tau_prime > 0.0 && tau_prime < 1.0)) throw InvalidParameter("cover radius must lie in (0,1)");
    const double h = 2.0 * tau_prime / std::sqrt(static_cast<double>(d));
    const double reach = 1.0 + tau_prime;
    const auto K = static_cast<long long>(std::floor(reach / h));
    const double side = static_cast<double>(2 * K + 1);
    const double volume_bound = std::pow(side, d);
    if (volume_bound > 4.0 * static_cast<double>(kMaxCoverPoints)) throw UnsupportedSize("cover would exceed the point budget");

    std::vector<double> pts;
    if (anchor) {
        if (anchor->size() != d || anchor->norm() > 1.0 + kUnitTolerance) throw InvalidParameter("cover anchor must lie in the unit ball");
        pts.insert(pts.end(), anchor->data(), anchor->data() + d);
    }
    std::array<long long, kMaxCoverDim> idx{};
    const long long total = static_cast<long long>(volume_bound);
    const double r2 = reach * reach;
    for (long long flat = 0; flat < total; ++flat) {
        long long rem = flat;
        double n2 = 0.0;
        for (int c = 0; c < d; ++c) {
            idx[static_cast<std::size_t>(c)] = rem % (2 * K + 1) - K;
            rem /= (2 * K + 1);
            const double x = static_cast<double>(idx[static_cast<std::size_t>(c)]) * h;
            n2 += x * x;
        }
        if (n2 > r2) continue;
        const double scale = n2 > 1.0 ? 1.0 / std::sqrt(n2) : 1.0;
        for (int c = 0; c < d; ++c) pts.push_back(static_cast<double>(idx[static_cast<std::size_t>(c)]) * h * scale);
    }
    const auto n = static_cast<Eigen::Index>(pts.size() / static_cast<std::size_t>(d));
    if (n > kMaxCoverPoints) throw UnsupportedSize("cover would exceed the point budget");
    return Eigen::Map<const Matrix>(pts.data(), d, n);
}

/// Uniform point in the unit ball.
inline Vector random_ball_point(int d, Rng& rng) {
    const Vector u = random_unit_vector(d, rng);
    return u * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
}

struct CoverCheck {
    bool covered = false;
    double max_distance = 0.0;
    int probes = 0;
};

/// Probe-based cover check: every random ball point must have a cover point within
/// tau'. Cover points are bucketed by a hash grid of cell size tau'.
inline CoverCheck verify_cover(const Matrix& cover, double tau_prime, int probes, Rng& rng) {
    const int d = static_cast<int>(cover.rows());
    if (d < 1 || d > kMaxCoverDim) throw UnsupportedSize("cover check supports 1 <= d <= 3");
    auto key_of = [&](const std::array<long long, kMaxCoverDim>& c) {
        std::uint64_t k = 0;
        for (int i = 0; i < d; ++i) k = k * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(c[static_cast<std::size_t>(i)] + (1LL << 40));
        return k;
    };
    auto cell_of = [&](const double* x) {
        std::array<long long, kMaxCoverDim> c{};
        for (int i = 0; i < d; ++i) c[static_cast<std::size_t>(i)] = static_cast<long long>(std::floor(x[i] / tau_prime));
        return c;
    };
    std::vector<std::pair<std::uint64_t, Eigen::Index>> buckets(static_cast<std::size_t>(cover.cols()));
    for (Eigen::Index j = 0; j < cover.cols(); ++j) buckets[static_cast<std::size_t>(j)] = {key_of(cell_of(cover.col(j).data())), j};
    std::sort(buckets.begin(), buckets.end());

    CoverCheck out;
    out.probes = probes;
    out.covered = true;
    for (int p = 0; p < probes; ++p) {
        const Vector x = random_ball_point(d, rng);
        const auto c0 = cell_of(x.data());
        double best = std::numeric_limits<double>::infinity();
        const int span = static_cast<int>(std::lround(std::pow(3.0, d)));
        for (int o = 0; o < span; ++o) {
            auto c = c0;
            int rem = o;
            for (int i = 0; i < d; ++i) {
                c[static_cast<std::size_t>(i)] += rem % 3 - 1;
                rem /= 3;
            }
            const std::uint64_t k = key_of(c);
            auto it = std::lower_bound(buckets.begin(), buckets.end(), std::make_pair(k, Eigen::Index{0}));
            for (; it != buckets.end() && it->first == k; ++it) best = std::min(best, (cover.col(it->second) - x).norm());
        }
        out.max_distance = std::max(out.max_distance, best);
        if (!(best <= tau_prime)) out.covered = false;
    }
    return out;
}

struct CoverConfig {
    double tau = 0.0;
    double tau_prime = 0.0;
    Matrix cover;

    /// tau' = 0.01 tau alpha and the lattice cover of that radius.
    static CoverConfig make(int d, double tau, double alpha, const std::optional<Vector>& anchor = std::nullopt) {
        if (!(tau > 0.0) || !(alpha > 0.0 && alpha <= 1.0)) throw InvalidParameter("cover config needs tau > 0 and alpha in (0,1]");
        CoverConfig c;
        c.tau = tau;
        c.tau_prime = 0.01 * tau * alpha;
        c.cover = make_lattice_cover(d, c.tau_prime, anchor);
        return c;
    }
};

inline constexpr std::size_t kCoverBatch = 4096;

/// Argmax over the cover of the slab query 1{|x^T beta - y| <= tau'}; ties go to the
/// lowest cover index.
inline Vector cover_sq_estimate(Oracle& oracle, int d, double alpha, const CoverConfig& cfg) {
    if (d > kMaxCoverDim) throw UnsupportedSize("cover estimator supports d <= 3");
    if (d < 1 || cfg.cover.rows() != d || cfg.cover.cols() == 0) throw InvalidParameter("cover does not match the dimension");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidParameter("alpha must lie in (0,1]");
    Eigen::Index best = 0;
    double best_v = -1.0;
    std::vector<Query> qs;
    qs.reserve(kCoverBatch);
    for (Eigen::Index lo = 0; lo < cfg.cover.cols(); lo += static_cast<Eigen::Index>(kCoverBatch)) {
        const Eigen::Index hi = std::min<Eigen::Index>(cfg.cover.cols(), lo + static_cast<Eigen::Index>(kCoverBatch));
        qs.clear();
        for (Eigen::Index j = lo; j < hi; ++j) qs.push_back(slab_query("cover:" + std::to_string(j), cfg.cover.col(j), cfg.tau_prime));
        const std::vector<double> v = oracle.answer_batch(qs);
        for (Eigen::Index j = lo; j < hi; ++j) {
            if (v[static_cast<std::size_t>(j - lo)] > best_v) {
                best_v = v[static_cast<std::size_t>(j - lo)];
                best = j;
            }
        }
    }
    return cfg.cover.col(best);
}

// ---------------------------------------------------------------------------
// Testing-to-estimation reduction

/// Haar orthogonal matrix: QR of a Gaussian matrix with R's diagonal made positive.
inline Matrix random_rotation(int d, Rng& rng) {
    if (d < 1) throw InvalidParameter("dimension must be positive");
    Matrix g(d, d);
    fill_standard_normal(rng, g.data(), static_cast<std::size_t>(d) * static_cast<std::size_t>(d));
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < d; ++j)
        if (r(j, j) < 0.0) q.col(j) *= -1.0;
    return q;
}

enum class Verdict { Null, Alternate };

inline const char* to_string(Verdict v) noexcept { return v == Verdict::Null ? "null" : "alternate"; }

inline constexpr double kReductionThreshold = 1.0 / 9.0;

struct ReductionVerdict {
    double W = 0.0;
    Verdict verdict = Verdict::Null;
    bool zero_norm = false;
};

/// Estimate on S and on a Haar-rotated S2, rotate back, and threshold the cosine.
inline ReductionVerdict reduction_test(const SampleEstimator& estimator, const SampleSet& S, const SampleSet& S2, double rho,
                                       Rng& rng) {
    if (S.size() != S2.size() || S.dim() != S2.dim()) throw InvalidParameter("reduction needs equal-size sample sets");
    if (!(rho > 0.0 && rho <= 1.0)) throw InvalidParameter("rho must lie in (0,1]");
    const int d = S.dim();
    const Vector b1 = estimator(S);
    const Matrix U = random_rotation(d, rng);
    SampleSet rotated{S2.X * U.transpose(), S2.y};
    const Vector w = estimator(rotated);
    const Vector b2 = U.transpose() * w;
    ReductionVerdict out;
    const double n1 = b1.norm(), n2 = b2.norm();
    if (n1 == 0.0 || n2 == 0.0) {
        out.zero_norm = true;
        warn("reduction_test: zero-norm estimate, W set to 0");
        return out;
    }
    out.W = b1.dot(b2) / (n1 * n2);
    out.verdict = std::abs(out.W) > kReductionThreshold ? Verdict::Alternate : Verdict::Null;
    return out;
}

}  // namespace sqreg
