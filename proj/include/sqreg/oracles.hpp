#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "sqreg/distributions.hpp"
#include "sqreg/errors.hpp"
#include "sqreg/instances.hpp"
#include "sqreg/numeric.hpp"
#include "sqreg/query.hpp"
#include "sqreg/random.hpp"
#include "sqreg/rng.hpp"

#include <json.hpp>

namespace sqreg {

inline constexpr long long kMinExactSamples = 1'000'000;
inline constexpr double kSimulationConstant = 8.0;
inline constexpr double kSimulationDelta = 0.1;
inline constexpr double kAdversarialSlackSE = 3.0;
inline constexpr double kAuditSlackSE = 5.0;

/// max(1/m, sqrt(p (1 - p) / m)).
inline double vstat_tolerance(double m, double p) {
    if (!(m >= 1.0)) throw InvalidParameter("VSTAT strength m must be at least 1");
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidParameter("VSTAT tolerance needs p in [0,1]");
    return std::max(1.0 / m, std::sqrt(p * (1.0 - p) / m));
}

/// m = n / (C log(q / delta)), floored at 1.
inline double simulation_strength(double n, double q, double delta = kSimulationDelta, double c = kSimulationConstant) {
    if (!(n >= 1.0) || !(q >= 1.0) || !(delta > 0.0 && delta < 1.0)) throw InvalidParameter("invalid simulation budget");
    return std::max(1.0, std::floor(n / (c * std::log(q / delta))));
}

struct AnswerRecord {
    std::string query_id;
    double response = 0.0;
    double tolerance = 0.0;
    double m = 0.0;
};

/// Append-only answer log; thread-safe.
class AnswerLog {
public:
    void record(const std::string& id, double response, double m) {
        if (!enabled_) return;
        const double tol = vstat_tolerance(m, clamp01(response));
        std::lock_guard lock(mu_);
        records_.push_back({id, response, tol, m});
    }
    void set_enabled(bool on) noexcept { enabled_ = on; }
    [[nodiscard]] bool enabled() const noexcept { return enabled_; }
    [[nodiscard]] std::size_t size() const {
        std::lock_guard lock(mu_);
        return records_.size();
    }
    [[nodiscard]] std::vector<AnswerRecord> records() const {
        std::lock_guard lock(mu_);
        return records_;
    }
    void clear() {
        std::lock_guard lock(mu_);
        records_.clear();
    }
    /// JSON lines {query_id, response, tolerance, m}.
    void write_jsonl(std::ostream& os) const {
        std::lock_guard lock(mu_);
        for (const auto& r : records_) {
            nlohmann::ordered_json j;
            j["query_id"] = r.query_id;
            j["response"] = r.response;
            j["tolerance"] = r.tolerance;
            j["m"] = r.m;
            os << j.dump() << '\n';
        }
    }

private:
    mutable std::mutex mu_;
    std::vector<AnswerRecord> records_;
    bool enabled_ = true;
};

/// A VSTAT(m) answering entity.
class Oracle {
public:
    explicit Oracle(double m) : m_(m) {
        if (!(m >= 1.0)) throw InvalidParameter("VSTAT strength m must be at least 1");
    }
    virtual ~Oracle() = default;
    Oracle(const Oracle&) = delete;
    Oracle& operator=(const Oracle&) = delete;

    virtual double answer(const Query& q) = 0;
    virtual std::vector<double> answer_batch(std::span<const Query> qs) {
        std::vector<double> out;
        out.reserve(qs.size());
        for (const auto& q : qs) out.push_back(answer(q));
        return out;
    }

    [[nodiscard]] double m() const noexcept { return m_; }
    [[nodiscard]] AnswerLog& log() noexcept { return log_; }
    [[nodiscard]] const AnswerLog& log() const noexcept { return log_; }

protected:
    double m_;
    AnswerLog log_;
};

namespace detail {
struct MomentAccumulator {
    double sum = 0.0;
    double sumsq = 0.0;
    long long n = 0;
    void add(double v) noexcept {
        sum += v;
        sumsq += v * v;
        ++n;
    }
    [[nodiscard]] MeanEstimate finish() const noexcept {
        if (n == 0) return {};
        const double mean = sum / static_cast<double>(n);
        double var = n > 1 ? (sumsq - static_cast<double>(n) * mean * mean) / static_cast<double>(n - 1) : 0.0;
        if (var < 0.0) var = 0.0;
        return {mean, std::sqrt(var / static_cast<double>(n)), n};
    }
};
}  // namespace detail

/// Empirical means over a stored sample set.
class SampleOracle final : public Oracle {
public:
    SampleOracle(SampleSet samples, double m) : Oracle(m), s_(std::move(samples)) {
        if (s_.size() == 0) throw InvalidParameter("sample oracle needs a nonempty sample set");
        norm_sq_ = s_.X.rowwise().squaredNorm();
    }

    [[nodiscard]] const SampleSet& samples() const noexcept { return s_; }

    [[nodiscard]] MeanEstimate estimate(const Query& q) const {
        const Eigen::Index n = s_.size();
        detail::MomentAccumulator acc;
        std::visit(
            [&](const auto& k) {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, ConstantQuery>) {
                    const double c = clamp01(k.value);
                    acc = {c * static_cast<double>(n), c * c * static_cast<double>(n), n};
                } else if constexpr (std::is_same_v<T, GenericQuery>) {
                    Vector x(s_.dim());
                    for (Eigen::Index i = 0; i < n; ++i) {
                        x = s_.X.row(i).transpose();
                        acc.add(clamp01(k.fn(x, s_.y(i))));
                    }
                } else if constexpr (std::is_same_v<T, HuberGradientQuery>) {
                    check_dim(k.beta);
                    if (k.coord < 0 || k.coord >= s_.dim()) throw InvalidParameter("query " + q.id() + " coordinate out of range");
                    const Vector& gh = huber_weights(k.beta, k.radius);
                    const auto col = s_.X.col(k.coord);
                    const double inv = 1.0 / (2.0 * k.scale);
                    for (Eigen::Index i = 0; i < n; ++i) acc.add(clamp01((gh(i) * col(i) + k.scale) * inv));
                } else {
                    long long hits = 0;
                    if constexpr (std::is_same_v<T, LabelThresholdQuery>) {
                        hits = (s_.y.array() > k.threshold).count();
                    } else if constexpr (std::is_same_v<T, HalfspaceQuery>) {
                        check_dim(k.u);
                        hits = ((s_.X * k.u).array() > k.threshold).count();
                    } else if constexpr (std::is_same_v<T, SignCorrelationQuery>) {
                        check_dim(k.u);
                        hits = ((s_.X * k.u).array() * s_.y.array() > 0.0).count();
                    } else if constexpr (std::is_same_v<T, SlabQuery>) {
                        check_dim(k.w);
                        hits = slab_hits(k.w, k.halfwidth);
                    }
                    acc = {static_cast<double>(hits), static_cast<double>(hits), n};
                }
            },
            q.kind());
        return acc.finish();
    }

    double answer(const Query& q) override {
        const double v = estimate(q).mean;
        log_.record(q.id(), v, m_);
        return v;
    }

    /// Batches made only of slab queries with a common half-width go through a
    /// tiled kernel; anything else is answered one query at a time.
    std::vector<double> answer_batch(std::span<const Query> qs) override {
        if (qs.empty()) return {};
        const auto* first = std::get_if<SlabQuery>(&qs[0].kind());
        const bool slabs = first && std::all_of(qs.begin(), qs.end(), [&](const Query& q) {
            const auto* s = std::get_if<SlabQuery>(&q.kind());
            return s && s->halfwidth == first->halfwidth && s->w.size() == s_.dim();
        });
        if (!slabs) return Oracle::answer_batch(qs);
        std::vector<double> out(qs.size());
        for (std::size_t lo = 0; lo < qs.size(); lo += kSlabTile) {
            const std::size_t hi = std::min(qs.size(), lo + kSlabTile);
            slab_tile(qs.subspan(lo, hi - lo), first->halfwidth, out.data() + lo);
        }
        for (std::size_t i = 0; i < qs.size(); ++i) log_.record(qs[i].id(), out[i], m_);
        return out;
    }

private:
    static constexpr std::size_t kSlabTile = 2048;

    void slab_tile(std::span<const Query> qs, double h, double* out) const {
        const int d = s_.dim();
        const std::size_t k = qs.size();
        std::vector<double> w(static_cast<std::size_t>(d) * k), r(k);
        std::vector<long long> hits(k, 0);
        for (std::size_t j = 0; j < k; ++j) {
            const auto& sq = std::get<SlabQuery>(qs[j].kind());
            for (int c = 0; c < d; ++c) w[static_cast<std::size_t>(c) * k + j] = sq.w(c);
        }
        for (Eigen::Index i = 0; i < s_.size(); ++i) {
            const double yi = s_.y(i);
            for (std::size_t j = 0; j < k; ++j) r[j] = yi;
            for (int c = 0; c < d; ++c) {
                const double xc = s_.X(i, c);
                const double* wc = w.data() + static_cast<std::size_t>(c) * k;
                for (std::size_t j = 0; j < k; ++j) r[j] -= xc * wc[j];
            }
            for (std::size_t j = 0; j < k; ++j) hits[j] += std::abs(r[j]) <= h ? 1 : 0;
        }
        for (std::size_t j = 0; j < k; ++j) out[j] = static_cast<double>(hits[j]) / static_cast<double>(s_.size());
    }

    void check_dim(const Vector& w) const {
        if (w.size() != s_.dim()) throw InvalidParameter("query dimension does not match the sample set");
    }

    long long slab_hits(const Vector& w, double h) const {
        thread_local Vector r;
        r.resize(s_.size());
        r.noalias() = s_.y - s_.X * w;
        return (r.array().abs() <= h).count();
    }

    /// g(x_i) h(y_i - x_i^T beta), cached for the most recent (beta, radius): the
    /// coordinate queries of one gradient step share it.
    const Vector& huber_weights(const Vector& beta, double radius) const {
        std::lock_guard lock(cache_mu_);
        if (!(cache_radius_ == radius && cache_beta_.size() == beta.size() && cache_beta_ == beta)) {
            cache_beta_ = beta;
            cache_radius_ = radius;
            cache_gh_.resize(s_.size());
            cache_gh_.noalias() = s_.y - s_.X * beta;
            const double r2 = radius * radius;
            for (Eigen::Index i = 0; i < s_.size(); ++i)
                cache_gh_(i) = norm_sq_(i) <= r2 ? std::clamp(cache_gh_(i), -1.0, 1.0) : 0.0;
        }
        return cache_gh_;
    }

    SampleSet s_;
    Vector norm_sq_;
    mutable std::mutex cache_mu_;
    mutable Vector cache_beta_;
    mutable double cache_radius_ = -1.0;
    mutable Vector cache_gh_;
};

/// High-precision Monte-Carlo expectations under a joint law.
///
/// Structured queries are evaluated in the span of the law's direction and the
/// query's sketch vectors: a fixed pool holds (t, y) draws along the direction,
/// independent standard normals for the remaining basis vectors, and chi-squared
/// residual norms, so cost does not grow with d. The pool is a common random number
/// stream: equal seeds give equal estimates for every query.
class ExactMcOracle final : public Oracle {
public:
    ExactMcOracle(JointLaw law, long long n_mc, std::uint64_t seed, double m, bool antithetic = false)
        : Oracle(m), law_(std::move(law)), d_(law_dimension(law_)), dir_(law_direction(law_)), n_(n_mc), seed_(seed), anti_(antithetic) {
        if (n_ < kMinExactSamples) throw InvalidParameter("exact Monte-Carlo oracle needs n_mc >= 10^6");
        if (anti_ && n_ % 2 != 0) ++n_;
        t_.resize(static_cast<std::size_t>(n_));
        y_.resize(static_cast<std::size_t>(n_));
        Rng rng = Rng(seed_).split(0x11);
        const long long half = anti_ ? n_ / 2 : n_;
        for (long long i = 0; i < half; ++i) {
            const LineDraw ld = draw_line(law_, rng);
            t_[static_cast<std::size_t>(i)] = ld.t;
            y_[static_cast<std::size_t>(i)] = ld.y;
            if (anti_) {
                t_[static_cast<std::size_t>(i + half)] = ld.t_anti;
                y_[static_cast<std::size_t>(i + half)] = ld.y_anti;
            }
        }
    }

    [[nodiscard]] const JointLaw& law() const noexcept { return law_; }
    [[nodiscard]] long long n_mc() const noexcept { return n_; }
    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }

    [[nodiscard]] MeanEstimate estimate(const Query& q) const {
        return std::visit(
            [&](const auto& k) -> MeanEstimate {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, ConstantQuery>) {
                    return {clamp01(k.value), 0.0, n_};
                } else if constexpr (std::is_same_v<T, GenericQuery>) {
                    return generic_estimate(k);
                } else {
                    return reduced_estimate(k, q.sketch(d_));
                }
            },
            q.kind());
    }

    double answer(const Query& q) override {
        const double v = estimate(q).mean;
        log_.record(q.id(), v, m_);
        return v;
    }

private:
    static constexpr int kMaxBasis = 3;

    template <class K>
    MeanEstimate reduced_estimate(const K& k, const Sketch& sk) const {
        // Orthonormal basis: the law's direction first, then Gram-Schmidt on the sketch.
        std::vector<Vector> basis;
        if (dir_) basis.push_back(*dir_);
        for (const auto& w : sk.rows) {
            Vector r = w;
            for (int pass = 0; pass < 2; ++pass)
                for (const auto& b : basis) r -= b.dot(r) * b;
            const double nr = r.norm();
            if (nr > 1e-12 * std::max(1.0, w.norm())) basis.push_back(r / nr);
        }
        if (static_cast<int>(basis.size()) > kMaxBasis) throw InvalidParameter("sketch rank above the reduced-space limit");
        const int rank = static_cast<int>(basis.size());
        std::array<std::array<double, kMaxBasis>, 2> coef{};
        for (std::size_t j = 0; j < sk.rows.size(); ++j)
            for (int l = 0; l < rank; ++l) coef[j][static_cast<std::size_t>(l)] = sk.rows[j].dot(basis[static_cast<std::size_t>(l)]);

        std::array<const double*, kMaxBasis> col{};
        col[0] = t_.data();
        for (int l = 1; l < kMaxBasis; ++l) col[static_cast<std::size_t>(l)] = l < rank ? normals(l - 1).data() : zeros().data();
        const double* rest = sk.needs_norm ? residual_norms(d_ - std::max(rank, 1)).data() : zeros().data();
        const bool use_norm = sk.needs_norm;

        auto value = [&](std::size_t i) {
            const double c0 = col[0][i], c1 = col[1][i], c2 = col[2][i];
            double p[2];
            p[0] = coef[0][0] * c0 + coef[0][1] * c1 + coef[0][2] * c2;
            p[1] = coef[1][0] * c0 + coef[1][1] * c1 + coef[1][2] * c2;
            const double nsq = use_norm ? c0 * c0 + c1 * c1 + c2 * c2 + rest[i] : 0.0;
            return clamp01(k.reduced(p, nsq, y_[i]));
        };
        return accumulate(value);
    }

    template <class F>
    MeanEstimate accumulate(F&& value) const {
        detail::MomentAccumulator acc;
        if (anti_) {
            const auto half = static_cast<std::size_t>(n_ / 2);
            for (std::size_t i = 0; i < half; ++i) acc.add(0.5 * (value(i) + value(i + half)));
        } else {
            for (std::size_t i = 0; i < static_cast<std::size_t>(n_); ++i) acc.add(value(i));
        }
        return acc.finish();
    }

    MeanEstimate generic_estimate(const GenericQuery& k) const {
        const SampleSet& s = full_samples();
        detail::MomentAccumulator acc;
        Vector x(d_);
        for (Eigen::Index i = 0; i < s.size(); ++i) {
            x = s.X.row(i).transpose();
            acc.add(clamp01(k.fn(x, s.y(i))));
        }
        return acc.finish();
    }

    const std::vector<double>& zeros() const {
        std::lock_guard lock(mu_);
        if (zeros_.empty()) zeros_.assign(static_cast<std::size_t>(n_), 0.0);
        return zeros_;
    }

    const std::vector<double>& normals(int j) const {
        std::lock_guard lock(mu_);
        auto& c = normals_[j];
        if (c.empty()) {
            c.resize(static_cast<std::size_t>(n_));
            Rng rng = Rng(seed_).split(0x100 + static_cast<std::uint64_t>(j));
            fill_standard_normal(rng, c.data(), anti_ ? c.size() / 2 : c.size());
            // Antithetic partners reflect x as well when the line draw reflects t.
            if (anti_) {
                const double sign = std::holds_alternative<ContinuousAlternateLaw>(law_) ? -1.0 : 1.0;
                const std::size_t half = c.size() / 2;
                for (std::size_t i = 0; i < half; ++i) c[i + half] = sign * c[i];
            }
        }
        return c;
    }

    /// chi^2 with `dof` degrees of freedom per pool entry: the squared norm of x outside the basis.
    const std::vector<double>& residual_norms(int dof) const {
        std::lock_guard lock(mu_);
        auto& c = rest_[dof];
        if (c.empty()) {
            c.resize(static_cast<std::size_t>(n_));
            Rng rng = Rng(seed_).split(0x200 + static_cast<std::uint64_t>(dof));
            const std::size_t fresh = anti_ ? c.size() / 2 : c.size();
            for (std::size_t i = 0; i < fresh; ++i) c[i] = chi_squared(rng, dof);
            for (std::size_t i = fresh; i < c.size(); ++i) c[i] = c[i - fresh];
        }
        return c;
    }

    const SampleSet& full_samples() const {
        std::lock_guard lock(mu_);
        if (!full_) {
            Rng rng = Rng(seed_).split(0x300);
            full_ = sample_law(law_, n_, rng);
        }
        return *full_;
    }

    JointLaw law_;
    int d_;
    std::optional<Vector> dir_;
    long long n_;
    std::uint64_t seed_;
    bool anti_;
    std::vector<double> t_, y_;
    mutable std::mutex mu_;
    mutable std::vector<double> zeros_;
    mutable std::map<int, std::vector<double>> normals_;
    mutable std::map<int, std::vector<double>> rest_;
    mutable std::optional<SampleSet> full_;
};

/// The lower-bound oracle: answers with the null expectation whenever that is a
/// valid VSTAT(m) response for the hidden alternate (with a Monte-Carlo margin).
class AdversarialOracle final : public Oracle {
public:
    AdversarialOracle(HypothesisTag tag, double m, std::shared_ptr<const ExactMcOracle> null_oracle,
                      std::shared_ptr<const ExactMcOracle> alternate_oracle)
        : Oracle(m), tag_(std::move(tag)), p_(std::move(null_oracle)), q_(std::move(alternate_oracle)) {
        if (!p_) throw InvalidParameter("adversarial oracle needs a null sub-oracle");
        if (!tag_.is_null() && !q_) throw InvalidParameter("adversarial oracle needs an alternate sub-oracle");
    }

    double answer(const Query& f) override {
        const MeanEstimate ep = p_->estimate(f);
        double response = ep.mean;
        if (!tag_.is_null()) {
            const MeanEstimate eq = q_->estimate(f);
            const double tol = vstat_tolerance(m_, clamp01(eq.mean));
            if (ep.se > tol / 10.0 || eq.se > tol / 10.0)
                throw InsufficientPrecision("Monte-Carlo error above tolerance/10 for query " + f.id());
            const double slack = kAdversarialSlackSE * std::sqrt(ep.se * ep.se + eq.se * eq.se);
            if (std::abs(ep.mean - eq.mean) > tol - slack) response = eq.mean;
        } else {
            const double tol = vstat_tolerance(m_, clamp01(ep.mean));
            if (ep.se > tol / 10.0) throw InsufficientPrecision("Monte-Carlo error above tolerance/10 for query " + f.id());
        }
        log_.record(f.id(), response, m_);
        return response;
    }

    [[nodiscard]] const HypothesisTag& tag() const noexcept { return tag_; }

private:
    HypothesisTag tag_;
    std::shared_ptr<const ExactMcOracle> p_, q_;
};

/// |b - a| >= max(1/m, min(sqrt(a(1-a)/m), sqrt(b(1-b)/m))).
inline bool success_predicate(double a, double b, double m) {
    if (!(m >= 1.0)) throw InvalidParameter("VSTAT strength m must be at least 1");
    a = clamp01(a);
    b = clamp01(b);
    const double thr = std::max(1.0 / m, std::min(std::sqrt(a * (1.0 - a) / m), std::sqrt(b * (1.0 - b) / m)));
    return std::abs(b - a) >= thr;
}

struct SuccessResult {
    MeanEstimate null_estimate;
    MeanEstimate alternate_estimate;
    bool success = false;
};

inline SuccessResult success_event(const Query& f, const ExactMcOracle& p, const ExactMcOracle& q, double m) {
    SuccessResult r{p.estimate(f), q.estimate(f), false};
    r.success = success_predicate(r.null_estimate.mean, r.alternate_estimate.mean, m);
    return r;
}

/// Success event with both expectations estimated at `precision` samples.
inline bool success_event(const Query& f, const TestingParams& params, const Vector& v, double m, long long precision,
                          std::uint64_t seed = 0) {
    const int d = static_cast<int>(v.size());
    ExactMcOracle p(null_law(params, d), precision, splitmix64(seed ^ 0x5A5A), m);
    ExactMcOracle q(alternate_law(params, v), precision, splitmix64(seed ^ 0xA5A5), m);
    return success_event(f, p, q, m).success;
}

/// Closed-form expectations where they exist: constants and label thresholds under
/// any law; halfspaces and slabs under laws with a standard Gaussian x-marginal.
class AnalyticTruth {
public:
    explicit AnalyticTruth(JointLaw law) : law_(std::move(law)) {
        if (const auto* l = std::get_if<LinearLaw>(&law_)) {
            noise_ = l->noise.law();
            signal_ = l->beta.norm();
        } else if (const auto* n = std::get_if<NullLaw>(&law_)) {
            noise_ = n->response.contamination.law();
            signal_ = n->response.rho;
        } else {
            const auto& c = std::get<ContinuousAlternateLaw>(law_);
            noise_ = c.params.contamination().law();
            signal_ = c.params.rho();
        }
    }

    [[nodiscard]] std::optional<double> operator()(const Query& q) const {
        const bool standard_x = !std::holds_alternative<ContinuousAlternateLaw>(law_);
        return std::visit(
            [&](const auto& k) -> std::optional<double> {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, ConstantQuery>) {
                    return clamp01(k.value);
                } else if constexpr (std::is_same_v<T, LabelThresholdQuery>) {
                    // y = signal * G + z under every law here.
                    return label_tail(k.threshold);
                } else if constexpr (std::is_same_v<T, HalfspaceQuery>) {
                    if (!standard_x) return std::nullopt;
                    const double nu = k.u.norm();
                    if (nu == 0.0) return 0.0 > k.threshold ? 1.0 : 0.0;
                    return 1.0 - normal_cdf(k.threshold / nu);
                } else if constexpr (std::is_same_v<T, SlabQuery>) {
                    if (!standard_x) return std::nullopt;
                    return slab_probability(k.w, k.halfwidth);
                } else {
                    return std::nullopt;
                }
            },
            q.kind());
    }

private:
    double label_tail(double t) const {
        NeumaierSum acc;
        for (std::size_t j = 0; j < noise_->size(); ++j) {
            const double p = noise_->probability(j);
            if (p == 0.0) continue;
            const double z = noise_->point(j);
            acc.add(p * (signal_ > 0.0 ? 1.0 - normal_cdf((t - z) / signal_) : (z > t ? 1.0 : 0.0)));
        }
        return acc.value();
    }

    /// P(|r G + z| <= h) where y - w^T x = r G + z.
    double slab_probability(const Vector& w, double h) const {
        double r = 0.0;
        if (const auto* l = std::get_if<LinearLaw>(&law_))
            r = (l->beta - w).norm();
        else
            r = std::sqrt(signal_ * signal_ + w.squaredNorm());
        // Atoms farther than 12 r outside the slab contribute below Phi(-12).
        const double reach = h + 12.0 * r;
        const DiscreteGaussianParams& np = noise_->params();
        const auto first = static_cast<long long>(std::ceil((-reach - np.theta) / np.s)) - noise_->first_index();
        const auto last = static_cast<long long>(std::floor((reach - np.theta) / np.s)) - noise_->first_index();
        NeumaierSum acc;
        for (long long j = std::max(0LL, first); j <= std::min(last, static_cast<long long>(noise_->size()) - 1); ++j) {
            const double p = noise_->probability(static_cast<std::size_t>(j));
            if (p < 1e-20) continue;
            const double z = noise_->point(static_cast<std::size_t>(j));
            if (r == 0.0)
                acc.add(std::abs(z) <= h ? p : 0.0);
            else
                acc.add(p * normal_interval((-h - z) / r, (h - z) / r));
        }
        return acc.value();
    }

    JointLaw law_;
    std::optional<DiscreteGaussian> noise_;
    double signal_ = 0.0;
};

using TruthFn = std::function<MeanEstimate(const Query&)>;

/// Ground truth: closed form where available, otherwise the fallback estimator.
inline TruthFn analytic_or(const JointLaw& law, TruthFn fallback) {
    return [a = AnalyticTruth(law), fb = std::move(fallback)](const Query& q) -> MeanEstimate {
        if (auto v = a(q)) return {*v, 0.0, 0};
        if (!fb) throw InvalidParameter("no ground truth available for query " + q.id());
        return fb(q);
    };
}

inline TruthFn exact_mc_truth(std::shared_ptr<const ExactMcOracle> o) {
    return [o = std::move(o)](const Query& q) { return o->estimate(q); };
}

inline TruthFn sample_truth(std::shared_ptr<const SampleOracle> o) {
    return [o = std::move(o)](const Query& q) { return o->estimate(q); };
}

struct AuditReport {
    long long responses = 0;
    long long violations = 0;
    /// Largest |v - truth| / (tolerance + slack) seen; below 1 means no violation.
    double worst_ratio = 0.0;
    std::string worst_query;

    void merge(const AuditReport& o) {
        responses += o.responses;
        violations += o.violations;
        if (o.worst_ratio > worst_ratio) {
            worst_ratio = o.worst_ratio;
            worst_query = o.worst_query;
        }
    }
};

/// Checks a response against the first-principles VSTAT contract.
inline bool audit_response(AuditReport& rep, const std::string& id, double response, double m, const MeanEstimate& truth) {
    const double tol = vstat_tolerance(m, clamp01(truth.mean));
    const double allowed = tol + kAuditSlackSE * truth.se;
    const double ratio = std::abs(response - truth.mean) / allowed;
    ++rep.responses;
    const bool bad = ratio > 1.0;
    if (bad) ++rep.violations;
    if (ratio > rep.worst_ratio) {
        rep.worst_ratio = ratio;
        rep.worst_query = id;
    }
    return !bad;
}

/// Forwards to an inner oracle and audits every response against an independent
/// ground-truth estimator with the inner oracle's m.
class AuditingOracle final : public Oracle {
public:
    AuditingOracle(Oracle& inner, TruthFn truth) : Oracle(inner.m()), inner_(inner), truth_(std::move(truth)) {
        log_.set_enabled(false);
    }

    double answer(const Query& q) override {
        const double v = inner_.answer(q);
        audit_response(report_, q.id(), v, m_, truth_(q));
        return v;
    }

    std::vector<double> answer_batch(std::span<const Query> qs) override {
        auto vs = inner_.answer_batch(qs);
        for (std::size_t i = 0; i < qs.size(); ++i) audit_response(report_, qs[i].id(), vs[i], m_, truth_(qs[i]));
        return vs;
    }

    [[nodiscard]] const AuditReport& report() const noexcept { return report_; }

private:
    Oracle& inner_;
    TruthFn truth_;
    AuditReport report_;
};

}  // namespace sqreg
