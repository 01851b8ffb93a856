#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "sqreg/errors.hpp"
#include "sqreg/numeric.hpp"
#include "sqreg/random.hpp"
#include "sqreg/rng.hpp"

namespace sqreg {

inline constexpr int kMaxMomentOrder = 20;
inline constexpr double kSnapTolerance = 1e-9;
inline constexpr double kDefaultAlphaHeadroom = 1.05;

/// NDG(mu, sigma, theta, s): mass proportional to s * phi_{mu,sigma}(theta + s i) on theta + sZ.
struct DiscreteGaussianParams {
    double mu = 0.0;
    double sigma = 1.0;
    double theta = 0.0;
    double s = 1.0;

    friend bool operator==(const DiscreteGaussianParams&, const DiscreteGaussianParams&) = default;
};

inline void validate(const DiscreteGaussianParams& p) {
    if (!std::isfinite(p.mu) || !std::isfinite(p.theta) || !std::isfinite(p.sigma) || !std::isfinite(p.s))
        throw InvalidParameter("discrete Gaussian parameters must be finite");
    if (!(p.sigma > 0.0)) throw InvalidParameter("discrete Gaussian sigma must be positive");
    if (!(p.s > 0.0)) throw InvalidParameter("discrete Gaussian spacing s must be positive");
}

/// Half-width of the summation window around mu.
inline double truncation_half_width(const DiscreteGaussianParams& p) {
    return std::max({40.0 * p.sigma, 40.0 * p.s, 10.0 * std::abs(p.mu - p.theta)});
}

/// Grid index of x if x lies on theta + sZ within the snapping tolerance.
inline std::optional<std::int64_t> snap_to_grid(double theta, double s, double x) {
    if (!std::isfinite(x)) throw InvalidParameter("grid point must be finite");
    const double r = std::round((x - theta) / s);
    if (std::abs(x - (theta + s * r)) <= kSnapTolerance * std::max(1.0, std::abs(x)))
        return static_cast<std::int64_t>(r);
    return std::nullopt;
}

/// Truncated, normalized pmf table of a discrete Gaussian. Cheap to copy.
class DiscreteGaussian {
public:
    explicit DiscreteGaussian(const DiscreteGaussianParams& p) : DiscreteGaussian(p, 1.0) {}

    /// Fault-injection constructor for negative-control checks: the normalizer is
    /// multiplied by `normalizer_scale` before the pmf is formed.
    static DiscreteGaussian with_normalizer_scale(const DiscreteGaussianParams& p, double normalizer_scale) {
        return DiscreteGaussian(p, normalizer_scale);
    }

    [[nodiscard]] const DiscreteGaussianParams& params() const noexcept { return params_; }
    [[nodiscard]] std::size_t size() const noexcept { return table_->prob.size(); }
    [[nodiscard]] std::int64_t first_index() const noexcept { return table_->first; }
    [[nodiscard]] double point(std::size_t j) const noexcept {
        return params_.theta + params_.s * static_cast<double>(table_->first + static_cast<std::int64_t>(j));
    }
    [[nodiscard]] double probability(std::size_t j) const noexcept { return table_->prob[j]; }
    [[nodiscard]] const std::vector<double>& probabilities() const noexcept { return table_->prob; }

    /// Unnormalized total mass sum_i s * phi_{mu,sigma}(theta + s i) over the window.
    [[nodiscard]] double normalizer() const noexcept { return table_->normalizer; }

    /// Mass at grid index i (0 outside the window).
    [[nodiscard]] double mass_at_index(std::int64_t i) const noexcept {
        const std::int64_t j = i - table_->first;
        if (j < 0 || j >= static_cast<std::int64_t>(size())) return 0.0;
        return table_->prob[static_cast<std::size_t>(j)];
    }

    [[nodiscard]] double pmf(double x) const {
        const auto i = snap_to_grid(params_.theta, params_.s, x);
        return i ? mass_at_index(*i) : 0.0;
    }

    template <class F>
    [[nodiscard]] double expect(F&& f) const {
        NeumaierSum acc;
        for (std::size_t j = 0; j < size(); ++j) {
            const double pj = table_->prob[j];
            if (pj != 0.0) acc.add(pj * f(point(j)));
        }
        return acc.value();
    }

    [[nodiscard]] double moment(int k) const {
        if (k < 0) throw InvalidParameter("moment order must be nonnegative");
        if (k > kMaxMomentOrder) throw UnsupportedOrder("moment order above " + std::to_string(kMaxMomentOrder));
        if (k == 0) return expect([](double) { return 1.0; });
        return expect([k](double x) { return std::pow(x, k); });
    }

    [[nodiscard]] double mean() const { return moment(1); }
    [[nodiscard]] double variance() const {
        const double m = mean();
        return expect([m](double x) { return (x - m) * (x - m); });
    }

    /// Inverse-CDF draw by binary search over the cumulative table.
    [[nodiscard]] double sample(Rng& rng) const noexcept {
        const auto& cdf = table_->cdf;
        const double u = rng.uniform() * cdf.back();
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        if (it == cdf.end()) --it;
        return point(static_cast<std::size_t>(it - cdf.begin()));
    }

private:
    struct Table {
        std::int64_t first = 0;
        std::vector<double> prob;
        std::vector<double> cdf;
        double normalizer = 0.0;
    };

    DiscreteGaussian(const DiscreteGaussianParams& p, double normalizer_scale) : params_(p) {
        validate(p);
        const double w = truncation_half_width(p);
        const double lo = std::ceil((p.mu - w - p.theta) / p.s);
        const double hi = std::floor((p.mu + w - p.theta) / p.s);
        if (hi - lo + 1.0 > 5e7) throw InvalidParameter("discrete Gaussian grid too fine for the truncation window");
        auto table = std::make_shared<Table>();
        table->first = static_cast<std::int64_t>(lo);
        const auto count = static_cast<std::size_t>(hi - lo + 1.0);
        table->prob.resize(count);
        const double c = p.s / (p.sigma * std::sqrt(2.0 * std::numbers::pi));
        NeumaierSum z;
        for (std::size_t j = 0; j < count; ++j) {
            const double x = p.theta + p.s * static_cast<double>(table->first + static_cast<std::int64_t>(j));
            const double u = (x - p.mu) / p.sigma;
            table->prob[j] = c * std::exp(-0.5 * u * u);
            z.add(table->prob[j]);
        }
        table->normalizer = z.value();
        if (!(table->normalizer > 0.0)) throw InvalidParameter("discrete Gaussian has no mass in its window");
        const double norm = table->normalizer * normalizer_scale;
        table->cdf.resize(count);
        double run = 0.0;
        for (std::size_t j = 0; j < count; ++j) {
            table->prob[j] /= norm;
            run += table->prob[j];
            table->cdf[j] = run;
        }
        table_ = std::move(table);
    }

    DiscreteGaussianParams params_;
    std::shared_ptr<const Table> table_;
};

inline double ndg_pmf(const DiscreteGaussianParams& p, double x) {
    if (!std::isfinite(x)) throw InvalidParameter("ndg_pmf: x must be finite");
    return DiscreteGaussian(p).pmf(x);
}

inline double ndg_sample(const DiscreteGaussianParams& p, Rng& rng) { return DiscreteGaussian(p).sample(rng); }

/// Unnormalized mass sum_i s * phi(theta + s i) of NDG(0, 1, theta, s).
inline double ndg_total_mass(double theta, double s) {
    return DiscreteGaussian(DiscreteGaussianParams{0.0, 1.0, theta, s}).normalizer();
}

inline double ndg_moment(const DiscreteGaussianParams& p, int k) { return DiscreteGaussian(p).moment(k); }

/// Oblivious contamination law E = NDG(0, sigma, 0, s) with inlier mass at 0 of at least alpha.
class ContaminationSpec {
public:
    ContaminationSpec(double sigma, double s, double alpha)
        : sigma_(sigma), s_(s), alpha_(alpha), law_(checked(sigma, s, alpha)) {
        if (law_.mass_at_index(0) < alpha_)
            throw InvalidParameter("contamination mass at 0 is below alpha for the given spacing");
    }

    /// Default spacing s = 1.05 * alpha * sigma * sqrt(2 pi); widened in 1% steps if the
    /// periodic normalizer pushes the mass at 0 below alpha (only for alpha near 1).
    static ContaminationSpec from_alpha(double alpha, double sigma = 1.0) {
        detail::require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0,1)");
        detail::require(sigma > 0.0 && sigma <= 1.0, "contamination sigma must lie in (0,1]");
        double s = kDefaultAlphaHeadroom * alpha * sigma * std::sqrt(2.0 * std::numbers::pi);
        for (int i = 0; i < 2000; ++i, s *= 1.01) {
            DiscreteGaussian law(DiscreteGaussianParams{0.0, sigma, 0.0, s});
            if (law.mass_at_index(0) >= alpha) return ContaminationSpec(sigma, s, alpha);
        }
        throw InvalidParameter("no spacing reaches the requested inlier mass");
    }

    [[nodiscard]] double sigma() const noexcept { return sigma_; }
    [[nodiscard]] double s() const noexcept { return s_; }
    [[nodiscard]] double alpha() const noexcept { return alpha_; }
    [[nodiscard]] const DiscreteGaussian& law() const noexcept { return law_; }
    [[nodiscard]] double mass_at_zero() const noexcept { return law_.mass_at_index(0); }
    [[nodiscard]] double variance() const { return law_.variance(); }
    [[nodiscard]] double sample(Rng& rng) const noexcept { return law_.sample(rng); }

private:
    static DiscreteGaussianParams checked(double sigma, double s, double alpha) {
        detail::require(sigma > 0.0 && sigma <= 1.0, "contamination sigma must lie in (0,1]");
        detail::require(s > 0.0, "contamination spacing must be positive");
        detail::require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0,1)");
        return DiscreteGaussianParams{0.0, sigma, 0.0, s};
    }

    double sigma_, s_, alpha_;
    DiscreteGaussian law_;
};

/// R*_{rho,E}: law of G + z with G ~ N(0, rho^2) and z ~ E independent.
struct ResponseMarginal {
    double rho;
    ContaminationSpec contamination;

    [[nodiscard]] double variance() const { return rho * rho + contamination.variance(); }
    [[nodiscard]] double sample(Rng& rng) const noexcept {
        return rho * standard_normal(rng) + contamination.sample(rng);
    }
};

inline double response_marginal_sample(const ResponseMarginal& r, Rng& rng) { return r.sample(rng); }

}  // namespace sqreg
