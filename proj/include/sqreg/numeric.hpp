#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace sqreg {

/// Compensated (Neumaier) summation.
class NeumaierSum {
public:
    void add(double x) noexcept {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    [[nodiscard]] double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double normal_pdf(double x) noexcept {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_pdf(double x, double mu, double sigma) noexcept {
    return normal_pdf((x - mu) / sigma) / sigma;
}

inline double normal_cdf(double x) noexcept { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// P(a < G <= b) for standard G, accurate in both tails.
inline double normal_interval(double a, double b) noexcept {
    if (a >= b) return 0.0;
    if (a > 0.0) return 0.5 * (std::erfc(a / std::numbers::sqrt2) - std::erfc(b / std::numbers::sqrt2));
    if (b < 0.0) return 0.5 * (std::erfc(-b / std::numbers::sqrt2) - std::erfc(-a / std::numbers::sqrt2));
    return normal_cdf(b) - normal_cdf(a);
}

struct MeanEstimate {
    double mean = 0.0;
    double se = 0.0;
    long long n = 0;
};

/// Running mean/variance (Welford).
class RunningStats {
public:
    void add(double x) noexcept {
        ++n_;
        const double delta = x - mean_;
        mean_ += delta / static_cast<double>(n_);
        m2_ += delta * (x - mean_);
    }
    [[nodiscard]] long long count() const noexcept { return n_; }
    [[nodiscard]] double mean() const noexcept { return mean_; }
    [[nodiscard]] double variance() const noexcept {
        return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0;
    }
    [[nodiscard]] double se() const noexcept {
        return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
    }
    [[nodiscard]] MeanEstimate estimate() const noexcept { return {mean(), se(), n_}; }

private:
    long long n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b| (inputs are copied and sorted).
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) return 1.0;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

/// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
template <class Cdf>
double ks_one_sample(std::vector<double> a, Cdf&& cdf) {
    if (a.empty()) return 1.0;
    std::sort(a.begin(), a.end());
    const double n = static_cast<double>(a.size());
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double f = cdf(a[i]);
        d = std::max({d, std::abs(f - static_cast<double>(i) / n), std::abs(static_cast<double>(i + 1) / n - f)});
    }
    return d;
}

}  // namespace sqreg
