#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <set>
#include <string>

#include "sqreg/distributions.hpp"
#include "sqreg/errors.hpp"

namespace sqreg {

inline constexpr double kRhoCap = 0.9;
inline constexpr double kFineGridSPrime = 1e-3;

using WarningHandler = std::function<void(const std::string&)>;

namespace detail {
struct WarningState {
    std::mutex mu;
    std::set<std::string> seen;
    WarningHandler handler;
};
inline WarningState& warning_state() {
    static WarningState state;
    return state;
}
}  // namespace detail

/// Replace the warning sink; an empty handler restores the default (each distinct
/// message once per process on std::clog).
inline void set_warning_handler(WarningHandler h) {
    auto& st = detail::warning_state();
    std::lock_guard lock(st.mu);
    st.handler = std::move(h);
}

inline void warn(const std::string& message) {
    auto& st = detail::warning_state();
    std::lock_guard lock(st.mu);
    if (st.handler) {
        st.handler(message);
        return;
    }
    if (st.seen.insert(message).second) std::clog << "sqreg warning: " << message << '\n';
}

/// Coupled parameters of the testing problem: sigma = sqrt(1 - rho^2), s' = s / rho,
/// contamination E = NDG(0, sigma, 0, s) with mass at 0 at least alpha.
class TestingParams {
public:
    /// s defaults to the contamination headroom rule when not given.
    static TestingParams make(double rho, double alpha, std::optional<double> s = std::nullopt) {
        if (!(rho > 0.0)) throw InvalidParameter("rho must be positive");
        if (rho > kRhoCap) throw InvalidParameter("rho above the supported cap 0.9");
        const double sigma = std::sqrt(1.0 - rho * rho);
        ContaminationSpec e = s ? ContaminationSpec(sigma, *s, alpha) : ContaminationSpec::from_alpha(alpha, sigma);
        return TestingParams(rho, sigma, std::move(e));
    }

    /// Parameters for a given spacing, with alpha set to the realized mass at 0.
    static TestingParams from_spacing(double rho, double s) {
        if (!(rho > 0.0)) throw InvalidParameter("rho must be positive");
        if (rho > kRhoCap) throw InvalidParameter("rho above the supported cap 0.9");
        const double sigma = std::sqrt(1.0 - rho * rho);
        const double mass = DiscreteGaussian(DiscreteGaussianParams{0.0, sigma, 0.0, s}).mass_at_index(0);
        return TestingParams(rho, sigma, ContaminationSpec(sigma, s, std::min(mass, 1.0 - 1e-12)));
    }

    [[nodiscard]] double rho() const noexcept { return rho_; }
    [[nodiscard]] double sigma() const noexcept { return sigma_; }
    [[nodiscard]] double s() const noexcept { return contamination_.s(); }
    [[nodiscard]] double s_prime() const noexcept { return s_prime_; }
    [[nodiscard]] double alpha() const noexcept { return contamination_.alpha(); }
    [[nodiscard]] const ContaminationSpec& contamination() const noexcept { return contamination_; }
    [[nodiscard]] ResponseMarginal response_marginal() const { return ResponseMarginal{rho_, contamination_}; }

private:
    TestingParams(double rho, double sigma, ContaminationSpec e)
        : rho_(rho), sigma_(sigma), s_prime_(e.s() / rho), contamination_(std::move(e)) {
        if (s_prime_ > kFineGridSPrime)
            warn("s' = " + std::to_string(s_prime_) + " exceeds 0.001; coarse grid used for desk-scale verification");
    }

    double rho_;
    double sigma_;
    double s_prime_;
    ContaminationSpec contamination_;
};

/// A_y = NDG(rho y, sigma, y / rho, s'): law of v^T x given y under the alternate.
inline DiscreteGaussianParams conditional_law(const TestingParams& p, double y) {
    if (!std::isfinite(y)) throw InvalidParameter("conditional_law: y must be finite");
    if (p.rho() == 0.0) throw InvalidParameter("conditional_law: rho = 0 leaves theta_y undefined");
    return DiscreteGaussianParams{p.rho() * y, p.sigma(), y / p.rho(), p.s_prime()};
}

}  // namespace sqreg
