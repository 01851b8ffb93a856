#include <catch_amalgamated.hpp>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <json.hpp>

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "sqreg/analysis.hpp"

using namespace sqreg;

namespace {

struct QuietWarnings {
    QuietWarnings() { set_warning_handler([](const std::string&) {}); }
    ~QuietWarnings() { set_warning_handler({}); }
};

// Adaptive 2-D quadrature of E_{N(0, I_2)}[r(x1) r(c x1 + s x2)] - 1 with r the
// density ratio of N(a, 1 - gamma) against N(0, 1).
double chi_by_quadrature(double a, double gamma, double c) {
    using boost::math::quadrature::gauss_kronrod;
    const double s = std::sqrt(1.0 - c * c), sd = std::sqrt(1.0 - gamma);
    auto r = [&](double t) { return std::exp(-0.5 * ((t - a) / sd) * ((t - a) / sd) + 0.5 * t * t) / sd; };
    const double inf = std::numeric_limits<double>::infinity();
    auto outer = [&](double x1) {
        auto inner = [&](double x2) { return normal_pdf(x2) * r(c * x1 + s * x2); };
        return normal_pdf(x1) * r(x1) * gauss_kronrod<double, 31>::integrate(inner, -inf, inf, 15, 1e-14);
    };
    return gauss_kronrod<double, 31>::integrate(outer, -inf, inf, 15, 1e-14) - 1.0;
}

// (1 + f) E[exp(g y^2)] - 1 with the y-expectation in closed form over the noise atoms:
// E[exp(g (rho G + z)^2)] = exp(g z^2 / (1 - 2 g rho^2)) / sqrt(1 - 2 g rho^2).
double chi_by_mixture(const TestingParams& p, double c) {
    const double r2c = p.rho() * p.rho() * c;
    const double f1 = 1.0 / std::sqrt(1.0 - r2c * r2c);
    const double g = r2c / (1.0 + r2c);
    const double k = 1.0 - 2.0 * g * p.rho() * p.rho();
    const DiscreteGaussian& e = p.contamination().law();
    long double acc = 0.0L;
    for (std::size_t j = 0; j < e.size(); ++j) {
        const double z = e.point(j);
        acc += e.probability(j) * std::exp(g * z * z / k);
    }
    return f1 * static_cast<double>(acc) / std::sqrt(k) - 1.0;
}

}  // namespace

TEST_CASE("closed form examples and errors") {
    for (double a : {0.0, 0.5, 2.0})
        for (double g : {0.1, 0.9}) CHECK(chi_gaussian_closed_form(a, g, 0.0) == 0.0);
    CHECK(chi_gaussian_closed_form(0.0, 0.5, 1.0) == Catch::Approx(1.0 / std::sqrt(0.75) - 1.0).epsilon(1e-15));
    CHECK_THROWS_AS(chi_gaussian_closed_form(0.0, 1.2, 0.5), InvalidParameter);
    CHECK_THROWS_AS(chi_gaussian_closed_form(0.0, 0.5, 1.5), InvalidParameter);
}

TEST_CASE("closed form matches adaptive quadrature") {
    for (double a : {0.0, 0.3, 1.0})
        for (double g : {0.2, 0.5})
            for (double c : {-0.5, 0.0, 0.7}) {
                INFO("a=" << a << " gamma=" << g << " cos=" << c);
                const double cf = chi_gaussian_closed_form(a, g, c);
                CHECK(std::abs(cf - chi_by_quadrature(a, g, c)) <= 1e-6);
                CHECK(std::abs(cf - chi_gaussian_numeric(a, g, c).value) <= 1e-6);
            }
    CHECK(std::abs(chi_gaussian_closed_form(0.8, 0.36, 0.7) - chi_by_quadrature(0.8, 0.36, 0.7)) <= 1e-6);
    CHECK(chi_gaussian_numeric(0.1, 0.2, 0.3).method == ChiMethod::Quadrature);
}

TEST_CASE("closed form symmetry and sign") {
    for (double a : {0.0, 0.4, 1.1})
        for (double g : {0.1, 0.5, 0.8}) {
            CHECK(chi_gaussian_closed_form(a, g, 1.0) >= 0.0);
            CHECK(chi_gaussian_closed_form(a, g, 0.3) == chi_gaussian_closed_form(-a, g, 0.3));
            CHECK(chi_gaussian_closed_form(a, g, -0.6) >= -1.0);
        }
}

TEST_CASE("response MGF series agrees with direct summation") {
    QuietWarnings qw;
    const auto p = TestingParams::make(0.2, 0.1);
    Rng rng(1, 0);
    const ResponseMgf pool(p, 200000, rng);
    for (double g : {-0.05, -0.01, 0.0, 0.01, 0.04, 0.5}) {
        long double acc = 0.0L;
        for (double y2 : pool.squared_samples()) acc += std::exp(g * y2);
        const double direct = static_cast<double>(acc / pool.size());
        CHECK(pool.mean_exp(g) == Catch::Approx(direct).epsilon(1e-12));
    }
}

TEST_CASE("chi correlation examples") {
    QuietWarnings qw;
    const auto p = TestingParams::make(0.2, 0.1);
    Rng rng(2, 0);
    const ResponseMgf pool(p, 2'000'000, rng);
    const auto z = chi_Tv_correlation(p, 0.0, pool);
    CHECK(z.value == 0.0);
    CHECK(z.method == ChiMethod::MonteCarlo);
    for (double c : {-0.5, -0.2, -0.05, 0.05, 0.2, 0.5, 1.0}) {
        const auto r = chi_Tv_correlation(p, c, pool);
        INFO("cos = " << c);
        CHECK(std::abs(r.value) <= 5.0 * 0.04 * std::abs(c) + 5.0 * r.se);
        CHECK(std::abs(r.value - chi_by_mixture(p, c)) <= 5.0 * r.se + 1e-12);
    }
    const auto big = TestingParams::make(0.5, 0.1);
    CHECK_THROWS_AS(chi_Tv_correlation(big, 0.9, pool), InvalidParameter);
    CHECK_THROWS_AS(chi_Tv_correlation(p, 1.5, pool), InvalidParameter);
}

TEST_CASE("chi correlation decomposes over the response") {
    QuietWarnings qw;
    const auto p = TestingParams::make(0.3, 0.2);
    Rng rng(3, 0);
    const int d = 5;
    const Vector v = random_unit_vector(d, rng);
    Vector w = random_unit_vector(d, rng);
    w = (0.6 * v + 0.8 * (w - w.dot(v) * v).normalized()).normalized();
    const double c = v.dot(w);
    const auto direct = chi_Tv_direct_mc(p, v, w, 1'000'000, rng);
    const auto swapped = chi_Tv_direct_mc(p, w, v, 1'000'000, rng);
    const auto cond = chi_Tv_conditional_average(p, c, 1'000'000, rng);
    const double exact = chi_by_mixture(p, c);
    CHECK(std::abs(direct.value - exact) <= 5.0 * direct.se);
    CHECK(std::abs(swapped.value - exact) <= 5.0 * swapped.se);
    CHECK(std::abs(cond.value - exact) <= 5.0 * cond.se);
    const auto self = chi_Tv_direct_mc(p, v, v, 1'000'000, rng);
    CHECK(self.value >= -5.0 * self.se);
}

TEST_CASE("SDA proxy") {
    QuietWarnings qw;
    Rng rng(4, 0);
    const auto small = TestingParams::make(0.2, 0.1);
    CHECK(sda_proxy(small, 50, 1.0, 10, kMinSdaPairs, 200000, rng).holds);
    const auto p = TestingParams::make(0.3, 0.02);
    const int d = 400;
    const long long q = 100;
    const double m = std::floor(std::sqrt(d) / (10.0 * 0.09 * std::log(static_cast<double>(q))));
    Rng r1(5, 0), r2(5, 0);
    const auto lo = sda_proxy(p, d, m, q, kMinSdaPairs, kMinExactSamples, r1);
    const auto hi = sda_proxy(p, d, 100.0 * m, q, kMinSdaPairs, kMinExactSamples, r2);
    CHECK(lo.holds);
    CHECK_FALSE(hi.holds);
    CHECK(lo.top_mean == hi.top_mean);
    CHECK(lo.top_count == 1);
    CHECK_THROWS_AS(sda_proxy(p, d, m, 101, kMinSdaPairs, 1000, rng), InsufficientPairs);
    CHECK_THROWS_AS(sda_proxy(p, d, m, 10, 9999, 1000, rng), InvalidParameter);
}

TEST_CASE("sweep over constants and inlier detectors") {
    QuietWarnings qw;
    const auto p = TestingParams::make(0.3, 0.3);
    const int d = 400;
    Rng rng(6, 0);
    const std::vector<Query> constants = {constant_query("c0", 0.0), constant_query("c1", 0.5), constant_query("c2", 1.0)};
    const auto table = expectation_table(p, d, constants, 3, kMinExactSamples, rng);
    for (double m : {1.0, 100.0, 1e6}) CHECK(evaluate_sweep(table, m).success_fraction == 0.0);

    const Vector v0 = random_unit_vector(d, rng);
    const std::vector<Query> detector = {slab_query("detector", p.rho() * v0, 1e-9)};
    const auto sweep = indistinguishability_sweep(p, d, 100, detector, 20, kMinExactSamples, rng);
    CHECK(sweep.success_fraction <= 0.1);
    CHECK(success_event(detector[0], p, v0, 100, kMinExactSamples));
}

TEST_CASE("sweep precision guard and outputs") {
    QuietWarnings qw;
    const auto p = TestingParams::make(0.3, 0.02);
    const int d = 50;
    Rng rng(7, 0);
    const auto battery = correlation_battery(d, 3, rng);
    CHECK(battery[2].id() == "corr:2");
    const auto table = expectation_table(p, d, battery, 2, kMinExactSamples, rng);
    CHECK(table.cells.size() == 6);
    CHECK_THROWS_AS(evaluate_sweep(table, 1e8), InsufficientPrecision);
    const auto r = evaluate_sweep(table, 100);
    std::stringstream ss;
    write_sweep_csv(r, ss);
    std::string header;
    std::getline(ss, header);
    CHECK(header == "query_id,v_index,E_P,E_Qv,tolerance,success");
    const auto j = sweep_summary(r);
    CHECK(j["m"].get<double>() == 100.0);
    CHECK(j.contains("success:corr:0"));
    CHECK(r.query_success.size() == 3);
}
