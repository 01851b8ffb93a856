#include <catch_amalgamated.hpp>

#include <json.hpp>

#include <cmath>
#include <memory>
#include <sstream>
#include <vector>

#include "sqreg/oracles.hpp"

using namespace sqreg;

namespace {

struct QuietWarnings {
    QuietWarnings() { set_warning_handler([](const std::string&) {}); }
    ~QuietWarnings() { set_warning_handler({}); }
};

// Returns truth + bias for halfspaces through the origin.
class BiasedOracle final : public Oracle {
public:
    BiasedOracle(double m, double bias) : Oracle(m), bias_(bias) {}
    double answer(const Query&) override { return 0.5 + bias_; }

private:
    double bias_;
};

Vector random_ball_dir(Rng& rng, int d = 3) { return random_unit_vector(d, rng) * rng.uniform(); }

}  // namespace

TEST_CASE("VSTAT tolerance examples") {
    CHECK(vstat_tolerance(100, 0.0) == Catch::Approx(0.01));
    CHECK(vstat_tolerance(100, 0.5) == Catch::Approx(0.05));
    CHECK(vstat_tolerance(400, 0.1) == Catch::Approx(0.015));
    CHECK_THROWS_AS(vstat_tolerance(0.5, 0.1), InvalidParameter);
    CHECK_THROWS_AS(vstat_tolerance(10, 1.5), InvalidParameter);
    double prev = INFINITY;
    for (double m : {1.0, 10.0, 100.0, 1e4, 1e8}) {
        const double t = vstat_tolerance(m, 0.3);
        CHECK(t <= prev);
        CHECK(t >= 1.0 / m);
        prev = t;
    }
    CHECK(simulation_strength(8000, 1) == std::floor(8000 / (8 * std::log(10.0))));
    CHECK(simulation_strength(1, 1e6) == 1.0);
}

TEST_CASE("sample oracle basics") {
    QuietWarnings qw;
    const auto p = TestingParams::make(0.5, 0.3);
    Rng rng(1, 0);
    SampleOracle o(sample_testing(p, 5, HypothesisTag::null(), 100000, rng), 1000);
    CHECK(o.answer(constant_query("zero", 0.0)) == 0.0);
    CHECK(o.answer(constant_query("one", 1.0)) == 1.0);
    CHECK(o.answer(constant_query("clamped", 3.0)) == 1.0);
    const auto e = o.estimate(label_threshold_query("y>0", 0.0));
    // y is symmetric; the atom at 0 has probability zero because of the Gaussian part.
    CHECK(std::abs(e.mean - 0.5) <= 5.0 * e.se);
    CHECK(o.log().size() == 3);
    CHECK_THROWS_AS(SampleOracle(SampleSet{Matrix(0, 3), Vector(0)}, 10), InvalidParameter);
    CHECK_THROWS_AS(o.answer(halfspace_query("bad", Vector::Ones(3))), InvalidParameter);
}

TEST_CASE("structured and generic paths agree on a sample oracle") {
    const auto e = ContaminationSpec::from_alpha(0.3);
    Rng rng(2, 0);
    const Vector beta = 0.6 * random_unit_vector(4, rng);
    SampleOracle o(sample_estimation(EstimationInstance(beta, e), 20000, rng), 100);
    const Vector u = random_unit_vector(4, rng);
    std::vector<Query> qs = {halfspace_query("h", u, 0.3), slab_query("s", beta, 0.1), label_threshold_query("l", 0.2),
                             sign_correlation_query("c", u), Query("g", HuberGradientQuery{0.5 * beta, 2, 5.0, 5.0})};
    for (const auto& q : qs) {
        const Query g = generic_query(q.id() + ":generic", [q](const Vector& x, double y) { return q(x, y); });
        CHECK(o.estimate(q).mean == Catch::Approx(o.estimate(g).mean).margin(1e-12));
    }
}

TEST_CASE("tiled slab batch matches per-query answers") {
    const auto e = ContaminationSpec::from_alpha(0.3);
    Rng rng(3, 0);
    const Vector beta = 0.6 * random_unit_vector(2, rng);
    SampleOracle o(sample_estimation(EstimationInstance(beta, e), 5000, rng), 100);
    std::vector<Query> qs;
    for (int j = 0; j < 5000; ++j) qs.push_back(slab_query("s" + std::to_string(j), random_ball_dir(rng, 2), 0.01));
    const auto batch = o.answer_batch(qs);
    for (std::size_t j = 0; j < qs.size(); ++j) REQUIRE(batch[j] == o.estimate(qs[j]).mean);
    CHECK(o.log().size() == qs.size());
}

TEST_CASE("sample oracle passes the contract audit") {
    QuietWarnings qw;
    const auto p = TestingParams::make(0.5, 0.3);
    Rng rng(4, 0);
    const int d = 5;
    const long long n = 20000;
    const double m = simulation_strength(static_cast<double>(n), 50);
    SampleOracle o(sample_testing(p, d, HypothesisTag::null(), n, rng), m);
    int bad = 0;
    for (int k = 0; k < 50; ++k) {
        const Vector u = random_unit_vector(d, rng);
        const double b = 2.0 * rng.uniform() - 1.0;
        const double truth = 1.0 - normal_cdf(b);
        bad += std::abs(o.answer(halfspace_query("h" + std::to_string(k), u, b)) - truth) > vstat_tolerance(m, truth);
    }
    CHECK(bad <= 5);
}

TEST_CASE("exact Monte-Carlo oracle") {
    QuietWarnings qw;
    const auto p = TestingParams::make(0.5, 0.3);
    Rng rng(5, 0);
    const int d = 8;
    CHECK_THROWS_AS(ExactMcOracle(null_law(p, d), 1000, 1, 10), InvalidParameter);
    ExactMcOracle o(null_law(p, d), kMinExactSamples, 9, 1e4);
    const auto c = o.estimate(constant_query("c", 0.3));
    CHECK(c.mean == 0.3);
    CHECK(c.se == 0.0);
    const auto h = o.estimate(halfspace_query("h", random_unit_vector(d, rng)));
    CHECK(std::abs(h.mean - 0.5) <= 5.0 * h.se);
    const auto slab_exact = o.estimate(slab_query("s", 0.4 * random_unit_vector(d, rng), 0.2));
    const auto slab_truth = AnalyticTruth(null_law(p, d))(slab_query("s", 0.4 * Vector::Unit(d, 0), 0.2));
    REQUIRE(slab_truth.has_value());
    CHECK(std::abs(slab_exact.mean - *slab_truth) <= 5.0 * slab_exact.se);
    CHECK(o.answer(constant_query("c", 0.3)) == 0.3);
    CHECK(o.log().size() == 1);
}

TEST_CASE("exact and sample oracles agree at matched n") {
    QuietWarnings qw;
    const auto p = TestingParams::make(0.5, 0.3);
    Rng rng(6, 0);
    const int d = 6;
    const Vector v = random_unit_vector(d, rng);
    const JointLaw law = alternate_law(p, v);
    ExactMcOracle ex(law, kMinExactSamples, 17, 1e4);
    SampleOracle so(sample_law(law, kMinExactSamples, rng), 1e4);
    for (int k = 0; k < 20; ++k) {
        const Vector u = random_unit_vector(d, rng);
        std::vector<Query> qs = {halfspace_query("h", u, 0.5 * k / 20.0), sign_correlation_query("c", (u + v).normalized()),
                                 slab_query("s", 0.5 * (u + v).normalized(), 0.3), label_threshold_query("l", 0.1 * k - 1.0)};
        for (const auto& q : qs) {
            const auto a = ex.estimate(q), b = so.estimate(q);
            INFO(q.id() << " k=" << k);
            CHECK(std::abs(a.mean - b.mean) <= 5.0 * std::sqrt(a.se * a.se + b.se * b.se) + 1e-12);
        }
    }
    // The generic path of the exact oracle sees the same law.
    const Vector u = random_unit_vector(d, rng);
    const Query sc = sign_correlation_query("c", u);
    const Query g = generic_query("g", [sc](const Vector& x, double y) { return sc(x, y); });
    const auto a = ex.estimate(sc), b = ex.estimate(g);
    CHECK(std::abs(a.mean - b.mean) <= 5.0 * std::sqrt(a.se * a.se + b.se * b.se));
}

TEST_CASE("exact oracle Huber query at zero signal") {
    // beta* = 0 and symmetric noise: antithetic pairs cancel, so the coordinate sits at 1/2.
    Rng rng(7, 0);
    ExactMcOracle o(LinearLaw{Vector::Zero(5), ContaminationSpec::from_alpha(0.3)}, kMinExactSamples, 3, 1e9, true);
    for (int j = 0; j < 5; ++j) {
        const auto e = o.estimate(Query("g", HuberGradientQuery{Vector::Zero(5), j, 6.0, 6.0}));
        CHECK(std::abs(e.mean - 0.5) <= 1e-12);
        const auto e2 = o.estimate(Query("g", HuberGradientQuery{0.3 * random_unit_vector(5, rng), j, 6.0, 6.0}));
        CHECK(e2.se > 0.0);
    }
}

TEST_CASE("adversarial oracle") {
    QuietWarnings qw;
    const auto p = TestingParams::make(0.3, 0.3);
    Rng rng(8, 0);
    const int d = 400;
    const Vector v = random_unit_vector(d, rng);
    auto P = std::make_shared<const ExactMcOracle>(null_law(p, d), kMinExactSamples, 21, 1.0, true);
    auto Q = std::make_shared<const ExactMcOracle>(alternate_law(p, v), kMinExactSamples, 21, 1.0, true);
    AdversarialOracle null_o(HypothesisTag::null(), 200, P, nullptr);
    AdversarialOracle alt_o(HypothesisTag::alternate(v), 200, P, Q);
    CHECK(null_o.answer(constant_query("half", 0.5)) == 0.5);
    CHECK(alt_o.answer(constant_query("half", 0.5)) == 0.5);
    CHECK_THROWS_AS(AdversarialOracle(HypothesisTag::alternate(v), 200, P, nullptr), InvalidParameter);

    // An inlier detector aligned with v breaks indistinguishability; random sign correlations do not.
    const Query detector = slab_query("detector", p.rho() * v, 1e-9);
    CHECK(alt_o.answer(detector) != null_o.answer(detector));
    for (int k = 0; k < 20; ++k) {
        const Query f = sign_correlation_query("corr", random_unit_vector(d, rng));
        CHECK(alt_o.answer(f) == null_o.answer(f));
    }
    AdversarialOracle too_strong(HypothesisTag::alternate(v), 1e9, P, Q);
    CHECK_THROWS_AS(too_strong.answer(sign_correlation_query("c", v)), InsufficientPrecision);
}

TEST_CASE("adversarial answers mostly follow the null at d = 400") {
    QuietWarnings qw;
    const auto p = TestingParams::make(0.3, 0.02);
    Rng rng(9, 0);
    const int d = 400;
    const Query f = sign_correlation_query("corr", random_unit_vector(d, rng));
    auto P = std::make_shared<const ExactMcOracle>(null_law(p, d), kMinExactSamples, 31, 1.0, true);
    const double ep = P->estimate(f).mean;
    int deviating = 0;
    for (int k = 0; k < 30; ++k) {
        const Vector v = random_unit_vector(d, rng);
        auto Q = std::make_shared<const ExactMcOracle>(alternate_law(p, v), kMinExactSamples, 31 + k, 1.0, true);
        AdversarialOracle o(HypothesisTag::alternate(v), 200, P, Q);
        deviating += o.answer(f) != ep;
    }
    CHECK(deviating <= 3);
}

TEST_CASE("success predicate and events") {
    CHECK(success_predicate(0.0, 1.0, 1.0));
    CHECK_FALSE(success_predicate(0.5, 0.5, 1e6));
    CHECK_FALSE(success_predicate(0.5, 0.51, 100));
    CHECK(success_predicate(0.5, 0.7, 100));
    QuietWarnings qw;
    const auto p = TestingParams::make(0.5, 0.3);
    Rng rng(10, 0);
    const Vector v = random_unit_vector(10, rng);
    CHECK_FALSE(success_event(constant_query("c", 0.4), p, v, 100, kMinExactSamples));
    CHECK(success_event(slab_query("detector", p.rho() * v, 1e-9), p, v, 100, kMinExactSamples));
}

TEST_CASE("answer log JSON lines") {
    QuietWarnings qw;
    const auto p = TestingParams::make(0.5, 0.3);
    Rng rng(11, 0);
    SampleOracle o(sample_testing(p, 3, HypothesisTag::null(), 1000, rng), 400);
    o.answer(constant_query("a", 0.1));
    o.answer(label_threshold_query("b", 0.0));
    std::stringstream ss;
    o.log().write_jsonl(ss);
    std::string line;
    int n = 0;
    while (std::getline(ss, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.contains("query_id"));
        CHECK(j["m"].get<double>() == 400.0);
        CHECK(j["tolerance"].get<double>() == Catch::Approx(vstat_tolerance(400, j["response"].get<double>())));
        ++n;
    }
    CHECK(n == 2);
    o.log().set_enabled(false);
    o.answer(constant_query("c", 0.2));
    CHECK(o.log().size() == 2);
    o.log().clear();
    CHECK(o.log().size() == 0);
}

TEST_CASE("audit catches a biased oracle") {
    const JointLaw law = NullLaw{3, ResponseMarginal{0.5, ContaminationSpec::from_alpha(0.3)}};
    BiasedOracle honest(100, 0.0), biased(100, 0.2);
    AuditingOracle a(honest, analytic_or(law, {})), b(biased, analytic_or(law, {}));
    Rng rng(12, 0);
    for (int k = 0; k < 10; ++k) {
        const Query q = halfspace_query("h", random_unit_vector(3, rng));
        a.answer(q);
        b.answer(q);
    }
    CHECK(a.report().responses == 10);
    CHECK(a.report().violations == 0);
    CHECK(b.report().violations == 10);
    CHECK(b.report().worst_ratio > 1.0);
    CHECK_THROWS_AS(a.answer(sign_correlation_query("c", Vector::Unit(3, 0))), InvalidParameter);
}

TEST_CASE("analytic truth matches Monte Carlo") {
    QuietWarnings qw;
    const auto p = TestingParams::make(0.4, 0.25);
    Rng rng(13, 0);
    const int d = 3;
    const Vector v = random_unit_vector(d, rng);
    for (const JointLaw& law : {null_law(p, d), alternate_law(p, v), JointLaw(LinearLaw{Vector::Zero(d), ContaminationSpec::from_alpha(0.2)})}) {
        const ExactMcOracle o(law, 2 * kMinExactSamples, 5, 1.0);
        const AnalyticTruth t(law);
        const std::vector<Query> qs = {label_threshold_query("l", 0.3), label_threshold_query("l0", 0.0),
                                       halfspace_query("h", random_unit_vector(d, rng), -0.4),
                                       slab_query("s", 0.4 * v, 0.05), slab_query("s2", random_ball_dir(rng), 0.5)};
        for (const auto& q : qs) {
            const auto a = t(q);
            REQUIRE(a.has_value());
            const auto e = o.estimate(q);
            INFO(q.id());
            CHECK(std::abs(*a - e.mean) <= 5.0 * e.se + 1e-12);
        }
    }
    const AnalyticTruth cont(continuous_alternate_law(p, v));
    CHECK_FALSE(cont(halfspace_query("h", v)).has_value());
    CHECK(cont(label_threshold_query("l", 0.0)).has_value());
}
