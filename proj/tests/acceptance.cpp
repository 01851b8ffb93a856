// Acceptance suite: one PASS/FAIL line per criterion.
//   acceptance                 run every criterion
//   acceptance --criterion N   run criterion N only

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "sqreg/sqreg.hpp"

using namespace sqreg;

namespace {

// Pinned tolerances.
constexpr double kC1Tol = 1e-6;
constexpr double kC2Const = 5.0;
constexpr double kC2SlackSE = 5.0;
constexpr long long kC2Samples = 10'000'000;
constexpr double kC3MonotoneSlack = 1e-12;
constexpr double kC3GapTol = 1e-6;
constexpr double kC3MassTol = 1e-10;
constexpr double kC4TvTol = 0.05;
constexpr long long kC4MinCell = 2000;
constexpr double kC5Tol = 5e-3;
constexpr int kC6MinWins = 9;
constexpr double kC7MedianTol = 0.1;
constexpr double kC7StarveRatio = 2.0;
constexpr double kC8MinCorrect = 0.9;
constexpr double kC8MaxNullExceed = 0.1;
constexpr double kC11LowMax = 0.1;
constexpr double kC11HighMin = 0.5;

struct Result {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

// ---------------------------------------------------------------------------

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

Result criterion_1() {
    double worst = 0.0;
    bool zero_exact = true;
    int points = 0;
    for (double a : {0.0, 0.3, 1.0})
        for (double g : {0.2, 0.5})
            for (double c : {-0.5, 0.0, 0.7}) {
                const double cf = chi_gaussian_closed_form(a, g, c);
                worst = std::max(worst, std::abs(cf - chi_by_quadrature(a, g, c)));
                if (c == 0.0 && cf != 0.0) zero_exact = false;
                ++points;
            }
    return {worst <= kC1Tol && zero_exact && points == 18,
            fmt("18-point grid max |closed - quadrature| = %.3g (tol %.0e), exact zero at cos=0: %s", worst, kC1Tol, zero_exact ? "yes" : "no")};
}

// Exact response-mixture value of the correlation, for the dual route.
double chi_by_mixture(const TestingParams& p, double c) {
    const double r2c = p.rho() * p.rho() * c;
    const double f1 = 1.0 / std::sqrt(1.0 - r2c * r2c);
    const double g = r2c / (1.0 + r2c);
    const double k = 1.0 - 2.0 * g * p.rho() * p.rho();
    const DiscreteGaussian& e = p.contamination().law();
    long double acc = 0.0L;
    for (std::size_t j = 0; j < e.size(); ++j) acc += e.probability(j) * std::exp(g * e.point(j) * e.point(j) / k);
    return f1 * static_cast<double>(acc) / std::sqrt(k) - 1.0;
}

Result criterion_2() {
    bool ok = true;
    double worst_ratio = 0.0, worst_dual = 0.0;
    for (double rho : {0.1, 0.2}) {
        const TestingParams p = TestingParams::make(rho, 0.02);
        Rng rng = make_stream(2, "criterion-2", static_cast<std::uint64_t>(rho * 100));
        const ResponseMgf pool(p, kC2Samples, rng);
        for (double c : {-0.5, -0.2, -0.05, 0.05, 0.2, 0.5}) {
            const auto r = chi_Tv_correlation(p, c, pool);
            const double bound = kC2Const * rho * rho * std::abs(c) + kC2SlackSE * r.se;
            worst_ratio = std::max(worst_ratio, std::abs(r.value) / bound);
            ok = ok && std::abs(r.value) <= bound;
            const double dual = std::abs(r.value - chi_by_mixture(p, c)) / std::max(r.se, 1e-300);
            worst_dual = std::max(worst_dual, dual);
            ok = ok && dual <= 5.0;
        }
        if (rho == 0.2) {
            const auto self = chi_Tv_correlation(p, 1.0, pool);
            ok = ok && self.value <= kC2Const * rho * rho + kC2SlackSE * self.se;
        }
    }
    return {ok, fmt("max |chi| / (5 rho^2 |cos| + 5 SE) = %.3f; mixture-formula agreement within %.2f SE", worst_ratio, worst_dual)};
}

double gaussian_moment(int k) {
    if (k % 2) return 0.0;
    double m = 1.0;
    for (int j = k - 1; j > 0; j -= 2) m *= j;
    return m;
}

// Moment of NDG(0, 1, 0, s) by a direct sum over |i| <= 400 / s.
double brute_moment(double s, int k) {
    long double acc = 0.0L, z = 0.0L;
    const long lim = static_cast<long>(std::ceil(40.0 / s));
    for (long i = -lim; i <= lim; ++i) {
        const double x = s * static_cast<double>(i);
        const double w = std::exp(-0.5 * x * x);
        z += w;
        acc += static_cast<long double>(w) * std::pow(x, k);
    }
    return static_cast<double>(acc / z);
}

Result criterion_3() {
    bool monotone = true, small = true, dual = true;
    double worst_small = 0.0;
    for (int k = 1; k <= 6; ++k) {
        double prev = INFINITY;
        for (double s : {0.8, 0.5, 0.3, 0.2}) {
            const double lib = ndg_moment({0.0, 1.0, 0.0, s}, k);
            const double gap = std::abs(lib - gaussian_moment(k));
            if (!(gap <= prev + kC3MonotoneSlack * std::max(1.0, gaussian_moment(k)))) monotone = false;
            prev = gap;
            if (s == 0.2 && k <= 4) {
                worst_small = std::max(worst_small, gap);
                small = small && gap < kC3GapTol;
            }
            dual = dual && std::abs(lib - brute_moment(s, k)) <= 1e-12 * std::max(1.0, gaussian_moment(k));
        }
    }
    const double mass = ndg_total_mass(0.0, 0.2);
    long double z = 0.0L;
    for (long i = -2000; i <= 2000; ++i) z += 0.2 * normal_pdf(0.2 * static_cast<double>(i));
    const bool mass_ok = std::abs(mass - 1.0) <= kC3MassTol && std::abs(mass - static_cast<double>(z)) < 1e-14;
    return {monotone && small && mass_ok && dual,
            fmt("monotone: %s; max gap at s=0.2, k<=4: %.2g; |mass-1| = %.2g; direct-sum agreement: %s", monotone ? "yes" : "no", worst_small,
                std::abs(mass - 1.0), dual ? "yes" : "no")};
}

Result criterion_4() {
    set_warning_handler([](const std::string&) {});
    const TestingParams p = TestingParams::make(0.5, 0.02, 0.05);
    set_warning_handler({});
    const int d = 4;
    const long long n = 200'000;
    Rng rng = make_stream(4, "criterion-4");
    const auto lib = conditional_law_check(p, d, n, rng);
    double lib_worst = 0.0;
    int lib_cells = 0;
    for (const auto& c : lib.cells)
        if (c.count >= kC4MinCell) {
            lib_worst = std::max(lib_worst, c.tv);
            ++lib_cells;
        }

    // Independent route: residual u = v^T x - rho y lies on s' (phase + Z) with
    // phase = frac(y sigma^2 / s) and mass proportional to exp(-(s'(i + phase))^2 / 2 sigma^2).
    Rng r2 = make_stream(4, "criterion-4-dual");
    const Vector v = random_unit_vector(d, r2);
    const SampleSet s = sample_testing(p, d, HypothesisTag::alternate(v), n, r2);
    const double sig2 = p.sigma() * p.sigma(), sp = p.s_prime();
    const int n_cells = static_cast<int>(std::ceil(4.0 / sig2));
    std::vector<std::map<long, long>> hist(static_cast<std::size_t>(n_cells));
    long long off_grid = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        const double y = s.y(i);
        const double u = s.X.row(i).dot(v) - p.rho() * y;
        const double c = y * sig2 / p.s();
        const double phase = c - std::floor(c);
        const double idx = u / sp - phase;
        if (std::abs(idx - std::round(idx)) > 1e-6) {
            ++off_grid;
            continue;
        }
        const int cell = std::min(n_cells - 1, static_cast<int>(phase * n_cells));
        ++hist[static_cast<std::size_t>(cell)][std::lround(idx)];
    }
    double dual_worst = 0.0;
    int dual_cells = 0;
    for (int cell = 0; cell < n_cells; ++cell) {
        long long count = 0;
        for (const auto& [i, k] : hist[static_cast<std::size_t>(cell)]) count += k;
        if (count < kC4MinCell) continue;
        ++dual_cells;
        const double phase = (cell + 0.5) / n_cells;
        std::map<long, double> ref;
        long double z = 0.0L;
        for (long i = -4000; i <= 4000; ++i) {
            const double w = std::exp(-0.5 * sp * sp * (i + phase) * (i + phase) / sig2);
            if (w > 0.0) ref[i] = w;
            z += w;
        }
        double tv = 0.0;
        for (auto& [i, w] : ref) {
            w /= static_cast<double>(z);
            const auto it = hist[static_cast<std::size_t>(cell)].find(i);
            tv += std::abs((it == hist[static_cast<std::size_t>(cell)].end() ? 0.0 : static_cast<double>(it->second) / count) - w);
        }
        dual_worst = std::max(dual_worst, 0.5 * tv);
    }
    const bool ok = lib.off_grid == 0 && off_grid == 0 && lib_cells > 0 && dual_cells > 0 && lib_worst <= kC4TvTol && dual_worst <= kC4TvTol;
    return {ok, fmt("library check: %d cells >= %lld samples, max TV %.4f; independent binning: %d cells, max TV %.4f; off-grid %lld/%lld",
                    lib_cells, kC4MinCell, lib_worst, dual_cells, dual_worst, lib.off_grid, off_grid)};
}

Result criterion_5() {
    using G = std::function<double(const Eigen::VectorXd&)>;
    struct Triple {
        G g;
        UnivariateLaw law;
        bool use_e1;
    };
    const std::vector<Triple> battery = {
        {[](const Eigen::VectorXd& x) { return x(0) > 0.0 ? 1.0 : 0.0; }, DiscreteGaussianParams{0.3, 0.8, 0.0, 0.1}, true},
        {[](const Eigen::VectorXd& x) { return x(0) + x(1) > 0.3 ? 1.0 : 0.0; }, GaussianLaw{0.5, 0.7}, false},
        {[](const Eigen::VectorXd& x) { return 1.0 / (1.0 + std::exp(-2.0 * x(2))); }, DiscreteGaussianParams{0.0, 0.6, 0.1, 0.3}, false},
        {[](const Eigen::VectorXd& x) { return x(0) > 0.0 && x(1) > 0.0 ? 1.0 : 0.0; }, GaussianLaw{0.0, 1.0}, false},
        {[](const Eigen::VectorXd& x) { return std::abs(x(2)) < 0.5 ? 1.0 : 0.0; }, TruncatedDiscreteGaussian{{0.2, 0.9, 0.0, 0.2}, 3.0}, false},
        {[](const Eigen::VectorXd& x) { return x.squaredNorm() < 2.5 ? 1.0 : 0.0; }, DiscreteGaussianParams{-0.4, 0.7, 0.05, 0.15}, false},
        {[](const Eigen::VectorXd& x) { return std::exp(-0.5 * x.squaredNorm() / 3.0); }, GaussianLaw{0.2, 1.2}, false},
        {[](const Eigen::VectorXd&) { return 1.0; }, DiscreteGaussianParams{0.1, 0.5, 0.0, 0.4}, false},
        {[](const Eigen::VectorXd& x) { return 0.5 + 0.5 * std::tanh(x(0) - x(2)); }, TruncatedDiscreteGaussian{{0.0, 0.8, 0.1, 0.05}, 2.0}, false},
        {[](const Eigen::VectorXd& x) { return x(1) > -0.7 ? 1.0 : 0.0; }, GaussianLaw{-0.3, 0.9}, false},
    };
    double worst = 0.0;
    int idx = 0;
    for (const auto& t : battery) {
        Rng rng = make_stream(5, "criterion-5", static_cast<std::uint64_t>(idx++));
        const Eigen::VectorXd v = t.use_e1 ? Eigen::VectorXd::Unit(3, 0) : random_unit_vector(3, rng);
        const auto r = fourier_decomposition_check(t.g, t.law, v, 4, 3, rng, 1'000'000);
        worst = std::max(worst, std::abs(r.lhs - r.rhs));
    }
    return {worst <= kC5Tol, fmt("10 triples, max |lhs - rhs| = %.4g (tol %.0e)", worst, kC5Tol)};
}

Result criterion_6() {
    const ExperimentConfig c = ExperimentConfig::defaults("estimate-cover");
    const auto out = execute_experiment(c);
    int wins = 0;
    double worst = 0.0;
    for (const auto& row : out.rows) {
        wins += row[4] == "1";
        worst = std::max(worst, std::stod(row[3]));
    }
    return {wins >= kC6MinWins && c.d == 2 && c.alpha == 0.2 && c.tau == 0.3 && c.n == 5000 && c.trials == 10,
            fmt("%d/10 trials within tau = 0.3 (cover of %s points, worst error %.4f)", wins, out.rows.front()[2].c_str(), worst)};
}

Result criterion_7() {
    ExperimentConfig c = ExperimentConfig::defaults("estimate-huber");
    const auto fed = execute_experiment(c);
    c.n = static_cast<long long>(std::llround(c.d / (10.0 * c.alpha * c.alpha)));
    const auto starved = execute_experiment(c);
    const double a = fed.records.front().value, b = starved.records.front().value;
    return {a <= kC7MedianTol && b >= kC7StarveRatio * a,
            fmt("median error %.4f at n = %s; %.4f at n = %lld (ratio %.1f)", a, fed.rows.front()[1].c_str(), b, c.n, b / a)};
}

Result criterion_8() {
    set_warning_handler([](const std::string&) {});
    const ExperimentConfig c = ExperimentConfig::defaults("reduce-test");
    const TestingParams p = detail::testing_params_of(c);
    const auto out = execute_experiment(c);
    std::map<std::string, double> rec;
    for (const auto& r : out.records) rec[r.metric] = r.value;

    // The estimator's accuracy on alternate inputs, and the null |W| law against
    // the inner product of two independent uniform unit vectors.
    const SampleEstimator est = huber_sample_estimator(p.alpha(), c.eps);
    int accurate = 0;
    const int probes = 20;
    for (int t = 0; t < probes; ++t) {
        Rng rng = make_stream(8, "criterion-8-accuracy", static_cast<std::uint64_t>(t));
        const Vector v = random_unit_vector(c.d, rng);
        const SampleSet s = sample_testing(p, c.d, HypothesisTag::alternate(v), c.n, rng);
        accurate += (est(s) - p.rho() * v).norm() <= p.rho() / 4.0;
    }
    std::vector<double> null_w, ref;
    for (const auto& row : out.rows)
        if (row[1] == "null") null_w.push_back(std::abs(std::stod(row[2])));
    Rng rr = make_stream(8, "criterion-8-reference");
    long long ref_exceed = 0;
    for (int i = 0; i < 100000; ++i) {
        const double w = std::abs(random_unit_vector(c.d, rr).dot(random_unit_vector(c.d, rr)));
        ref.push_back(w);
        ref_exceed += w > kReductionThreshold;
    }
    set_warning_handler({});
    const double ks = ks_two_sample(null_w, ref);
    const double nc = rec["null_correct_rate"], ac = rec["alternate_correct_rate"], ne = rec["null_exceed_rate"];
    const bool ok = accurate == probes && nc >= kC8MinCorrect && ac >= kC8MinCorrect && ne < kC8MaxNullExceed;
    return {ok, fmt("estimator error <= rho/4 in %d/%d; correct: null %.2f, alternate %.2f; null P(|W|>1/9) = %.2f "
                    "(uniform-pair reference %.3f, KS vs reference %.3f)",
                    accurate, probes, nc, ac, ne, static_cast<double>(ref_exceed) / 100000.0, ks)};
}

// Wraps an oracle, audits every answer, and checks that the inner log saw exactly the audited answers.
struct AuditTally {
    AuditReport report;
    long long logged = 0;
    void add(const AuditingOracle& a, const Oracle& inner) {
        report.merge(a.report());
        logged += static_cast<long long>(inner.log().size());
    }
};

Result criterion_9() {
    set_warning_handler([](const std::string&) {});
    AuditTally tally;

    {  // Huber estimator on samples.
        const int d = 20;
        const double alpha = 0.25;
        const long long n = 64000;
        Rng rng = make_stream(9, "criterion-9-huber");
        const Vector beta = random_unit_vector(d, rng);
        const EstimationInstance inst(beta, ContaminationSpec::from_alpha(alpha));
        const HuberConfig cfg = HuberConfig::defaults(d, static_cast<double>(n), alpha);
        SampleOracle inner(sample_estimation(inst, n, rng), cfg.m);
        auto truth = std::make_shared<const SampleOracle>(sample_estimation(inst, 10 * n, rng), cfg.m);
        AuditingOracle a(inner, analytic_or(estimation_law(inst), sample_truth(truth)));
        huber_sq_estimate(a, d, alpha, cfg.eps, cfg);
        tally.add(a, inner);
    }
    {  // Cover estimator on samples; one trial audited against closed-form slab masses.
        const ExperimentConfig c = ExperimentConfig::defaults("estimate-cover");
        const CoverConfig cover = CoverConfig::make(c.d, c.tau, c.alpha);
        Rng rng = make_stream(9, "criterion-9-cover");
        const Vector beta = random_ball_point(c.d, rng);
        const EstimationInstance inst(beta, ContaminationSpec::from_alpha(c.alpha));
        SampleOracle inner(sample_estimation(inst, c.n, rng), simulation_strength(static_cast<double>(c.n), static_cast<double>(cover.cover.cols())));
        AuditingOracle a(inner, analytic_or(estimation_law(inst), {}));
        cover_sq_estimate(a, c.d, c.alpha, cover);
        tally.add(a, inner);
    }
    {  // Reduction: the Huber estimator on testing inputs under both hypotheses.
        const ExperimentConfig c = ExperimentConfig::defaults("reduce-test");
        const TestingParams p = detail::testing_params_of(c);
        for (int h = 0; h < 2; ++h) {
            Rng rng = make_stream(9, "criterion-9-reduce", static_cast<std::uint64_t>(h));
            const HypothesisTag tag = h == 0 ? HypothesisTag::null() : HypothesisTag::alternate(random_unit_vector(c.d, rng));
            const JointLaw law = testing_law(p, c.d, tag);
            const HuberConfig cfg = HuberConfig::defaults(c.d, static_cast<double>(c.n), p.alpha(), c.eps);
            SampleOracle inner(sample_law(law, c.n, rng), cfg.m);
            auto truth = std::make_shared<const SampleOracle>(sample_law(law, 10 * c.n, rng), cfg.m);
            AuditingOracle a(inner, analytic_or(law, sample_truth(truth)));
            huber_sq_estimate(a, c.d, p.alpha(), c.eps, cfg);
            tally.add(a, inner);
        }
    }
    {  // Exact-MC sweep oracles and adversarial oracles at d = 400.
        const TestingParams p = TestingParams::make(0.3, 0.02);
        const int d = 400;
        Rng brng = make_stream(9, "criterion-9-battery");
        const auto battery = correlation_battery(d, 50, brng);
        auto P = std::make_shared<const ExactMcOracle>(null_law(p, d), kMinExactSamples, 901, 1.0, true);
        auto P_truth = std::make_shared<const ExactMcOracle>(null_law(p, d), 10 * kMinExactSamples, 902, 1.0);
        {
            ExactMcOracle inner(null_law(p, d), kMinExactSamples, 903, std::ceil(20.0 * d / 0.09), true);
            AuditingOracle a(inner, exact_mc_truth(P_truth));
            a.answer_batch(battery);
            tally.add(a, inner);
        }
        for (int k = 0; k < 5; ++k) {
            Rng rng = make_stream(9, "criterion-9-v", static_cast<std::uint64_t>(k));
            const Vector v = random_unit_vector(d, rng);
            auto Q = std::make_shared<const ExactMcOracle>(alternate_law(p, v), kMinExactSamples, 910 + k, 1.0, true);
            auto Q_truth = std::make_shared<const ExactMcOracle>(alternate_law(p, v), 10 * kMinExactSamples, 920 + k, 1.0);
            ExactMcOracle sweep(alternate_law(p, v), kMinExactSamples, 930 + k, std::ceil(20.0 * d / 0.09), true);
            AuditingOracle as(sweep, exact_mc_truth(Q_truth));
            as.answer_batch(battery);
            tally.add(as, sweep);
            AdversarialOracle adv(HypothesisTag::alternate(v), 200, P, Q);
            AuditingOracle aa(adv, exact_mc_truth(Q_truth));
            aa.answer_batch(battery);
            aa.answer(slab_query("detector", p.rho() * v, 1e-9));
            tally.add(aa, adv);
        }
    }
    set_warning_handler({});
    const auto& r = tally.report;
    return {r.violations == 0 && r.responses == tally.logged && r.responses > 0,
            fmt("%lld responses audited (%lld logged), %lld violations, worst |v - truth| / allowance = %.3f", r.responses, tally.logged,
                r.violations, r.worst_ratio)};
}

Result criterion_10() {
    set_warning_handler([](const std::string&) {});
    const TestingParams p = TestingParams::make(0.3, 0.02);
    const int d = 400;
    const double m = 200;
    Rng brng = make_stream(10, "criterion-10-battery");
    std::vector<Query> battery = correlation_battery(d, 30, brng);
    for (int i = 0; i < 5; ++i) battery.push_back(halfspace_query("half:" + std::to_string(i), random_unit_vector(d, brng), 0.2 * i - 0.4));
    for (int i = 0; i < 5; ++i) battery.push_back(label_threshold_query("label:" + std::to_string(i), 0.5 * i - 1.0));
    for (int i = 0; i < 5; ++i) battery.push_back(slab_query("slab:" + std::to_string(i), 0.3 * random_unit_vector(d, brng), 0.1 * (i + 1)));
    for (int i = 0; i < 4; ++i) battery.push_back(constant_query("const:" + std::to_string(i), 0.25 * i));
    const std::size_t shared = battery.size();

    auto P = std::make_shared<const ExactMcOracle>(null_law(p, d), kMinExactSamples, 1001, 1.0, true);
    long long failing = 0, failing_mismatch = 0, succeeding = 0, succeeding_differs = 0;
    for (int k = 0; k < 10; ++k) {
        Rng rng = make_stream(10, "criterion-10-v", static_cast<std::uint64_t>(k));
        const Vector v = random_unit_vector(d, rng);
        auto Q = std::make_shared<const ExactMcOracle>(alternate_law(p, v), kMinExactSamples, 1100 + k, 1.0, true);
        std::vector<Query> qs(battery.begin(), battery.begin() + static_cast<std::ptrdiff_t>(shared));
        qs.push_back(slab_query("detector", p.rho() * v, 1e-9));
        AdversarialOracle null_o(HypothesisTag::null(), m, P, nullptr);
        AdversarialOracle alt_o(HypothesisTag::alternate(v), m, P, Q);
        const auto tn = null_o.answer_batch(qs), ta = alt_o.answer_batch(qs);
        for (std::size_t i = 0; i < qs.size(); ++i) {
            const bool success = success_event(qs[i], *P, *Q, m).success;
            if (success) {
                ++succeeding;
                succeeding_differs += ta[i] != tn[i];
            } else {
                ++failing;
                failing_mismatch += ta[i] != tn[i];
            }
        }
    }
    set_warning_handler({});
    return {failing_mismatch == 0 && failing > 0,
            fmt("10 directions x 50 queries: %lld failing queries, %lld transcript mismatches among them; %lld succeeding (%lld answered differently)",
                failing, failing_mismatch, succeeding, succeeding_differs)};
}

Result criterion_11() {
    set_warning_handler([](const std::string&) {});
    const TestingParams p = TestingParams::make(0.3, 0.02);
    const int d = 400;
    Rng brng = make_stream(11, "criterion-11-battery");
    const auto battery = correlation_battery(d, 50, brng);
    Rng rng = make_stream(11, "criterion-11-sweep");
    const auto table = expectation_table(p, d, battery, 100, kMinExactSamples, rng);
    const double m_lo = std::floor(std::sqrt(d) / (10.0 * 0.09));
    const double m_hi = std::ceil(20.0 * d / 0.09);
    const auto lo = evaluate_sweep(table, m_lo), hi = evaluate_sweep(table, m_hi);
    // Dual route: re-derive the success flags from the raw expectations.
    long long hits_hi = 0;
    for (const auto& c : table.cells) {
        const double a = c.null_estimate.mean, b = c.alternate_estimate.mean;
        const double thr = std::max(1.0 / m_hi, std::min(std::sqrt(a * (1 - a) / m_hi), std::sqrt(b * (1 - b) / m_hi)));
        hits_hi += std::abs(a - b) >= thr;
    }
    const double dual_hi = static_cast<double>(hits_hi) / static_cast<double>(table.cells.size());
    set_warning_handler({});
    return {lo.success_fraction <= kC11LowMax && hi.success_fraction >= kC11HighMin && dual_hi == hi.success_fraction,
            fmt("success fraction %.3f +- %.3f at m = %.0f; %.3f +- %.3f at m = %.0f (recount %.3f)", lo.success_fraction, lo.success_se, m_lo,
                hi.success_fraction, hi.success_se, m_hi, dual_hi)};
}

const std::vector<std::function<Result()>>& criteria() {
    static const std::vector<std::function<Result()>> c = {criterion_1, criterion_2, criterion_3, criterion_4,  criterion_5, criterion_6,
                                                           criterion_7, criterion_8, criterion_9, criterion_10, criterion_11};
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> which;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
            which.push_back(std::atoi(argv[++i]));
        } else {
            std::cerr << "usage: acceptance [--criterion N]" << std::endl;
            return 2;
        }
    }
    if (which.empty())
        for (int k = 1; k <= static_cast<int>(criteria().size()); ++k) which.push_back(k);
    int failed = 0;
    for (int k : which) {
        if (k < 1 || k > static_cast<int>(criteria().size())) {
            std::cerr << "no criterion " << k << std::endl;
            return 2;
        }
        const auto start = std::chrono::steady_clock::now();
        Result r;
        try {
            r = criteria()[static_cast<std::size_t>(k - 1)]();
        } catch (const std::exception& e) {
            r = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("criterion %d: %s  %s  [%.1fs]\n", k, r.pass ? "PASS" : "FAIL", r.detail.c_str(), secs);
        std::fflush(stdout);
        failed += !r.pass;
    }
    return failed == 0 ? 0 : 1;
}
