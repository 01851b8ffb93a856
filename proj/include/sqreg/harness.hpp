#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sqreg/algorithms.hpp"
#include "sqreg/analysis.hpp"
#include "sqreg/distributions.hpp"
#include "sqreg/errors.hpp"
#include "sqreg/hermite.hpp"
#include "sqreg/instances.hpp"
#include "sqreg/numeric.hpp"
#include "sqreg/oracles.hpp"
#include "sqreg/query.hpp"
#include "sqreg/rng.hpp"
#include "sqreg/testing_params.hpp"

#include <json.hpp>

namespace sqreg {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Configuration

inline const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names = {"estimate-huber", "estimate-cover", "reduce-test", "chi-check",
                                                   "sda-proxy",      "indist-sweep",   "alpha-sweep"};
    return names;
}

/// Zero in d/n/m/s means "derive from the other fields" as each experiment documents.
struct ExperimentConfig {
    std::string experiment = "estimate-huber";
    int d = 20;
    double alpha = 0.25;
    double rho = 0.5;
    double s = 0.0;
    double m = 0.0;
    long long n = 0;
    int trials = 10;
    std::uint64_t seed = 1;
    long long n_mc = 1'000'000;
    int n_v = 100;
    int n_queries = 50;
    long long n_pairs = 10'000;
    long long q = 100;
    double tau = 0.3;
    double eps = 0.4;
    std::vector<double> alphas = {0.1, 0.2, 0.4};
    std::string output_dir = "results";

    static ExperimentConfig defaults(const std::string& name) {
        ExperimentConfig c;
        c.experiment = name;
        if (name == "estimate-huber") {
        } else if (name == "estimate-cover") {
            c.d = 2;
            c.alpha = 0.2;
            c.n = 5000;
        } else if (name == "reduce-test") {
            c.d = 50;
            c.alpha = 0.3;
            c.rho = 0.5;
            c.n = 20000;
            c.trials = 100;
        } else if (name == "chi-check") {
            c.trials = 1;
        } else if (name == "sda-proxy") {
            c.d = 400;
            c.alpha = 0.02;
            c.rho = 0.3;
            c.trials = 1;
        } else if (name == "indist-sweep") {
            c.d = 400;
            c.alpha = 0.02;
            c.rho = 0.3;
            c.trials = 1;
        } else if (name == "alpha-sweep") {
            c.d = 10;
            c.n = 20000;
            c.trials = 5;
        } else {
            throw UsageError("unknown experiment: " + name);
        }
        return c;
    }

    bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {
inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        T out{};
        if constexpr (std::is_same_v<T, double>)
            out = std::stod(v, &pos);
        else if constexpr (std::is_same_v<T, std::uint64_t>)
            out = std::stoull(v, &pos);
        else
            out = static_cast<T>(std::stoll(v, &pos));
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return out;
    } catch (const std::exception&) {
        throw UsageError("bad value for " + key + ": '" + v + "'");
    }
}
}  // namespace detail

/// Canonical key = value text, one field per line in a fixed order.
inline std::string serialize(const ExperimentConfig& c) {
    std::ostringstream os;
    os << "experiment = " << c.experiment << '\n'
       << "d = " << c.d << '\n'
       << "alpha = " << format_double(c.alpha) << '\n'
       << "rho = " << format_double(c.rho) << '\n'
       << "s = " << format_double(c.s) << '\n'
       << "m = " << format_double(c.m) << '\n'
       << "n = " << c.n << '\n'
       << "trials = " << c.trials << '\n'
       << "seed = " << c.seed << '\n'
       << "n_mc = " << c.n_mc << '\n'
       << "n_v = " << c.n_v << '\n'
       << "n_queries = " << c.n_queries << '\n'
       << "n_pairs = " << c.n_pairs << '\n'
       << "q = " << c.q << '\n'
       << "tau = " << format_double(c.tau) << '\n'
       << "eps = " << format_double(c.eps) << '\n'
       << "alphas = ";
    for (std::size_t i = 0; i < c.alphas.size(); ++i) os << (i ? "," : "") << format_double(c.alphas[i]);
    os << '\n' << "output_dir = " << c.output_dir << '\n';
    return os.str();
}

/// Parses key = value lines ('#' starts a comment). Fields not given take the named
/// experiment's defaults.
inline ExperimentConfig parse_config(std::istream& is) {
    std::vector<std::pair<std::string, std::string>> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw UsageError("config line " + std::to_string(lineno) + " is not key = value");
        kv.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
    std::string name = "estimate-huber";
    for (const auto& [k, v] : kv)
        if (k == "experiment") name = v;
    ExperimentConfig c = ExperimentConfig::defaults(name);
    for (const auto& [k, v] : kv) {
        using detail::parse_number;
        if (k == "experiment") continue;
        else if (k == "d") c.d = parse_number<int>(k, v);
        else if (k == "alpha") c.alpha = parse_number<double>(k, v);
        else if (k == "rho") c.rho = parse_number<double>(k, v);
        else if (k == "s") c.s = parse_number<double>(k, v);
        else if (k == "m") c.m = parse_number<double>(k, v);
        else if (k == "n") c.n = parse_number<long long>(k, v);
        else if (k == "trials") c.trials = parse_number<int>(k, v);
        else if (k == "seed") c.seed = parse_number<std::uint64_t>(k, v);
        else if (k == "n_mc") c.n_mc = parse_number<long long>(k, v);
        else if (k == "n_v") c.n_v = parse_number<int>(k, v);
        else if (k == "n_queries") c.n_queries = parse_number<int>(k, v);
        else if (k == "n_pairs") c.n_pairs = parse_number<long long>(k, v);
        else if (k == "q") c.q = parse_number<long long>(k, v);
        else if (k == "tau") c.tau = parse_number<double>(k, v);
        else if (k == "eps") c.eps = parse_number<double>(k, v);
        else if (k == "output_dir") c.output_dir = v;
        else if (k == "alphas") {
            c.alphas.clear();
            std::stringstream ss(v);
            std::string item;
            while (std::getline(ss, item, ',')) c.alphas.push_back(parse_number<double>(k, detail::trim(item)));
        } else {
            throw UsageError("unknown config key: " + k);
        }
    }
    return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
    std::istringstream is(text);
    return parse_config(is);
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read config " + path);
    return parse_config(is);
}

/// Hash of the serialized config; the output directory is not part of a run's identity.
inline std::string config_hash(const ExperimentConfig& c) {
    ExperimentConfig k = c;
    k.output_dir.clear();
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(serialize(k))));
    return buf;
}

// ---------------------------------------------------------------------------
// Results

struct ResultRecord {
    std::string experiment;
    std::string config_hash;
    std::string metric;
    double value = 0.0;
    double se = 0.0;
    double wall_time = 0.0;
};

struct ExperimentOutput {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<ResultRecord> records;
};

namespace detail {
inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

inline void write_csv_row(std::ostream& os, const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << csv_field(row[i]);
    os << "\r\n";
}

inline MeanEstimate median_estimate(std::vector<double> v) {
    if (v.empty()) return {};
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    const double med = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    RunningStats st;
    for (double x : v) st.add(x);
    // Large-sample standard error of the median, sqrt(pi/2) sd / sqrt(n).
    return {med, 1.2533141373155003 * std::sqrt(st.variance() / static_cast<double>(n)), static_cast<long long>(n)};
}

inline MeanEstimate proportion(long long hits, long long n) {
    if (n <= 0) return {};
    const double p = static_cast<double>(hits) / static_cast<double>(n);
    return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(n)), n};
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Experiments

namespace detail {

inline void add_metric(ExperimentOutput& out, const ExperimentConfig& c, const std::string& metric, const MeanEstimate& e) {
    out.records.push_back({c.experiment, config_hash(c), metric, e.mean, e.se, 0.0});
}

inline long long huber_default_n(int d, double alpha) {
    return static_cast<long long>(std::llround(200.0 * d / (alpha * alpha)));
}

inline double huber_trial(int d, double alpha, long long n, double eps, Rng& rng) {
    const Vector beta = random_unit_vector(d, rng);
    const EstimationInstance inst(beta, ContaminationSpec::from_alpha(alpha));
    const SampleSet s = sample_estimation(inst, n, rng);
    const HuberConfig cfg = HuberConfig::defaults(d, static_cast<double>(n), alpha, eps);
    SampleOracle o(s, cfg.m);
    o.log().set_enabled(false);
    return (huber_sq_estimate(o, d, alpha, eps, cfg) - beta).norm();
}

inline ExperimentOutput run_estimate_huber(const ExperimentConfig& c) {
    ExperimentOutput out;
    const long long n = c.n > 0 ? c.n : huber_default_n(c.d, c.alpha);
    out.header = {"trial", "n", "error"};
    std::vector<double> errs;
    for (int t = 0; t < c.trials; ++t) {
        Rng rng = make_stream(c.seed, c.experiment, static_cast<std::uint64_t>(t));
        const double e = huber_trial(c.d, c.alpha, n, c.eps, rng);
        errs.push_back(e);
        out.rows.push_back({std::to_string(t), std::to_string(n), format_double(e)});
    }
    add_metric(out, c, "median_error", median_estimate(errs));
    RunningStats st;
    for (double e : errs) st.add(e);
    add_metric(out, c, "mean_error", st.estimate());
    return out;
}

inline ExperimentOutput run_estimate_cover(const ExperimentConfig& c) {
    ExperimentOutput out;
    out.header = {"trial", "n", "cover_size", "error", "success"};
    long long wins = 0;
    const long long n = c.n > 0 ? c.n : 5000;
    const CoverConfig cover = CoverConfig::make(c.d, c.tau, c.alpha);
    for (int t = 0; t < c.trials; ++t) {
        Rng rng = make_stream(c.seed, c.experiment, static_cast<std::uint64_t>(t));
        const Vector beta = random_ball_point(c.d, rng);
        const EstimationInstance inst(beta, ContaminationSpec::from_alpha(c.alpha));
        SampleOracle o(sample_estimation(inst, n, rng), simulation_strength(static_cast<double>(n), static_cast<double>(cover.cover.cols())));
        o.log().set_enabled(false);
        const double e = (cover_sq_estimate(o, c.d, c.alpha, cover) - beta).norm();
        const bool ok = e <= c.tau;
        wins += ok ? 1 : 0;
        out.rows.push_back({std::to_string(t), std::to_string(n), std::to_string(cover.cover.cols()), format_double(e), ok ? "1" : "0"});
    }
    add_metric(out, c, "success_rate", proportion(wins, c.trials));
    return out;
}

inline TestingParams testing_params_of(const ExperimentConfig& c) {
    return c.s > 0.0 ? TestingParams::make(c.rho, c.alpha, c.s) : TestingParams::make(c.rho, c.alpha);
}

inline ExperimentOutput run_reduce_test(const ExperimentConfig& c) {
    ExperimentOutput out;
    out.header = {"trial", "hypothesis", "W", "verdict", "correct"};
    const TestingParams p = testing_params_of(c);
    const long long n = c.n > 0 ? c.n : 20000;
    const SampleEstimator est = huber_sample_estimator(p.alpha(), c.eps);
    long long null_ok = 0, alt_ok = 0, null_exceed = 0;
    for (int t = 0; t < c.trials; ++t) {
        for (int h = 0; h < 2; ++h) {
            Rng rng = make_stream(c.seed, c.experiment, static_cast<std::uint64_t>(2 * t + h));
            const HypothesisTag tag = h == 0 ? HypothesisTag::null() : HypothesisTag::alternate(random_unit_vector(c.d, rng));
            const SampleSet s1 = sample_testing(p, c.d, tag, n, rng);
            const SampleSet s2 = sample_testing(p, c.d, tag, n, rng);
            const ReductionVerdict r = reduction_test(est, s1, s2, p.rho(), rng);
            const bool correct = (r.verdict == Verdict::Null) == tag.is_null();
            if (h == 0) {
                null_ok += correct;
                null_exceed += std::abs(r.W) > kReductionThreshold;
            } else {
                alt_ok += correct;
            }
            out.rows.push_back({std::to_string(t), h == 0 ? "null" : "alternate", format_double(r.W), to_string(r.verdict), correct ? "1" : "0"});
        }
    }
    add_metric(out, c, "null_correct_rate", proportion(null_ok, c.trials));
    add_metric(out, c, "alternate_correct_rate", proportion(alt_ok, c.trials));
    add_metric(out, c, "null_exceed_rate", proportion(null_exceed, c.trials));
    return out;
}

struct ChiGridPoint {
    double a, gamma, cos_theta;
};

inline std::vector<ChiGridPoint> chi_grid() {
    std::vector<ChiGridPoint> g;
    for (double a : {0.0, 0.3, 1.0})
        for (double gamma : {0.2, 0.5})
            for (double c : {-0.5, 0.0, 0.7}) g.push_back({a, gamma, c});
    return g;
}

inline ExperimentOutput run_chi_check(const ExperimentConfig& c) {
    ExperimentOutput out;
    out.header = {"a", "gamma", "cos_theta", "closed_form", "numeric", "abs_diff"};
    double worst = 0.0;
    bool zero_ok = true;
    for (const auto& g : chi_grid()) {
        const double cf = chi_gaussian_closed_form(g.a, g.gamma, g.cos_theta);
        const double nu = chi_gaussian_numeric(g.a, g.gamma, g.cos_theta).value;
        worst = std::max(worst, std::abs(cf - nu));
        if (g.cos_theta == 0.0 && cf != 0.0) zero_ok = false;
        out.rows.push_back({format_double(g.a), format_double(g.gamma), format_double(g.cos_theta), format_double(cf), format_double(nu),
                            format_double(std::abs(cf - nu))});
    }
    add_metric(out, c, "max_abs_diff", {worst, 0.0, 18});
    add_metric(out, c, "zero_at_orthogonal", {zero_ok ? 1.0 : 0.0, 0.0, 6});
    return out;
}

inline double sda_default_m(int d, double rho, long long q) {
    return std::max(1.0, std::floor(std::sqrt(static_cast<double>(d)) / (10.0 * rho * rho * std::log(static_cast<double>(q)))));
}

inline ExperimentOutput run_sda_proxy(const ExperimentConfig& c) {
    ExperimentOutput out;
    out.header = {"m", "holds", "top_mean", "threshold", "top_count"};
    const TestingParams p = testing_params_of(c);
    const double m = c.m > 0.0 ? c.m : sda_default_m(c.d, c.rho, c.q);
    for (double mm : {m, 100.0 * m}) {
        Rng rng = make_stream(c.seed, c.experiment, 0);
        const SdaProxyResult r = sda_proxy(p, c.d, mm, c.q, c.n_pairs, c.n_mc, rng);
        out.rows.push_back({format_double(mm), r.holds ? "1" : "0", format_double(r.top_mean), format_double(r.threshold), std::to_string(r.top_count)});
        add_metric(out, c, "holds@m=" + format_double(mm), {r.holds ? 1.0 : 0.0, 0.0, r.pairs});
        add_metric(out, c, "top_mean@m=" + format_double(mm), {r.top_mean, 0.0, r.top_count});
    }
    return out;
}

inline ExperimentOutput run_indist_sweep(const ExperimentConfig& c) {
    ExperimentOutput out;
    out.header = {"query_id", "v_index", "E_P", "E_Qv", "tolerance", "success"};
    const TestingParams p = testing_params_of(c);
    const double m = c.m > 0.0 ? c.m : std::ceil(20.0 * c.d / (c.rho * c.rho));
    Rng brng = make_stream(c.seed, c.experiment, 0);
    const auto battery = correlation_battery(c.d, c.n_queries, brng);
    Rng rng = make_stream(c.seed, c.experiment, 1);
    const SweepResult r = indistinguishability_sweep(p, c.d, m, battery, c.n_v, c.n_mc, rng);
    for (const auto& row : r.rows)
        out.rows.push_back({row.query_id, std::to_string(row.v_index), format_double(row.e_p), format_double(row.e_q), format_double(row.tolerance),
                            row.success ? "1" : "0"});
    add_metric(out, c, "success_fraction", {r.success_fraction, r.success_se, static_cast<long long>(r.rows.size())});
    for (const auto& [id, rate] : r.query_success) add_metric(out, c, "success:" + id, {rate, std::sqrt(rate * (1 - rate) / c.n_v), c.n_v});
    return out;
}

inline ExperimentOutput run_alpha_sweep(const ExperimentConfig& c) {
    ExperimentOutput out;
    out.header = {"alpha", "n", "trials", "median_error"};
    const long long n = c.n > 0 ? c.n : 20000;
    for (std::size_t k = 0; k < c.alphas.size(); ++k) {
        std::vector<double> errs;
        for (int t = 0; t < c.trials; ++t) {
            Rng rng = make_stream(c.seed, c.experiment, static_cast<std::uint64_t>(k) * 1'000'003ULL + static_cast<std::uint64_t>(t));
            errs.push_back(huber_trial(c.d, c.alphas[k], n, c.eps, rng));
        }
        const MeanEstimate med = median_estimate(errs);
        out.rows.push_back({format_double(c.alphas[k]), std::to_string(n), std::to_string(c.trials), format_double(med.mean)});
        add_metric(out, c, "median_error@alpha=" + format_double(c.alphas[k]), med);
    }
    return out;
}

}  // namespace detail

/// Runs the named experiment without touching the file system.
inline ExperimentOutput execute_experiment(const ExperimentConfig& c) {
    if (c.trials < 1) throw InvalidParameter("trials must be at least 1");
    const auto start = std::chrono::steady_clock::now();
    ExperimentOutput out;
    if (c.experiment == "estimate-huber") out = detail::run_estimate_huber(c);
    else if (c.experiment == "estimate-cover") out = detail::run_estimate_cover(c);
    else if (c.experiment == "reduce-test") out = detail::run_reduce_test(c);
    else if (c.experiment == "chi-check") out = detail::run_chi_check(c);
    else if (c.experiment == "sda-proxy") out = detail::run_sda_proxy(c);
    else if (c.experiment == "indist-sweep") out = detail::run_indist_sweep(c);
    else if (c.experiment == "alpha-sweep") out = detail::run_alpha_sweep(c);
    else throw UsageError("unknown experiment: " + c.experiment);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (auto& r : out.records) r.wall_time = wall;
    return out;
}

/// Writes <experiment>.csv (rows), <experiment>_records.csv and <experiment>_summary.json.
/// Wall time is kept out of the files so equal configs give byte-identical output.
inline void write_outputs(const ExperimentConfig& c, const ExperimentOutput& out) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(c.output_dir, ec);
    if (ec || !fs::is_directory(c.output_dir)) throw IoError("cannot create output directory " + c.output_dir);
    const fs::path base = fs::path(c.output_dir) / c.experiment;
    auto open = [](const fs::path& p) {
        std::ofstream os(p, std::ios::binary);
        if (!os) throw IoError("cannot write " + p.string());
        return os;
    };
    {
        auto os = open(base.string() + ".csv");
        detail::write_csv_row(os, out.header);
        for (const auto& r : out.rows) detail::write_csv_row(os, r);
    }
    {
        auto os = open(base.string() + "_records.csv");
        detail::write_csv_row(os, {"experiment", "config_hash", "metric", "value", "se"});
        for (const auto& r : out.records) detail::write_csv_row(os, {r.experiment, r.config_hash, r.metric, format_double(r.value), format_double(r.se)});
    }
    {
        nlohmann::ordered_json j = nlohmann::ordered_json::object();
        for (const auto& r : out.records) j[r.metric] = {{"value", r.value}, {"se", r.se}};
        auto os = open(base.string() + "_summary.json");
        os << j.dump(2) << '\n';
    }
}

inline std::vector<ResultRecord> run_experiment(const ExperimentConfig& c) {
    const ExperimentOutput out = execute_experiment(c);
    write_outputs(c, out);
    return out.records;
}

// ---------------------------------------------------------------------------
// Verification suites

enum class Fault { None, CorruptNormalizer };

struct VerifyOptions {
    Fault fault = Fault::None;
    std::uint64_t seed = 20240601;
};

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

namespace detail {

class CheckRunner {
public:
    CheckRunner(std::ostream& os, const VerifyOptions& opt) : os_(os), opt_(opt) {}

    template <class F>
    void run(const std::string& name, F&& body) {
        CheckResult r{name, false, ""};
        try {
            auto [ok, info] = body();
            r.pass = ok;
            r.detail = info;
        } catch (const std::exception& e) {
            r.pass = false;
            r.detail = std::string("exception: ") + e.what();
        }
        os_ << (r.pass ? "PASS " : "FAIL ") << r.name << (r.detail.empty() ? "" : "  (" + r.detail + ")") << std::endl;
        results_.push_back(r);
    }

    Rng stream(const std::string& label) const { return make_stream(opt_.seed, label, 0); }
    [[nodiscard]] const VerifyOptions& options() const noexcept { return opt_; }
    [[nodiscard]] const std::vector<CheckResult>& results() const noexcept { return results_; }

private:
    std::ostream& os_;
    VerifyOptions opt_;
    std::vector<CheckResult> results_;
};

using Outcome = std::pair<bool, std::string>;

inline std::string fmt(const char* f, double a, double b = 0.0) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

/// E[G^k] for G ~ N(0,1).
inline double gaussian_moment(int k) {
    if (k % 2) return 0.0;
    double m = 1.0;
    for (int j = k - 1; j > 1; j -= 2) m *= j;
    return m;
}

inline DiscreteGaussian maybe_corrupt(const DiscreteGaussianParams& p, const VerifyOptions& o) {
    return o.fault == Fault::CorruptNormalizer ? DiscreteGaussian::with_normalizer_scale(p, 1.001) : DiscreteGaussian(p);
}

inline void verify_distributions(CheckRunner& cr) {
    cr.run("distributions.normalization", [&]() -> Outcome {
        double worst = 0.0;
        for (const DiscreteGaussianParams& p : {DiscreteGaussianParams{0, 1, 0, 0.5}, DiscreteGaussianParams{2, 0.7, 0, 0.1},
                                                DiscreteGaussianParams{0.3, 0.8, 0.1, 0.05}, DiscreteGaussianParams{0, 0.866, 0, 0.05}}) {
            const DiscreteGaussian g = maybe_corrupt(p, cr.options());
            NeumaierSum s;
            for (double q : g.probabilities()) s.add(q);
            worst = std::max(worst, std::abs(s.value() - 1.0));
        }
        return {worst <= 1e-12, fmt("max |sum - 1| = %.3g", worst)};
    });
    cr.run("distributions.brute_force_pmf", [&]() -> Outcome {
        const DiscreteGaussian g = maybe_corrupt({0, 1, 0, 0.5}, cr.options());
        NeumaierSum z;
        for (int i = -200; i <= 200; ++i) z.add(std::exp(-0.5 * 0.25 * i * i));
        const double want = 1.0 / z.value();
        const double got = g.pmf(0.0);
        return {std::abs(got - want) <= 1e-13, fmt("pmf(0) = %.15g vs %.15g", got, want)};
    });
    cr.run("distributions.translation_law", [&]() -> Outcome {
        const DiscreteGaussianParams p{1.3, 0.7, 0.2, 0.15};
        const DiscreteGaussianParams std_p{0.0, 1.0, (p.theta - p.mu) / p.sigma, p.s / p.sigma};
        const DiscreteGaussian a = maybe_corrupt(p, cr.options()), b(std_p);
        double worst = 0.0;
        for (int i = -60; i <= 60; ++i) {
            const double x = p.theta + p.s * i;
            worst = std::max(worst, std::abs(a.pmf(x) - b.pmf((x - p.mu) / p.sigma)));
        }
        return {worst <= 1e-12, fmt("max pmf difference %.3g", worst)};
    });
    cr.run("distributions.moment_matching", [&]() -> Outcome {
        const double ss[] = {0.8, 0.5, 0.3, 0.2};
        bool ok = true;
        double at02 = 0.0;
        for (int k = 1; k <= 6; ++k) {
            const double slack = 64.0 * std::numeric_limits<double>::epsilon() * gaussian_moment(2 * ((k + 1) / 2));
            for (double frac : {0.0, 1.0 / 3.0}) {
                double prev = std::numeric_limits<double>::infinity();
                for (double s : ss) {
                    const double gap = std::abs(gaussian_moment(k) - maybe_corrupt({0, 1, frac * s, s}, cr.options()).moment(k));
                    if (gap > prev + slack) ok = false;
                    prev = gap;
                    if (s == 0.2 && k <= 4) at02 = std::max(at02, gap);
                }
            }
        }
        return {ok && at02 < 1e-6, fmt("max gap at s=0.2, k<=4: %.3g", at02)};
    });
    cr.run("distributions.subgaussian_tails", [&]() -> Outcome {
        const TestingParams p = TestingParams::from_spacing(0.5, 0.05);
        Rng rng = cr.stream("tails");
        bool ok = true;
        std::string info;
        for (double y : {0.0, 1.5}) {
            const DiscreteGaussianParams a = conditional_law(p, y);
            const DiscreteGaussian law = maybe_corrupt(a, cr.options());
            const int n = 100000;
            std::vector<double> dev(n);
            for (auto& v : dev) v = std::abs(law.sample(rng) - a.mu);
            for (double m : {2.0, 3.0, 4.0}) {
                const double t = m * a.sigma;
                const double frac = static_cast<double>(std::count_if(dev.begin(), dev.end(), [&](double v) { return v > t; })) / n;
                const double bound = 2.0 * std::exp(-t * t / (2 * a.sigma * a.sigma)) + 5.0 * std::sqrt(frac * (1 - frac) / n);
                if (frac > bound) ok = false;
            }
        }
        return {ok, info};
    });
    cr.run("distributions.mass_at_zero", [&]() -> Outcome {
        bool ok = true;
        for (double sigma : {1.0, 0.866})
            for (double alpha : {0.02, 0.1, 0.3}) {
                const ContaminationSpec e = ContaminationSpec::from_alpha(alpha, sigma);
                const double pmf0 = maybe_corrupt(e.law().params(), cr.options()).pmf(0.0);
                if (std::abs(e.mass_at_zero() - pmf0) > 1e-15 || e.mass_at_zero() < alpha) ok = false;
            }
        return {ok, ""};
    });
    cr.run("distributions.sampling_frequencies", [&]() -> Outcome {
        const DiscreteGaussian g = maybe_corrupt({0, 1, 0, 0.5}, cr.options());
        const DiscreteGaussian ref({0, 1, 0, 0.5});
        Rng rng = cr.stream("freq");
        const int n = 200000;
        std::map<std::int64_t, long long> counts;
        for (int i = 0; i < n; ++i) ++counts[*snap_to_grid(0.0, 0.5, g.sample(rng))];
        double worst = 0.0;
        for (int i = -12; i <= 12; ++i) {
            const double p = ref.mass_at_index(i);
            const double f = static_cast<double>(counts[i]) / n;
            worst = std::max(worst, std::abs(f - p) / std::sqrt(p * (1 - p) / n));
        }
        return {worst <= 4.5, fmt("worst deviation %.2f SE", worst)};
    });
    cr.run("distributions.response_variance", [&]() -> Outcome {
        const TestingParams p = TestingParams::make(0.3, 0.1);
        const ResponseMarginal r = p.response_marginal();
        Rng rng = cr.stream("resp");
        RunningStats st, sq;
        const int n = 200000;
        for (int i = 0; i < n; ++i) {
            const double y = r.sample(rng);
            st.add(y);
            sq.add(y * y);
        }
        const double want = p.rho() * p.rho() + maybe_corrupt(p.contamination().law().params(), cr.options()).variance();
        const double z = std::abs(sq.mean() - want) / sq.se();
        return {z <= 5.0 && std::abs(st.mean()) <= 5.0 * st.se(), fmt("variance off by %.2f SE", z)};
    });
}

inline void verify_hermite(CheckRunner& cr) {
    cr.run("hermite.recurrence_explicit", [&]() -> Outcome {
        double worst = 0.0;
        for (int i = 0; i < 100; ++i) {
            const double x = -5.0 + 10.0 * i / 99.0;
            worst = std::max(worst, std::abs(hermite_h(2, x) - (x * x - 1) / std::sqrt(2.0)));
            worst = std::max(worst, std::abs(hermite_h(3, x) - (x * x * x - 3 * x) / std::sqrt(6.0)));
        }
        return {worst <= 1e-12, fmt("max error %.3g", worst)};
    });
    cr.run("hermite.orthonormality", [&]() -> Outcome {
        const auto& rule = gauss_hermite();
        double worst = 0.0;
        std::vector<double> h(11);
        std::vector<std::vector<NeumaierSum>> acc(11, std::vector<NeumaierSum>(11));
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            hermite_values(10, rule.nodes[i], h.data());
            for (int j = 0; j <= 10; ++j)
                for (int k = 0; k <= 10; ++k) acc[j][k].add(rule.weights[i] * h[j] * h[k]);
        }
        for (int j = 0; j <= 10; ++j)
            for (int k = 0; k <= 10; ++k) worst = std::max(worst, std::abs(acc[j][k].value() - (j == k ? 1.0 : 0.0)));
        return {worst <= 1e-8, fmt("max deviation %.3g", worst)};
    });
    cr.run("hermite.gaussian_coefficients", [&]() -> Outcome {
        const auto g = hermite_coefficients(GaussianLaw{0.0, 1.0}, 20);
        const auto dg = hermite_coefficients(DiscreteGaussianParams{0.4, 0.9, 0.1, 0.3}, 6);
        double worst = 0.0;
        for (int k = 1; k <= 20; ++k) worst = std::max(worst, std::abs(g.coeffs[k]));
        return {worst <= 1e-10 && std::abs(g.coeffs[0] - 1) <= 1e-12 && std::abs(dg.coeffs[0] - 1) <= 1e-12, fmt("max |coeff_k|, k>=1: %.3g", worst)};
    });
    cr.run("hermite.discrete_vs_gaussian", [&]() -> Outcome {
        const auto a = hermite_coefficients(DiscreteGaussianParams{0.5, 0.8, 0.5, 0.05}, 6);
        const auto b = hermite_coefficients(GaussianLaw{0.5, 0.8}, 6);
        double worst = 0.0;
        for (int k = 1; k <= 6; ++k) worst = std::max(worst, std::abs(a.coeffs[k] - b.coeffs[k]));
        return {worst <= 1e-4, fmt("max difference %.3g", worst)};
    });
    cr.run("hermite.gap_fine_grid", [&]() -> Outcome {
        const double rho = 0.5;
        const TestingParams p = TestingParams::from_spacing(rho, 1e-4 * rho);
        const auto gaps = hermite_gap_profile(p, 1.0, 6, 10);
        const double worst = *std::max_element(gaps.begin(), gaps.end());
        return {worst < 1e-8, fmt("max gap %.3g", worst)};
    });
    cr.run("hermite.parseval", [&]() -> Outcome {
        auto g = [](const Eigen::VectorXd& x) { return x(0) + 0.5 * x(1) > 0.2 ? 1.0 : 0.0; };
        const double total = parseval_sum(gaussian_hermite_tensors(g, 2, 6));
        return {total <= 1.0 + 1e-9, fmt("sum ||T_k||^2 = %.6f", total)};
    });
    cr.run("hermite.fourier_battery", [&]() -> Outcome {
        Rng rng = cr.stream("fourier");
        double worst = 0.0;
        const int d = 3;
        for (int t = 0; t < 3; ++t) {
            const Eigen::VectorXd u = random_unit_vector(d, rng), v = random_unit_vector(d, rng);
            auto g = [&](const Eigen::VectorXd& x) { return u.dot(x) > 0.1 * t ? 1.0 : 0.0; };
            const UnivariateLaw law = DiscreteGaussianParams{0.2 * t, 0.8, 0.0, 0.1};
            const FourierCheck fc = fourier_decomposition_check(g, law, v, 4, d, rng, 200000);
            worst = std::max(worst, std::abs(fc.lhs - fc.rhs) / (5.0 * fc.lhs_se + 1e-3));
        }
        return {worst <= 1.0, fmt("worst |lhs-rhs| / (5 SE + 1e-3) = %.3f", worst)};
    });
}

inline void verify_instances(CheckRunner& cr) {
    cr.run("instances.marginal_equality", [&]() -> Outcome {
        const TestingParams p = TestingParams::make(0.5, 0.2);
        Rng rng = cr.stream("marginal");
        const int d = 5, n = 100000;
        const Vector v = random_unit_vector(d, rng);
        auto ys = [](const SampleSet& s) { return std::vector<double>(s.y.data(), s.y.data() + s.size()); };
        const auto a = ys(sample_testing(p, d, HypothesisTag::null(), n, rng));
        const auto b = ys(sample_testing(p, d, HypothesisTag::alternate(v), n, rng));
        const auto c = ys(sample_continuous_alternate(p, d, v, n, rng));
        const double k = std::max({ks_two_sample(a, b), ks_two_sample(a, c), ks_two_sample(b, c)});
        return {k < 0.01, fmt("max KS statistic %.4f", k)};
    });
    cr.run("instances.conditional_law_equivalence", [&]() -> Outcome {
        Rng rng = cr.stream("conditional");
        double worst = 0.0;
        long long off = 0;
        for (const auto& [rho, s] : std::vector<std::pair<double, double>>{{0.5, 0.05}, {0.3, 0.03}, {0.6, 0.08}}) {
            const TestingParams p = TestingParams::from_spacing(rho, s);
            const ConditionalLawCheck chk = conditional_law_check(p, 4, 200000, rng);
            off += chk.off_grid;
            for (const auto& c : chk.cells)
                if (c.count >= 2000) worst = std::max(worst, c.tv);
        }
        return {worst <= 0.05 && off == 0, fmt("max cell TV %.4f", worst)};
    });
    cr.run("instances.sigma_rho_identity", [&]() -> Outcome {
        double worst = 0.0;
        for (double rho : {0.1, 0.3, 0.5, 0.9}) {
            const TestingParams p = TestingParams::make(rho, 0.1);
            worst = std::max(worst, std::abs(p.sigma() * p.sigma() + p.rho() * p.rho() - 1.0));
        }
        return {worst <= 4 * std::numeric_limits<double>::epsilon(), fmt("max |sigma^2 + rho^2 - 1| = %.3g", worst)};
    });
    cr.run("instances.inlier_rate", [&]() -> Outcome {
        const TestingParams p = TestingParams::make(0.5, 0.2);
        Rng rng = cr.stream("inlier");
        const int d = 6, n = 200000;
        const Vector v = random_unit_vector(d, rng);
        const SampleSet s = sample_testing(p, d, HypothesisTag::alternate(v), n, rng);
        const Vector r = s.y - p.rho() * (s.X * v);
        const double frac = static_cast<double>((r.array().abs() <= 1e-12).count()) / n;
        const double se = std::sqrt(frac * (1 - frac) / n);
        return {frac >= p.alpha() - 5 * se, fmt("inlier rate %.4f vs alpha %.4f", frac, p.alpha())};
    });
}

inline void verify_oracles(CheckRunner& cr) {
    cr.run("oracles.vstat_shape", [&]() -> Outcome {
        bool ok = true;
        for (double m : {4.0, 10.0, 100.0, 1e4}) {
            for (int i = 0; i <= 100; ++i) {
                const double p = i / 100.0;
                if (vstat_tolerance(m, p) > vstat_tolerance(m, 0.5) + 1e-15) ok = false;
                if (vstat_tolerance(2 * m, p) > vstat_tolerance(m, p)) ok = false;
            }
        }
        return {ok, ""};
    });
    cr.run("oracles.sample_contract_audit", [&]() -> Outcome {
        const TestingParams p = TestingParams::make(0.3, 0.1);
        Rng rng = cr.stream("audit");
        const int d = 10, q = 50;
        const long long n = 100000;
        const JointLaw law = null_law(p, d);
        const double m = simulation_strength(static_cast<double>(n), q);
        SampleOracle o(sample_law(law, n, rng), m);
        const AnalyticTruth truth(law);
        int bad = 0;
        for (int i = 0; i < q; ++i) {
            const Query f = halfspace_query("h" + std::to_string(i), random_unit_vector(d, rng), 0.5 * standard_normal(rng));
            const double t = *truth(f);
            if (std::abs(o.answer(f) - t) > vstat_tolerance(m, t)) ++bad;
        }
        return {bad <= 0.1 * q, fmt("violations %.0f of %.0f", bad, q)};
    });
    cr.run("oracles.exact_vs_sample", [&]() -> Outcome {
        const TestingParams p = TestingParams::make(0.5, 0.2);
        Rng rng = cr.stream("exact-sample");
        const int d = 5;
        const Vector v = random_unit_vector(d, rng);
        const JointLaw law = alternate_law(p, v);
        const long long n = 1000000;
        const ExactMcOracle ex(law, n, rng(), 1.0);
        const SampleOracle so(sample_law(law, n, rng), 1.0);
        double worst = 0.0;
        for (int i = 0; i < 20; ++i) {
            const Vector u = random_unit_vector(d, rng);
            Query f = i % 4 == 0 ? halfspace_query("q", u, 0.3)
                    : i % 4 == 1 ? slab_query("q", 0.5 * u, 0.4)
                    : i % 4 == 2 ? sign_correlation_query("q", u)
                                 : label_threshold_query("q", 0.2 * i - 2.0);
            const MeanEstimate a = ex.estimate(f), b = so.estimate(f);
            const double se = std::sqrt(a.se * a.se + b.se * b.se);
            if (se > 0) worst = std::max(worst, std::abs(a.mean - b.mean) / se);
        }
        return {worst <= 5.0, fmt("worst deviation %.2f combined SE", worst)};
    });
    cr.run("oracles.adversarial_indistinguishability", [&]() -> Outcome {
        const TestingParams p = TestingParams::make(0.3, 0.1);
        Rng rng = cr.stream("adversarial");
        const int d = 100;
        const Vector v = random_unit_vector(d, rng);
        const double m = 200;
        auto P = std::make_shared<const ExactMcOracle>(null_law(p, d), 1000000, 11, m);
        auto Q = std::make_shared<const ExactMcOracle>(alternate_law(p, v), 1000000, 12, m);
        AdversarialOracle null_o(HypothesisTag::null(), m, P, nullptr), alt_o(HypothesisTag::alternate(v), m, P, Q);
        int mismatched = 0, failing = 0;
        for (int i = 0; i < 20; ++i) {
            const Query f = sign_correlation_query("c" + std::to_string(i), i == 0 ? v : random_unit_vector(d, rng));
            const double a = null_o.answer(f), b = alt_o.answer(f);
            if (!success_event(f, *P, *Q, m).success) {
                ++failing;
                if (a != b) ++mismatched;
            }
        }
        return {mismatched == 0 && failing > 0, fmt("%.0f failing queries, %.0f mismatches", failing, mismatched)};
    });
    cr.run("oracles.success_event_examples", [&]() -> Outcome {
        const TestingParams p = TestingParams::make(0.5, 0.3);
        Rng rng = cr.stream("success");
        const int d = 10;
        const Vector v = random_unit_vector(d, rng);
        const bool constant = success_event(constant_query("c", 0.3), p, v, 1e6, 1000000, 3);
        const bool inlier = success_event(slab_query("inlier", p.rho() * v, 1e-6), p, v, 100, 1000000, 4);
        return {!constant && inlier && success_predicate(0, 1, 1), ""};
    });
}

inline void verify_analysis(CheckRunner& cr) {
    cr.run("analysis.closed_form_vs_quadrature", [&]() -> Outcome {
        double worst = 0.0;
        bool zero = true;
        for (const auto& g : chi_grid()) {
            const double cf = chi_gaussian_closed_form(g.a, g.gamma, g.cos_theta);
            worst = std::max(worst, std::abs(cf - chi_gaussian_numeric(g.a, g.gamma, g.cos_theta).value));
            if (g.cos_theta == 0.0 && cf != 0.0) zero = false;
        }
        return {worst <= 1e-6 && zero, fmt("max difference %.3g", worst)};
    });
    cr.run("analysis.symmetry", [&]() -> Outcome {
        const TestingParams p = TestingParams::make(0.3, 0.1);
        Rng rng = cr.stream("symmetry");
        const double c = 0.6;
        auto pair = [&](int d) {
            const Vector a = random_unit_vector(d, rng);
            Vector b = random_unit_vector(d, rng);
            b = (b - a.dot(b) * a).normalized();
            return std::make_pair(a, Vector((c * a + std::sqrt(1 - c * c) * b).normalized()));
        };
        const auto [a1, b1] = pair(3);
        const auto [a2, b2] = pair(40);
        const auto r1 = chi_Tv_direct_mc(p, a1, b1, 1000000, rng);
        const auto r2 = chi_Tv_direct_mc(p, a2, b2, 1000000, rng);
        const double z = std::abs(r1.value - r2.value) / std::sqrt(r1.se * r1.se + r2.se * r2.se);
        return {z <= 5.0, fmt("difference %.2f combined SE", z)};
    });
    cr.run("analysis.nonnegative_at_one", [&]() -> Outcome {
        Rng rng = cr.stream("nonneg");
        const TestingParams p = TestingParams::make(0.3, 0.1);
        const auto r = chi_Tv_correlation(p, 1.0, 1000000, rng);
        return {r.value >= 0.0, fmt("chi^2 = %.5f", r.value)};
    });
    cr.run("analysis.conditional_decomposition", [&]() -> Outcome {
        Rng rng = cr.stream("decomposition");
        double worst = 0.0;
        for (const auto& [rho, alpha, c] : std::vector<std::tuple<double, double, double>>{{0.3, 0.1, 0.5}, {0.2, 0.3, -0.7}, {0.3, 0.05, 0.9}}) {
            const TestingParams p = TestingParams::make(rho, alpha);
            const int d = 4;
            const Vector a = random_unit_vector(d, rng);
            Vector b = random_unit_vector(d, rng);
            b = (b - a.dot(b) * a).normalized();
            const Vector vp = (c * a + std::sqrt(1 - c * c) * b).normalized();
            const auto direct = chi_Tv_direct_mc(p, a, vp, 1000000, rng);
            const auto cond = chi_Tv_conditional_average(p, a.dot(vp), 1000000, rng);
            worst = std::max(worst, std::abs(direct.value - cond.value) / std::sqrt(direct.se * direct.se + cond.se * cond.se));
        }
        return {worst <= 5.0, fmt("worst difference %.2f combined SE", worst)};
    });
}

}  // namespace detail

inline const std::vector<std::string>& verify_suites() {
    static const std::vector<std::string> s = {"distributions", "hermite", "instances", "oracles", "analysis", "all"};
    return s;
}

/// Runs a module's property checks, one PASS/FAIL line each; returns 0 iff all pass.
inline int run_verify(const std::string& suite, const VerifyOptions& opt = {}, std::ostream& os = std::cout) {
    if (std::find(verify_suites().begin(), verify_suites().end(), suite) == verify_suites().end())
        throw UsageError("unknown verify suite: " + suite);
    detail::CheckRunner cr(os, opt);
    const bool all = suite == "all";
    if (all || suite == "distributions") detail::verify_distributions(cr);
    if (all || suite == "hermite") detail::verify_hermite(cr);
    if (all || suite == "instances") detail::verify_instances(cr);
    if (all || suite == "oracles") detail::verify_oracles(cr);
    if (all || suite == "analysis") detail::verify_analysis(cr);
    const auto failed = std::count_if(cr.results().begin(), cr.results().end(), [](const CheckResult& r) { return !r.pass; });
    os << (failed == 0 ? "verify " + suite + ": all checks passed" : "verify " + suite + ": " + std::to_string(failed) + " check(s) failed") << std::endl;
    return failed == 0 ? 0 : 1;
}

}  // namespace sqreg
