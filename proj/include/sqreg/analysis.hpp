#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "sqreg/errors.hpp"
#include "sqreg/hermite.hpp"
#include "sqreg/instances.hpp"
#include "sqreg/numeric.hpp"
#include "sqreg/oracles.hpp"
#include "sqreg/query.hpp"
#include "sqreg/random.hpp"
#include "sqreg/rng.hpp"
#include "sqreg/testing_params.hpp"

#include <json.hpp>

namespace sqreg {

enum class ChiMethod { ClosedForm, Quadrature, MonteCarlo };

inline const char* to_string(ChiMethod m) noexcept {
    switch (m) {
        case ChiMethod::ClosedForm: return "closed-form";
        case ChiMethod::Quadrature: return "quadrature";
        default: return "monte-carlo";
    }
}

struct ChiCorrelationResult {
    double value = 0.0;
    ChiMethod method = ChiMethod::ClosedForm;
    long long n = 0;
    double se = 0.0;
};

namespace detail {
inline void check_chi_args(double gamma, double cos_theta) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidParameter("gamma must lie in (0,1)");
    if (!(cos_theta >= -1.0 && cos_theta <= 1.0)) throw InvalidParameter("cos(theta) must lie in [-1,1]");
}
}  // namespace detail

/// chi_{N(0,I)}(N(a v, I - gamma v v^T), N(a u, I - gamma u u^T)) with cos(theta) = u^T v.
inline double chi_gaussian_closed_form(double a, double gamma, double cos_theta) {
    detail::check_chi_args(gamma, cos_theta);
    const double gc = gamma * cos_theta;
    if (gc * gc >= 1.0) throw SingularityError("gamma^2 cos^2(theta) >= 1");
    if (cos_theta == 0.0) return 0.0;
    return std::exp(a * a * cos_theta / (1.0 + gc)) / std::sqrt(1.0 - gc * gc) - 1.0;
}

/// The same correlation as E_{x~N(0,I_2)}[r_v(x) r_u(x)] - 1 by tensor Gauss-Hermite
/// quadrature in span{u, v}; r_v is the density ratio along v.
inline ChiCorrelationResult chi_gaussian_numeric(double a, double gamma, double cos_theta, int nodes = kQuadratureNodes) {
    detail::check_chi_args(gamma, cos_theta);
    const GaussHermiteRule& rule = gauss_hermite(nodes);
    const double c = cos_theta, s = std::sqrt(std::max(0.0, 1.0 - c * c));
    const double sd = std::sqrt(1.0 - gamma);
    auto log_ratio = [&](double t) { return -0.5 * ((t - a) / sd) * ((t - a) / sd) + 0.5 * t * t - std::log(sd); };
    NeumaierSum acc;
    const auto n = rule.nodes.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double x1 = rule.nodes[i];
        const double lv = log_ratio(x1);
        for (std::size_t j = 0; j < n; ++j) {
            const double x2 = rule.nodes[j];
            acc.add(rule.weights[i] * rule.weights[j] * std::exp(lv + log_ratio(c * x1 + s * x2)));
        }
    }
    return {acc.value() - 1.0, ChiMethod::Quadrature, static_cast<long long>(n * n), 0.0};
}

// ---------------------------------------------------------------------------
// Correlations of the continuous alternates T_v

inline constexpr int kMgfSeriesTerms = 60;
inline constexpr double kMgfSeriesReach = 5.0;
inline constexpr double kChiRegime = 0.1;

/// Monte-Carlo pool of y ~ R for E[exp(g y^2)] at many g. When |g| max y^2 is
/// small the pooled even moments are summed as a power series, which costs O(terms)
/// per g instead of O(n).
class ResponseMgf {
public:
    ResponseMgf(const TestingParams& params, long long n, Rng& rng) {
        if (n < 2) throw InvalidParameter("response pool needs at least two samples");
        const ResponseMarginal r = params.response_marginal();
        y2_.resize(static_cast<std::size_t>(n));
        for (auto& v : y2_) {
            const double y = r.sample(rng);
            v = y * y;
            max_y2_ = std::max(max_y2_, v);
        }
        std::vector<NeumaierSum> acc(kMgfSeriesTerms + 1);
        for (double v : y2_) {
            double p = 1.0;
            for (int k = 0; k <= kMgfSeriesTerms; ++k) {
                acc[static_cast<std::size_t>(k)].add(p);
                p *= v;
            }
        }
        moments_.resize(kMgfSeriesTerms + 1);
        for (int k = 0; k <= kMgfSeriesTerms; ++k)
            moments_[static_cast<std::size_t>(k)] = acc[static_cast<std::size_t>(k)].value() / static_cast<double>(n);
    }

    [[nodiscard]] long long size() const noexcept { return static_cast<long long>(y2_.size()); }

    /// Sample mean of exp(g y^2) over the pool.
    [[nodiscard]] double mean_exp(double g) const {
        if (g == 0.0) return 1.0;
        if (std::abs(g) * max_y2_ <= kMgfSeriesReach) {
            NeumaierSum s;
            double coef = 1.0;
            for (int k = 0; k <= kMgfSeriesTerms; ++k) {
                s.add(coef * moments_[static_cast<std::size_t>(k)]);
                coef *= g / static_cast<double>(k + 1);
            }
            return s.value();
        }
        NeumaierSum s;
        for (double v : y2_) s.add(std::exp(g * v));
        return s.value() / static_cast<double>(y2_.size());
    }

    [[nodiscard]] MeanEstimate estimate(double g) const {
        const double m1 = mean_exp(g);
        const double m2 = mean_exp(2.0 * g);
        const double n = static_cast<double>(y2_.size());
        const double var = std::max(0.0, (m2 - m1 * m1) * n / (n - 1.0));
        return {m1, std::sqrt(var / n), size()};
    }

    [[nodiscard]] const std::vector<double>& squared_samples() const noexcept { return y2_; }

private:
    std::vector<double> y2_;
    std::vector<double> moments_;
    double max_y2_ = 0.0;
};

/// (1 + f(theta)) E_{y~R}[exp(g(theta) y^2)] - 1 with f = 1/sqrt(1 - rho^4 cos^2) - 1 and
/// g = rho^2 cos / (1 + rho^2 cos), the y-expectation over a response pool.
inline ChiCorrelationResult chi_Tv_correlation(const TestingParams& params, double cos_theta, const ResponseMgf& pool) {
    if (!(cos_theta >= -1.0 && cos_theta <= 1.0)) throw InvalidParameter("cos(theta) must lie in [-1,1]");
    const double r2c = params.rho() * params.rho() * cos_theta;
    if (std::abs(r2c) > kChiRegime + 1e-12) throw InvalidParameter("chi_Tv_correlation needs |rho^2 cos(theta)| <= 0.1");
    if (cos_theta == 0.0) return {0.0, ChiMethod::MonteCarlo, pool.size(), 0.0};
    const double one_f = 1.0 / std::sqrt(1.0 - r2c * r2c);
    const double g = r2c / (1.0 + r2c);
    const MeanEstimate e = pool.estimate(g);
    return {one_f * e.mean - 1.0, ChiMethod::MonteCarlo, e.n, one_f * e.se};
}

inline ChiCorrelationResult chi_Tv_correlation(const TestingParams& params, double cos_theta, long long n_mc, Rng& rng) {
    const ResponseMgf pool(params, n_mc, rng);
    return chi_Tv_correlation(params, cos_theta, pool);
}

/// Direct Monte-Carlo estimate of chi_P(T_v, T_v') from joint samples of P = N(0, I) x R,
/// using the density ratio of T_v against P in the v direction.
inline ChiCorrelationResult chi_Tv_direct_mc(const TestingParams& params, const Vector& v, const Vector& vp, long long n, Rng& rng) {
    require_unit(v, "v");
    require_unit(vp, "v'");
    if (v.size() != vp.size()) throw InvalidParameter("direction dimension mismatch");
    if (n < 2) throw InvalidParameter("need at least two samples");
    // Only (v^T x, v'^T x) matter: draw them in an orthonormal basis of span{v, v'}.
    const double c = std::clamp(v.dot(vp), -1.0, 1.0);
    const double s = std::sqrt(1.0 - c * c);
    const double rho = params.rho(), sig = params.sigma();
    const ResponseMarginal r = params.response_marginal();
    auto ratio = [&](double t, double y) {
        const double u = (t - rho * y) / sig;
        return std::exp(-0.5 * u * u + 0.5 * t * t) / sig;
    };
    RunningStats st;
    for (long long i = 0; i < n; ++i) {
        const double g1 = standard_normal(rng), g2 = standard_normal(rng);
        const double y = r.sample(rng);
        st.add(ratio(g1, y) * ratio(c * g1 + s * g2, y) - 1.0);
    }
    return {st.mean(), ChiMethod::MonteCarlo, n, st.se()};
}

/// E_{y~R}[chi(P_v^{B_y}, P_v'^{B_y})] via the closed form with a = rho y, gamma = rho^2.
inline ChiCorrelationResult chi_Tv_conditional_average(const TestingParams& params, double cos_theta, long long n, Rng& rng) {
    if (n < 2) throw InvalidParameter("need at least two samples");
    const ResponseMarginal r = params.response_marginal();
    const double gamma = params.rho() * params.rho();
    RunningStats st;
    for (long long i = 0; i < n; ++i) st.add(chi_gaussian_closed_form(params.rho() * r.sample(rng), gamma, cos_theta));
    return {st.mean(), ChiMethod::MonteCarlo, n, st.se()};
}

// ---------------------------------------------------------------------------
// SDA proxy

inline constexpr long long kMinSdaPairs = 10'000;

struct SdaProxyResult {
    bool holds = false;
    double top_mean = 0.0;
    double threshold = 0.0;
    long long top_count = 0;
    long long pairs = 0;
};

/// Draws n_pairs random direction pairs in dimension d, and checks whether the mean
/// of the top ceil(n_pairs / q^2) values of |chi(T_v, T_v')| is at most 1/m.
inline SdaProxyResult sda_proxy(const TestingParams& params, int d, double m, long long q, long long n_pairs, long long n_mc,
                                Rng& rng) {
    if (!(m >= 1.0)) throw InvalidParameter("m must be at least 1");
    if (q < 1 || d < 1) throw InvalidParameter("q and d must be positive");
    if (n_pairs < kMinSdaPairs) throw InvalidParameter("sda_proxy needs n_pairs >= 10^4");
    const double q2 = static_cast<double>(q) * static_cast<double>(q);
    if (q2 > static_cast<double>(n_pairs)) throw InsufficientPairs("q^2 exceeds the number of pairs");
    Rng pool_rng = rng.split(0x5DA);
    const ResponseMgf pool(params, n_mc, pool_rng);
    std::vector<double> vals(static_cast<std::size_t>(n_pairs));
    for (auto& v : vals) {
        const Vector a = random_unit_vector(d, rng), b = random_unit_vector(d, rng);
        v = std::abs(chi_Tv_correlation(params, std::clamp(a.dot(b), -1.0, 1.0), pool).value);
    }
    SdaProxyResult out;
    out.pairs = n_pairs;
    out.top_count = static_cast<long long>(std::ceil(static_cast<double>(n_pairs) / q2));
    std::nth_element(vals.begin(), vals.begin() + (out.top_count - 1), vals.end(), std::greater<>());
    NeumaierSum s;
    for (long long i = 0; i < out.top_count; ++i) s.add(vals[static_cast<std::size_t>(i)]);
    out.top_mean = s.value() / static_cast<double>(out.top_count);
    out.threshold = 1.0 / m;
    out.holds = out.top_mean <= out.threshold;
    return out;
}

// ---------------------------------------------------------------------------
// Indistinguishability sweep

/// Null and alternate expectations of one (query, direction) cell.
struct SweepCell {
    std::string query_id;
    int v_index = 0;
    MeanEstimate null_estimate;
    MeanEstimate alternate_estimate;
};

/// All (query, v) expectations; independent of m, so one table serves many m.
struct ExpectationTable {
    std::vector<SweepCell> cells;
    int n_queries = 0;
    int n_v = 0;
};

/// `battery(d, rng)`-style batteries are built by the caller; the table draws n_v
/// directions from `rng` and estimates every expectation with n_mc antithetic pairs.
inline ExpectationTable expectation_table(const TestingParams& params, int d, const std::vector<Query>& battery, int n_v,
                                          long long n_mc, Rng& rng) {
    if (n_v < 1) throw InvalidParameter("sweep needs at least one direction");
    ExpectationTable t;
    t.n_queries = static_cast<int>(battery.size());
    t.n_v = n_v;
    const std::uint64_t seed = rng();
    const ExactMcOracle null_oracle(null_law(params, d), n_mc, splitmix64(seed ^ 0x4E554C4CULL), 1.0, true);
    std::vector<MeanEstimate> null_est;
    null_est.reserve(battery.size());
    for (const auto& f : battery) null_est.push_back(null_oracle.estimate(f));
    for (int k = 0; k < n_v; ++k) {
        const Vector v = random_unit_vector(d, rng);
        const ExactMcOracle alt(alternate_law(params, v), n_mc, splitmix64(seed + 0x100000001ULL * static_cast<std::uint64_t>(k + 1)), 1.0, true);
        for (std::size_t i = 0; i < battery.size(); ++i)
            t.cells.push_back({battery[i].id(), k, null_est[i], alt.estimate(battery[i])});
    }
    return t;
}

struct SweepRow {
    std::string query_id;
    int v_index = 0;
    double e_p = 0.0;
    double e_q = 0.0;
    double tolerance = 0.0;
    bool success = false;
};

struct SweepResult {
    double m = 0.0;
    std::vector<SweepRow> rows;
    std::vector<std::pair<std::string, double>> query_success;
    /// Mean success over all (query, v) cells.
    double success_fraction = 0.0;
    double success_se = 0.0;
};

inline SweepResult evaluate_sweep(const ExpectationTable& t, double m) {
    SweepResult r;
    r.m = m;
    std::vector<std::pair<std::string, long long>> per;
    std::map<std::string, std::size_t> pos;
    long long hits = 0;
    for (const auto& c : t.cells) {
        const double a = clamp01(c.null_estimate.mean), b = clamp01(c.alternate_estimate.mean);
        const double tol = vstat_tolerance(m, b);
        if (c.null_estimate.se > tol / 2.0 || c.alternate_estimate.se > tol / 2.0)
            throw InsufficientPrecision("sweep Monte-Carlo error above half the tolerance for query " + c.query_id);
        SweepRow row{c.query_id, c.v_index, a, b, tol, success_predicate(a, b, m)};
        auto [it, fresh] = pos.try_emplace(c.query_id, per.size());
        if (fresh) per.emplace_back(c.query_id, 0);
        if (row.success) {
            ++per[it->second].second;
            ++hits;
        }
        r.rows.push_back(std::move(row));
    }
    for (const auto& [id, k] : per) r.query_success.emplace_back(id, static_cast<double>(k) / t.n_v);
    const auto n = static_cast<double>(r.rows.size());
    if (n > 0) {
        r.success_fraction = static_cast<double>(hits) / n;
        r.success_se = std::sqrt(r.success_fraction * (1.0 - r.success_fraction) / n);
    }
    return r;
}

inline SweepResult indistinguishability_sweep(const TestingParams& params, int d, double m, const std::vector<Query>& battery,
                                              int n_v, long long n_mc, Rng& rng) {
    return evaluate_sweep(expectation_table(params, d, battery, n_v, n_mc, rng), m);
}

/// f_u = 1{y u^T x > 0} for n random directions u.
inline std::vector<Query> correlation_battery(int d, int n, Rng& rng) {
    std::vector<Query> b;
    b.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) b.push_back(sign_correlation_query("corr:" + std::to_string(i), random_unit_vector(d, rng)));
    return b;
}

inline void write_sweep_csv(const SweepResult& r, std::ostream& os) {
    os << "query_id,v_index,E_P,E_Qv,tolerance,success\n";
    char buf[128];
    for (const auto& row : r.rows) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%d", row.e_p, row.e_q, row.tolerance, row.success ? 1 : 0);
        os << row.query_id << ',' << row.v_index << ',' << buf << '\n';
    }
}

inline nlohmann::ordered_json sweep_summary(const SweepResult& r) {
    nlohmann::ordered_json j;
    j["m"] = r.m;
    j["success_fraction"] = {{"value", r.success_fraction}, {"se", r.success_se}};
    for (const auto& [id, p] : r.query_success) j["success:" + id] = {{"value", p}, {"se", 0.0}};
    return j;
}

}  // namespace sqreg
