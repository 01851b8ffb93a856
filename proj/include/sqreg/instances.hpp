#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "sqreg/distributions.hpp"
#include "sqreg/errors.hpp"
#include "sqreg/random.hpp"
#include "sqreg/rng.hpp"
#include "sqreg/testing_params.hpp"

namespace sqreg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kUnitTolerance = 1e-12;

inline void require_unit(const Vector& v, const char* what) {
    if (v.size() == 0 || std::abs(v.norm() - 1.0) > kUnitTolerance)
        throw InvalidParameter(std::string(what) + " must be a unit vector");
}

inline Vector random_unit_vector(int d, Rng& rng) {
    if (d < 1) throw InvalidParameter("dimension must be positive");
    Vector v(d);
    double n = 0.0;
    do {
        fill_standard_normal(rng, v.data(), static_cast<std::size_t>(d));
        n = v.norm();
    } while (!(n > 0.0));
    v /= n;
    // Renormalize once more so the unit check holds to the last bits.
    return v / v.norm();
}

struct LabeledSample {
    Vector x;
    double y = 0.0;
};

/// n labeled samples stored column-wise: X is n x d, y has length n.
struct SampleSet {
    Matrix X;
    Vector y;

    [[nodiscard]] Eigen::Index size() const noexcept { return y.size(); }
    [[nodiscard]] int dim() const noexcept { return static_cast<int>(X.cols()); }
    [[nodiscard]] LabeledSample sample(Eigen::Index i) const { return {X.row(i).transpose(), y(i)}; }
};

/// x ~ N(0, I_d), y = x^T beta + z, z ~ E.
struct EstimationInstance {
    int d = 0;
    Vector beta;
    ContaminationSpec contamination;

    EstimationInstance(Vector b, ContaminationSpec e) : d(static_cast<int>(b.size())), beta(std::move(b)), contamination(std::move(e)) {
        if (d < 1) throw InvalidParameter("estimation instance needs d >= 1");
        if (beta.norm() > 1.0 + kUnitTolerance) throw InvalidParameter("regressor must lie in the unit ball");
    }
};

/// Null or Alternate(v).
class HypothesisTag {
public:
    static HypothesisTag null() { return HypothesisTag(); }
    static HypothesisTag alternate(Vector v) {
        require_unit(v, "alternate direction");
        HypothesisTag t;
        t.v_ = std::move(v);
        return t;
    }
    [[nodiscard]] bool is_null() const noexcept { return !v_.has_value(); }
    [[nodiscard]] const Vector& direction() const {
        if (!v_) throw InvalidParameter("null hypothesis has no direction");
        return *v_;
    }

private:
    std::optional<Vector> v_;
};

// Joint laws over (x, y). Each has at most one special direction u: the
// component of x orthogonal to u is standard Gaussian and independent of (u^T x, y).

/// x ~ N(0, I_d) independent of y ~ R.
struct NullLaw {
    int d;
    ResponseMarginal response;
};

/// x ~ N(0, I_d), y = x^T beta + z, z ~ E.
struct LinearLaw {
    Vector beta;
    ContaminationSpec noise;
};

/// y ~ R, v^T x ~ N(rho y, sigma^2), orthogonal part standard.
struct ContinuousAlternateLaw {
    TestingParams params;
    Vector v;
};

using JointLaw = std::variant<NullLaw, LinearLaw, ContinuousAlternateLaw>;

inline int law_dimension(const JointLaw& law) {
    return std::visit(
        [](const auto& l) -> int {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, NullLaw>)
                return l.d;
            else if constexpr (std::is_same_v<T, LinearLaw>)
                return static_cast<int>(l.beta.size());
            else
                return static_cast<int>(l.v.size());
        },
        law);
}

/// Unit direction carrying the dependence between x and y, if any.
inline std::optional<Vector> law_direction(const JointLaw& law) {
    if (const auto* l = std::get_if<LinearLaw>(&law)) {
        const double n = l->beta.norm();
        if (n == 0.0) return std::nullopt;
        return Vector(l->beta / n);
    }
    if (const auto* c = std::get_if<ContinuousAlternateLaw>(&law)) return c->v;
    return std::nullopt;
}

/// One draw of (t, y) with t = u^T x, plus an antithetic partner drawn from the same law.
struct LineDraw {
    double t, y;
    double t_anti, y_anti;
};

inline LineDraw draw_line(const JointLaw& law, Rng& rng) {
    if (const auto* n = std::get_if<NullLaw>(&law)) {
        const double t = standard_normal(rng);
        const double y = n->response.sample(rng);
        return {t, y, t, -y};
    }
    if (const auto* l = std::get_if<LinearLaw>(&law)) {
        const double b = l->beta.norm();
        const double t = standard_normal(rng);
        const double z = l->noise.sample(rng);
        return {t, b * t + z, t, b * t - z};
    }
    const auto& c = std::get<ContinuousAlternateLaw>(law);
    const double y = c.params.response_marginal().sample(rng);
    const double w = c.params.rho() * y + c.params.sigma() * standard_normal(rng);
    return {w, y, -w, -y};
}

inline JointLaw null_law(const TestingParams& p, int d) {
    if (d < 1) throw InvalidParameter("dimension must be positive");
    return NullLaw{d, p.response_marginal()};
}

inline JointLaw alternate_law(const TestingParams& p, const Vector& v) {
    require_unit(v, "alternate direction");
    return LinearLaw{p.rho() * v, p.contamination()};
}

inline JointLaw testing_law(const TestingParams& p, int d, const HypothesisTag& tag) {
    if (tag.is_null()) return null_law(p, d);
    if (tag.direction().size() != d) throw InvalidParameter("direction dimension mismatch");
    return alternate_law(p, tag.direction());
}

inline JointLaw continuous_alternate_law(const TestingParams& p, const Vector& v) {
    require_unit(v, "alternate direction");
    return ContinuousAlternateLaw{p, v};
}

inline JointLaw estimation_law(const EstimationInstance& inst) { return LinearLaw{inst.beta, inst.contamination}; }

inline SampleSet sample_law(const JointLaw& law, Eigen::Index n, Rng& rng) {
    if (n < 1) throw InvalidParameter("sample count must be positive");
    const int d = law_dimension(law);
    SampleSet s{Matrix(n, d), Vector(n)};
    Vector g(d);
    if (const auto* l = std::get_if<LinearLaw>(&law)) {
        for (Eigen::Index i = 0; i < n; ++i) {
            fill_standard_normal(rng, g.data(), static_cast<std::size_t>(d));
            s.X.row(i) = g.transpose();
            s.y(i) = g.dot(l->beta) + l->noise.sample(rng);
        }
        return s;
    }
    if (const auto* nl = std::get_if<NullLaw>(&law)) {
        for (Eigen::Index i = 0; i < n; ++i) {
            fill_standard_normal(rng, g.data(), static_cast<std::size_t>(d));
            s.X.row(i) = g.transpose();
            s.y(i) = nl->response.sample(rng);
        }
        return s;
    }
    const auto& c = std::get<ContinuousAlternateLaw>(law);
    for (Eigen::Index i = 0; i < n; ++i) {
        const LineDraw ld = draw_line(law, rng);
        fill_standard_normal(rng, g.data(), static_cast<std::size_t>(d));
        s.X.row(i) = (g - c.v.dot(g) * c.v + ld.t * c.v).transpose();
        s.y(i) = ld.y;
    }
    return s;
}

inline SampleSet sample_estimation(const EstimationInstance& inst, Eigen::Index n, Rng& rng) {
    return sample_law(estimation_law(inst), n, rng);
}

inline SampleSet sample_testing(const TestingParams& p, int d, const HypothesisTag& tag, Eigen::Index n, Rng& rng) {
    return sample_law(testing_law(p, d, tag), n, rng);
}

inline SampleSet sample_continuous_alternate(const TestingParams& p, int d, const Vector& v, Eigen::Index n, Rng& rng) {
    if (v.size() != d) throw InvalidParameter("direction dimension mismatch");
    return sample_law(continuous_alternate_law(p, v), n, rng);
}

inline void write_samples_csv(const SampleSet& s, std::ostream& os) {
    for (int j = 0; j < s.dim(); ++j) os << "x_" << j << ',';
    os << "y\n";
    os << std::setprecision(17);
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        for (int j = 0; j < s.dim(); ++j) os << s.X(i, j) << ',';
        os << s.y(i) << '\n';
    }
}

inline void write_samples_csv(const SampleSet& s, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    write_samples_csv(s, os);
    if (!os) throw IoError("write failed for " + path);
}

inline SampleSet read_samples_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw IoError("empty sample CSV");
    const auto cols = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
    if (cols < 2) throw IoError("sample CSV needs at least one covariate column");
    std::vector<double> vals;
    Eigen::Index rows = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        int c = 0;
        while (std::getline(ss, cell, ',')) {
            vals.push_back(std::stod(cell));
            ++c;
        }
        if (c != cols) throw IoError("ragged row in sample CSV");
        ++rows;
    }
    SampleSet s{Matrix(rows, cols - 1), Vector(rows)};
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (int j = 0; j < cols - 1; ++j) s.X(i, j) = vals[static_cast<std::size_t>(i * cols + j)];
        s.y(i) = vals[static_cast<std::size_t>(i * cols + cols - 1)];
    }
    return s;
}

/// One phase cell of the conditional-law check.
struct ConditionalCell {
    double phase_lo = 0.0;
    double phase_hi = 0.0;
    double y_reference = 0.0;
    long long count = 0;
    double tv = 0.0;
};

struct ConditionalLawCheck {
    std::vector<ConditionalCell> cells;
    long long off_grid = 0;
    long long samples = 0;
};

/// Empirical check that v^T x given y follows conditional_law(params, y) under Alternate(v).
///
/// In grid units, A_y puts mass proportional to exp(-(s'(j + c_y))^2 / 2 sigma^2) on
/// theta_y + s' j with c_y = y sigma^2 / s, so the law is the same (up to an index shift)
/// for all y with equal phase frac(c_y). Samples are pooled by phase into cells spanning
/// at most s/4 in y, each compared with the pmf of A at the cell's reference y.
inline ConditionalLawCheck conditional_law_check(const TestingParams& params, int d, Eigen::Index n, Rng& rng) {
    const Vector v = random_unit_vector(d, rng);
    const SampleSet s = sample_testing(params, d, HypothesisTag::alternate(v), n, rng);
    const double sig2 = params.sigma() * params.sigma();
    const int n_cells = static_cast<int>(std::ceil(4.0 / sig2 - 1e-12));
    std::vector<std::map<std::int64_t, long long>> hist(static_cast<std::size_t>(n_cells));
    ConditionalLawCheck out;
    out.samples = n;
    const Vector t = s.X * v;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double y = s.y(i);
        const DiscreteGaussianParams a = conditional_law(params, y);
        const auto j = snap_to_grid(a.theta, a.s, t(i));
        if (!j) {
            ++out.off_grid;
            continue;
        }
        const double c = y * sig2 / params.s();
        const double k = std::floor(c);
        const double phase = c - k;
        const int cell = std::min(n_cells - 1, static_cast<int>(phase * n_cells));
        ++hist[static_cast<std::size_t>(cell)][*j + static_cast<std::int64_t>(k)];
    }
    for (int cell = 0; cell < n_cells; ++cell) {
        ConditionalCell cc;
        cc.phase_lo = static_cast<double>(cell) / n_cells;
        cc.phase_hi = static_cast<double>(cell + 1) / n_cells;
        const double phase_mid = 0.5 * (cc.phase_lo + cc.phase_hi);
        cc.y_reference = phase_mid * params.s() / sig2;
        const DiscreteGaussian ref(conditional_law(params, cc.y_reference));
        const auto& h = hist[static_cast<std::size_t>(cell)];
        for (const auto& [idx, cnt] : h) cc.count += cnt;
        if (cc.count > 0) {
            // Grid index of the reference law's table entries relative to theta_{y_ref}.
            double tv = 0.0;
            std::map<std::int64_t, double> emp;
            for (const auto& [idx, cnt] : h) emp[idx] = static_cast<double>(cnt) / static_cast<double>(cc.count);
            for (std::size_t jj = 0; jj < ref.size(); ++jj) {
                const std::int64_t idx = ref.first_index() + static_cast<std::int64_t>(jj);
                const auto it = emp.find(idx);
                const double e = it == emp.end() ? 0.0 : it->second;
                tv += std::abs(e - ref.probability(jj));
                if (it != emp.end()) emp.erase(it);
            }
            for (const auto& [idx, e] : emp) tv += e;
            cc.tv = 0.5 * tv;
        }
        out.cells.push_back(cc);
    }
    return out;
}

}  // namespace sqreg
