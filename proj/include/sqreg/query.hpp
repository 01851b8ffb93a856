#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "sqreg/errors.hpp"
#include "sqreg/instances.hpp"

namespace sqreg {

// Each structured kind depends on x only through a few projections w^T x (its
// sketch) and possibly ||x||^2, which lets oracles evaluate it in a low-dimensional
// reduced space. `reduced(proj, norm_sq, y)` receives the projections in sketch order.

struct ConstantQuery {
    double value = 0.0;
    [[nodiscard]] double reduced(const double*, double, double) const noexcept { return value; }
};

/// 1{u^T x > b}.
struct HalfspaceQuery {
    Vector u;
    double threshold = 0.0;
    [[nodiscard]] double reduced(const double* p, double, double) const noexcept { return p[0] > threshold ? 1.0 : 0.0; }
};

/// 1{|y - w^T x| <= h}.
struct SlabQuery {
    Vector w;
    double halfwidth = 0.0;
    [[nodiscard]] double reduced(const double* p, double, double y) const noexcept {
        return std::abs(y - p[0]) <= halfwidth ? 1.0 : 0.0;
    }
};

/// 1{y > t}.
struct LabelThresholdQuery {
    double threshold = 0.0;
    [[nodiscard]] double reduced(const double*, double, double y) const noexcept { return y > threshold ? 1.0 : 0.0; }
};

/// 1{y * u^T x > 0}.
struct SignCorrelationQuery {
    Vector u;
    [[nodiscard]] double reduced(const double* p, double, double y) const noexcept { return y * p[0] > 0.0 ? 1.0 : 0.0; }
};

/// Rescaled clipped-Huber gradient coordinate (g(x) h(y - x^T beta) x_j + S) / (2S),
/// with g(x) = 1{||x|| <= radius} and h the Huber gradient clamp(., -1, 1).
struct HuberGradientQuery {
    Vector beta;
    int coord = 0;
    double radius = 1.0;
    double scale = 1.0;
    [[nodiscard]] double reduced(const double* p, double norm_sq, double y) const noexcept {
        const double g = norm_sq <= radius * radius ? 1.0 : 0.0;
        const double h = std::clamp(y - p[0], -1.0, 1.0);
        return (g * h * p[1] + scale) / (2.0 * scale);
    }
};

/// Arbitrary map (x, y) -> R; evaluated on full samples only.
struct GenericQuery {
    std::function<double(const Vector&, double)> fn;
};

using QueryKind = std::variant<ConstantQuery, HalfspaceQuery, SlabQuery, LabelThresholdQuery, SignCorrelationQuery,
                               HuberGradientQuery, GenericQuery>;

inline double clamp01(double v) noexcept {
    if (!(v >= 0.0)) return 0.0;  // also maps NaN to 0
    return v > 1.0 ? 1.0 : v;
}

/// Sketch vectors of a structured query kind (empty for GenericQuery).
struct Sketch {
    std::vector<Vector> rows;
    bool needs_norm = false;
};

class Query {
public:
    Query(std::string id, QueryKind kind) : id_(std::move(id)), kind_(std::move(kind)) {}

    [[nodiscard]] const std::string& id() const noexcept { return id_; }
    [[nodiscard]] const QueryKind& kind() const noexcept { return kind_; }
    [[nodiscard]] bool is_generic() const noexcept { return std::holds_alternative<GenericQuery>(kind_); }

    [[nodiscard]] Sketch sketch(int d) const {
        Sketch s;
        std::visit(
            [&](const auto& q) {
                using T = std::decay_t<decltype(q)>;
                if constexpr (std::is_same_v<T, HalfspaceQuery> || std::is_same_v<T, SignCorrelationQuery>) {
                    s.rows.push_back(q.u);
                } else if constexpr (std::is_same_v<T, SlabQuery>) {
                    s.rows.push_back(q.w);
                } else if constexpr (std::is_same_v<T, HuberGradientQuery>) {
                    if (q.coord < 0 || q.coord >= d) throw InvalidParameter("query " + id_ + " coordinate out of range");
                    s.rows.push_back(q.beta);
                    s.rows.push_back(Vector::Unit(d, q.coord));
                    s.needs_norm = true;
                }
            },
            kind_);
        for (const auto& r : s.rows)
            if (r.size() != d) throw InvalidParameter("query " + id_ + " has the wrong dimension");
        return s;
    }

    /// Clamped value on one sample.
    [[nodiscard]] double operator()(const Vector& x, double y) const {
        return clamp01(std::visit(
            [&](const auto& q) -> double {
                using T = std::decay_t<decltype(q)>;
                if constexpr (std::is_same_v<T, GenericQuery>) {
                    return q.fn(x, y);
                } else {
                    const Sketch s = sketch(static_cast<int>(x.size()));
                    double p[2] = {0.0, 0.0};
                    for (std::size_t r = 0; r < s.rows.size(); ++r) p[r] = s.rows[r].dot(x);
                    return q.reduced(p, x.squaredNorm(), y);
                }
            },
            kind_));
    }

    [[nodiscard]] double operator()(const LabeledSample& s) const { return (*this)(s.x, s.y); }

private:
    std::string id_;
    QueryKind kind_;
};

inline Query constant_query(std::string id, double c) { return Query(std::move(id), ConstantQuery{c}); }
inline Query halfspace_query(std::string id, Vector u, double b = 0.0) { return Query(std::move(id), HalfspaceQuery{std::move(u), b}); }
inline Query slab_query(std::string id, Vector w, double h) { return Query(std::move(id), SlabQuery{std::move(w), h}); }
inline Query label_threshold_query(std::string id, double t) { return Query(std::move(id), LabelThresholdQuery{t}); }
inline Query sign_correlation_query(std::string id, Vector u) { return Query(std::move(id), SignCorrelationQuery{std::move(u)}); }
inline Query generic_query(std::string id, std::function<double(const Vector&, double)> fn) {
    return Query(std::move(id), GenericQuery{std::move(fn)});
}

}  // namespace sqreg
