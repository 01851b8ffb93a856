#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include "sqreg/distributions.hpp"
#include "sqreg/errors.hpp"
#include "sqreg/numeric.hpp"
#include "sqreg/random.hpp"
#include "sqreg/testing_params.hpp"

namespace sqreg {

inline constexpr int kMaxHermiteDegree = 60;
inline constexpr int kQuadratureNodes = 200;
inline constexpr int kMaxGapDegree = 12;
inline constexpr int kMaxTensorDim = 4;
inline constexpr int kMaxTensorDegree = 6;

/// Writes h_0(x), ..., h_kmax(x) into out (normalized probabilists' Hermite).
inline void hermite_values(int kmax, double x, double* out) noexcept {
    out[0] = 1.0;
    if (kmax == 0) return;
    out[1] = x;
    for (int k = 1; k < kmax; ++k)
        out[k + 1] = (x * out[k] - std::sqrt(static_cast<double>(k)) * out[k - 1]) / std::sqrt(k + 1.0);
}

inline double hermite_h(int k, double x) {
    if (k < 0) throw InvalidParameter("Hermite degree must be nonnegative");
    if (k > kMaxHermiteDegree) throw UnsupportedOrder("Hermite degree above 60");
    std::array<double, kMaxHermiteDegree + 1> h{};
    hermite_values(k, x, h.data());
    return h[static_cast<std::size_t>(k)];
}

/// Gauss-Hermite rule for the standard normal weight; weights sum to 1.
struct GaussHermiteRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

namespace detail {
inline GaussHermiteRule compute_gauss_hermite(int n) {
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) jac(k, k - 1) = jac(k - 1, k) = std::sqrt(static_cast<double>(k));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jac, Eigen::EigenvaluesOnly);
    GaussHermiteRule rule;
    rule.nodes.resize(static_cast<std::size_t>(n));
    rule.weights.resize(static_cast<std::size_t>(n));
    std::vector<double> h(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i < n; ++i) {
        double x = eig.eigenvalues()(i);
        // Newton polish on h_n; h_n' = sqrt(n) h_{n-1}.
        for (int it = 0; it < 4; ++it) {
            hermite_values(n, x, h.data());
            const double step = h[static_cast<std::size_t>(n)] / (std::sqrt(static_cast<double>(n)) * h[static_cast<std::size_t>(n) - 1]);
            x -= step;
            if (std::abs(step) < 1e-15 * std::max(1.0, std::abs(x))) break;
        }
        hermite_values(n - 1, x, h.data());
        double christoffel = 0.0;
        for (int k = 0; k < n; ++k) christoffel += h[static_cast<std::size_t>(k)] * h[static_cast<std::size_t>(k)];
        rule.nodes[static_cast<std::size_t>(i)] = x;
        rule.weights[static_cast<std::size_t>(i)] = 1.0 / christoffel;
    }
    // Symmetrize to remove eigen-solver asymmetry in the last bits.
    for (int i = 0; i < n / 2; ++i) {
        const auto a = static_cast<std::size_t>(i), b = static_cast<std::size_t>(n - 1 - i);
        const double x = 0.5 * (rule.nodes[b] - rule.nodes[a]);
        const double w = 0.5 * (rule.weights[a] + rule.weights[b]);
        rule.nodes[a] = -x;
        rule.nodes[b] = x;
        rule.weights[a] = rule.weights[b] = w;
    }
    if (n % 2 == 1) rule.nodes[static_cast<std::size_t>(n / 2)] = 0.0;
    return rule;
}
}  // namespace detail

/// Cached n-node rule (thread-safe).
inline const GaussHermiteRule& gauss_hermite(int n = kQuadratureNodes) {
    static std::mutex mu;
    static std::map<int, GaussHermiteRule> cache;
    if (n < 1 || n > 400) throw InvalidParameter("Gauss-Hermite node count must lie in [1, 400]");
    std::lock_guard lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, detail::compute_gauss_hermite(n)).first;
    return it->second;
}

struct GaussianLaw {
    double mean = 0.0;
    double sd = 1.0;
};

/// A discrete Gaussian conditioned on |x| <= radius.
struct TruncatedDiscreteGaussian {
    DiscreteGaussianParams params;
    double radius = 0.0;
};

using UnivariateLaw = std::variant<GaussianLaw, DiscreteGaussianParams, TruncatedDiscreteGaussian>;

/// Finite atom list (points, probabilities) for the discrete laws.
struct AtomicLaw {
    std::vector<double> points;
    std::vector<double> probs;
};

inline AtomicLaw atoms_of(const UnivariateLaw& law) {
    AtomicLaw out;
    if (const auto* p = std::get_if<DiscreteGaussianParams>(&law)) {
        DiscreteGaussian dg(*p);
        for (std::size_t j = 0; j < dg.size(); ++j) {
            if (dg.probability(j) == 0.0) continue;
            out.points.push_back(dg.point(j));
            out.probs.push_back(dg.probability(j));
        }
    } else if (const auto* t = std::get_if<TruncatedDiscreteGaussian>(&law)) {
        if (!(t->radius > 0.0)) throw InvalidParameter("truncation radius must be positive");
        DiscreteGaussian dg(t->params);
        NeumaierSum total;
        for (std::size_t j = 0; j < dg.size(); ++j) {
            const double x = dg.point(j);
            if (std::abs(x) > t->radius || dg.probability(j) == 0.0) continue;
            out.points.push_back(x);
            out.probs.push_back(dg.probability(j));
            total.add(dg.probability(j));
        }
        if (!(total.value() > 0.0)) throw InvalidParameter("truncated discrete Gaussian has no mass");
        for (double& q : out.probs) q /= total.value();
    } else {
        throw InvalidParameter("atoms_of: law is not discrete");
    }
    return out;
}

/// E_law[f(X)] by summation (discrete laws) or 200-node Gauss-Hermite quadrature (Gaussian).
template <class F>
double law_expect(const UnivariateLaw& law, F&& f) {
    NeumaierSum acc;
    if (const auto* g = std::get_if<GaussianLaw>(&law)) {
        if (!(g->sd > 0.0)) throw InvalidParameter("Gaussian law needs positive sd");
        const auto& rule = gauss_hermite();
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) acc.add(rule.weights[i] * f(g->mean + g->sd * rule.nodes[i]));
        return acc.value();
    }
    const AtomicLaw a = atoms_of(law);
    for (std::size_t i = 0; i < a.points.size(); ++i) acc.add(a.probs[i] * f(a.points[i]));
    return acc.value();
}

struct HermiteCoefficientTable {
    int max_degree = 0;
    std::vector<double> coeffs;
    UnivariateLaw source;
};

inline HermiteCoefficientTable hermite_coefficients(const UnivariateLaw& law, int kmax) {
    if (kmax < 0) throw InvalidParameter("Hermite degree must be nonnegative");
    if (kmax > kMaxHermiteDegree) throw UnsupportedOrder("Hermite degree above 60");
    std::vector<NeumaierSum> acc(static_cast<std::size_t>(kmax) + 1);
    std::vector<double> h(static_cast<std::size_t>(kmax) + 1);
    auto visit = [&](double x, double w) {
        hermite_values(kmax, x, h.data());
        for (int k = 0; k <= kmax; ++k) acc[static_cast<std::size_t>(k)].add(w * h[static_cast<std::size_t>(k)]);
    };
    if (const auto* g = std::get_if<GaussianLaw>(&law)) {
        if (!(g->sd > 0.0)) throw InvalidParameter("Gaussian law needs positive sd");
        const auto& rule = gauss_hermite();
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) visit(g->mean + g->sd * rule.nodes[i], rule.weights[i]);
    } else {
        const AtomicLaw a = atoms_of(law);
        for (std::size_t i = 0; i < a.points.size(); ++i) visit(a.points[i], a.probs[i]);
    }
    HermiteCoefficientTable t{kmax, {}, law};
    t.coeffs.reserve(acc.size());
    for (const auto& a : acc) t.coeffs.push_back(a.value());
    return t;
}

inline double hermite_coeff(const UnivariateLaw& law, int k) {
    return hermite_coefficients(law, k).coeffs[static_cast<std::size_t>(k)];
}

/// |A~_{k,y} - B_{k,y}| for k = 1..k_max, with A~_y = A_y conditioned on |x| <= dimension
/// and B_y = N(rho y, sigma^2).
inline std::vector<double> hermite_gap_profile(const TestingParams& params, double y, int k_max, int dimension) {
    if (k_max < 1 || k_max > kMaxGapDegree) throw UnsupportedOrder("gap profile degree must lie in [1, 12]");
    if (!std::isfinite(y)) throw InvalidParameter("gap profile: y must be finite");
    if (dimension < 1) throw InvalidParameter("gap profile: dimension must be positive");
    const auto a = hermite_coefficients(TruncatedDiscreteGaussian{conditional_law(params, y), static_cast<double>(dimension)}, k_max);
    const auto b = hermite_coefficients(GaussianLaw{params.rho() * y, params.sigma()}, k_max);
    std::vector<double> gaps;
    for (int k = 1; k <= k_max; ++k)
        gaps.push_back(std::abs(a.coeffs[static_cast<std::size_t>(k)] - b.coeffs[static_cast<std::size_t>(k)]));
    return gaps;
}

/// Draws from a univariate law (table built once).
class LawSampler {
public:
    explicit LawSampler(const UnivariateLaw& law) {
        if (const auto* g = std::get_if<GaussianLaw>(&law)) {
            gaussian_ = *g;
            return;
        }
        atoms_ = atoms_of(law);
        double run = 0.0;
        for (double p : atoms_.probs) cdf_.push_back(run += p);
    }

    double operator()(Rng& rng) const noexcept {
        if (cdf_.empty()) return gaussian_.mean + gaussian_.sd * standard_normal(rng);
        const double u = rng.uniform() * cdf_.back();
        auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        if (it == cdf_.end()) --it;
        return atoms_.points[static_cast<std::size_t>(it - cdf_.begin())];
    }

private:
    GaussianLaw gaussian_;
    AtomicLaw atoms_;
    std::vector<double> cdf_;
};

/// Dense order-k tensor over R^d (row-major multi-index, first index most significant).
class DenseTensor {
public:
    DenseTensor(int d, int k) : d_(d), k_(k), data_(static_cast<std::size_t>(ipow(d, k)), 0.0) {}

    [[nodiscard]] int dim() const noexcept { return d_; }
    [[nodiscard]] int order() const noexcept { return k_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    /// Occurrence counts of each axis in flat index i.
    [[nodiscard]] std::array<int, kMaxTensorDim> counts(std::size_t i) const noexcept {
        std::array<int, kMaxTensorDim> c{};
        for (int a = 0; a < k_; ++a) {
            ++c[i % static_cast<std::size_t>(d_)];
            i /= static_cast<std::size_t>(d_);
        }
        return c;
    }

    [[nodiscard]] double squared_norm() const noexcept {
        double acc = 0.0;
        for (double x : data_) acc += x * x;
        return acc;
    }

    static long ipow(int b, int e) {
        long r = 1;
        for (int i = 0; i < e; ++i) r *= b;
        return r;
    }

private:
    int d_, k_;
    std::vector<double> data_;
};

inline double inner(const DenseTensor& a, const DenseTensor& b) {
    if (a.dim() != b.dim() || a.order() != b.order()) throw InvalidParameter("tensor shape mismatch");
    NeumaierSum acc;
    for (std::size_t i = 0; i < a.size(); ++i) acc.add(a[i] * b[i]);
    return acc.value();
}

namespace detail {
inline void check_tensor_size(int d, int k) {
    if (d < 1 || k < 0) throw InvalidParameter("tensor shape must be positive");
    if (d > kMaxTensorDim || k > kMaxTensorDegree) throw UnsupportedSize("dense tensors limited to d <= 4, k <= 6");
}
inline double factorial(int n) {
    double f = 1.0;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}
/// Normalization sqrt(prod alpha_j!) / sqrt(k!) linking a tensor entry to its multivariate Hermite product.
inline double entry_scale(const std::array<int, kMaxTensorDim>& c, int k) {
    double num = 1.0;
    for (int v : c) num *= factorial(v);
    return std::sqrt(num / factorial(k));
}
}  // namespace detail

/// v^{(x) k}.
inline DenseTensor tensor_power(const Eigen::VectorXd& v, int k) {
    const int d = static_cast<int>(v.size());
    detail::check_tensor_size(d, k);
    DenseTensor t(d, k);
    for (std::size_t i = 0; i < t.size(); ++i) {
        double prod = 1.0;
        std::size_t r = i;
        for (int a = 0; a < k; ++a) {
            prod *= v(static_cast<Eigen::Index>(r % static_cast<std::size_t>(d)));
            r /= static_cast<std::size_t>(d);
        }
        t[i] = prod;
    }
    return t;
}

/// Hermite tensor H_k(x), normalized so that <v^{(x)k}, H_k(x)> = h_k(v^T x) for unit v.
inline DenseTensor hermite_tensor(int k, const Eigen::VectorXd& x) {
    const int d = static_cast<int>(x.size());
    detail::check_tensor_size(d, k);
    std::vector<std::array<double, kMaxTensorDegree + 1>> h(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) hermite_values(kMaxTensorDegree, x(j), h[static_cast<std::size_t>(j)].data());
    DenseTensor t(d, k);
    for (std::size_t i = 0; i < t.size(); ++i) {
        const auto c = t.counts(i);
        double prod = 1.0;
        for (int j = 0; j < d; ++j) prod *= h[static_cast<std::size_t>(j)][static_cast<std::size_t>(c[static_cast<std::size_t>(j)])];
        t[i] = detail::entry_scale(c, k) * prod;
    }
    return t;
}

/// Axis node count for tensor-product quadrature in dimension d (200 on the
/// low-dimensional axes, reduced so the grid stays near 10^6 points).
inline int tensor_quadrature_nodes(int d) {
    switch (d) {
        case 1:
        case 2: return kQuadratureNodes;
        case 3: return 100;
        default: return 36;
    }
}

/// T_k = E_{N(0, I_d)}[g(x) H_k(x)] for k = 0..ell by tensor-product Gauss-Hermite quadrature.
template <class G>
std::vector<DenseTensor> gaussian_hermite_tensors(const G& g, int d, int ell) {
    detail::check_tensor_size(d, ell);
    const auto& rule = gauss_hermite(tensor_quadrature_nodes(d));
    const std::size_t n_axis = rule.nodes.size();
    std::vector<std::vector<double>> h_axis(n_axis, std::vector<double>(static_cast<std::size_t>(ell) + 1));
    for (std::size_t i = 0; i < n_axis; ++i) hermite_values(ell, rule.nodes[i], h_axis[i].data());

    // Accumulate c_alpha = E[g prod_j h_{alpha_j}(x_j)] over multi-indices |alpha| <= ell.
    const std::size_t base = static_cast<std::size_t>(ell) + 1;
    const std::size_t n_alpha = static_cast<std::size_t>(DenseTensor::ipow(static_cast<int>(base), d));
    std::vector<std::array<int, kMaxTensorDim>> alphas;
    std::vector<std::size_t> alpha_key;
    for (std::size_t key = 0; key < n_alpha; ++key) {
        std::array<int, kMaxTensorDim> a{};
        std::size_t r = key;
        int total = 0;
        for (int j = 0; j < d; ++j) {
            a[static_cast<std::size_t>(j)] = static_cast<int>(r % base);
            total += a[static_cast<std::size_t>(j)];
            r /= base;
        }
        if (total <= ell) {
            alphas.push_back(a);
            alpha_key.push_back(key);
        }
    }
    std::vector<NeumaierSum> coef(alphas.size());
    std::vector<std::size_t> idx(static_cast<std::size_t>(d), 0);
    Eigen::VectorXd x(d);
    const std::size_t n_total = static_cast<std::size_t>(DenseTensor::ipow(static_cast<int>(n_axis), d));
    for (std::size_t flat = 0; flat < n_total; ++flat) {
        std::size_t r = flat;
        double w = 1.0;
        for (int j = 0; j < d; ++j) {
            idx[static_cast<std::size_t>(j)] = r % n_axis;
            r /= n_axis;
            x(j) = rule.nodes[idx[static_cast<std::size_t>(j)]];
            w *= rule.weights[idx[static_cast<std::size_t>(j)]];
        }
        if (w < 1e-300) continue;
        const double gw = w * g(x);
        if (gw == 0.0) continue;
        for (std::size_t a = 0; a < alphas.size(); ++a) {
            double prod = gw;
            for (int j = 0; j < d; ++j) prod *= h_axis[idx[static_cast<std::size_t>(j)]][static_cast<std::size_t>(alphas[a][static_cast<std::size_t>(j)])];
            coef[a].add(prod);
        }
    }
    std::map<std::size_t, double> by_key;
    for (std::size_t a = 0; a < alphas.size(); ++a) by_key[alpha_key[a]] = coef[a].value();

    std::vector<DenseTensor> tensors;
    for (int k = 0; k <= ell; ++k) {
        DenseTensor t(d, k);
        for (std::size_t i = 0; i < t.size(); ++i) {
            const auto c = t.counts(i);
            std::size_t key = 0, mul = 1;
            for (int j = 0; j < d; ++j) {
                key += static_cast<std::size_t>(c[static_cast<std::size_t>(j)]) * mul;
                mul *= base;
            }
            t[i] = detail::entry_scale(c, k) * by_key.at(key);
        }
        tensors.push_back(std::move(t));
    }
    return tensors;
}

/// Low-degree part g^{<=ell}(x) = sum_k <T_k, H_k(x)>, evaluated through the
/// equivalent multi-index form sum_alpha c_alpha prod_j h_{alpha_j}(x_j).
class LowDegreeExpansion {
public:
    explicit LowDegreeExpansion(const std::vector<DenseTensor>& tensors) {
        if (tensors.empty()) throw InvalidParameter("expansion needs at least T_0");
        d_ = tensors.front().dim();
        ell_ = static_cast<int>(tensors.size()) - 1;
        for (const auto& t : tensors) {
            for (std::size_t i = 0; i < t.size(); ++i) {
                // Keep one canonical (nondecreasing) flat index per multi-index.
                std::size_t r = i;
                int prev = -1;
                bool canonical = true;
                std::vector<int> digits;
                for (int a = 0; a < t.order(); ++a) {
                    digits.push_back(static_cast<int>(r % static_cast<std::size_t>(d_)));
                    r /= static_cast<std::size_t>(d_);
                }
                for (int dg : digits) {
                    if (dg < prev) canonical = false;
                    prev = dg;
                }
                if (!canonical) continue;
                const auto c = t.counts(i);
                terms_.push_back({c, t[i] / detail::entry_scale(c, t.order())});
            }
        }
    }

    [[nodiscard]] double operator()(const Eigen::VectorXd& x) const {
        std::array<std::array<double, kMaxTensorDegree + 1>, kMaxTensorDim> h{};
        for (int j = 0; j < d_; ++j) hermite_values(ell_, x(j), h[static_cast<std::size_t>(j)].data());
        double acc = 0.0;
        for (const auto& term : terms_) {
            double prod = term.coef;
            for (int j = 0; j < d_; ++j) prod *= h[static_cast<std::size_t>(j)][static_cast<std::size_t>(term.alpha[static_cast<std::size_t>(j)])];
            acc += prod;
        }
        return acc;
    }

private:
    struct Term {
        std::array<int, kMaxTensorDim> alpha;
        double coef;
    };
    int d_ = 0;
    int ell_ = 0;
    std::vector<Term> terms_;
};

inline double parseval_sum(const std::vector<DenseTensor>& tensors) {
    double acc = 0.0;
    for (const auto& t : tensors) acc += t.squared_norm();
    return acc;
}

struct FourierCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    double lhs_se = 0.0;
};

/// lhs = E_{x ~ P_v^{law}}[g^{<=ell}(x)] by Monte Carlo; rhs = sum_k A_k <v^{(x)k}, T_k>.
template <class G>
FourierCheck fourier_decomposition_check(const G& g, const UnivariateLaw& law, const Eigen::VectorXd& v, int ell, int d,
                                         Rng& rng, long long n = 1'000'000) {
    detail::check_tensor_size(d, ell);
    if (v.size() != d) throw InvalidParameter("direction has wrong dimension");
    if (std::abs(v.norm() - 1.0) > 1e-12) throw InvalidParameter("direction must be a unit vector");
    const auto tensors = gaussian_hermite_tensors(g, d, ell);
    const auto coeffs = hermite_coefficients(law, ell);

    FourierCheck out;
    NeumaierSum rhs;
    for (int k = 0; k <= ell; ++k) rhs.add(coeffs.coeffs[static_cast<std::size_t>(k)] * inner(tensor_power(v, k), tensors[static_cast<std::size_t>(k)]));
    out.rhs = rhs.value();

    const LowDegreeExpansion low(tensors);
    const LawSampler draw(law);
    RunningStats stats;
    Eigen::VectorXd z(d), x(d);
    for (long long i = 0; i < n; ++i) {
        fill_standard_normal(rng, z.data(), static_cast<std::size_t>(d));
        const double w = draw(rng);
        x = z - v.dot(z) * v + w * v;
        stats.add(low(x));
    }
    out.lhs = stats.mean();
    out.lhs_se = stats.se();
    return out;
}

}  // namespace sqreg
