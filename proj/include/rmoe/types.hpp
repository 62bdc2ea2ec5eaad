#ifndef RMOE_TYPES_HPP
#define RMOE_TYPES_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

namespace rmoe {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Index = Eigen::Index;

/// Floor on Gaussian expert standard deviations.
inline constexpr double kSigmaFloor = 1e-6;
/// Gaussian experts whose sigma falls below this fraction of the widest one
/// are treated as spurious (degenerate) fits.
inline constexpr double kSpuriousSigmaRatio = 0.1;

/// Probability clamp used whenever a logistic curvature pi*(1-pi) is divided by.
inline constexpr double kProbClamp = 1e-5;

/// Thrown when shapes of inputs disagree.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown on invalid data values (negative counts, out-of-range labels, NaN).
class DataError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when an algorithm hits a non-finite value it cannot recover from.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Family { gaussian, poisson, multinomial };

inline std::string to_string(Family f) {
    switch (f) {
    case Family::gaussian: return "gaussian";
    case Family::poisson: return "poisson";
    case Family::multinomial: return "multinomial";
    }
    return "unknown";
}

inline Family family_from_string(const std::string& s) {
    if (s == "gaussian" || s == "normal") return Family::gaussian;
    if (s == "poisson") return Family::poisson;
    if (s == "multinomial" || s == "logistic") return Family::multinomial;
    throw std::invalid_argument("unknown family '" + s + "'");
}

/// Covariates plus a response of one family.
///
/// Responses are stored as doubles. Counts are non-negative integers and
/// categorical labels are 1..levels; use make_dataset() to get the checks.
struct Dataset {
    MatrixXd x;
    VectorXd y;
    Family family = Family::gaussian;
    int levels = 0; // R for multinomial, 0 otherwise
    std::vector<std::string> feature_names;

    Index n() const { return x.rows(); }
    Index p() const { return x.cols(); }

    /// 0-based class of observation i (multinomial only).
    int label(Index i) const { return static_cast<int>(y(i)) - 1; }
};

inline void validate(const Dataset& d) {
    if (d.x.rows() < 1 || d.x.cols() < 1) throw DimensionError("dataset needs n >= 1 and p >= 1");
    if (d.y.size() != d.x.rows()) throw DimensionError("response length does not match number of rows");
    if (!d.x.allFinite()) throw DataError("covariates contain non-finite values");
    if (!d.y.allFinite()) throw DataError("response contains non-finite values");
    if (!d.feature_names.empty() && static_cast<Index>(d.feature_names.size()) != d.x.cols())
        throw DimensionError("feature_names length does not match number of columns");
    switch (d.family) {
    case Family::gaussian: break;
    case Family::poisson:
        for (Index i = 0; i < d.y.size(); ++i) {
            if (d.y(i) < 0.0 || d.y(i) != std::floor(d.y(i)))
                throw DataError("poisson response at row " + std::to_string(i + 1) +
                                " is not a non-negative integer");
        }
        break;
    case Family::multinomial: {
        if (d.levels < 2) throw DataError("categorical response needs at least 2 levels");
        std::vector<bool> seen(static_cast<std::size_t>(d.levels), false);
        for (Index i = 0; i < d.y.size(); ++i) {
            const double v = d.y(i);
            if (v != std::floor(v) || v < 1.0 || v > d.levels)
                throw DataError("categorical label at row " + std::to_string(i + 1) + " outside 1.." +
                                std::to_string(d.levels));
            seen[static_cast<std::size_t>(v) - 1] = true;
        }
        for (bool s : seen)
            if (!s) throw DataError("categorical labels do not span 1..R contiguously");
        break;
    }
    }
}

/// Builds and validates a dataset. For multinomial, levels = max label.
inline Dataset make_dataset(MatrixXd x, VectorXd y, Family family, std::vector<std::string> names = {}) {
    Dataset d;
    d.x = std::move(x);
    d.y = std::move(y);
    d.family = family;
    d.feature_names = std::move(names);
    if (family == Family::multinomial && d.y.size() > 0) d.levels = static_cast<int>(d.y.maxCoeff());
    validate(d);
    return d;
}

/// Gating network: row k is (w_k0, w_k) for k = 1..K-1. Component K is the
/// implicit zero row and is never stored.
struct GatingParams {
    MatrixXd w;

    Index k() const { return w.rows() + 1; }
};

struct GaussianExperts {
    MatrixXd beta;  // K x (p+1), column 0 is the intercept
    VectorXd sigma; // K
};

struct PoissonExperts {
    MatrixXd beta; // K x (p+1)
};

/// levels[k] is (R-1) x (p+1); level R is pinned to zero.
struct MultinomialExperts {
    std::vector<MatrixXd> beta;
};

using ExpertParams = std::variant<GaussianExperts, PoissonExperts, MultinomialExperts>;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

inline Family family_of(const ExpertParams& e) {
    return std::visit(overloaded{[](const GaussianExperts&) { return Family::gaussian; },
                                 [](const PoissonExperts&) { return Family::poisson; },
                                 [](const MultinomialExperts&) { return Family::multinomial; }},
                      e);
}

struct MoEParameters {
    GatingParams gating;
    ExpertParams experts;
    int k = 1;

    Family family() const { return family_of(experts); }

    Index p() const {
        return std::visit(overloaded{[](const GaussianExperts& g) { return g.beta.cols() - 1; },
                                     [](const PoissonExperts& g) { return g.beta.cols() - 1; },
                                     [](const MultinomialExperts& g) {
                                         return g.beta.empty() ? Index{0} : g.beta.front().cols() - 1;
                                     }},
                          experts);
    }

    /// R for multinomial experts, 0 otherwise.
    int levels() const {
        if (const auto* m = std::get_if<MultinomialExperts>(&experts))
            return m->beta.empty() ? 0 : static_cast<int>(m->beta.front().rows()) + 1;
        return 0;
    }

    bool all_finite() const {
        if (!gating.w.allFinite()) return false;
        return std::visit(overloaded{[](const GaussianExperts& g) { return g.beta.allFinite() && g.sigma.allFinite(); },
                                     [](const PoissonExperts& g) { return g.beta.allFinite(); },
                                     [](const MultinomialExperts& g) {
                                         for (const auto& b : g.beta)
                                             if (!b.allFinite()) return false;
                                         return true;
                                     }},
                          experts);
    }
};

inline void validate(const MoEParameters& params) {
    if (params.k < 1) throw DimensionError("K must be >= 1");
    const Index p = params.p();
    if (params.gating.w.rows() != params.k - 1)
        throw DimensionError("gating must have K-1 rows");
    if (params.k > 1 && params.gating.w.cols() != p + 1)
        throw DimensionError("gating rows must have p+1 entries");
    std::visit(overloaded{[&](const GaussianExperts& g) {
                              if (g.beta.rows() != params.k || g.sigma.size() != params.k)
                                  throw DimensionError("gaussian experts must have K blocks");
                              for (Index k = 0; k < g.sigma.size(); ++k)
                                  if (!(g.sigma(k) > 0.0)) throw DataError("sigma must be positive");
                          },
                          [&](const PoissonExperts& g) {
                              if (g.beta.rows() != params.k) throw DimensionError("poisson experts must have K blocks");
                          },
                          [&](const MultinomialExperts& g) {
                              if (static_cast<int>(g.beta.size()) != params.k)
                                  throw DimensionError("multinomial experts must have K blocks");
                              for (const auto& b : g.beta)
                                  if (b.rows() != g.beta.front().rows() || b.cols() != p + 1 || b.rows() < 1)
                                      throw DimensionError("multinomial expert blocks must be (R-1) x (p+1)");
                          }},
               params.experts);
}

/// Zero-initialized parameters of the given shape; sigma starts at 1.
inline MoEParameters zero_params(Family family, int k, Index p, int levels = 0) {
    MoEParameters out;
    out.k = k;
    out.gating.w = MatrixXd::Zero(k - 1, p + 1);
    switch (family) {
    case Family::gaussian: out.experts = GaussianExperts{MatrixXd::Zero(k, p + 1), VectorXd::Ones(k)}; break;
    case Family::poisson: out.experts = PoissonExperts{MatrixXd::Zero(k, p + 1)}; break;
    case Family::multinomial: {
        if (levels < 2) throw DimensionError("multinomial experts need R >= 2");
        MultinomialExperts m;
        m.beta.assign(static_cast<std::size_t>(k), MatrixXd::Zero(levels - 1, p + 1));
        out.experts = std::move(m);
        break;
    }
    }
    return out;
}

/// Penalty weights: lambda per expert (K), gamma per gating row (K-1).
/// lambda_levels optionally overrides lambda per (expert, level) for multinomial experts.
struct PenaltyConfig {
    VectorXd lambda;
    VectorXd gamma;
    std::vector<VectorXd> lambda_levels;

    static PenaltyConfig uniform(int k, double lambda, double gamma) {
        PenaltyConfig c;
        c.lambda = VectorXd::Constant(k, lambda);
        c.gamma = VectorXd::Constant(std::max(k - 1, 0), gamma);
        return c;
    }

    double expert_level_lambda(int k, int r) const {
        if (static_cast<std::size_t>(k) < lambda_levels.size() && r < lambda_levels[static_cast<std::size_t>(k)].size())
            return lambda_levels[static_cast<std::size_t>(k)](r);
        return lambda(k);
    }
};

inline void validate(const PenaltyConfig& pen, int k) {
    if (pen.lambda.size() != k) throw DimensionError("lambda must have K entries");
    if (pen.gamma.size() != k - 1) throw DimensionError("gamma must have K-1 entries");
    if ((pen.lambda.array() < 0.0).any() || (pen.gamma.array() < 0.0).any() || !pen.lambda.allFinite() ||
        !pen.gamma.allFinite())
        throw std::invalid_argument("penalties must be finite and non-negative");
    for (const auto& l : pen.lambda_levels)
        if ((l.array() < 0.0).any()) throw std::invalid_argument("penalties must be non-negative");
}

/// n x K matrix of posterior component probabilities.
using Responsibilities = MatrixXd;

/// Row i of x with a leading 1.
inline double linear_predictor(const Eigen::Ref<const VectorXd>& coef, const Eigen::Ref<const MatrixXd>& x, Index i) {
    return coef(0) + x.row(i).dot(coef.tail(coef.size() - 1));
}

/// x * slopes + intercept for every row.
inline VectorXd linear_predictors(const Eigen::Ref<const VectorXd>& coef, const Eigen::Ref<const MatrixXd>& x) {
    VectorXd eta = x * coef.tail(coef.size() - 1);
    eta.array() += coef(0);
    return eta;
}

inline double log_sum_exp(const Eigen::Ref<const VectorXd>& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
}

} // namespace rmoe

#endif
