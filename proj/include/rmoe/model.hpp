#ifndef RMOE_MODEL_HPP
#define RMOE_MODEL_HPP

#include "rmoe/types.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace rmoe {

/// Gating logits (w_k0 + x'w_k for k < K, 0 for component K) at one input.
inline VectorXd gating_logits(const Eigen::Ref<const VectorXd>& x, const GatingParams& gating) {
    const Index k_minus_1 = gating.w.rows();
    VectorXd logits = VectorXd::Zero(k_minus_1 + 1);
    if (k_minus_1 == 0) return logits;
    if (gating.w.cols() != x.size() + 1) throw DimensionError("gating width does not match covariate length");
    logits.head(k_minus_1) = gating.w.col(0) + gating.w.rightCols(x.size()) * x;
    return logits;
}

/// n x K gating logits for every row of x.
inline MatrixXd gating_logits(const Eigen::Ref<const MatrixXd>& x, const GatingParams& gating) {
    const Index k_minus_1 = gating.w.rows();
    MatrixXd logits = MatrixXd::Zero(x.rows(), k_minus_1 + 1);
    if (k_minus_1 == 0) return logits;
    if (gating.w.cols() != x.cols() + 1) throw DimensionError("gating width does not match covariate count");
    logits.leftCols(k_minus_1) = x * gating.w.rightCols(x.cols()).transpose();
    logits.leftCols(k_minus_1).rowwise() += gating.w.col(0).transpose();
    return logits;
}

/// Row-wise log softmax of a logit matrix.
inline MatrixXd log_softmax_rows(const MatrixXd& logits) {
    MatrixXd out(logits.rows(), logits.cols());
    for (Index i = 0; i < logits.rows(); ++i) {
        const double lse = log_sum_exp(logits.row(i).transpose());
        out.row(i) = logits.row(i).array() - lse;
    }
    return out;
}

/// Softmax gating probabilities pi_k(x; w), k = 1..K.
inline VectorXd softmax_gating(const Eigen::Ref<const VectorXd>& x, const GatingParams& gating) {
    const VectorXd logits = gating_logits(x, gating);
    const double m = logits.maxCoeff();
    VectorXd e = (logits.array() - m).exp();
    return e / e.sum();
}

/// n x K matrix of log pi_k(x_i; w).
inline MatrixXd log_gating(const Eigen::Ref<const MatrixXd>& x, const GatingParams& gating) {
    return log_softmax_rows(gating_logits(x, gating));
}

namespace detail {

inline double gaussian_log_pdf(double y, double mean, double sigma) {
    const double z = (y - mean) / sigma;
    return -0.5 * std::log(2.0 * std::numbers::pi) - std::log(sigma) - 0.5 * z * z;
}

inline double poisson_log_pmf(double y, double eta) {
    return y * eta - std::exp(eta) - std::lgamma(y + 1.0);
}

/// log alpha_r for r = 0..R-1 given the (R-1) x (p+1) block; level R has logit 0.
inline VectorXd multinomial_log_probs(const MatrixXd& block, const Eigen::Ref<const MatrixXd>& x, Index i) {
    const Index rm1 = block.rows();
    VectorXd logits = VectorXd::Zero(rm1 + 1);
    for (Index r = 0; r < rm1; ++r) logits(r) = block(r, 0) + x.row(i).dot(block.row(r).tail(x.cols()));
    return logits.array() - log_sum_exp(logits);
}

} // namespace detail

/// log p_k(y_i | x_i; theta_k) for one observation and 0-based component k.
inline double expert_log_density(double y, const Eigen::Ref<const VectorXd>& x, const ExpertParams& experts, int k) {
    return std::visit(
        overloaded{[&](const GaussianExperts& g) {
                       if (k < 0 || k >= g.beta.rows()) throw std::out_of_range("component index out of range");
                       if (g.beta.cols() != x.size() + 1) throw DimensionError("expert width mismatch");
                       const double mean = g.beta(k, 0) + x.dot(g.beta.row(k).tail(x.size()));
                       return detail::gaussian_log_pdf(y, mean, g.sigma(k));
                   },
                   [&](const PoissonExperts& g) {
                       if (k < 0 || k >= g.beta.rows()) throw std::out_of_range("component index out of range");
                       if (g.beta.cols() != x.size() + 1) throw DimensionError("expert width mismatch");
                       if (y < 0.0 || y != std::floor(y)) throw DataError("poisson response must be a non-negative integer");
                       const double eta = g.beta(k, 0) + x.dot(g.beta.row(k).tail(x.size()));
                       return detail::poisson_log_pmf(y, eta);
                   },
                   [&](const MultinomialExperts& g) {
                       if (k < 0 || k >= static_cast<int>(g.beta.size()))
                           throw std::out_of_range("component index out of range");
                       const MatrixXd& block = g.beta[static_cast<std::size_t>(k)];
                       if (block.cols() != x.size() + 1) throw DimensionError("expert width mismatch");
                       const Index levels = block.rows() + 1;
                       if (y != std::floor(y) || y < 1.0 || y > static_cast<double>(levels))
                           throw DataError("categorical label out of range");
                       const MatrixXd xrow = x.transpose();
                       return detail::multinomial_log_probs(block, xrow, 0)(static_cast<Index>(y) - 1);
                   }},
        experts);
}

/// n x K matrix of log p_k(y_i | x_i) for every observation and component.
inline MatrixXd expert_log_densities(const Dataset& data, const ExpertParams& experts) {
    const Index n = data.n();
    const Index p = data.p();
    return std::visit(
        overloaded{[&](const GaussianExperts& g) {
                       if (g.beta.cols() != p + 1) throw DimensionError("expert width mismatch");
                       const Index k = g.beta.rows();
                       MatrixXd out(n, k);
                       for (Index c = 0; c < k; ++c) {
                           const VectorXd mean = linear_predictors(g.beta.row(c).transpose(), data.x);
                           for (Index i = 0; i < n; ++i) out(i, c) = detail::gaussian_log_pdf(data.y(i), mean(i), g.sigma(c));
                       }
                       return out;
                   },
                   [&](const PoissonExperts& g) {
                       if (g.beta.cols() != p + 1) throw DimensionError("expert width mismatch");
                       const Index k = g.beta.rows();
                       MatrixXd out(n, k);
                       for (Index c = 0; c < k; ++c) {
                           const VectorXd eta = linear_predictors(g.beta.row(c).transpose(), data.x);
                           for (Index i = 0; i < n; ++i) out(i, c) = detail::poisson_log_pmf(data.y(i), eta(i));
                       }
                       return out;
                   },
                   [&](const MultinomialExperts& g) {
                       const Index k = static_cast<Index>(g.beta.size());
                       MatrixXd out(n, k);
                       for (Index c = 0; c < k; ++c) {
                           const MatrixXd& block = g.beta[static_cast<std::size_t>(c)];
                           if (block.cols() != p + 1) throw DimensionError("expert width mismatch");
                           for (Index i = 0; i < n; ++i)
                               out(i, c) = detail::multinomial_log_probs(block, data.x, i)(data.label(i));
                       }
                       return out;
                   }},
        experts);
}

/// log pi_k(x_i) + log p_k(y_i|x_i), n x K.
inline MatrixXd joint_log_densities(const Dataset& data, const MoEParameters& params) {
    if (params.p() != data.p()) throw DimensionError("parameter width does not match dataset");
    if (params.family() != data.family) throw DataError("expert family does not match response kind");
    return log_gating(data.x, params.gating) + expert_log_densities(data, params.experts);
}

/// Per-observation mixture log-likelihood log sum_k pi_k p_k.
inline VectorXd pointwise_log_likelihood(const Dataset& data, const MoEParameters& params) {
    const MatrixXd joint = joint_log_densities(data, params);
    VectorXd out(joint.rows());
    for (Index i = 0; i < joint.rows(); ++i) out(i) = log_sum_exp(joint.row(i).transpose());
    return out;
}

/// Observed-data log-likelihood L(theta).
inline double log_likelihood(const Dataset& data, const MoEParameters& params) {
    return pointwise_log_likelihood(data, params).sum();
}

/// Sum of penalty terms on slopes only: sum_k lambda_k |beta_k|_1 + sum_k gamma_k |w_k|_1.
inline double penalty_value(const MoEParameters& params, const PenaltyConfig& penalty) {
    validate(penalty, params.k);
    double total = 0.0;
    for (Index k = 0; k < params.gating.w.rows(); ++k)
        total += penalty.gamma(k) * params.gating.w.row(k).tail(params.gating.w.cols() - 1).cwiseAbs().sum();
    std::visit(overloaded{[&](const GaussianExperts& g) {
                              for (Index k = 0; k < g.beta.rows(); ++k)
                                  total += penalty.lambda(k) * g.beta.row(k).tail(g.beta.cols() - 1).cwiseAbs().sum();
                          },
                          [&](const PoissonExperts& g) {
                              for (Index k = 0; k < g.beta.rows(); ++k)
                                  total += penalty.lambda(k) * g.beta.row(k).tail(g.beta.cols() - 1).cwiseAbs().sum();
                          },
                          [&](const MultinomialExperts& g) {
                              for (std::size_t k = 0; k < g.beta.size(); ++k) {
                                  const MatrixXd& b = g.beta[k];
                                  for (Index r = 0; r < b.rows(); ++r)
                                      total += penalty.expert_level_lambda(static_cast<int>(k), static_cast<int>(r)) *
                                               b.row(r).tail(b.cols() - 1).cwiseAbs().sum();
                              }
                          }},
               params.experts);
    return total;
}

/// PL(theta) = L(theta) minus the l1 penalties. Intercepts and sigma are not penalized.
inline double penalized_log_likelihood(const Dataset& data, const MoEParameters& params, const PenaltyConfig& penalty) {
    return log_likelihood(data, params) - penalty_value(params, penalty);
}

/// Component with the largest gating prior at x; ties go to the lowest index.
inline int gating_argmax(const Eigen::Ref<const VectorXd>& x, const GatingParams& gating) {
    const VectorXd logits = gating_logits(x, gating);
    Index best = 0;
    for (Index k = 1; k < logits.size(); ++k)
        if (logits(k) > logits(best)) best = k;
    return static_cast<int>(best);
}

struct Prediction {
    double value = 0.0;
    int component = 0; // 0-based
};

/// Predicted response: the mode of the expert selected by the largest gating
/// prior. Gaussian returns the mean, Poisson floor(exp(eta)), multinomial
/// the 1-based most probable class.
inline Prediction predict_response(const Eigen::Ref<const VectorXd>& x, const MoEParameters& params) {
    if (!params.all_finite()) throw NumericalError("cannot predict with non-finite parameters");
    if (x.size() != params.p()) throw DimensionError("covariate length does not match parameters");
    const int k = gating_argmax(x, params.gating);
    Prediction out;
    out.component = k;
    out.value = std::visit(overloaded{[&](const GaussianExperts& g) {
                                          return g.beta(k, 0) + x.dot(g.beta.row(k).tail(x.size()));
                                      },
                                      [&](const PoissonExperts& g) {
                                          const double eta = g.beta(k, 0) + x.dot(g.beta.row(k).tail(x.size()));
                                          return std::floor(std::exp(eta));
                                      },
                                      [&](const MultinomialExperts& g) {
                                          const MatrixXd xrow = x.transpose();
                                          const VectorXd lp =
                                              detail::multinomial_log_probs(g.beta[static_cast<std::size_t>(k)], xrow, 0);
                                          Index best = 0;
                                          for (Index r = 1; r < lp.size(); ++r)
                                              if (lp(r) > lp(best)) best = r;
                                          return static_cast<double>(best + 1);
                                      }},
                           params.experts);
    return out;
}

} // namespace rmoe

#endif
