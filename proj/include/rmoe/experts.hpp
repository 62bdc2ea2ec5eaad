#ifndef RMOE_EXPERTS_HPP
#define RMOE_EXPERTS_HPP

#include "rmoe/model.hpp"
#include "rmoe/multilogit.hpp"
#include "rmoe/prox.hpp"
#include "rmoe/types.hpp"

#include <cmath>

namespace rmoe {

/// Components whose total responsibility falls below this are left untouched and flagged stale.
inline constexpr double kEmptyComponentMass = 1e-8;

/// Linear predictors are clamped to +-kEtaClamp before exponentiation in the Poisson surrogate.
inline constexpr double kEtaClamp = 30.0;

struct ExpertUpdateOptions {
    double tol = 1e-6;       ///< relative change of Q_k (prox Newton loops)
    int max_outer = 100;
    LassoOptions lasso{};
    LineSearchConfig line_search{};
    CurvatureVariant variant = CurvatureVariant::bounded; ///< multinomial only
};

struct CoefUpdate {
    VectorXd coef;      ///< (beta_k0, beta_k)
    bool stale = false; ///< component had no mass; coef is the input unchanged
    bool clamped = false;
    int iterations = 0;
};

inline bool is_empty_component(const Eigen::Ref<const VectorXd>& tau_col) { return tau_col.sum() < kEmptyComponentMass; }

// ---------------------------------------------------------------- Gaussian

/// Q_k for a Gaussian expert: sum_i tau_ik log N(y_i; beta_k0 + x_i'beta_k, sigma^2) - lambda |beta_k|_1.
inline double gaussian_expert_q(const Eigen::Ref<const VectorXd>& tau_col, const Dataset& data,
                                const Eigen::Ref<const VectorXd>& coef, double sigma, double lambda) {
    const VectorXd mean = linear_predictors(coef, data.x);
    double total = 0.0;
    for (Index i = 0; i < data.n(); ++i) {
        if (tau_col(i) == 0.0) continue;
        total += tau_col(i) * detail::gaussian_log_pdf(data.y(i), mean(i), sigma);
    }
    return total - lambda * coef.tail(coef.size() - 1).cwiseAbs().sum();
}

/// Coordinate ascent on (beta_k0, beta_k) with sigma fixed; slopes are
/// soft-thresholded at lambda * sigma^2.
inline CoefUpdate update_gaussian_expert(const Eigen::Ref<const VectorXd>& tau_col, const Dataset& data, double lambda,
                                         const Eigen::Ref<const VectorXd>& beta_init, double sigma,
                                         const LassoOptions& opts = {}) {
    if (tau_col.size() != data.n()) throw DimensionError("responsibility column length mismatch");
    if (beta_init.size() != data.p() + 1) throw DimensionError("expert coefficients must have p+1 entries");
    CoefUpdate out;
    out.coef = beta_init;
    if (is_empty_component(tau_col)) {
        out.stale = true;
        return out;
    }
    const WeightedLassoProblem prob{data.x, tau_col, data.y, lambda * sigma * sigma, true};
    const LassoResult res = solve_weighted_lasso(prob, beta_init, opts);
    out.coef = res.coef;
    out.iterations = res.sweeps;
    return out;
}

/// sigma_k^2 = sum_i tau_ik r_ik^2 / sum_i tau_ik, floored at kSigmaFloor^2.
inline double update_gaussian_sigma(const Eigen::Ref<const VectorXd>& tau_col, const Dataset& data,
                                    const Eigen::Ref<const VectorXd>& coef) {
    const double mass = tau_col.sum();
    if (mass < kEmptyComponentMass) throw NumericalError("empty component: cannot update sigma");
    const VectorXd resid = data.y - linear_predictors(coef, data.x);
    const double var = tau_col.dot(resid.cwiseAbs2()) / mass;
    return std::max(var, kSigmaFloor * kSigmaFloor);
}

/// Pooled variance for a tied sigma across components.
inline double update_tied_sigma(const Responsibilities& tau, const Dataset& data, const MatrixXd& beta) {
    double total = 0.0;
    for (Index k = 0; k < beta.rows(); ++k) {
        const VectorXd resid = data.y - linear_predictors(beta.row(k).transpose(), data.x);
        total += tau.col(k).dot(resid.cwiseAbs2());
    }
    return std::max(total / tau.sum(), kSigmaFloor * kSigmaFloor);
}

// ---------------------------------------------------------------- Poisson

/// Smooth part P_k = sum_i tau_ik (y_i eta_i - exp(eta_i) - log y_i!).
inline double poisson_smooth_objective(const Eigen::Ref<const VectorXd>& tau_col, const Dataset& data,
                                       const Eigen::Ref<const VectorXd>& coef) {
    const VectorXd eta = linear_predictors(coef, data.x);
    double total = 0.0;
    for (Index i = 0; i < data.n(); ++i) {
        if (tau_col(i) == 0.0) continue;
        total += tau_col(i) * detail::poisson_log_pmf(data.y(i), eta(i));
    }
    return total;
}

/// dP_k/dbeta_kj = sum_i tau_ik (y_i - exp(eta_i)) x_ij with x_i0 = 1.
inline VectorXd poisson_gradient(const Eigen::Ref<const VectorXd>& tau_col, const Dataset& data,
                                 const Eigen::Ref<const VectorXd>& coef) {
    const VectorXd eta = linear_predictors(coef, data.x);
    const VectorXd w = tau_col.array() * (data.y.array() - eta.array().exp());
    VectorXd g(coef.size());
    g(0) = w.sum();
    g.tail(data.p()) = data.x.transpose() * w;
    return g;
}

inline double poisson_expert_q(const Eigen::Ref<const VectorXd>& tau_col, const Dataset& data,
                               const Eigen::Ref<const VectorXd>& coef, double lambda) {
    return poisson_smooth_objective(tau_col, data, coef) - lambda * coef.tail(coef.size() - 1).cwiseAbs().sum();
}

/// Weights a_ik = tau_ik exp(eta) and working responses b_ik = y/exp(eta) - 1 + eta of the
/// quadratic model of P_k at coef; eta clamped to +-kEtaClamp.
struct PoissonSurrogate {
    VectorXd a;
    VectorXd b;
    bool clamped = false;
};

inline PoissonSurrogate build_poisson_surrogate(const Eigen::Ref<const VectorXd>& tau_col, const Dataset& data,
                                                const Eigen::Ref<const VectorXd>& coef) {
    const VectorXd eta = linear_predictors(coef, data.x);
    PoissonSurrogate s;
    s.a.resize(data.n());
    s.b.resize(data.n());
    for (Index i = 0; i < data.n(); ++i) {
        double e = eta(i);
        if (e > kEtaClamp || e < -kEtaClamp) {
            e = std::clamp(e, -kEtaClamp, kEtaClamp);
            s.clamped = true;
        }
        const double mu = std::exp(e);
        s.a(i) = tau_col(i) * mu;
        s.b(i) = data.y(i) / mu - 1.0 + e;
    }
    return s;
}

inline double poisson_surrogate_value(const PoissonSurrogate& s, const Dataset& data,
                                      const Eigen::Ref<const VectorXd>& coef) {
    const VectorXd resid = s.b - linear_predictors(coef, data.x);
    return -0.5 * (s.a.array() * resid.array().square()).sum();
}

/// Proximal Newton ascent on Q_k: quadratic model, weighted lasso, line search.
inline CoefUpdate update_poisson_expert(const Eigen::Ref<const VectorXd>& tau_col, const Dataset& data, double lambda,
                                        const Eigen::Ref<const VectorXd>& beta_init, const ExpertUpdateOptions& opts = {}) {
    if (tau_col.size() != data.n()) throw DimensionError("responsibility column length mismatch");
    if (beta_init.size() != data.p() + 1) throw DimensionError("expert coefficients must have p+1 entries");
    CoefUpdate out;
    out.coef = beta_init;
    if (is_empty_component(tau_col)) {
        out.stale = true;
        return out;
    }
    const auto objective = [&](const VectorXd& c) { return poisson_expert_q(tau_col, data, c, lambda); };
    double current = objective(out.coef);
    if (!std::isfinite(current)) throw NumericalError("poisson expert objective is not finite at start");
    for (int outer = 0; outer < opts.max_outer; ++outer) {
        const PoissonSurrogate s = build_poisson_surrogate(tau_col, data, out.coef);
        out.clamped = out.clamped || s.clamped;
        out.iterations = outer + 1;
        if (!(s.a.array() > 0.0).any()) break;
        const WeightedLassoProblem prob{data.x, s.a, s.b, lambda, true};
        const LassoResult solved = solve_weighted_lasso(prob, out.coef, opts.lasso);
        const double gain = std::max(0.0, weighted_lasso_objective(prob, solved.coef) - weighted_lasso_objective(prob, out.coef));
        const LineSearchResult ls = backtracking_line_search(objective, out.coef, solved.coef, opts.line_search, gain, current);
        if (ls.step == 0.0) break;
        const double change = std::abs(ls.value - current) / (std::abs(current) + 1.0);
        out.coef = ls.point;
        current = ls.value;
        if (change < opts.tol) break;
    }
    return out;
}

// ---------------------------------------------------------------- Multinomial

/// One-hot indicator matrix u_ir for the first R-1 levels.
inline MatrixXd indicator_targets(const Dataset& data) {
    MatrixXd u = MatrixXd::Zero(data.n(), data.levels - 1);
    for (Index i = 0; i < data.n(); ++i) {
        const int r = data.label(i);
        if (r < data.levels - 1) u(i, r) = 1.0;
    }
    return u;
}

/// Smooth part I(beta_k) = sum_i tau_ik [ sum_r u_ir eta_ir - log(1 + sum_r exp(eta_ir)) ].
inline double multinomial_smooth_objective(const Eigen::Ref<const VectorXd>& tau_col, const Dataset& data,
                                           const MatrixXd& block) {
    const MatrixXd u = indicator_targets(data);
    const VectorXd no_penalty = VectorXd::Zero(block.rows());
    return multilogit_smooth_objective(MultiLogitProblem{data.x, tau_col, u, no_penalty}, block);
}

inline MatrixXd multinomial_gradient(const Eigen::Ref<const VectorXd>& tau_col, const Dataset& data, const MatrixXd& block) {
    const MatrixXd u = indicator_targets(data);
    const VectorXd no_penalty = VectorXd::Zero(block.rows());
    return multilogit_gradient(MultiLogitProblem{data.x, tau_col, u, no_penalty}, block);
}

inline double multinomial_expert_q(const Eigen::Ref<const VectorXd>& tau_col, const Dataset& data, const MatrixXd& block,
                                   const VectorXd& lambda_levels) {
    const MatrixXd u = indicator_targets(data);
    return multilogit_objective(MultiLogitProblem{data.x, tau_col, u, lambda_levels}, block);
}

struct BlockUpdate {
    MatrixXd block; ///< (R-1) x (p+1)
    bool stale = false;
    bool clamped = false;
    int iterations = 0;
};

/// Proximal Newton (exact curvature) or MM (curvature 1/4) update of one
/// multinomial expert; level R stays pinned at zero.
inline BlockUpdate update_multinomial_expert(const Eigen::Ref<const VectorXd>& tau_col, const Dataset& data,
                                             const VectorXd& lambda_levels, const MatrixXd& block_init,
                                             const ExpertUpdateOptions& opts = {}) {
    if (tau_col.size() != data.n()) throw DimensionError("responsibility column length mismatch");
    if (data.levels < 2) throw DataError("multinomial expert needs R >= 2");
    if (block_init.rows() != data.levels - 1 || block_init.cols() != data.p() + 1)
        throw DimensionError("multinomial expert block must be (R-1) x (p+1)");
    BlockUpdate out;
    out.block = block_init;
    if (is_empty_component(tau_col)) {
        out.stale = true;
        return out;
    }
    const MatrixXd u = indicator_targets(data);
    const MultiLogitProblem prob{data.x, tau_col, u, lambda_levels};
    const ProxNewtonResult res =
        multilogit_prox_newton(prob, block_init, ProxNewtonOptions{opts.variant, opts.tol, opts.max_outer, opts.lasso, opts.line_search});
    out.block = res.coef;
    out.clamped = res.clamped;
    out.iterations = res.outer_iterations;
    return out;
}

} // namespace rmoe

#endif
