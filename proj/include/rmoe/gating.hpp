#ifndef RMOE_GATING_HPP
#define RMOE_GATING_HPP

#include "rmoe/multilogit.hpp"
#include "rmoe/types.hpp"

namespace rmoe {

namespace detail {

inline MultiLogitProblem gating_problem(const Eigen::Ref<const MatrixXd>& x, const MatrixXd& tau_free,
                                        const VectorXd& unit_weights, const VectorXd& gamma) {
    return MultiLogitProblem{x, unit_weights, tau_free, gamma};
}

inline void check_gating_inputs(const MatrixXd& w, const Responsibilities& tau, const Eigen::Ref<const MatrixXd>& x) {
    if (tau.rows() != x.rows()) throw DimensionError("responsibilities must have one row per observation");
    if (tau.cols() != w.rows() + 1) throw DimensionError("responsibilities must have K columns");
    if (w.rows() > 0 && w.cols() != x.cols() + 1) throw DimensionError("gating rows must have p+1 entries");
}

} // namespace detail

/// I(w) = sum_i sum_{k<K} tau_ik eta_ik - sum_i log(1 + sum_{k<K} exp(eta_ik)).
inline double gating_smooth_objective(const GatingParams& gating, const Responsibilities& tau,
                                      const Eigen::Ref<const MatrixXd>& x) {
    detail::check_gating_inputs(gating.w, tau, x);
    if (gating.w.rows() == 0) return 0.0;
    const MatrixXd tau_free = tau.leftCols(gating.w.rows());
    const VectorXd ones = VectorXd::Ones(x.rows());
    const VectorXd no_penalty = VectorXd::Zero(gating.w.rows());
    return multilogit_smooth_objective(detail::gating_problem(x, tau_free, ones, no_penalty), gating.w);
}

/// dI/dw_kj = sum_i (tau_ik - pi_k(x_i)) x_ij with x_i0 = 1; (K-1) x (p+1).
inline MatrixXd gating_gradient(const GatingParams& gating, const Responsibilities& tau,
                                const Eigen::Ref<const MatrixXd>& x) {
    detail::check_gating_inputs(gating.w, tau, x);
    if (gating.w.rows() == 0) return MatrixXd(0, x.cols() + 1);
    const MatrixXd tau_free = tau.leftCols(gating.w.rows());
    const VectorXd ones = VectorXd::Ones(x.rows());
    const VectorXd no_penalty = VectorXd::Zero(gating.w.rows());
    return multilogit_gradient(detail::gating_problem(x, tau_free, ones, no_penalty), gating.w);
}

/// Q(w; theta) = I(w) - sum_k gamma_k |w_k|_1.
inline double gating_q_value(const GatingParams& gating, const Responsibilities& tau, const Eigen::Ref<const MatrixXd>& x,
                             const VectorXd& gamma) {
    if (gamma.size() != gating.w.rows()) throw DimensionError("gamma must have K-1 entries");
    return gating_smooth_objective(gating, tau, x) - detail::slope_l1(gating.w, gamma);
}

/// Working responses c_ik and curvatures d_ik of the partial quadratic model
/// at w, one column per free class. Built at a single expansion point.
struct GatingSurrogate {
    MatrixXd c; // n x (K-1)
    MatrixXd d; // n x (K-1)
    bool clamped = false;
};

inline GatingSurrogate build_gating_surrogate(const GatingParams& gating, const Responsibilities& tau,
                                              const Eigen::Ref<const MatrixXd>& x, CurvatureVariant variant) {
    detail::check_gating_inputs(gating.w, tau, x);
    const Index free = gating.w.rows();
    GatingSurrogate s;
    s.c.resize(x.rows(), free);
    s.d.resize(x.rows(), free);
    if (free == 0) return s;
    const MatrixXd tau_free = tau.leftCols(free);
    const VectorXd ones = VectorXd::Ones(x.rows());
    const VectorXd no_penalty = VectorXd::Zero(free);
    const MultiLogitProblem prob = detail::gating_problem(x, tau_free, ones, no_penalty);
    for (Index k = 0; k < free; ++k) {
        const ClassSurrogate cs = build_class_surrogate(prob, gating.w, k, variant);
        s.c.col(k) = cs.c;
        s.d.col(k) = cs.d;
        s.clamped = s.clamped || cs.clamped;
    }
    return s;
}

/// -1/2 sum_i d_ik (c_ik - w_k0 - x_i'w_k)^2 for class k (constant dropped).
inline double gating_surrogate_value(const GatingSurrogate& s, const Eigen::Ref<const MatrixXd>& x,
                                     const Eigen::Ref<const VectorXd>& row, Index k) {
    const VectorXd resid = s.c.col(k) - linear_predictors(row, x);
    return -0.5 * (s.d.col(k).array() * resid.array().square()).sum();
}

/// Gradient of the class-k surrogate with respect to (w_k0, w_k).
inline VectorXd gating_surrogate_gradient(const GatingSurrogate& s, const Eigen::Ref<const MatrixXd>& x,
                                          const Eigen::Ref<const VectorXd>& row, Index k) {
    const VectorXd weighted = s.d.col(k).cwiseProduct(s.c.col(k) - linear_predictors(row, x));
    VectorXd g(row.size());
    g(0) = weighted.sum();
    g.tail(x.cols()) = x.transpose() * weighted;
    return g;
}

struct GatingUpdateOptions {
    CurvatureVariant variant = CurvatureVariant::bounded;
    double tol = 1e-6;
    int max_outer = 100;
    LassoOptions lasso{};
    LineSearchConfig line_search{};
};

struct GatingUpdateResult {
    GatingParams gating;
    double q_before = 0.0;
    double q_after = 0.0;
    int outer_iterations = 0;
    bool converged = false;
    bool clamped = false;
};

/// Proximal Newton update of the gating network for fixed responsibilities.
/// The result never has a lower Q(w; theta) than w_init.
inline GatingUpdateResult update_gating(const GatingParams& init, const Responsibilities& tau,
                                        const Eigen::Ref<const MatrixXd>& x, const VectorXd& gamma,
                                        const GatingUpdateOptions& opts = {}) {
    detail::check_gating_inputs(init.w, tau, x);
    if (gamma.size() != init.w.rows()) throw DimensionError("gamma must have K-1 entries");
    GatingUpdateResult out;
    out.gating = init;
    if (init.w.rows() == 0) {
        out.converged = true;
        return out;
    }
    const MatrixXd tau_free = tau.leftCols(init.w.rows());
    const VectorXd ones = VectorXd::Ones(x.rows());
    const MultiLogitProblem prob = detail::gating_problem(x, tau_free, ones, gamma);
    const ProxNewtonResult res =
        multilogit_prox_newton(prob, init.w, ProxNewtonOptions{opts.variant, opts.tol, opts.max_outer, opts.lasso, opts.line_search});
    out.gating.w = res.coef;
    out.q_before = res.trace.front();
    out.q_after = res.objective;
    out.outer_iterations = res.outer_iterations;
    out.converged = res.converged;
    out.clamped = res.clamped;
    return out;
}

} // namespace rmoe

#endif
