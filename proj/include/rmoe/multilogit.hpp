#ifndef RMOE_MULTILOGIT_HPP
#define RMOE_MULTILOGIT_HPP

// Penalized multinomial-logistic maximization shared by the gating network and
// the multinomial experts. Both maximize
//
//   sum_i omega_i [ sum_{r<R} u_ir eta_ir - log(1 + sum_{r<R} exp(eta_ir)) ] - sum_r pen_r |slopes_r|_1
//
// over an (R-1) x (p+1) coefficient block. The gating network uses omega = 1 and
// soft targets u = tau; an expert uses omega = tau_k and one-hot targets.

#include "rmoe/prox.hpp"
#include "rmoe/types.hpp"

#include <cmath>
#include <limits>

namespace rmoe {

enum class CurvatureVariant {
    exact,   ///< per-observation curvature pi(1-pi), clamped below at kProbClamp
    bounded, ///< constant curvature 1/4; a minorize-maximize step
};

inline std::string to_string(CurvatureVariant v) { return v == CurvatureVariant::exact ? "exact" : "bounded"; }

inline CurvatureVariant curvature_from_string(const std::string& s) {
    if (s == "exact") return CurvatureVariant::exact;
    if (s == "bounded") return CurvatureVariant::bounded;
    throw std::invalid_argument("unknown curvature variant '" + s + "'");
}

struct MultiLogitProblem {
    Eigen::Ref<const MatrixXd> x;             ///< n x p
    Eigen::Ref<const VectorXd> obs_weights;   ///< n, omega_i >= 0
    Eigen::Ref<const MatrixXd> targets;       ///< n x (R-1), u_ir
    Eigen::Ref<const VectorXd> penalties;     ///< R-1
};

namespace detail {

/// n x (R-1) linear predictors of a coefficient block.
inline MatrixXd block_predictors(const Eigen::Ref<const MatrixXd>& x, const MatrixXd& coef) {
    MatrixXd eta = x * coef.rightCols(x.cols()).transpose();
    eta.rowwise() += coef.col(0).transpose();
    return eta;
}

/// Probabilities of the R-1 free classes, reference class logit 0.
inline MatrixXd class_probabilities(const MatrixXd& eta) {
    MatrixXd prob(eta.rows(), eta.cols());
    for (Index i = 0; i < eta.rows(); ++i) {
        const double m = std::max(0.0, eta.row(i).maxCoeff());
        const double ref = std::exp(-m);
        const Eigen::RowVectorXd e = (eta.row(i).array() - m).exp();
        prob.row(i) = e / (ref + e.sum());
    }
    return prob;
}

/// log(1 + sum_r exp(eta_r)) for each row.
inline VectorXd log_normalizers(const MatrixXd& eta) {
    VectorXd out(eta.rows());
    for (Index i = 0; i < eta.rows(); ++i) {
        const double m = std::max(0.0, eta.row(i).maxCoeff());
        out(i) = m + std::log(std::exp(-m) + (eta.row(i).array() - m).exp().sum());
    }
    return out;
}

inline double slope_l1(const MatrixXd& coef, const Eigen::Ref<const VectorXd>& penalties) {
    double total = 0.0;
    for (Index r = 0; r < coef.rows(); ++r) total += penalties(r) * coef.row(r).tail(coef.cols() - 1).cwiseAbs().sum();
    return total;
}

inline Eigen::Map<const VectorXd> flat(const MatrixXd& m) { return {m.data(), m.size()}; }

} // namespace detail

inline void check(const MultiLogitProblem& prob, const MatrixXd& coef) {
    const Index n = prob.x.rows();
    if (prob.obs_weights.size() != n || prob.targets.rows() != n)
        throw DimensionError("multinomial-logistic problem: row counts disagree");
    if (coef.rows() != prob.targets.cols() || coef.cols() != prob.x.cols() + 1)
        throw DimensionError("multinomial-logistic problem: coefficient block shape mismatch");
    if (prob.penalties.size() != coef.rows()) throw DimensionError("multinomial-logistic problem: one penalty per class");
}

/// Smooth part of the objective (no penalty).
inline double multilogit_smooth_objective(const MultiLogitProblem& prob, const MatrixXd& coef) {
    check(prob, coef);
    if (coef.rows() == 0) return 0.0;
    const MatrixXd eta = detail::block_predictors(prob.x, coef);
    const VectorXd lognorm = detail::log_normalizers(eta);
    double total = 0.0;
    for (Index i = 0; i < eta.rows(); ++i) {
        if (prob.obs_weights(i) == 0.0) continue;
        total += prob.obs_weights(i) * (prob.targets.row(i).dot(eta.row(i)) - lognorm(i));
    }
    return total;
}

/// Gradient of the smooth part: row r is sum_i omega_i (u_ir - alpha_ir) (1, x_i).
inline MatrixXd multilogit_gradient(const MultiLogitProblem& prob, const MatrixXd& coef) {
    check(prob, coef);
    MatrixXd grad(coef.rows(), coef.cols());
    if (coef.rows() == 0) return grad;
    const MatrixXd prob_mat = detail::class_probabilities(detail::block_predictors(prob.x, coef));
    const MatrixXd resid = (prob.targets - prob_mat).array().colwise() * prob.obs_weights.array();
    grad.col(0) = resid.colwise().sum().transpose();
    grad.rightCols(prob.x.cols()) = resid.transpose() * prob.x;
    return grad;
}

inline double multilogit_objective(const MultiLogitProblem& prob, const MatrixXd& coef) {
    return multilogit_smooth_objective(prob, coef) - detail::slope_l1(coef, prob.penalties);
}

/// Working response c and curvature d of the partial quadratic model for one
/// class r at coef. Lasso weights are obs_weights * d.
struct ClassSurrogate {
    VectorXd c;
    VectorXd d;
    bool clamped = false; ///< exact variant hit the probability clamp
};

inline ClassSurrogate build_class_surrogate(const MultiLogitProblem& prob, const MatrixXd& coef, Index r,
                                            CurvatureVariant variant) {
    check(prob, coef);
    const MatrixXd eta = detail::block_predictors(prob.x, coef);
    const MatrixXd alpha = detail::class_probabilities(eta);
    const Index n = eta.rows();
    ClassSurrogate s;
    s.c.resize(n);
    s.d.resize(n);
    for (Index i = 0; i < n; ++i) {
        const double a = alpha(i, r);
        const double gap = prob.targets(i, r) - a;
        if (variant == CurvatureVariant::bounded) {
            s.d(i) = 0.25;
            s.c(i) = eta(i, r) + 4.0 * gap;
        } else {
            double curv = a * (1.0 - a);
            if (curv < kProbClamp) {
                curv = kProbClamp;
                s.clamped = true;
            }
            s.d(i) = curv;
            s.c(i) = eta(i, r) + gap / curv;
        }
    }
    return s;
}

/// Value of the penalized quadratic model for class r (without its constant).
inline double class_surrogate_value(const MultiLogitProblem& prob, const ClassSurrogate& s,
                                    const Eigen::Ref<const VectorXd>& coef_r, Index r) {
    const VectorXd resid = s.c - linear_predictors(coef_r, prob.x);
    return -0.5 * (prob.obs_weights.array() * s.d.array() * resid.array().square()).sum() -
           prob.penalties(r) * coef_r.tail(coef_r.size() - 1).cwiseAbs().sum();
}

struct ProxNewtonOptions {
    CurvatureVariant variant = CurvatureVariant::bounded;
    double tol = 1e-6; ///< relative change of the penalized objective
    int max_outer = 100;
    LassoOptions lasso{};
    LineSearchConfig line_search{};
};

struct ProxNewtonResult {
    MatrixXd coef;
    double objective = 0.0;
    int outer_iterations = 0;
    bool converged = false;
    bool clamped = false;
    std::vector<double> trace; ///< penalized objective after each accepted step, starting with the initial value
};

/// Cycles r = 1..R-1: build the partial quadratic model at the current block
/// (including classes already updated in this cycle), solve the weighted lasso
/// for class r, then line-searches once along the segment to the cycled block.
inline ProxNewtonResult multilogit_prox_newton(const MultiLogitProblem& prob, const MatrixXd& init,
                                               const ProxNewtonOptions& opts = {}) {
    check(prob, init);
    ProxNewtonResult out;
    out.coef = init;
    if (init.rows() == 0) {
        out.converged = true;
        out.trace.push_back(0.0);
        return out;
    }
    const Index rows = init.rows();
    const Index cols = init.cols();
    auto objective_flat = [&](const VectorXd& v) {
        const MatrixXd m = Eigen::Map<const MatrixXd>(v.data(), rows, cols);
        return multilogit_objective(prob, m);
    };

    double current_value = multilogit_objective(prob, out.coef);
    if (!std::isfinite(current_value)) throw NumericalError("multinomial-logistic objective is not finite at start");
    out.objective = current_value;
    out.trace.push_back(current_value);

    for (int outer = 0; outer < opts.max_outer; ++outer) {
        MatrixXd cycled = out.coef;
        double predicted_gain = 0.0;
        for (Index r = 0; r < rows; ++r) {
            const ClassSurrogate s = build_class_surrogate(prob, cycled, r, opts.variant);
            out.clamped = out.clamped || s.clamped;
            const VectorXd lasso_weights = prob.obs_weights.cwiseProduct(s.d);
            if (!(lasso_weights.array() > 0.0).any()) continue;
            const WeightedLassoProblem wl{prob.x, lasso_weights, s.c, prob.penalties(r), true};
            const VectorXd before = cycled.row(r).transpose();
            const LassoResult solved = solve_weighted_lasso(wl, before, opts.lasso);
            predicted_gain += std::max(0.0, class_surrogate_value(prob, s, solved.coef, r) -
                                                class_surrogate_value(prob, s, before, r));
            cycled.row(r) = solved.coef.transpose();
        }
        out.outer_iterations = outer + 1;
        const LineSearchResult ls =
            backtracking_line_search(objective_flat, VectorXd(detail::flat(out.coef)), VectorXd(detail::flat(cycled)),
                                     opts.line_search, predicted_gain, current_value);
        if (ls.step == 0.0) {
            out.converged = true;
            break;
        }
        out.coef = Eigen::Map<const MatrixXd>(ls.point.data(), rows, cols);
        const double change = std::abs(ls.value - current_value) / (std::abs(current_value) + 1.0);
        current_value = ls.value;
        out.trace.push_back(current_value);
        if (change < opts.tol) {
            out.converged = true;
            break;
        }
    }
    out.objective = current_value;
    return out;
}

} // namespace rmoe

#endif
