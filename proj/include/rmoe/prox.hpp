#ifndef RMOE_PROX_HPP
#define RMOE_PROX_HPP

#include "rmoe/types.hpp"

#include <cmath>
#include <functional>
#include <limits>

namespace rmoe {

/// sign(u) * max(|u| - gamma, 0)
inline double soft_threshold(double u, double gamma) noexcept {
    if (u > gamma) return u - gamma;
    if (u < -gamma) return u + gamma;
    return 0.0;
}

/// Penalized weighted least squares in maximization form:
///   maximize  -1/2 sum_i d_i (c_i - b_0 - x_i'b)^2 - gamma |b|_1
/// The intercept b_0 is never penalized; fit_intercept = false pins it to 0.
struct WeightedLassoProblem {
    Eigen::Ref<const MatrixXd> x;
    Eigen::Ref<const VectorXd> weights;
    Eigen::Ref<const VectorXd> targets;
    double gamma = 0.0;
    bool fit_intercept = true;
};

inline double weighted_lasso_objective(const WeightedLassoProblem& prob, const Eigen::Ref<const VectorXd>& coef) {
    const VectorXd resid = prob.targets - linear_predictors(coef, prob.x);
    return -0.5 * (prob.weights.array() * resid.array().square()).sum() -
           prob.gamma * coef.tail(coef.size() - 1).cwiseAbs().sum();
}

struct LassoOptions {
    double tol = 1e-7;
    int max_sweeps = 1000;
};

struct LassoResult {
    VectorXd coef;
    int sweeps = 0;
    bool converged = false;
};

inline void check(const WeightedLassoProblem& prob) {
    if (prob.weights.size() != prob.x.rows() || prob.targets.size() != prob.x.rows())
        throw DimensionError("weighted lasso: weights/targets length must equal number of rows");
    if (!(prob.gamma >= 0.0)) throw std::invalid_argument("weighted lasso: gamma must be >= 0");
    if ((prob.weights.array() < 0.0).any()) throw std::invalid_argument("weighted lasso: weights must be >= 0");
    if (!(prob.weights.array() > 0.0).any()) throw std::invalid_argument("weighted lasso: at least one weight must be > 0");
}

/// Worst violation of the lasso subgradient conditions at coef.
/// Zero slopes need |g_j| <= gamma, nonzero slopes need g_j = gamma sign(b_j),
/// and the intercept needs g_0 = 0, where g = X' D r.
inline double weighted_lasso_kkt_violation(const WeightedLassoProblem& prob, const Eigen::Ref<const VectorXd>& coef) {
    const VectorXd resid = prob.targets - linear_predictors(coef, prob.x);
    const VectorXd dr = prob.weights.cwiseProduct(resid);
    double worst = prob.fit_intercept ? std::abs(dr.sum()) : 0.0;
    for (Index j = 0; j < prob.x.cols(); ++j) {
        const double g = prob.x.col(j).dot(dr);
        const double b = coef(j + 1);
        const double v = b == 0.0 ? std::max(std::abs(g) - prob.gamma, 0.0) : std::abs(g - prob.gamma * (b > 0 ? 1.0 : -1.0));
        worst = std::max(worst, v);
    }
    return worst;
}

/// Cyclic coordinate ascent (intercept first, then slopes 1..p) with
/// soft-thresholded slope updates. Stops when the largest coefficient change
/// over a sweep falls below tol and the subgradient conditions hold within 10 tol.
/// Columns with zero weighted energy are pinned at 0.
inline LassoResult solve_weighted_lasso(const WeightedLassoProblem& prob, const Eigen::Ref<const VectorXd>& init,
                                        const LassoOptions& opts = {}) {
    check(prob);
    const Index p = prob.x.cols();
    if (init.size() != p + 1) throw DimensionError("weighted lasso: init must have p+1 entries");
    if (!(opts.tol > 0.0)) throw std::invalid_argument("weighted lasso: tol must be > 0");

    LassoResult out;
    out.coef = init;
    if (!prob.fit_intercept) out.coef(0) = 0.0;

    const auto& d = prob.weights;
    const double d_sum = d.sum();
    VectorXd col_energy(p);
    for (Index j = 0; j < p; ++j) col_energy(j) = (d.array() * prob.x.col(j).array().square()).sum();
    for (Index j = 0; j < p; ++j)
        if (col_energy(j) <= 0.0) out.coef(j + 1) = 0.0;

    // r = c - b0 - x b
    VectorXd resid = prob.targets - linear_predictors(out.coef, prob.x);

    for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
        double max_change = 0.0;
        if (prob.fit_intercept) {
            const double step = d.dot(resid) / d_sum;
            out.coef(0) += step;
            resid.array() -= step;
            max_change = std::max(max_change, std::abs(step));
        }
        for (Index j = 0; j < p; ++j) {
            if (col_energy(j) <= 0.0) continue;
            const double old = out.coef(j + 1);
            // sum_i d_i x_ij (r_i + x_ij b_j)
            const double z = (d.array() * prob.x.col(j).array() * resid.array()).sum() + col_energy(j) * old;
            const double updated = soft_threshold(z, prob.gamma) / col_energy(j);
            const double delta = updated - old;
            if (delta != 0.0) {
                resid.noalias() -= delta * prob.x.col(j);
                out.coef(j + 1) = updated;
                max_change = std::max(max_change, std::abs(delta));
            }
        }
        out.sweeps = sweep + 1;
        // a small step is not enough when column energies are large; also
        // require the subgradient conditions to hold within 10 tol
        if (max_change < opts.tol && weighted_lasso_kkt_violation(prob, out.coef) <= 10.0 * opts.tol) {
            out.converged = true;
            break;
        }
    }
    return out;
}

struct LineSearchConfig {
    double shrink = 0.5;
    double sufficient_increase = 0.01;
    int max_trials = 30;
};

struct LineSearchResult {
    VectorXd point;
    double step = 0.0;
    double value = 0.0;
};

/// Backtracking over t in {1, rho, rho^2, ...} on the segment
/// (1-t) current + t candidate. A trial is accepted when the objective
/// strictly increases and gains at least sufficient_increase * t * expected_gain,
/// where expected_gain is the increase predicted by the local model (>= 0).
/// Non-finite trial values count as failures. Returns current with t = 0 when
/// nothing is accepted.
inline LineSearchResult backtracking_line_search(const std::function<double(const VectorXd&)>& objective,
                                                 const VectorXd& current, const VectorXd& candidate,
                                                 const LineSearchConfig& config = {}, double expected_gain = 0.0,
                                                 double current_value = std::numeric_limits<double>::quiet_NaN()) {
    if (current.size() != candidate.size()) throw DimensionError("line search: point sizes differ");
    const double f0 = std::isnan(current_value) ? objective(current) : current_value;
    if (!std::isfinite(f0)) throw NumericalError("line search: objective is not finite at the current point");
    const double gain = std::max(expected_gain, 0.0);

    LineSearchResult out{current, 0.0, f0};
    if (current == candidate) return out;

    const VectorXd direction = candidate - current;
    double t = 1.0;
    for (int trial = 0; trial < config.max_trials; ++trial, t *= config.shrink) {
        VectorXd trial_point = current + t * direction;
        const double f = objective(trial_point);
        if (std::isfinite(f) && f > f0 && f >= f0 + config.sufficient_increase * t * gain) {
            out.point = std::move(trial_point);
            out.step = t;
            out.value = f;
            return out;
        }
    }
    return out;
}

/// Direction form x + t d of the same search; identical to the segment form with candidate = x + d.
inline LineSearchResult backtracking_line_search_direction(const std::function<double(const VectorXd&)>& objective,
                                                           const VectorXd& current, const VectorXd& direction,
                                                           const LineSearchConfig& config = {},
                                                           double expected_gain = 0.0) {
    return backtracking_line_search(objective, current, VectorXd(current + direction), config, expected_gain);
}

} // namespace rmoe

#endif
