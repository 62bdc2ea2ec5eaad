#ifndef RMOE_SIMGEN_HPP
#define RMOE_SIMGEN_HPP

#include "rmoe/model.hpp"
#include "rmoe/random.hpp"
#include "rmoe/types.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace rmoe {

/// Synthetic study design: AR-correlated Gaussian covariates and a K-component
/// mixture-of-experts response.
struct SimDesign {
    Index n = 300;
    Index p = 6;
    double rho = 0.5;
    Family family = Family::gaussian;
    MoEParameters truth;
    std::uint64_t seed = 1;
};

struct SimulatedData {
    Dataset data;
    std::vector<int> z_true; ///< 1-based component labels
};

namespace detail {

inline VectorXd row_of(std::initializer_list<double> values) {
    VectorXd v(static_cast<Index>(values.size()));
    Index i = 0;
    for (double x : values) v(i++) = x;
    return v;
}

/// Keeps the intercept and the first p slopes, padding with zeros.
inline Eigen::RowVectorXd resize_slopes(const VectorXd& coef, Index p) {
    Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(p + 1);
    const Index keep = std::min<Index>(p + 1, coef.size());
    out.head(keep) = coef.head(keep).transpose();
    return out;
}

} // namespace detail

/// Two-component designs with n = 300, p = 6, rho = 0.5. Family names:
/// "gaussian", "poisson", "logistic" (multinomial with R = 2).
/// Other p keep the first p slopes of the preset vectors (zero padded).
inline SimDesign preset_design(const std::string& family, Index p = 6, Index n = 300, double rho = 0.5) {
    SimDesign d;
    d.n = n;
    d.p = p;
    d.rho = rho;
    if (family == "gaussian" || family == "normal") {
        d.family = Family::gaussian;
        d.truth = zero_params(Family::gaussian, 2, p);
        auto& g = std::get<GaussianExperts>(d.truth.experts);
        g.beta.row(0) = detail::resize_slopes(detail::row_of({0, 0, 1.5, 0, 0, 0, 1}), p);
        g.beta.row(1) = detail::resize_slopes(detail::row_of({0, 1, -1.5, 0, 0, 2, 0}), p);
        g.sigma << 1.0, 1.0;
        d.truth.gating.w.row(0) = detail::resize_slopes(detail::row_of({1, 2, 0, 0, -1, 0, 0}), p);
    } else if (family == "poisson") {
        d.family = Family::poisson;
        d.truth = zero_params(Family::poisson, 2, p);
        auto& g = std::get<PoissonExperts>(d.truth.experts);
        g.beta.row(0) = detail::resize_slopes(detail::row_of({0, 1, 0, -2, 0, 1.5, 0}), p);
        g.beta.row(1) = detail::resize_slopes(detail::row_of({0, 0, 2, 0, -1, 0, 0}), p);
        d.truth.gating.w.row(0) = detail::resize_slopes(detail::row_of({1, 0, 0, 1, 0, -1.5, 0}), p);
    } else if (family == "logistic" || family == "multinomial") {
        d.family = Family::multinomial;
        d.truth = zero_params(Family::multinomial, 2, p, 2);
        auto& g = std::get<MultinomialExperts>(d.truth.experts);
        g.beta[0].row(0) = detail::resize_slopes(detail::row_of({0, -1, 2, 0, 0, 1.5, 0}), p);
        g.beta[1].row(0) = detail::resize_slopes(detail::row_of({0, 1, 0, 0, -2, 0, 0}), p);
        d.truth.gating.w.row(0) = detail::resize_slopes(detail::row_of({1, 0, 0, 1, 0, 0, -1.5}), p);
    } else {
        throw std::invalid_argument("unknown simulation family '" + family + "'");
    }
    return d;
}

/// Sigma_jj' = rho^|j - j'|.
inline MatrixXd ar_correlation(Index p, double rho) {
    MatrixXd s(p, p);
    for (Index j = 0; j < p; ++j)
        for (Index h = 0; h < p; ++h) s(j, h) = std::pow(rho, static_cast<double>(std::abs(j - h)));
    return s;
}

/// Rows i.i.d. N(0, Sigma) with Sigma = ar_correlation(p, rho), drawn as L z
/// with L the Cholesky factor and z standard normal.
inline MatrixXd gen_covariates(Index n, Index p, double rho, std::uint64_t seed) {
    if (!(rho > -1.0 && rho < 1.0)) throw std::invalid_argument("rho must lie in (-1, 1)");
    if (n < 1 || p < 1) throw std::invalid_argument("n and p must be >= 1");
    const Eigen::LLT<MatrixXd> llt(ar_correlation(p, rho));
    if (llt.info() != Eigen::Success) throw NumericalError("correlation matrix is not positive definite");
    const MatrixXd lower = llt.matrixL();
    Rng rng(seed);
    MatrixXd z(n, p);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < p; ++j) z(i, j) = rng.normal();
    return z * lower.transpose();
}

/// Draws Z_i from the gating softmax, then y_i from expert Z_i.
inline SimulatedData gen_responses(const MatrixXd& x, const MoEParameters& truth, std::uint64_t seed) {
    validate(truth);
    if (x.cols() != truth.p()) throw DimensionError("covariates do not match the design");
    Rng rng(seed);
    const Index n = x.rows();
    SimulatedData out;
    out.z_true.resize(static_cast<std::size_t>(n));
    VectorXd y(n);
    for (Index i = 0; i < n; ++i) {
        const VectorXd xi = x.row(i).transpose();
        const VectorXd pi = softmax_gating(xi, truth.gating);
        const int z = rng.categorical(pi);
        out.z_true[static_cast<std::size_t>(i)] = z + 1;
        y(i) = std::visit(overloaded{[&](const GaussianExperts& g) {
                                         const double mean = g.beta(z, 0) + xi.dot(g.beta.row(z).tail(xi.size()));
                                         return mean + g.sigma(z) * rng.normal();
                                     },
                                     [&](const PoissonExperts& g) {
                                         const double eta = g.beta(z, 0) + xi.dot(g.beta.row(z).tail(xi.size()));
                                         return static_cast<double>(rng.poisson(std::exp(eta)));
                                     },
                                     [&](const MultinomialExperts& g) {
                                         const MatrixXd xrow = xi.transpose();
                                         const VectorXd probs =
                                             detail::multinomial_log_probs(g.beta[static_cast<std::size_t>(z)], xrow, 0)
                                                 .array()
                                                 .exp();
                                         return static_cast<double>(rng.categorical(probs) + 1);
                                     }},
                          truth.experts);
    }
    out.data.x = x;
    out.data.y = std::move(y);
    out.data.family = truth.family();
    out.data.levels = truth.levels();
    for (Index j = 0; j < x.cols(); ++j) out.data.feature_names.push_back("x" + std::to_string(j + 1));
    return out;
}

/// Covariates from stream 0 and responses from stream 1 of the design seed.
inline SimulatedData simulate(const SimDesign& design) {
    const MatrixXd x = gen_covariates(design.n, design.p, design.rho, stream_seed(design.seed, 0));
    return gen_responses(x, design.truth, stream_seed(design.seed, 1));
}

/// Seed of replicate r in a study seeded with base_seed.
inline std::uint64_t replicate_seed(std::uint64_t base_seed, std::uint64_t replicate) {
    return stream_seed(base_seed, 1000 + replicate);
}

} // namespace rmoe

#endif
