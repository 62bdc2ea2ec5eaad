#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace rmoe;

TEST(Gating, TwoComponentSoftmaxValue) {
    GatingParams g{MatrixXd(1, 2)};
    g.w << 1.0, 2.0;
    VectorXd x(1);
    x << 1.0;
    const VectorXd pi = softmax_gating(x, g);
    EXPECT_NEAR(pi(0), std::exp(3.0) / (1.0 + std::exp(3.0)), 1e-15);
    EXPECT_NEAR(pi.sum(), 1.0, 1e-15);
}

TEST(Gating, ZeroWeightsGiveUniform) {
    GatingParams g{MatrixXd::Zero(3, 4)};
    const VectorXd pi = softmax_gating(VectorXd::Ones(3), g);
    for (Index k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(pi(k), 0.25);
}

TEST(Gating, ExtremeLogitsStayFinite) {
    GatingParams g{MatrixXd(1, 2)};
    g.w << 800.0, 0.0;
    const VectorXd pi = softmax_gating(VectorXd::Zero(1), g);
    EXPECT_TRUE(pi.allFinite());
    EXPECT_DOUBLE_EQ(pi(0), 1.0);
    const MatrixXd lg = log_gating(MatrixXd::Zero(2, 1), g);
    EXPECT_TRUE(lg.allFinite());
    EXPECT_NEAR(lg(0, 1), -800.0, 1e-9);
}

TEST(Gating, RowsSumToOne) {
    std::mt19937_64 gen(5);
    GatingParams g{oracle::random_normal(3, 5, gen)};
    const MatrixXd x = oracle::random_normal(40, 4, gen);
    const MatrixXd lg = log_gating(x, g);
    for (Index i = 0; i < x.rows(); ++i) EXPECT_NEAR(lg.row(i).array().exp().sum(), 1.0, 1e-12);
}

TEST(Densities, GaussianMatchesFormula) {
    GaussianExperts e{MatrixXd(1, 3), VectorXd::Constant(1, 0.7)};
    e.beta << 0.5, 1.0, -2.0;
    VectorXd x(2);
    x << 0.3, 0.1;
    const double mean = 0.5 + 0.3 - 0.2;
    const double y = 1.1;
    const double ref = std::log(std::exp(-0.5 * (y - mean) * (y - mean) / 0.49) / (std::sqrt(2 * M_PI) * 0.7));
    EXPECT_NEAR(expert_log_density(y, x, ExpertParams{e}, 0), ref, 1e-13);
}

TEST(Densities, PoissonMatchesFormula) {
    PoissonExperts e{MatrixXd(1, 2)};
    e.beta << 0.2, 0.5;
    VectorXd x(1);
    x << 1.0;
    const double mu = std::exp(0.7);
    EXPECT_NEAR(expert_log_density(3.0, x, ExpertParams{e}, 0), 3.0 * std::log(mu) - mu - std::log(6.0), 1e-13);
}

TEST(Densities, MultinomialProbabilitiesSumToOne) {
    MultinomialExperts e;
    e.beta.push_back(MatrixXd(2, 2));
    e.beta[0] << 0.1, 0.4, -0.3, 1.0;
    VectorXd x(1);
    x << 0.7;
    double total = 0.0;
    for (int y = 1; y <= 3; ++y) total += std::exp(expert_log_density(y, x, ExpertParams{e}, 0));
    EXPECT_NEAR(total, 1.0, 1e-14);
}

TEST(Likelihood, MatchesDirectMixtureSum) {
    std::mt19937_64 gen(9);
    for (Family fam : {Family::gaussian, Family::poisson, Family::multinomial}) {
        SimDesign d = preset_design(fam == Family::gaussian ? "gaussian" : fam == Family::poisson ? "poisson" : "logistic");
        d.n = 60;
        d.seed = 4;
        const SimulatedData sim = simulate(d);
        EXPECT_NEAR(log_likelihood(sim.data, d.truth), oracle::mixture_loglik(sim.data, d.truth), 1e-9);
    }
}

TEST(Likelihood, KOneGaussianIsRegressionLikelihood) {
    std::mt19937_64 gen(10);
    const MatrixXd x = oracle::random_normal(30, 2, gen);
    const VectorXd y = oracle::random_normal(30, 1, gen).col(0);
    const Dataset data = make_dataset(x, y, Family::gaussian);
    MoEParameters p = zero_params(Family::gaussian, 1, 2);
    auto& g = std::get<GaussianExperts>(p.experts);
    g.beta << 0.1, 0.2, 0.3;
    g.sigma << 1.3;
    double ref = 0.0;
    for (Index i = 0; i < 30; ++i) {
        const double r = y(i) - 0.1 - 0.2 * x(i, 0) - 0.3 * x(i, 1);
        ref += -0.5 * std::log(2 * M_PI * 1.69) - 0.5 * r * r / 1.69;
    }
    EXPECT_NEAR(log_likelihood(data, p), ref, 1e-10);
}

TEST(Penalty, SlopesOnly) {
    MoEParameters p = zero_params(Family::gaussian, 2, 2);
    auto& g = std::get<GaussianExperts>(p.experts);
    g.beta << 5, 1, -2, 7, 0.5, 0;
    p.gating.w << 9, -1, 1;
    PenaltyConfig pen = PenaltyConfig::uniform(2, 2.0, 3.0);
    EXPECT_DOUBLE_EQ(penalty_value(p, pen), 2.0 * 3.0 + 2.0 * 0.5 + 3.0 * 2.0);
}

TEST(Penalty, MultinomialPerLevelOverride) {
    MoEParameters p = zero_params(Family::multinomial, 1, 1, 3);
    auto& m = std::get<MultinomialExperts>(p.experts);
    m.beta[0] << 1, 2, 1, -4;
    PenaltyConfig pen = PenaltyConfig::uniform(1, 1.0, 0.0);
    pen.lambda_levels.push_back(VectorXd(2));
    pen.lambda_levels[0] << 0.5, 0.25;
    EXPECT_DOUBLE_EQ(penalty_value(p, pen), 0.5 * 2 + 0.25 * 4);
}

TEST(Prediction, UsesMostLikelyGateAndExpertMode) {
    MoEParameters p = zero_params(Family::gaussian, 2, 1);
    auto& g = std::get<GaussianExperts>(p.experts);
    g.beta << 1, 2, -1, 0;
    p.gating.w << 0, 1;
    VectorXd x(1);
    x << 3.0;
    Prediction pr = predict_response(x, p);
    EXPECT_EQ(pr.component, 0);
    EXPECT_DOUBLE_EQ(pr.value, 7.0);
    x << -3.0;
    pr = predict_response(x, p);
    EXPECT_EQ(pr.component, 1);
    EXPECT_DOUBLE_EQ(pr.value, -1.0);
}

TEST(Prediction, PoissonAndMultinomialModes) {
    MoEParameters p = zero_params(Family::poisson, 1, 1);
    std::get<PoissonExperts>(p.experts).beta << std::log(4.5), 0;
    EXPECT_DOUBLE_EQ(predict_response(VectorXd::Zero(1), p).value, 4.0);
    MoEParameters m = zero_params(Family::multinomial, 1, 1, 3);
    std::get<MultinomialExperts>(m.experts).beta[0] << -1, 0, 2, 0;
    EXPECT_DOUBLE_EQ(predict_response(VectorXd::Zero(1), m).value, 2.0);
}

TEST(Prediction, RejectsNonFiniteParameters) {
    MoEParameters p = zero_params(Family::gaussian, 1, 1);
    std::get<GaussianExperts>(p.experts).beta(0, 0) = std::nan("");
    EXPECT_THROW(predict_response(VectorXd::Zero(1), p), NumericalError);
}

TEST(Dataset, ValidationMessages) {
    MatrixXd x = MatrixXd::Ones(3, 1);
    VectorXd y(3);
    y << 1, -1, 2;
    EXPECT_THROW(make_dataset(x, y, Family::poisson), DataError);
    y << 1, 3, 2;
    EXPECT_NO_THROW(make_dataset(x, y, Family::multinomial));
    y << 1, 3, 3;
    EXPECT_THROW(make_dataset(x, y, Family::multinomial), DataError);
    VectorXd short_y(2);
    short_y << 1, 2;
    EXPECT_THROW(make_dataset(x, short_y, Family::gaussian), DimensionError);
}
