#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace rmoe;

TEST(ModifiedBic, FormulaExamples) {
    EXPECT_NEAR(modified_bic(-100.0, 5, 100), -111.5129254649702, 1e-12);
    EXPECT_EQ(modified_bic(-42.0, 0, 77), -42.0);
    EXPECT_GT(modified_bic(-10.0, 5, 50), modified_bic(-10.0, 7, 50));
}

TEST(ModifiedBic, InvariantToLabelPermutation) {
    SimDesign d = preset_design("gaussian");
    d.n = 80;
    const SimulatedData sim = simulate(d);
    FitResult a;
    a.ll_final = log_likelihood(sim.data, d.truth);
    a.df = degrees_of_freedom(d.truth);
    const MoEParameters swapped = permute_components(d.truth, {1, 0});
    FitResult b;
    b.ll_final = log_likelihood(sim.data, swapped);
    b.df = degrees_of_freedom(swapped);
    EXPECT_NEAR(modified_bic(a, 80), modified_bic(b, 80), 1e-9);
}

TEST(DefaultGrid, AnchoredAtRootN) {
    const GridSpec g = build_default_grid(300);
    ASSERT_EQ(g.lambda_grid.size(), 7u);
    EXPECT_NEAR(g.lambda_grid.back(), 2.0 * std::sqrt(300.0), 1e-12);
    EXPECT_NEAR(g.lambda_grid.back(), 34.64, 5e-3);
    EXPECT_NEAR(g.lambda_grid.front(), 0.01 * std::sqrt(300.0), 1e-12);
    EXPECT_TRUE(std::is_sorted(g.lambda_grid.begin(), g.lambda_grid.end()));
    EXPECT_EQ(g.gamma_grid, g.lambda_grid);
    EXPECT_EQ(g.k_candidates, (std::vector<int>{1, 2, 3, 4, 5}));
    const double ratio = g.lambda_grid[1] / g.lambda_grid[0];
    for (std::size_t i = 1; i < 7; ++i) EXPECT_NEAR(g.lambda_grid[i] / g.lambda_grid[i - 1], ratio, 1e-12);
}

TEST(DefaultGrid, SmallestSample) {
    const GridSpec g = build_default_grid(4);
    EXPECT_EQ(g.lambda_grid.size(), 7u);
    EXPECT_NEAR(g.lambda_grid.back(), 4.0, 1e-12);
    EXPECT_THROW(build_default_grid(3), std::invalid_argument);
}

TEST(GridValidation, RejectsUnsortedOrEmpty) {
    GridSpec g{{1}, {2.0, 1.0}, {0.0}};
    EXPECT_THROW(validate(g), std::invalid_argument);
    GridSpec e{{}, {1.0}, {1.0}};
    EXPECT_THROW(validate(e), std::invalid_argument);
}

namespace {

SimulatedData single_gaussian(std::uint64_t seed, Index n = 150) {
    const MatrixXd x = gen_covariates(n, 3, 0.5, stream_seed(seed, 0));
    Rng rng(stream_seed(seed, 1));
    VectorXd y(n);
    for (Index i = 0; i < n; ++i) y(i) = 1.0 + 1.5 * x(i, 0) - x(i, 2) + rng.normal();
    SimulatedData s;
    s.data = make_dataset(x, y, Family::gaussian);
    s.z_true.assign(static_cast<std::size_t>(n), 1);
    return s;
}

} // namespace

TEST(SelectModel, SingleCellEqualsDirectFit) {
    const SimulatedData sim = single_gaussian(1);
    GridSpec g{{2}, {1.0}, {1.0}};
    FitConfig base = default_config(2);
    base.seed = 3;
    const SelectionResult s = select_model(sim.data, g, base);
    ASSERT_EQ(s.table.size(), 1u);
    FitConfig direct = default_config(2, 1.0, 1.0);
    direct.seed = 3;
    const FitResult f = fit_em(sim.data, direct);
    EXPECT_EQ(s.best.pl_trace, f.pl_trace);
    EXPECT_DOUBLE_EQ(s.table[0].bic, modified_bic(f, sim.data.n()));
}

TEST(SelectModel, TableCoversGridAndBestIsMaximum) {
    const SimulatedData sim = single_gaussian(2);
    GridSpec g{{1, 2}, {0.5, 2.0, 8.0}, {0.5, 4.0}};
    const SelectionResult s = select_model(sim.data, g, default_config(1), 2);
    EXPECT_EQ(s.table.size(), g.size());
    double best = -std::numeric_limits<double>::infinity();
    for (const BicRow& r : s.table)
        if (r.error.empty() && !r.degenerate) best = std::max(best, r.bic);
    EXPECT_EQ(s.table[s.best_row].bic, best);
    EXPECT_DOUBLE_EQ(modified_bic(s.best, sim.data.n()), best);
}

TEST(SelectModel, ThreadCountDoesNotChangeResult) {
    const SimulatedData sim = single_gaussian(3, 100);
    GridSpec g{{1, 2}, {0.5, 4.0}, {1.0}};
    const SelectionResult a = select_model(sim.data, g, default_config(1), 1);
    const SelectionResult b = select_model(sim.data, g, default_config(1), 4);
    ASSERT_EQ(a.table.size(), b.table.size());
    for (std::size_t i = 0; i < a.table.size(); ++i) EXPECT_EQ(a.table[i].bic, b.table[i].bic);
    EXPECT_EQ(a.best_row, b.best_row);
}

TEST(SelectModel, PrefersOneComponentOnSingleGaussianData) {
    int picks = 0;
    for (std::uint64_t seed = 10; seed < 15; ++seed) {
        const SimulatedData sim = single_gaussian(seed);
        GridSpec g = build_default_grid(sim.data.n(), 2);
        FitConfig base = default_config(1);
        base.seed = seed;
        if (select_model(sim.data, g, base).best.params.k == 1) ++picks;
    }
    EXPECT_GE(picks, 4);
}

TEST(SelectModel, DfNeverIncreasesAlongLambdaOnOnePredictor) {
    std::mt19937_64 gen(21);
    const MatrixXd x = oracle::random_normal(80, 1, gen);
    const VectorXd y = (0.8 * x.col(0)).matrix() + oracle::random_normal(80, 1, gen).col(0);
    const Dataset d = make_dataset(x, y, Family::gaussian);
    int prev = std::numeric_limits<int>::max();
    for (double lambda : log_grid(0.01, 500.0, 15)) {
        const FitResult f = fit_em(d, default_config(1, lambda, 0.0));
        EXPECT_LE(f.df, prev);
        prev = f.df;
    }
    EXPECT_EQ(prev, 2);
}

TEST(SelectModel, ReportsFailuresWhenNothingUsable) {
    const SimulatedData sim = single_gaussian(4, 20);
    GridSpec g{{25}, {1.0}, {1.0}};
    EXPECT_THROW(select_model(sim.data, g, default_config(1)), NumericalError);
}
