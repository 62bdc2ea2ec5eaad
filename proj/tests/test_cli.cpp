#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

using namespace rmoe;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("rmoe_cli_") + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    int run(const std::string& args) const {
        const std::string cmd = std::string(RMOE_CLI_PATH) + " " + args + " >" + (dir_ / "stdout.txt").string() + " 2>" +
                                (dir_ / "stderr.txt").string();
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    static std::string slurp(const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    static std::size_t line_count(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

    fs::path dir_;
};

} // namespace

TEST_F(CliTest, SimulateWritesPresetDesign) {
    ASSERT_EQ(run("simulate --family gaussian --preset paper --seed 1 --out " + path("a")), 0);
    const CsvTable t = read_csv_file(path("a/data.csv"));
    EXPECT_EQ(t.values.rows(), 300);
    EXPECT_EQ(t.values.cols(), 8);
    EXPECT_EQ(t.header.back(), "z_true");
    const MoEParameters truth = params_from_json(read_json_file(path("a/truth.json")));
    EXPECT_EQ(truth.k, 2);
    EXPECT_EQ(truth.gating.w, preset_design("gaussian").truth.gating.w);
}

TEST_F(CliTest, SimulateSmallDesignAndDeterminism) {
    ASSERT_EQ(run("simulate --family poisson --n 50 --p 3 --rho 0 --seed 4 --out " + path("a")), 0);
    ASSERT_EQ(run("simulate --family poisson --n 50 --p 3 --rho 0 --seed 4 --out " + path("b")), 0);
    const CsvTable t = read_csv_file(path("a/data.csv"));
    EXPECT_EQ(t.values.rows(), 50);
    EXPECT_EQ(t.values.cols(), 5);
    EXPECT_EQ(slurp(path("a/data.csv")), slurp(path("b/data.csv")));
    EXPECT_EQ(slurp(path("a/truth.json")), slurp(path("b/truth.json")));
}

TEST_F(CliTest, FitOneComponentMatchesOls) {
    std::mt19937_64 gen(5);
    const MatrixXd x = oracle::random_normal(40, 2, gen);
    const VectorXd y = (1.0 + 2.0 * x.col(0).array() - x.col(1).array()).matrix() + 0.3 * oracle::random_normal(40, 1, gen).col(0);
    write_dataset_csv(path("toy.csv"), make_dataset(x, y, Family::gaussian));
    ASSERT_EQ(run("fit --data " + path("toy.csv") + " --k 1 --lambda 0 --gamma 0 --em-tol 1e-12 --out " + path("f")), 0);
    const MoEParameters est = params_from_json(read_json_file(path("f/fit.json"))["params"]);
    const VectorXd ols = oracle::weighted_least_squares(x, VectorXd::Ones(40), y);
    EXPECT_LT((expert_coefficients(est, 0).head(3) - ols).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_NE(slurp(path("f/fit_coeffs.csv")).find("block,index,value\n"), std::string::npos);
}

TEST_F(CliTest, HugePenaltiesLeaveOnlyIntercepts) {
    ASSERT_EQ(run("simulate --family gaussian --n 80 --seed 2 --out " + path("s")), 0);
    ASSERT_EQ(run("fit --data " + path("s/data.csv") + " --k 2 --lambda 1e8 --gamma 1e8 --out " + path("f")), 0);
    std::istringstream csv(slurp(path("f/fit_coeffs.csv")));
    std::string line;
    std::getline(csv, line);
    while (std::getline(csv, line)) {
        const auto parts = split_csv_line(line);
        if (parts[0] == "sigma" || parts[1] == "0") continue;
        EXPECT_EQ(parts[2], "0") << line;
    }
}

TEST_F(CliTest, FitRerunIsByteIdentical) {
    ASSERT_EQ(run("simulate --family logistic --n 120 --seed 3 --out " + path("s")), 0);
    const std::string args = "fit --data " + path("s/data.csv") + " --family logistic --k 2 --lambda 1 --gamma 1 --seed 9 --n-starts 2";
    ASSERT_EQ(run(args + " --out " + path("a")), 0);
    ASSERT_EQ(run(args + " --out " + path("b")), 0);
    EXPECT_EQ(slurp(path("a/fit.json")), slurp(path("b/fit.json")));
    EXPECT_EQ(slurp(path("a/fit_coeffs.csv")), slurp(path("b/fit_coeffs.csv")));
}

TEST_F(CliTest, SelectTableCoversGrid) {
    ASSERT_EQ(run("simulate --family gaussian --n 100 --seed 6 --out " + path("s")), 0);
    ASSERT_EQ(run("select --data " + path("s/data.csv") + " --k-values 1,2 --lambda-grid 1,4,16 --gamma-grid 2,8 --threads 2 --out " +
                  path("sel")),
              0);
    const std::string table = slurp(path("sel/bic_table.csv"));
    EXPECT_EQ(line_count(table), 1u + 2 * 3 * 2);
    EXPECT_TRUE(fs::exists(path("sel/fit.json")));
    const json fit = read_json_file(path("sel/fit.json"));
    EXPECT_EQ(fit["schema_version"], kSchemaVersion);
}

TEST_F(CliTest, SelectSingleCellMatchesFit) {
    ASSERT_EQ(run("simulate --family poisson --n 100 --seed 7 --out " + path("s")), 0);
    const std::string common = " --data " + path("s/data.csv") + " --family poisson --seed 5";
    ASSERT_EQ(run("select" + common + " --k-values 2 --lambda-grid 3 --gamma-grid 2 --out " + path("sel")), 0);
    ASSERT_EQ(run("fit" + common + " --k 2 --lambda 3 --gamma 2 --out " + path("fit")), 0);
    EXPECT_EQ(slurp(path("sel/fit.json")), slurp(path("fit/fit.json")));
    EXPECT_EQ(line_count(slurp(path("sel/bic_table.csv"))), 2u);
}

TEST_F(CliTest, EvaluateTruthAgainstItself) {
    ASSERT_EQ(run("simulate --family gaussian --n 100 --seed 8 --out " + path("s")), 0);
    // a fit file whose parameters are the truth
    json fake;
    fake["schema_version"] = kSchemaVersion;
    fake["family"] = "gaussian";
    fake["params"] = read_json_file(path("s/truth.json"));
    write_json(path("truth_fit.json"), fake);
    ASSERT_EQ(run("evaluate --fit " + path("truth_fit.json") + " --truth " + path("s/truth.json") + " --data " + path("s/data.csv") +
                  " --out " + path("e")),
              0);
    const json m = read_json_file(path("e/metrics.json"));
    for (const auto& block : m["support"]) {
        EXPECT_EQ(block["sensitivity"], 1.0);
        EXPECT_EQ(block["specificity"], 1.0);
    }
    EXPECT_GT(m["classification_rate"].get<double>(), 0.5);
}

TEST_F(CliTest, EvaluateAriInvariantToLabelPermutation) {
    ASSERT_EQ(run("simulate --family gaussian --n 120 --seed 9 --out " + path("s")), 0);
    ASSERT_EQ(run("fit --data " + path("s/data.csv") + " --k 2 --lambda 2 --gamma 2 --out " + path("f")), 0);
    CsvTable t = read_csv_file(path("s/data.csv"));
    const Index zcol = static_cast<Index>(t.header.size()) - 1;
    for (Index i = 0; i < t.values.rows(); ++i) t.values(i, zcol) = 3.0 - t.values(i, zcol);
    {
        std::ofstream out(path("swapped.csv"));
        write_csv(out, t);
    }
    ASSERT_EQ(run("evaluate --fit " + path("f/fit.json") + " --data " + path("s/data.csv") + " --out " + path("e1")), 0);
    ASSERT_EQ(run("evaluate --fit " + path("f/fit.json") + " --data " + path("swapped.csv") + " --out " + path("e2")), 0);
    const json a = read_json_file(path("e1/metrics.json"));
    const json b = read_json_file(path("e2/metrics.json"));
    EXPECT_EQ(a["ari"], b["ari"]);
    EXPECT_EQ(a["classification_rate"], b["classification_rate"]);
}

TEST_F(CliTest, PredictWritesOneRowPerObservation) {
    ASSERT_EQ(run("simulate --family poisson --n 60 --seed 10 --out " + path("s")), 0);
    ASSERT_EQ(run("fit --data " + path("s/data.csv") + " --family poisson --k 2 --lambda 1 --gamma 1 --standardize --out " + path("f")), 0);
    EXPECT_TRUE(fs::exists(path("f/fit_coeffs_original.csv")));
    ASSERT_EQ(run("predict --fit " + path("f/fit.json") + " --data " + path("s/data.csv") + " --out " + path("p")), 0);
    EXPECT_EQ(line_count(slurp(path("p/predictions.csv"))), 61u);
}

TEST_F(CliTest, StandardizedCoefficientsBackTransform) {
    std::mt19937_64 gen(11);
    MatrixXd x = oracle::random_normal(60, 2, gen);
    x.col(0) = x.col(0) * 5.0 + VectorXd::Constant(60, 3.0);
    const VectorXd y = (1.0 + 0.4 * x.col(0).array() - 2.0 * x.col(1).array()).matrix() + 0.1 * oracle::random_normal(60, 1, gen).col(0);
    write_dataset_csv(path("toy.csv"), make_dataset(x, y, Family::gaussian));
    ASSERT_EQ(run("fit --data " + path("toy.csv") + " --k 1 --em-tol 1e-12 --standardize --out " + path("f")), 0);
    const MoEParameters orig = params_from_json(read_json_file(path("f/fit.json"))["params_original_scale"]);
    const VectorXd ols = oracle::weighted_least_squares(x, VectorXd::Ones(60), y);
    EXPECT_LT((expert_coefficients(orig, 0).head(3) - ols).cwiseAbs().maxCoeff(), 1e-8);
}

TEST_F(CliTest, ExitCodes) {
    EXPECT_EQ(run("--help"), 0);
    EXPECT_EQ(run(""), 2);
    EXPECT_EQ(run("fit --k 2"), 2);
    EXPECT_EQ(run("simulate --preset nonsense --out " + path("s")), 2);
    {
        std::ofstream bad(path("bad.csv"));
        bad << "x1,y\n1,2\n3,oops\n";
    }
    EXPECT_EQ(run("fit --data " + path("bad.csv") + " --out " + path("f")), 3);
    EXPECT_NE(slurp(path("stderr.txt")).find("row 3"), std::string::npos);
    {
        std::ofstream neg(path("neg.csv"));
        neg << "x1,y\n1,2\n3,-1\n4,2\n";
    }
    EXPECT_EQ(run("fit --family poisson --data " + path("neg.csv") + " --out " + path("f")), 3);
    ASSERT_EQ(run("simulate --n 20 --p 2 --out " + path("s")), 0);
    EXPECT_EQ(run("select --data " + path("s/data.csv") + " --k-values 25 --lambda-grid 1 --gamma-grid 1 --out " + path("sel")), 4);
    EXPECT_EQ(run("evaluate --fit " + path("s/truth.json") + " --out " + path("e")), 2);
}
