#include "oracles.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace rmoe;

TEST(Csv, ShortestRoundTripFormatting) {
    EXPECT_EQ(format_double(0.0), "0");
    EXPECT_EQ(format_double(-0.0), "0");
    EXPECT_EQ(format_double(0.1), "0.1");
    EXPECT_EQ(format_double(1.5), "1.5");
    EXPECT_EQ(*parse_double(" 2.5 "), 2.5);
    EXPECT_EQ(*parse_double("+3"), 3.0);
    EXPECT_FALSE(parse_double("abc").has_value());
    EXPECT_FALSE(parse_double("1.5x").has_value());
}

TEST(Csv, RoundTripIsBitExact) {
    std::mt19937_64 gen(1);
    CsvTable t;
    t.header = {"a", "b", "c"};
    t.values = oracle::random_normal(50, 3, gen) * 1e3;
    t.values(0, 0) = 1e-300;
    t.values(1, 1) = -123456789.123456789;
    t.values(2, 2) = std::nextafter(1.0, 2.0);
    std::stringstream ss;
    write_csv(ss, t);
    const CsvTable back = read_csv(ss);
    EXPECT_EQ(back.header, t.header);
    EXPECT_EQ(back.values, t.values);
}

TEST(Csv, ErrorsNameRowAndColumn) {
    std::stringstream ss("x1,y\n1,2\n3,oops\n");
    try {
        read_csv(ss, "data.csv");
        FAIL();
    } catch (const IoError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("row 3"), std::string::npos);
        EXPECT_NE(msg.find("column 2"), std::string::npos);
        EXPECT_NE(msg.find("oops"), std::string::npos);
    }
    std::stringstream ragged("a,b\n1\n");
    EXPECT_THROW(read_csv(ragged), IoError);
    std::stringstream empty("");
    EXPECT_THROW(read_csv(empty), IoError);
}

TEST(Csv, DatasetColumnsAndTruth) {
    std::stringstream ss("x1,z_true,y,x2\n1,1,3,2\n4,2,0,5\n");
    const LabeledDataset ld = dataset_from_table(read_csv(ss), Family::poisson);
    EXPECT_EQ(ld.data.p(), 2);
    EXPECT_EQ(ld.data.feature_names, (std::vector<std::string>{"x1", "x2"}));
    EXPECT_EQ(ld.z_true, (std::vector<int>{1, 2}));
    EXPECT_EQ(ld.data.y(0), 3.0);
    std::stringstream neg("x1,y\n1,-2\n");
    EXPECT_THROW(dataset_from_table(read_csv(neg), Family::poisson), DataError);
    std::stringstream noy("x1,x2\n1,2\n");
    EXPECT_THROW(dataset_from_table(read_csv(noy), Family::gaussian), IoError);
}

TEST(Csv, DatasetTableLayout) {
    SimDesign d = preset_design("gaussian", 3, 10);
    const SimulatedData s = simulate(d);
    const CsvTable t = dataset_table(s.data, s.z_true);
    EXPECT_EQ(t.header, (std::vector<std::string>{"x1", "x2", "x3", "y", "z_true"}));
    EXPECT_EQ(t.values.rows(), 10);
}

TEST(Json, ParamsRoundTripAllFamilies) {
    for (const char* fam : {"gaussian", "poisson", "logistic"}) {
        const MoEParameters p = preset_design(fam).truth;
        const json j = params_to_json(p);
        const MoEParameters back = params_from_json(json::parse(j.dump()));
        EXPECT_EQ(back.family(), p.family());
        EXPECT_EQ(back.gating.w, p.gating.w);
        for (int k = 0; k < p.k; ++k) EXPECT_EQ(expert_coefficients(back, k), expert_coefficients(p, k));
    }
    EXPECT_THROW(params_from_json(json::parse(R"({"family":"gaussian"})")), IoError);
}

TEST(Json, FitReportHasSchemaVersion) {
    SimDesign d = preset_design("gaussian", 3, 60);
    const SimulatedData s = simulate(d);
    const FitResult f = fit_em(s.data, default_config(2, 1.0, 1.0));
    FitReportContext ctx;
    ctx.n = 60;
    const json j = fit_to_json(f, ctx);
    EXPECT_EQ(j["schema_version"], kSchemaVersion);
    EXPECT_EQ(j["pl_trace"].size(), f.pl_trace.size());
    EXPECT_EQ(j["df"], f.df);
}

TEST(CoefficientCsv, ZerosWrittenPlainly) {
    MoEParameters p = zero_params(Family::gaussian, 2, 2);
    std::get<GaussianExperts>(p.experts).beta(0, 1) = 0.5;
    const std::string csv = coefficients_csv(p);
    EXPECT_NE(csv.find("expert1,1,0.5\n"), std::string::npos);
    EXPECT_NE(csv.find("expert1,2,0\n"), std::string::npos);
    EXPECT_NE(csv.find("gate1,0,0\n"), std::string::npos);
    EXPECT_NE(csv.find("sigma,2,1\n"), std::string::npos);
}

TEST(BicCsv, Columns) {
    BicRow r;
    r.k = 2;
    r.lambda = 1.5;
    r.gamma = 0.5;
    r.loglik = -10.0;
    r.df = 4;
    r.bic = -12.0;
    r.converged = true;
    EXPECT_EQ(bic_table_csv({r}), "K,lambda,gamma,loglik,df,bic,converged\n2,1.5,0.5,-10,4,-12,1\n");
}
