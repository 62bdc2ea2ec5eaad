// rmoe: simulate, fit, select, evaluate and predict from the command line.
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.

#include "rmoe/rmoe.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <numeric>
#include <sstream>

namespace fs = std::filesystem;
using namespace rmoe;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::vector<double> parse_list(const std::string& text, const std::string& flag) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto v = parse_double(item);
        if (!v) throw UsageError(flag + ": '" + item + "' is not a number");
        out.push_back(*v);
    }
    if (out.empty()) throw UsageError(flag + " needs at least one value");
    return out;
}

std::string out_path(const std::string& dir, const std::string& name) {
    fs::create_directories(dir);
    return (fs::path(dir) / name).string();
}

// ------------------------------------------------------------ standardization

struct Scaling {
    VectorXd center;
    VectorXd scale;
};

void apply_scaling_matrix(MatrixXd& x, const Scaling& s) {
    if (x.cols() != s.center.size()) throw DimensionError("data has a different number of covariates than the fit");
    for (Index j = 0; j < x.cols(); ++j) x.col(j) = (x.col(j).array() - s.center(j)) / s.scale(j);
}

void apply_scaling(Dataset& data, const Scaling& s) { apply_scaling_matrix(data.x, s); }

Scaling standardize(Dataset& data) {
    Scaling s;
    s.center = data.x.colwise().mean().transpose();
    s.scale.resize(data.p());
    for (Index j = 0; j < data.p(); ++j) {
        const double sd = std::sqrt((data.x.col(j).array() - s.center(j)).square().sum() / static_cast<double>(data.n() - 1));
        if (!(sd > 0.0)) throw DataError("column '" + data.feature_names[static_cast<std::size_t>(j)] + "' is constant and cannot be standardized");
        s.scale(j) = sd;
    }
    apply_scaling(data, s);
    return s;
}

/// (b0, b) on standardized covariates -> coefficients on the original scale.
void back_transform_row(Eigen::Ref<Eigen::RowVectorXd> row, const Scaling& s) {
    double shift = 0.0;
    for (Index j = 0; j < s.scale.size(); ++j) {
        row(j + 1) /= s.scale(j);
        shift += row(j + 1) * s.center(j);
    }
    row(0) -= shift;
}

MoEParameters original_scale(const MoEParameters& params, const Scaling& s) {
    MoEParameters out = params;
    for (Index k = 0; k < out.gating.w.rows(); ++k) {
        Eigen::RowVectorXd row = out.gating.w.row(k);
        back_transform_row(row, s);
        out.gating.w.row(k) = row;
    }
    const auto fix = [&](MatrixXd& m) {
        for (Index r = 0; r < m.rows(); ++r) {
            Eigen::RowVectorXd row = m.row(r);
            back_transform_row(row, s);
            m.row(r) = row;
        }
    };
    std::visit(overloaded{[&](GaussianExperts& g) { fix(g.beta); }, [&](PoissonExperts& g) { fix(g.beta); },
                          [&](MultinomialExperts& g) {
                              for (auto& b : g.beta) fix(b);
                          }},
               out.experts);
    return out;
}

json scaling_json(const Scaling& s) {
    json j;
    j["center"] = std::vector<double>(s.center.data(), s.center.data() + s.center.size());
    j["scale"] = std::vector<double>(s.scale.data(), s.scale.data() + s.scale.size());
    return j;
}

std::optional<Scaling> scaling_from_fit(const json& fit) {
    if (!fit.contains("standardization") || fit["standardization"].is_null()) return std::nullopt;
    Scaling s;
    const auto c = fit["standardization"].at("center").get<std::vector<double>>();
    const auto sc = fit["standardization"].at("scale").get<std::vector<double>>();
    s.center = Eigen::Map<const VectorXd>(c.data(), static_cast<Index>(c.size()));
    s.scale = Eigen::Map<const VectorXd>(sc.data(), static_cast<Index>(sc.size()));
    return s;
}

// ------------------------------------------------------------ shared options

struct FitFlags {
    std::string data;
    std::string family = "gaussian";
    std::string response = "y";
    int k = 2;
    double lambda = 0.0;
    double gamma = 0.0;
    std::uint64_t seed = 1;
    int n_starts = 5; // real data; simulation presets in the library default to 1
    std::string gating_variant = "bounded";
    std::string expert_variant = "bounded";
    std::string init = "random_partition";
    double em_tol = 1e-6;
    int max_iters = 1000;
    bool standardize = false;
    bool tied_sigma = false;
    std::string out = ".";
};

void add_fit_flags(CLI::App* cmd, FitFlags& f, bool with_penalty) {
    cmd->add_option("--data", f.data, "input CSV (header row, response column y)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--family", f.family, "gaussian | poisson | logistic | multinomial")->capture_default_str();
    cmd->add_option("--response", f.response, "response column name")->capture_default_str();
    cmd->add_option("--seed", f.seed, "random seed")->capture_default_str();
    cmd->add_option("--n-starts", f.n_starts, "random starts, best penalized likelihood wins")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--gating-variant", f.gating_variant, "bounded | exact")->capture_default_str();
    cmd->add_option("--expert-variant", f.expert_variant, "bounded | exact (multinomial experts)")->capture_default_str();
    cmd->add_option("--init", f.init, "random_partition | random_hyperplane")->capture_default_str();
    cmd->add_option("--em-tol", f.em_tol, "relative PL change to stop")->capture_default_str();
    cmd->add_option("--max-iters", f.max_iters, "EM iteration cap")->capture_default_str();
    cmd->add_flag("--standardize", f.standardize, "center and scale covariates before fitting");
    cmd->add_flag("--tied-sigma", f.tied_sigma, "one sigma shared by all Gaussian experts");
    cmd->add_option("--out", f.out, "output directory")->capture_default_str();
    if (with_penalty) {
        cmd->add_option("--k", f.k, "number of experts")->capture_default_str()->check(CLI::PositiveNumber);
        cmd->add_option("--lambda", f.lambda, "expert l1 penalty")->capture_default_str()->check(CLI::NonNegativeNumber);
        cmd->add_option("--gamma", f.gamma, "gating l1 penalty")->capture_default_str()->check(CLI::NonNegativeNumber);
    }
}

FitConfig config_from(const FitFlags& f) {
    FitConfig c = default_config(f.k, f.lambda, f.gamma);
    c.seed = f.seed;
    c.n_starts = f.n_starts;
    c.gating_variant = curvature_from_string(f.gating_variant);
    c.expert_variant = curvature_from_string(f.expert_variant);
    c.init = init_from_string(f.init);
    c.em_tol = f.em_tol;
    c.max_em_iters = f.max_iters;
    c.tied_sigma = f.tied_sigma;
    return c;
}

struct Loaded {
    LabeledDataset ld;
    std::optional<Scaling> scaling;
};

Loaded load(const FitFlags& f) {
    Loaded l;
    l.ld = read_dataset_csv(f.data, family_from_string(f.family), f.response);
    if (f.standardize) l.scaling = standardize(l.ld.data);
    return l;
}

json fit_report(const FitResult& fit, const Loaded& l, const FitFlags& f, double lambda, double gamma) {
    FitReportContext ctx;
    ctx.n = l.ld.data.n();
    ctx.lambda = lambda;
    ctx.gamma = gamma;
    ctx.seed = f.seed;
    ctx.gating_variant = f.gating_variant;
    ctx.standardized = l.scaling.has_value();
    ctx.feature_names = l.ld.data.feature_names;
    json j = fit_to_json(fit, ctx);
    j["n_starts"] = f.n_starts;
    j["init"] = f.init;
    j["tied_sigma"] = f.tied_sigma;
    if (l.scaling) {
        j["standardization"] = scaling_json(*l.scaling);
        j["params_original_scale"] = params_to_json(original_scale(fit.params, *l.scaling));
    } else {
        j["standardization"] = nullptr;
    }
    return j;
}

void write_fit_outputs(const FitResult& fit, const Loaded& l, const FitFlags& f, double lambda, double gamma) {
    write_json(out_path(f.out, "fit.json"), fit_report(fit, l, f, lambda, gamma));
    write_text(out_path(f.out, "fit_coeffs.csv"), coefficients_csv(fit.params));
    if (l.scaling) write_text(out_path(f.out, "fit_coeffs_original.csv"), coefficients_csv(original_scale(fit.params, *l.scaling)));
}

// ------------------------------------------------------------ commands

struct SimFlags {
    std::string family = "gaussian";
    std::string preset = "paper";
    Index n = 300;
    Index p = 6;
    double rho = 0.5;
    std::uint64_t seed = 1;
    std::string out = ".";
};

int cmd_simulate(const SimFlags& s) {
    if (s.preset != "paper") throw UsageError("unknown preset '" + s.preset + "' (only 'paper' is available)");
    SimDesign d = preset_design(s.family, s.p, s.n, s.rho);
    d.seed = s.seed;
    const SimulatedData sim = simulate(d);
    write_dataset_csv(out_path(s.out, "data.csv"), sim.data, sim.z_true);
    json truth = params_to_json(d.truth);
    truth["schema_version"] = kSchemaVersion;
    truth["kind"] = "truth";
    truth["n"] = d.n;
    truth["rho"] = d.rho;
    truth["seed"] = d.seed;
    write_json(out_path(s.out, "truth.json"), truth);
    return 0;
}

int cmd_fit(const FitFlags& f) {
    const Loaded l = load(f);
    const FitResult fit = fit_em(l.ld.data, config_from(f));
    write_fit_outputs(fit, l, f, f.lambda, f.gamma);
    std::cout << "loglik " << format_double(fit.ll_final) << "  df " << fit.df << "  iterations " << fit.n_iters
              << (fit.converged ? "" : "  (not converged)") << (fit.degenerate ? "  (degenerate component)" : "") << "\n";
    return 0;
}

struct SelectFlags {
    std::string k_values = "1,2,3,4,5";
    std::string lambda_grid;
    std::string gamma_grid;
    int grid_points = 7;
    int threads = 1;
};

int cmd_select(const FitFlags& f, const SelectFlags& s) {
    const Loaded l = load(f);
    GridSpec grid = build_default_grid(l.ld.data.n(), 1, s.grid_points);
    grid.k_candidates.clear();
    for (double v : parse_list(s.k_values, "--k-values")) {
        if (v != std::floor(v) || v < 1) throw UsageError("--k-values must be positive integers");
        grid.k_candidates.push_back(static_cast<int>(v));
    }
    if (!s.lambda_grid.empty()) grid.lambda_grid = parse_list(s.lambda_grid, "--lambda-grid");
    if (!s.gamma_grid.empty()) grid.gamma_grid = parse_list(s.gamma_grid, "--gamma-grid");
    FitFlags base_flags = f;
    const SelectionResult sel = select_model(l.ld.data, grid, config_from(base_flags), s.threads);
    write_text(out_path(f.out, "bic_table.csv"), bic_table_csv(sel.table));
    const BicRow& best = sel.table[sel.best_row];
    write_fit_outputs(sel.best, l, f, best.lambda, best.gamma);
    std::cout << "selected K=" << best.k << " lambda=" << format_double(best.lambda) << " gamma=" << format_double(best.gamma)
              << " bic=" << format_double(best.bic) << "\n";
    return 0;
}

struct EvalFlags {
    std::string fit;
    std::string truth;
    std::string data;
    std::string family;
    double zero_tol = 0.0;
    std::string out = ".";
};

MoEParameters fit_params(const json& fit) {
    if (!fit.contains("params")) throw IoError("fit report has no 'params' section");
    return params_from_json(fit["params"]);
}

int cmd_evaluate(const EvalFlags& e) {
    if (e.truth.empty() && e.data.empty()) throw UsageError("evaluate needs --truth and/or --data with a z_true column");
    const json fit_json = read_json_file(e.fit);
    MoEParameters est = fit_params(fit_json);
    json metrics;
    metrics["schema_version"] = kSchemaVersion;
    metrics["kind"] = "metrics";
    metrics["k"] = est.k;
    if (est.k > 2)
        metrics["caveat"] = "for K > 2 the penalized objective after relabeling can differ; support metrics use the "
                            "ordering closest to the truth";
    std::vector<int> perm(static_cast<std::size_t>(est.k));
    std::iota(perm.begin(), perm.end(), 0);
    if (!e.truth.empty()) {
        const MoEParameters truth = params_from_json(read_json_file(e.truth));
        if (truth.k != est.k || truth.p() != est.p() || truth.family() != est.family())
            throw DataError("fit and truth have different shapes (K, p or family)");
        const Canonicalized c = canonicalize_labels(est, truth);
        perm = c.permutation;
        est = c.params;
        SupportOptions so;
        so.zero_tol = e.zero_tol;
        metrics["zero_tolerance"] = e.zero_tol;
        metrics["support"] = support_to_json(support_metrics(est, truth, so));
        const MseReport mse = parameter_mse(est, truth);
        metrics["mse"] = mse_to_json(mse);
        write_text(out_path(e.out, "metrics_mse.csv"), mse_csv(mse));
    }
    if (!e.data.empty()) {
        const std::string fam = e.family.empty() ? fit_json.value("family", std::string("gaussian")) : e.family;
        LabeledDataset ld = read_dataset_csv(e.data, family_from_string(fam));
        if (ld.z_true.empty()) throw DataError("'" + e.data + "' has no z_true column");
        if (auto s = scaling_from_fit(fit_json)) apply_scaling(ld.data, *s);
        const std::vector<int> labels = hard_assignment(e_step(ld.data, est));
        const ClassificationRate rate = correct_classification_rate(labels, ld.z_true);
        const AdjustedRand ari = adjusted_rand_index(labels, ld.z_true);
        metrics["classification_rate"] = rate.rate;
        metrics["classification_greedy"] = rate.greedy;
        metrics["ari"] = ari.value;
        metrics["ari_degenerate"] = ari.degenerate;
    }
    metrics["permutation"] = perm;
    write_json(out_path(e.out, "metrics.json"), metrics);
    return 0;
}

struct PredictFlags {
    std::string fit;
    std::string data;
    std::string out = ".";
};

int cmd_predict(const PredictFlags& pf) {
    const json fit_json = read_json_file(pf.fit);
    const MoEParameters params = fit_params(fit_json);
    CsvTable table = read_csv_file(pf.data);
    // every column that the fit was trained on, by name
    const auto names = fit_json.value("feature_names", std::vector<std::string>{});
    MatrixXd x(table.values.rows(), params.p());
    for (Index j = 0; j < params.p(); ++j) {
        const std::string name = j < static_cast<Index>(names.size()) ? names[static_cast<std::size_t>(j)] : "x" + std::to_string(j + 1);
        const auto it = std::find(table.header.begin(), table.header.end(), name);
        if (it == table.header.end()) throw DataError("'" + pf.data + "' has no column '" + name + "'");
        x.col(j) = table.values.col(static_cast<Index>(it - table.header.begin()));
    }
    if (auto s = scaling_from_fit(fit_json)) apply_scaling_matrix(x, *s);
    std::ostringstream out;
    out << "prediction,component\n";
    for (Index i = 0; i < x.rows(); ++i) {
        const Prediction p = predict_response(x.row(i).transpose(), params);
        out << format_double(p.value) << ',' << p.component + 1 << '\n';
    }
    write_text(out_path(pf.out, "predictions.csv"), out.str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse mixture-of-experts: simulate, fit, select, evaluate, predict"};
    app.require_subcommand(1);

    SimFlags sim;
    auto* simulate_cmd = app.add_subcommand("simulate", "write data.csv and truth.json for a preset design");
    simulate_cmd->add_option("--family", sim.family, "gaussian | poisson | logistic")->capture_default_str();
    simulate_cmd->add_option("--preset", sim.preset, "design preset")->capture_default_str();
    simulate_cmd->add_option("--n", sim.n, "observations")->capture_default_str()->check(CLI::PositiveNumber);
    simulate_cmd->add_option("--p", sim.p, "covariates")->capture_default_str()->check(CLI::PositiveNumber);
    simulate_cmd->add_option("--rho", sim.rho, "AR correlation base")->capture_default_str();
    simulate_cmd->add_option("--seed", sim.seed, "random seed")->capture_default_str();
    simulate_cmd->add_option("--out", sim.out, "output directory")->capture_default_str();

    FitFlags fit_flags;
    auto* fit_cmd = app.add_subcommand("fit", "fit one (K, lambda, gamma); write fit.json and fit_coeffs.csv");
    add_fit_flags(fit_cmd, fit_flags, true);

    FitFlags sel_flags;
    SelectFlags sel;
    auto* select_cmd = app.add_subcommand("select", "grid search by modified BIC; write bic_table.csv and the best fit");
    add_fit_flags(select_cmd, sel_flags, false);
    select_cmd->add_option("--k-values", sel.k_values, "comma-separated K candidates")->capture_default_str();
    select_cmd->add_option("--lambda-grid", sel.lambda_grid, "comma-separated ascending lambdas (default: log grid on sqrt(n))");
    select_cmd->add_option("--gamma-grid", sel.gamma_grid, "comma-separated ascending gammas (default: log grid on sqrt(n))");
    select_cmd->add_option("--grid-points", sel.grid_points, "points in the default grids")->capture_default_str()->check(CLI::PositiveNumber);
    select_cmd->add_option("--threads", sel.threads, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);

    EvalFlags ev;
    auto* eval_cmd = app.add_subcommand("evaluate", "support, MSE, classification rate and ARI; write metrics.json");
    eval_cmd->add_option("--fit", ev.fit, "fit.json")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--truth", ev.truth, "truth.json")->check(CLI::ExistingFile);
    eval_cmd->add_option("--data", ev.data, "CSV with a z_true column")->check(CLI::ExistingFile);
    eval_cmd->add_option("--family", ev.family, "override the family stored in fit.json");
    eval_cmd->add_option("--zero-tol", ev.zero_tol, "|beta| <= tol counts as zero (default exact)")->capture_default_str();
    eval_cmd->add_option("--out", ev.out, "output directory")->capture_default_str();

    PredictFlags pr;
    auto* predict_cmd = app.add_subcommand("predict", "predict responses; write predictions.csv");
    predict_cmd->add_option("--fit", pr.fit, "fit.json")->required()->check(CLI::ExistingFile);
    predict_cmd->add_option("--data", pr.data, "CSV with the fitted covariate columns")->required()->check(CLI::ExistingFile);
    predict_cmd->add_option("--out", pr.out, "output directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*simulate_cmd) return cmd_simulate(sim);
        if (*fit_cmd) return cmd_fit(fit_flags);
        if (*select_cmd) return cmd_select(sel_flags, sel);
        if (*eval_cmd) return cmd_evaluate(ev);
        if (*predict_cmd) return cmd_predict(pr);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const IoError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const DimensionError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const json::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitUsage;
}
