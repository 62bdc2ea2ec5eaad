#ifndef RMOE_IO_HPP
#define RMOE_IO_HPP

// CSV and JSON serialization. Numbers are written in the shortest decimal
// form that parses back to the same double.

#include "rmoe/evaluation.hpp"
#include "rmoe/selection.hpp"
#include "rmoe/types.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

namespace rmoe {

inline constexpr int kSchemaVersion = 1;

/// Thrown for unreadable files and malformed content.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::string format_double(double v) {
    if (v == 0.0) return "0";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cell += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cell += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            cells.push_back(std::move(cell));
            cell.clear();
        } else if (ch != '\r') {
            cell += ch;
        }
    }
    cells.push_back(std::move(cell));
    return cells;
}

/// Header plus numeric rows.
struct CsvTable {
    std::vector<std::string> header;
    MatrixXd values;
};

inline CsvTable read_csv(std::istream& in, const std::string& source = "<stream>") {
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw IoError(source + ": empty file, a header row is required");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    t.header = split_csv_line(line);
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != t.header.size())
            throw IoError(source + ": row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                          " cells, header has " + std::to_string(t.header.size()));
        std::vector<double> row;
        row.reserve(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const auto v = parse_double(cells[c]);
            if (!v)
                throw IoError(source + ": non-numeric cell '" + cells[c] + "' at row " + std::to_string(line_no) +
                              ", column " + std::to_string(c + 1) + " (" + t.header[c] + ")");
            row.push_back(*v);
        }
        rows.push_back(std::move(row));
    }
    t.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.header.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) t.values(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
    return t;
}

inline CsvTable read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return read_csv(in, path);
}

inline void write_csv(std::ostream& out, const CsvTable& t) {
    for (std::size_t c = 0; c < t.header.size(); ++c) out << (c ? "," : "") << t.header[c];
    out << '\n';
    for (Index r = 0; r < t.values.rows(); ++r) {
        for (Index c = 0; c < t.values.cols(); ++c) out << (c ? "," : "") << format_double(t.values(r, c));
        out << '\n';
    }
}

inline std::ofstream open_for_writing(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    return out;
}

struct LabeledDataset {
    Dataset data;
    std::vector<int> z_true; ///< empty when the file has no truth column
};

/// Response column `response` (default "y"), optional truth column `truth`
/// (default "z_true"); every other column is a covariate.
inline LabeledDataset dataset_from_table(const CsvTable& t, Family family, const std::string& response = "y",
                                         const std::string& truth = "z_true") {
    std::optional<std::size_t> y_col;
    std::optional<std::size_t> z_col;
    std::vector<std::size_t> x_cols;
    for (std::size_t c = 0; c < t.header.size(); ++c) {
        if (t.header[c] == response) y_col = c;
        else if (t.header[c] == truth) z_col = c;
        else x_cols.push_back(c);
    }
    if (!y_col) throw IoError("no response column named '" + response + "'");
    if (x_cols.empty()) throw IoError("no covariate columns");
    const Index n = t.values.rows();
    MatrixXd x(n, static_cast<Index>(x_cols.size()));
    std::vector<std::string> names;
    for (std::size_t j = 0; j < x_cols.size(); ++j) {
        x.col(static_cast<Index>(j)) = t.values.col(static_cast<Index>(x_cols[j]));
        names.push_back(t.header[x_cols[j]]);
    }
    LabeledDataset out;
    out.data = make_dataset(std::move(x), t.values.col(static_cast<Index>(*y_col)), family, std::move(names));
    if (z_col) {
        for (Index i = 0; i < n; ++i) {
            const double z = t.values(i, static_cast<Index>(*z_col));
            if (z != std::floor(z) || z < 1) throw DataError("truth label at row " + std::to_string(i + 2) + " is not a positive integer");
            out.z_true.push_back(static_cast<int>(z));
        }
    }
    return out;
}

inline LabeledDataset read_dataset_csv(const std::string& path, Family family, const std::string& response = "y") {
    return dataset_from_table(read_csv_file(path), family, response);
}

inline CsvTable dataset_table(const Dataset& data, const std::vector<int>& z_true = {}) {
    CsvTable t;
    const Index p = data.p();
    for (Index j = 0; j < p; ++j)
        t.header.push_back(static_cast<Index>(data.feature_names.size()) == p ? data.feature_names[static_cast<std::size_t>(j)]
                                                                             : "x" + std::to_string(j + 1));
    t.header.push_back("y");
    const bool with_truth = !z_true.empty();
    if (with_truth) t.header.push_back("z_true");
    t.values.resize(data.n(), p + 1 + (with_truth ? 1 : 0));
    t.values.leftCols(p) = data.x;
    t.values.col(p) = data.y;
    if (with_truth)
        for (Index i = 0; i < data.n(); ++i) t.values(i, p + 1) = z_true[static_cast<std::size_t>(i)];
    return t;
}

inline void write_dataset_csv(const std::string& path, const Dataset& data, const std::vector<int>& z_true = {}) {
    auto out = open_for_writing(path);
    write_csv(out, dataset_table(data, z_true));
}

// ---------------------------------------------------------------- JSON

using json = nlohmann::ordered_json;

namespace detail {

inline json matrix_json(const MatrixXd& m) {
    json rows = json::array();
    for (Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline MatrixXd matrix_from_json(const json& j, Index cols) {
    if (!j.is_array()) throw IoError("expected a matrix (array of rows)");
    MatrixXd m(static_cast<Index>(j.size()), cols);
    for (std::size_t r = 0; r < j.size(); ++r) {
        if (!j[r].is_array() || static_cast<Index>(j[r].size()) != cols) throw IoError("matrix row has the wrong length");
        for (std::size_t c = 0; c < j[r].size(); ++c) m(static_cast<Index>(r), static_cast<Index>(c)) = j[r][c].get<double>();
    }
    return m;
}

inline json vector_json(const VectorXd& v) {
    json a = json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

} // namespace detail

inline json params_to_json(const MoEParameters& params) {
    json j;
    j["family"] = to_string(params.family());
    j["k"] = params.k;
    j["p"] = params.p();
    j["levels"] = params.levels();
    j["gating"] = detail::matrix_json(params.gating.w);
    json experts;
    std::visit(overloaded{[&](const GaussianExperts& g) {
                              experts["beta"] = detail::matrix_json(g.beta);
                              experts["sigma"] = detail::vector_json(g.sigma);
                          },
                          [&](const PoissonExperts& g) { experts["beta"] = detail::matrix_json(g.beta); },
                          [&](const MultinomialExperts& g) {
                              json blocks = json::array();
                              for (const auto& b : g.beta) blocks.push_back(detail::matrix_json(b));
                              experts["beta"] = std::move(blocks);
                          }},
               params.experts);
    j["experts"] = std::move(experts);
    return j;
}

inline MoEParameters params_from_json(const json& j) {
    try {
        const Family family = family_from_string(j.at("family").get<std::string>());
        const int k = j.at("k").get<int>();
        const Index p = j.at("p").get<Index>();
        const int levels = j.value("levels", 0);
        MoEParameters params = zero_params(family, k, p, levels);
        params.gating.w = detail::matrix_from_json(j.at("gating"), p + 1);
        const json& e = j.at("experts");
        std::visit(overloaded{[&](GaussianExperts& g) {
                                  g.beta = detail::matrix_from_json(e.at("beta"), p + 1);
                                  const auto s = e.at("sigma").get<std::vector<double>>();
                                  g.sigma = Eigen::Map<const VectorXd>(s.data(), static_cast<Index>(s.size()));
                              },
                              [&](PoissonExperts& g) { g.beta = detail::matrix_from_json(e.at("beta"), p + 1); },
                              [&](MultinomialExperts& g) {
                                  g.beta.clear();
                                  for (const auto& b : e.at("beta")) g.beta.push_back(detail::matrix_from_json(b, p + 1));
                              }},
                   params.experts);
        validate(params);
        return params;
    } catch (const json::exception& ex) {
        throw IoError(std::string("malformed parameter JSON: ") + ex.what());
    }
}

struct FitReportContext {
    Index n = 0;
    double lambda = 0.0;
    double gamma = 0.0;
    std::uint64_t seed = 0;
    std::string gating_variant;
    bool standardized = false;
    std::vector<std::string> feature_names;
};

inline json fit_to_json(const FitResult& fit, const FitReportContext& ctx) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["kind"] = "fit";
    j["family"] = to_string(fit.params.family());
    j["n"] = ctx.n;
    j["k"] = fit.params.k;
    j["lambda"] = ctx.lambda;
    j["gamma"] = ctx.gamma;
    j["seed"] = ctx.seed;
    j["gating_variant"] = ctx.gating_variant;
    j["standardized"] = ctx.standardized;
    j["feature_names"] = ctx.feature_names;
    j["params"] = params_to_json(fit.params);
    j["loglik"] = fit.ll_final;
    j["penalized_loglik"] = fit.pl_final;
    j["df"] = fit.df;
    j["df_counts"] = "gating intercepts + nonzero gating slopes + expert intercepts + nonzero expert slopes + sigmas";
    j["bic"] = modified_bic(fit, ctx.n);
    j["n_iters"] = fit.n_iters;
    j["converged"] = fit.converged;
    j["degenerate"] = fit.degenerate;
    j["pl_trace"] = fit.pl_trace;
    json summary;
    const VectorXd mass = fit.responsibilities.colwise().sum().transpose();
    summary["component_mass"] = detail::vector_json(mass);
    std::vector<int> counts(static_cast<std::size_t>(fit.params.k), 0);
    for (int z : hard_assignment(fit.responsibilities)) ++counts[static_cast<std::size_t>(z - 1)];
    summary["hard_counts"] = counts;
    j["responsibilities"] = std::move(summary);
    return j;
}

/// Long-format coefficient table: block, index, value.
inline std::string coefficients_csv(const MoEParameters& params) {
    std::ostringstream out;
    out << "block,index,value\n";
    const auto emit = [&](const std::string& block, const Eigen::Ref<const VectorXd>& v) {
        for (Index j = 0; j < v.size(); ++j) out << block << ',' << j << ',' << format_double(v(j)) << '\n';
    };
    std::visit(overloaded{[&](const GaussianExperts& g) {
                              for (Index k = 0; k < g.beta.rows(); ++k) emit("expert" + std::to_string(k + 1), g.beta.row(k).transpose());
                          },
                          [&](const PoissonExperts& g) {
                              for (Index k = 0; k < g.beta.rows(); ++k) emit("expert" + std::to_string(k + 1), g.beta.row(k).transpose());
                          },
                          [&](const MultinomialExperts& g) {
                              for (std::size_t k = 0; k < g.beta.size(); ++k)
                                  for (Index r = 0; r < g.beta[k].rows(); ++r)
                                      emit("expert" + std::to_string(k + 1) + ".level" + std::to_string(r + 1),
                                           g.beta[k].row(r).transpose());
                          }},
               params.experts);
    for (Index k = 0; k < params.gating.w.rows(); ++k) emit("gate" + std::to_string(k + 1), params.gating.w.row(k).transpose());
    if (const auto* g = std::get_if<GaussianExperts>(&params.experts))
        for (Index k = 0; k < g->sigma.size(); ++k) out << "sigma," << k + 1 << ',' << format_double(g->sigma(k)) << '\n';
    return out.str();
}

inline std::string bic_table_csv(const std::vector<BicRow>& rows) {
    std::ostringstream out;
    out << "K,lambda,gamma,loglik,df,bic,converged\n";
    for (const BicRow& r : rows) {
        out << r.k << ',' << format_double(r.lambda) << ',' << format_double(r.gamma) << ','
            << (r.error.empty() ? format_double(r.loglik) : "nan") << ',' << r.df << ','
            << (r.error.empty() ? format_double(r.bic) : "nan") << ',' << (r.converged ? 1 : 0) << '\n';
    }
    return out.str();
}

inline json support_to_json(const SupportReport& report) {
    json blocks = json::array();
    for (const BlockSupport& b : report.blocks) {
        json j;
        j["block"] = b.block;
        j["sensitivity"] = b.sensitivity ? json(*b.sensitivity) : json(nullptr);
        j["specificity"] = b.specificity ? json(*b.specificity) : json(nullptr);
        j["true_zeros"] = b.true_zeros;
        j["true_nonzeros"] = b.true_nonzeros;
        blocks.push_back(std::move(j));
    }
    return blocks;
}

inline json mse_to_json(const MseReport& report) {
    json j;
    json entries = json::array();
    for (const CoefficientError& e : report.entries) {
        json row;
        row["block"] = e.block;
        row["index"] = e.index;
        row["truth"] = e.truth;
        row["estimate"] = e.estimate;
        row["squared_error"] = e.squared_error;
        entries.push_back(std::move(row));
    }
    j["entries"] = std::move(entries);
    json totals;
    for (const auto& [block, total] : report.block_totals) totals[block] = total;
    j["block_totals"] = std::move(totals);
    return j;
}

inline std::string mse_csv(const MseReport& report) {
    std::ostringstream out;
    out << "block,index,truth,estimate,squared_error\n";
    for (const CoefficientError& e : report.entries)
        out << e.block << ',' << e.index << ',' << format_double(e.truth) << ',' << format_double(e.estimate) << ','
            << format_double(e.squared_error) << '\n';
    return out.str();
}

inline void write_text(const std::string& path, const std::string& text) {
    auto out = open_for_writing(path);
    out << text;
    if (!out) throw IoError("failed writing '" + path + "'");
}

inline void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    try {
        return json::parse(in);
    } catch (const json::exception& ex) {
        throw IoError(path + ": " + ex.what());
    }
}

} // namespace rmoe

#endif
