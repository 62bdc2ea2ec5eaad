#ifndef RMOE_SELECTION_HPP
#define RMOE_SELECTION_HPP

#include "rmoe/em.hpp"
#include "rmoe/types.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace rmoe {

/// BIC(K, lambda, gamma) = L(theta) - DF log(n) / 2, to be maximized.
inline double modified_bic(double loglik, int df, Index n) {
    return loglik - static_cast<double>(df) * std::log(static_cast<double>(n)) / 2.0;
}

inline double modified_bic(const FitResult& fit, Index n) { return modified_bic(fit.ll_final, fit.df, n); }

struct GridSpec {
    std::vector<int> k_candidates;
    std::vector<double> lambda_grid;
    std::vector<double> gamma_grid;

    std::size_t size() const { return k_candidates.size() * lambda_grid.size() * gamma_grid.size(); }
};

inline void validate(const GridSpec& grid) {
    if (grid.k_candidates.empty() || grid.lambda_grid.empty() || grid.gamma_grid.empty())
        throw std::invalid_argument("grid dimensions must be non-empty");
    for (int k : grid.k_candidates)
        if (k < 1) throw std::invalid_argument("grid K values must be >= 1");
    const auto sorted_nonneg = [](const std::vector<double>& v) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!(v[i] >= 0.0)) return false;
            if (i > 0 && v[i] < v[i - 1]) return false;
        }
        return true;
    };
    if (!sorted_nonneg(grid.lambda_grid) || !sorted_nonneg(grid.gamma_grid))
        throw std::invalid_argument("penalty grids must be non-negative and sorted ascending");
}

/// `points` log-spaced values from lo to hi inclusive.
inline std::vector<double> log_grid(double lo, double hi, int points) {
    if (points < 1 || !(lo > 0.0) || !(hi >= lo)) throw std::invalid_argument("invalid log grid");
    std::vector<double> out(static_cast<std::size_t>(points));
    if (points == 1) {
        out[0] = lo;
        return out;
    }
    const double a = std::log(lo);
    const double step = (std::log(hi) - a) / (points - 1);
    for (int i = 0; i < points; ++i) out[static_cast<std::size_t>(i)] = std::exp(a + step * i);
    out.back() = hi;
    return out;
}

/// lambda and gamma grids of 7 log-spaced points from 0.01 sqrt(n) to 2 sqrt(n); K in 1..5.
inline GridSpec build_default_grid(Index n, int max_k = 5, int points = 7) {
    if (n < 4) throw std::invalid_argument("default grid needs n >= 4");
    const double anchor = std::sqrt(static_cast<double>(n));
    GridSpec g;
    for (int k = 1; k <= max_k; ++k) g.k_candidates.push_back(k);
    g.lambda_grid = log_grid(0.01 * anchor, 2.0 * anchor, points);
    g.gamma_grid = g.lambda_grid;
    return g;
}

struct BicRow {
    int k = 0;
    double lambda = 0.0;
    double gamma = 0.0;
    double loglik = 0.0;
    int df = 0;
    double bic = -std::numeric_limits<double>::infinity();
    bool converged = false;
    bool degenerate = false;
    std::string error; ///< non-empty when the fit failed
};

struct SelectionResult {
    FitResult best;
    std::size_t best_row = 0;
    std::vector<BicRow> table; ///< ordered by K, then gamma, then lambda
};

/// Fits every (K, lambda, gamma) cell and keeps the BIC maximizer. Along each
/// lambda path at fixed (K, gamma) the next fit warm-starts from the previous
/// solution. Ties: smaller DF, then smaller K. Degenerate or failed fits are
/// reported in the table but never selected.
inline SelectionResult select_model(const Dataset& data, const GridSpec& grid, const FitConfig& base, int threads = 1) {
    validate(data);
    validate(grid);
    struct PathKey {
        int k;
        double gamma;
    };
    std::vector<PathKey> paths;
    for (int k : grid.k_candidates)
        for (double g : grid.gamma_grid) paths.push_back({k, g});

    using PathOut = std::vector<std::pair<BicRow, std::optional<FitResult>>>;
    const auto run_path = [&](const PathKey& key) {
        PathOut out;
        std::optional<MoEParameters> warm;
        for (double lambda : grid.lambda_grid) {
            FitConfig cfg = base;
            cfg.k = key.k;
            cfg.penalty = PenaltyConfig::uniform(key.k, lambda, key.gamma);
            cfg.warm_start = warm;
            BicRow row;
            row.k = key.k;
            row.lambda = lambda;
            row.gamma = key.gamma;
            try {
                FitResult fit = fit_em(data, cfg);
                row.loglik = fit.ll_final;
                row.df = fit.df;
                row.bic = modified_bic(fit, data.n());
                row.converged = fit.converged;
                row.degenerate = fit.degenerate;
                warm = fit.raw_params;
                out.emplace_back(row, std::move(fit));
            } catch (const std::exception& e) {
                row.error = e.what();
                warm.reset();
                out.emplace_back(row, std::nullopt);
            }
        }
        return out;
    };
    std::vector<PathOut> results = parallel_map(paths, run_path, threads);

    SelectionResult sel;
    std::optional<std::size_t> best;
    std::vector<std::optional<FitResult>> fits;
    for (auto& path : results)
        for (auto& [row, fit] : path) {
            sel.table.push_back(row);
            fits.push_back(std::move(fit));
        }
    for (std::size_t i = 0; i < sel.table.size(); ++i) {
        const BicRow& r = sel.table[i];
        if (!fits[i] || r.degenerate || !std::isfinite(r.bic)) continue;
        if (!best) {
            best = i;
            continue;
        }
        const BicRow& b = sel.table[*best];
        if (r.bic > b.bic || (r.bic == b.bic && (r.df < b.df || (r.df == b.df && r.k < b.k)))) best = i;
    }
    if (!best) {
        std::ostringstream msg;
        msg << "model selection: every grid fit failed or was degenerate";
        for (const BicRow& r : sel.table)
            msg << "\n  K=" << r.k << " lambda=" << r.lambda << " gamma=" << r.gamma << ": "
                << (r.error.empty() ? "degenerate component" : r.error);
        throw NumericalError(msg.str());
    }
    sel.best_row = *best;
    sel.best = std::move(*fits[*best]);
    return sel;
}

} // namespace rmoe

#endif
