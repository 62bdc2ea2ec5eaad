#ifndef RMOE_EVALUATION_HPP
#define RMOE_EVALUATION_HPP

#include "rmoe/em.hpp"
#include "rmoe/types.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace rmoe {

/// Support recovery for one coefficient block (slopes only).
/// sensitivity: fraction of true zeros estimated as zero.
/// specificity: fraction of true nonzeros estimated as nonzero.
/// Either is empty when the block has no true zeros / nonzeros.
struct BlockSupport {
    std::string block;
    std::optional<double> sensitivity;
    std::optional<double> specificity;
    int true_zeros = 0;
    int true_nonzeros = 0;
};

struct SupportReport {
    std::vector<BlockSupport> blocks; ///< experts 1..K, then gates 1..K-1
};

struct SupportOptions {
    /// |beta| <= zero_tol counts as zero; 0 means exact equality with 0.0.
    double zero_tol = 0.0;
};

namespace detail {

inline void check_same_shape(const MoEParameters& a, const MoEParameters& b) {
    if (a.k != b.k || a.p() != b.p() || a.family() != b.family() || a.levels() != b.levels())
        throw DimensionError("estimated and true parameters have different shapes");
}

/// Slopes of expert k, all levels concatenated.
inline VectorXd expert_slopes(const MoEParameters& params, int k) {
    return std::visit(overloaded{[&](const GaussianExperts& g) -> VectorXd { return g.beta.row(k).tail(g.beta.cols() - 1).transpose(); },
                                 [&](const PoissonExperts& g) -> VectorXd { return g.beta.row(k).tail(g.beta.cols() - 1).transpose(); },
                                 [&](const MultinomialExperts& g) -> VectorXd {
                                     const MatrixXd& b = g.beta[static_cast<std::size_t>(k)];
                                     VectorXd v((b.cols() - 1) * b.rows());
                                     for (Index r = 0; r < b.rows(); ++r) v.segment(r * (b.cols() - 1), b.cols() - 1) = b.row(r).tail(b.cols() - 1).transpose();
                                     return v;
                                 }},
                      params.experts);
}

inline BlockSupport block_support(std::string name, const VectorXd& est, const VectorXd& truth, double zero_tol) {
    BlockSupport s;
    s.block = std::move(name);
    int zero_hits = 0;
    int nonzero_hits = 0;
    for (Index j = 0; j < truth.size(); ++j) {
        const bool est_zero = zero_tol > 0.0 ? std::abs(est(j)) <= zero_tol : est(j) == 0.0;
        if (truth(j) == 0.0) {
            ++s.true_zeros;
            if (est_zero) ++zero_hits;
        } else {
            ++s.true_nonzeros;
            if (!est_zero) ++nonzero_hits;
        }
    }
    if (s.true_zeros > 0) s.sensitivity = static_cast<double>(zero_hits) / s.true_zeros;
    if (s.true_nonzeros > 0) s.specificity = static_cast<double>(nonzero_hits) / s.true_nonzeros;
    return s;
}

} // namespace detail

/// Both inputs must already share a component ordering (see canonicalize_labels).
inline SupportReport support_metrics(const MoEParameters& estimated, const MoEParameters& truth,
                                     const SupportOptions& opts = {}) {
    detail::check_same_shape(estimated, truth);
    SupportReport report;
    for (int k = 0; k < truth.k; ++k)
        report.blocks.push_back(detail::block_support("expert" + std::to_string(k + 1), detail::expert_slopes(estimated, k),
                                                      detail::expert_slopes(truth, k), opts.zero_tol));
    for (Index k = 0; k < truth.gating.w.rows(); ++k) {
        const Index width = truth.gating.w.cols() - 1;
        report.blocks.push_back(detail::block_support("gate" + std::to_string(k + 1),
                                                      estimated.gating.w.row(k).tail(width).transpose(),
                                                      truth.gating.w.row(k).tail(width).transpose(), opts.zero_tol));
    }
    return report;
}

/// One named coefficient and its squared error.
struct CoefficientError {
    std::string block;
    int index = 0; ///< 0 = intercept, j = slope j (multinomial: level-major within the block)
    double truth = 0.0;
    double estimate = 0.0;
    double squared_error = 0.0;
};

struct MseReport {
    std::vector<CoefficientError> entries;
    std::map<std::string, double> block_totals; ///< sum of squared errors per block
};

/// Elementwise squared errors over all expert coefficients, gating rows and sigmas.
inline MseReport parameter_mse(const MoEParameters& estimated, const MoEParameters& truth) {
    detail::check_same_shape(estimated, truth);
    MseReport out;
    auto add = [&](const std::string& block, int idx, double t, double e) {
        const double se = (t - e) * (t - e);
        out.entries.push_back({block, idx, t, e, se});
        out.block_totals[block] += se;
    };
    for (int k = 0; k < truth.k; ++k) {
        const VectorXd t = expert_coefficients(truth, k);
        const VectorXd e = expert_coefficients(estimated, k);
        for (Index j = 0; j < t.size(); ++j) add("expert" + std::to_string(k + 1), static_cast<int>(j), t(j), e(j));
    }
    for (Index k = 0; k < truth.gating.w.rows(); ++k)
        for (Index j = 0; j < truth.gating.w.cols(); ++j)
            add("gate" + std::to_string(k + 1), static_cast<int>(j), truth.gating.w(k, j), estimated.gating.w(k, j));
    if (const auto* g = std::get_if<GaussianExperts>(&truth.experts)) {
        const auto& ge = std::get<GaussianExperts>(estimated.experts);
        for (Index k = 0; k < g->sigma.size(); ++k) add("sigma", static_cast<int>(k + 1), g->sigma(k), ge.sigma(k));
    }
    return out;
}

/// Bayes allocation: 1-based argmax of each row; ties go to the lowest index.
inline std::vector<int> hard_assignment(const Responsibilities& tau) {
    std::vector<int> labels(static_cast<std::size_t>(tau.rows()));
    for (Index i = 0; i < tau.rows(); ++i) {
        Index best = 0;
        for (Index k = 1; k < tau.cols(); ++k)
            if (tau(i, k) > tau(i, best)) best = k;
        labels[static_cast<std::size_t>(i)] = static_cast<int>(best) + 1;
    }
    return labels;
}

struct ClassificationRate {
    double rate = 0.0;
    bool greedy = false; ///< more than 6 labels: greedy matching, not exhaustive
};

namespace detail {

/// Dense relabeling of arbitrary integer labels to 0..m-1 (sorted order).
inline std::vector<int> dense_labels(const std::vector<int>& labels, int& count) {
    std::vector<int> uniq(labels);
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    count = static_cast<int>(uniq.size());
    std::vector<int> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
        out[i] = static_cast<int>(std::lower_bound(uniq.begin(), uniq.end(), labels[i]) - uniq.begin());
    return out;
}

inline MatrixXd contingency(const std::vector<int>& a, const std::vector<int>& b, int& ka, int& kb) {
    const std::vector<int> da = dense_labels(a, ka);
    const std::vector<int> db = dense_labels(b, kb);
    MatrixXd table = MatrixXd::Zero(ka, kb);
    for (std::size_t i = 0; i < a.size(); ++i) table(da[i], db[i]) += 1.0;
    return table;
}

} // namespace detail

/// Best agreement over all one-to-one matchings of estimated to true labels.
inline ClassificationRate correct_classification_rate(const std::vector<int>& estimated, const std::vector<int>& truth) {
    if (estimated.size() != truth.size()) throw DimensionError("label vectors differ in length");
    if (estimated.empty()) throw std::invalid_argument("label vectors are empty");
    int ka = 0;
    int kb = 0;
    const MatrixXd table = detail::contingency(estimated, truth, ka, kb);
    const int m = std::max(ka, kb);
    MatrixXd square = MatrixXd::Zero(m, m);
    square.topLeftCorner(ka, kb) = table;
    ClassificationRate out;
    double best = 0.0;
    if (m <= 6) {
        std::vector<int> perm(static_cast<std::size_t>(m));
        std::iota(perm.begin(), perm.end(), 0);
        do {
            double hits = 0.0;
            for (int r = 0; r < m; ++r) hits += square(r, perm[static_cast<std::size_t>(r)]);
            best = std::max(best, hits);
        } while (std::next_permutation(perm.begin(), perm.end()));
    } else {
        out.greedy = true;
        std::vector<bool> row_used(static_cast<std::size_t>(m), false);
        std::vector<bool> col_used(static_cast<std::size_t>(m), false);
        for (int step = 0; step < m; ++step) {
            int br = -1;
            int bc = -1;
            for (int r = 0; r < m; ++r)
                for (int c = 0; c < m; ++c)
                    if (!row_used[static_cast<std::size_t>(r)] && !col_used[static_cast<std::size_t>(c)] &&
                        (br < 0 || square(r, c) > square(br, bc))) {
                        br = r;
                        bc = c;
                    }
            row_used[static_cast<std::size_t>(br)] = true;
            col_used[static_cast<std::size_t>(bc)] = true;
            best += square(br, bc);
        }
    }
    out.rate = best / static_cast<double>(estimated.size());
    return out;
}

struct AdjustedRand {
    double value = 0.0;
    bool degenerate = false; ///< n = 1 or both partitions trivial; value set to 1 by convention
};

/// Hubert-Arabie adjusted Rand index from the contingency table.
inline AdjustedRand adjusted_rand_index(const std::vector<int>& estimated, const std::vector<int>& truth) {
    if (estimated.size() != truth.size()) throw DimensionError("label vectors differ in length");
    if (estimated.empty()) throw std::invalid_argument("label vectors are empty");
    const auto choose2 = [](double v) { return v * (v - 1.0) / 2.0; };
    int ka = 0;
    int kb = 0;
    const MatrixXd table = detail::contingency(estimated, truth, ka, kb);
    const double n = static_cast<double>(estimated.size());
    double index = 0.0;
    for (Index r = 0; r < table.rows(); ++r)
        for (Index c = 0; c < table.cols(); ++c) index += choose2(table(r, c));
    double rows = 0.0;
    for (Index r = 0; r < table.rows(); ++r) rows += choose2(table.row(r).sum());
    double cols = 0.0;
    for (Index c = 0; c < table.cols(); ++c) cols += choose2(table.col(c).sum());
    const double total = choose2(n);
    AdjustedRand out;
    if (total == 0.0) {
        out.value = 1.0;
        out.degenerate = true;
        return out;
    }
    const double expected = rows * cols / total;
    const double maximum = 0.5 * (rows + cols);
    if (maximum == expected) {
        out.value = 1.0;
        out.degenerate = true;
        return out;
    }
    out.value = (index - expected) / (maximum - expected);
    return out;
}

} // namespace rmoe

#endif
