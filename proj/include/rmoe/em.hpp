#ifndef RMOE_EM_HPP
#define RMOE_EM_HPP

#include "rmoe/experts.hpp"
#include "rmoe/gating.hpp"
#include "rmoe/model.hpp"
#include "rmoe/random.hpp"
#include "rmoe/types.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace rmoe {

enum class InitStrategy {
    random_partition, ///< seeded random hard partition, intercept-only experts, zero gating
    random_hyperplane, ///< partition by argmax of K random linear scores of x, experts fitted per segment, zero gating
};

inline std::string to_string(InitStrategy s) {
    return s == InitStrategy::random_partition ? "random_partition" : "random_hyperplane";
}

inline InitStrategy init_from_string(const std::string& s) {
    if (s == "random_partition" || s == "partition") return InitStrategy::random_partition;
    if (s == "random_hyperplane" || s == "hyperplane") return InitStrategy::random_hyperplane;
    throw std::invalid_argument("unknown init strategy '" + s + "'");
}

struct FitConfig {
    int k = 2;
    PenaltyConfig penalty;
    CurvatureVariant gating_variant = CurvatureVariant::bounded;
    CurvatureVariant expert_variant = CurvatureVariant::bounded;
    double em_tol = 1e-6;
    int max_em_iters = 1000;
    std::uint64_t seed = 1;
    InitStrategy init = InitStrategy::random_partition;
    int n_starts = 1;
    /// Gaussian only: re-run the E-step between the coefficient and sigma updates.
    bool interleaved_sigma = true;
    /// Gaussian only: one sigma shared by all components.
    bool tied_sigma = false;
    GatingUpdateOptions gating{};
    ExpertUpdateOptions experts{};
    /// When set, used instead of init_params (single start).
    std::optional<MoEParameters> warm_start;
};

inline void validate(const FitConfig& config) {
    if (config.k < 1) throw std::invalid_argument("K must be >= 1");
    if (!(config.em_tol > 0.0)) throw std::invalid_argument("em_tol must be > 0");
    if (config.max_em_iters < 1) throw std::invalid_argument("max_em_iters must be >= 1");
    if (config.n_starts < 1) throw std::invalid_argument("n_starts must be >= 1");
    validate(config.penalty, config.k);
}

/// Config with zero penalties for K components.
inline FitConfig default_config(int k, double lambda = 0.0, double gamma = 0.0) {
    FitConfig c;
    c.k = k;
    c.penalty = PenaltyConfig::uniform(k, lambda, gamma);
    return c;
}

struct FitResult {
    MoEParameters params;         ///< canonicalized
    std::vector<double> pl_trace; ///< PL at the start and after every EM iteration
    double ll_final = 0.0;
    double pl_final = 0.0;
    int df = 0;
    int n_iters = 0;
    bool converged = false;
    bool degenerate = false;            ///< some component ran out of mass or collapsed onto a few points
    Responsibilities responsibilities;  ///< columns in canonical order
    std::vector<int> permutation;       ///< canonical component j was fitted component permutation[j]
    MoEParameters raw_params;           ///< fitted parameters before canonicalization
    int best_start = 0;
};

/// Raised when the penalized log-likelihood becomes non-finite; carries the trace so far.
class FitAborted : public NumericalError {
public:
    FitAborted(const std::string& what, std::vector<double> trace) : NumericalError(what), trace_(std::move(trace)) {}
    const std::vector<double>& trace() const noexcept { return trace_; }

private:
    std::vector<double> trace_;
};

// ---------------------------------------------------------------- E-step

/// tau_ik = pi_k p_k / sum_l pi_l p_l, computed in log space.
inline Responsibilities e_step(const Dataset& data, const MoEParameters& params) {
    const MatrixXd joint = joint_log_densities(data, params);
    Responsibilities tau(joint.rows(), joint.cols());
    for (Index i = 0; i < joint.rows(); ++i) {
        const double m = joint.row(i).maxCoeff();
        if (!std::isfinite(m))
            throw NumericalError("e-step: observation " + std::to_string(i + 1) +
                                 " has zero density under every component");
        const Eigen::RowVectorXd e = (joint.row(i).array() - m).exp();
        tau.row(i) = e / e.sum();
    }
    return tau;
}

/// Expected penalized complete-data log-likelihood Q(theta; tau).
inline double q_value(const Dataset& data, const Responsibilities& tau, const MoEParameters& params,
                      const PenaltyConfig& penalty) {
    const MatrixXd joint = joint_log_densities(data, params);
    double total = 0.0;
    for (Index i = 0; i < joint.rows(); ++i)
        for (Index k = 0; k < joint.cols(); ++k)
            if (tau(i, k) != 0.0) total += tau(i, k) * joint(i, k);
    return total - penalty_value(params, penalty);
}

// ---------------------------------------------------------------- init

/// One penalized expert update per component on hard segment indicators.
inline void fit_segment_experts(const Dataset& data, const FitConfig& config,
                                const std::vector<std::vector<Index>>& segments, MoEParameters& params) {
    const int k = params.k;
    Responsibilities hard = Responsibilities::Zero(data.n(), k);
    for (int c = 0; c < k; ++c)
        for (Index i : segments[static_cast<std::size_t>(c)]) hard(i, c) = 1.0;
    ExpertUpdateOptions eopts = config.experts;
    eopts.variant = config.expert_variant;
    std::visit(overloaded{[&](GaussianExperts& g) {
                              for (int c = 0; c < k; ++c) {
                                  const CoefUpdate u = update_gaussian_expert(hard.col(c), data, config.penalty.lambda(c),
                                                                              g.beta.row(c).transpose(), g.sigma(c), eopts.lasso);
                                  g.beta.row(c) = u.coef.transpose();
                                  g.sigma(c) = std::sqrt(update_gaussian_sigma(hard.col(c), data, g.beta.row(c).transpose()));
                              }
                              if (config.tied_sigma) g.sigma.setConstant(std::sqrt(update_tied_sigma(hard, data, g.beta)));
                          },
                          [&](PoissonExperts& g) {
                              for (int c = 0; c < k; ++c)
                                  g.beta.row(c) = update_poisson_expert(hard.col(c), data, config.penalty.lambda(c),
                                                                        g.beta.row(c).transpose(), eopts)
                                                      .coef.transpose();
                          },
                          [&](MultinomialExperts& g) {
                              for (int c = 0; c < k; ++c) {
                                  MatrixXd& block = g.beta[static_cast<std::size_t>(c)];
                                  VectorXd lambdas(block.rows());
                                  for (Index r = 0; r < block.rows(); ++r)
                                      lambdas(r) = config.penalty.expert_level_lambda(c, static_cast<int>(r));
                                  block = update_multinomial_expert(hard.col(c), data, lambdas, block, eopts).block;
                              }
                          }},
               params.experts);
}

inline MoEParameters init_params(const Dataset& data, const FitConfig& config, std::uint64_t seed) {
    const int k = config.k;
    const Index n = data.n();
    const Index p = data.p();
    if (k < 1) throw std::invalid_argument("K must be >= 1");
    if (k > n) throw std::invalid_argument("K = " + std::to_string(k) + " exceeds the number of observations");

    Rng rng(seed);
    std::vector<std::vector<Index>> segments;
    if (config.init == InitStrategy::random_hyperplane && k > 1) {
        // Redraw until every segment can support a regression; fall back below.
        const Index min_size = std::max<Index>(p + 2, n / (4 * k));
        for (int attempt = 0; attempt < 100 && segments.empty(); ++attempt) {
            MatrixXd dirs(p, k);
            VectorXd offsets(k);
            for (int c = 0; c < k; ++c) {
                for (Index j = 0; j < p; ++j) dirs(j, c) = rng.normal();
                offsets(c) = rng.normal();
            }
            const MatrixXd scores = (data.x * dirs).rowwise() + offsets.transpose();
            std::vector<std::vector<Index>> trial(static_cast<std::size_t>(k));
            for (Index i = 0; i < n; ++i) {
                Index best = 0;
                scores.row(i).maxCoeff(&best);
                trial[static_cast<std::size_t>(best)].push_back(i);
            }
            if (std::all_of(trial.begin(), trial.end(), [&](const auto& t) { return static_cast<Index>(t.size()) >= min_size; }))
                segments = std::move(trial);
        }
    }
    if (segments.empty()) {
        // Random permutation dealt round-robin so every segment is non-empty.
        std::vector<Index> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), Index{0});
        for (Index i = n - 1; i > 0; --i) std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(rng.integer(0, i))]);
        segments.assign(static_cast<std::size_t>(k), {});
        for (Index i = 0; i < n; ++i) segments[static_cast<std::size_t>(i % k)].push_back(order[static_cast<std::size_t>(i)]);
    }

    MoEParameters params = zero_params(data.family, k, p, data.levels);
    std::visit(overloaded{[&](GaussianExperts& g) {
                              for (int c = 0; c < k; ++c) {
                                  const auto& seg = segments[static_cast<std::size_t>(c)];
                                  double mean = 0.0;
                                  for (Index i : seg) mean += data.y(i);
                                  mean /= static_cast<double>(seg.size());
                                  double ss = 0.0;
                                  for (Index i : seg) ss += (data.y(i) - mean) * (data.y(i) - mean);
                                  g.beta(c, 0) = mean;
                                  g.sigma(c) = std::max(std::sqrt(ss / static_cast<double>(seg.size())), kSigmaFloor);
                              }
                              if (config.tied_sigma) g.sigma.setConstant(g.sigma.mean());
                          },
                          [&](PoissonExperts& g) {
                              for (int c = 0; c < k; ++c) {
                                  const auto& seg = segments[static_cast<std::size_t>(c)];
                                  double mean = 0.0;
                                  for (Index i : seg) mean += data.y(i);
                                  mean /= static_cast<double>(seg.size());
                                  g.beta(c, 0) = std::log(std::max(mean, 1e-2));
                              }
                          },
                          [&](MultinomialExperts& g) {
                              const int levels = data.levels;
                              for (int c = 0; c < k; ++c) {
                                  const auto& seg = segments[static_cast<std::size_t>(c)];
                                  std::vector<double> counts(static_cast<std::size_t>(levels), 0.5);
                                  for (Index i : seg) counts[static_cast<std::size_t>(data.label(i))] += 1.0;
                                  for (int r = 0; r < levels - 1; ++r)
                                      g.beta[static_cast<std::size_t>(c)](r, 0) =
                                          std::log(counts[static_cast<std::size_t>(r)] / counts.back());
                              }
                          }},
               params.experts);
    if (config.init == InitStrategy::random_hyperplane) fit_segment_experts(data, config, segments, params);
    return params;
}

inline MoEParameters init_params(const Dataset& data, const FitConfig& config) {
    return init_params(data, config, stream_seed(config.seed, 0));
}

// ---------------------------------------------------------------- M-step

struct MStepResult {
    MoEParameters params;
    std::vector<bool> stale;
    bool clamped = false;
};

/// Sigma update for all Gaussian components from the given responsibilities.
inline void update_sigmas(const Dataset& data, const Responsibilities& tau, GaussianExperts& g, bool tied) {
    if (tied) {
        g.sigma.setConstant(std::sqrt(update_tied_sigma(tau, data, g.beta)));
        return;
    }
    for (Index k = 0; k < g.beta.rows(); ++k) {
        if (is_empty_component(tau.col(k))) continue;
        g.sigma(k) = std::sqrt(update_gaussian_sigma(tau.col(k), data, g.beta.row(k).transpose()));
    }
}

/// Gating update followed by every expert update, all against the same tau.
/// For Gaussian experts with interleaved_sigma, sigma is left for the caller.
inline MStepResult m_step(const Dataset& data, const Responsibilities& tau, const MoEParameters& params,
                          const FitConfig& config) {
    const int k = params.k;
    MStepResult out;
    out.params = params;
    out.stale.assign(static_cast<std::size_t>(k), false);

    GatingUpdateOptions gopts = config.gating;
    gopts.variant = config.gating_variant;
    const GatingUpdateResult gres = update_gating(params.gating, tau, data.x, config.penalty.gamma, gopts);
    out.params.gating = gres.gating;
    out.clamped = gres.clamped;

    ExpertUpdateOptions eopts = config.experts;
    eopts.variant = config.expert_variant;
    std::visit(overloaded{[&](GaussianExperts& g) {
                              for (int c = 0; c < k; ++c) {
                                  const CoefUpdate u = update_gaussian_expert(tau.col(c), data, config.penalty.lambda(c),
                                                                              g.beta.row(c).transpose(), g.sigma(c), eopts.lasso);
                                  g.beta.row(c) = u.coef.transpose();
                                  out.stale[static_cast<std::size_t>(c)] = u.stale;
                              }
                              if (!config.interleaved_sigma) update_sigmas(data, tau, g, config.tied_sigma);
                          },
                          [&](PoissonExperts& g) {
                              for (int c = 0; c < k; ++c) {
                                  const CoefUpdate u = update_poisson_expert(tau.col(c), data, config.penalty.lambda(c),
                                                                             g.beta.row(c).transpose(), eopts);
                                  g.beta.row(c) = u.coef.transpose();
                                  out.stale[static_cast<std::size_t>(c)] = u.stale;
                                  out.clamped = out.clamped || u.clamped;
                              }
                          },
                          [&](MultinomialExperts& g) {
                              for (int c = 0; c < k; ++c) {
                                  MatrixXd& block = g.beta[static_cast<std::size_t>(c)];
                                  VectorXd lambdas(block.rows());
                                  for (Index r = 0; r < block.rows(); ++r)
                                      lambdas(r) = config.penalty.expert_level_lambda(c, static_cast<int>(r));
                                  const BlockUpdate u = update_multinomial_expert(tau.col(c), data, lambdas, block, eopts);
                                  block = u.block;
                                  out.stale[static_cast<std::size_t>(c)] = u.stale;
                                  out.clamped = out.clamped || u.clamped;
                              }
                          }},
               out.params.experts);
    return out;
}

// ---------------------------------------------------------------- labels

/// Reorders components: new component j is old component perm[j]. Gating rows
/// become w_perm[j] - w_perm[K-1] so that the new last component is zero.
inline MoEParameters permute_components(const MoEParameters& params, const std::vector<int>& perm) {
    const int k = params.k;
    if (static_cast<int>(perm.size()) != k) throw DimensionError("permutation must have K entries");
    MoEParameters out = params;
    if (k > 1) {
        const Index width = params.gating.w.cols();
        MatrixXd full = MatrixXd::Zero(k, width);
        full.topRows(k - 1) = params.gating.w;
        const Eigen::RowVectorXd last = full.row(perm[static_cast<std::size_t>(k - 1)]);
        for (int j = 0; j < k - 1; ++j) out.gating.w.row(j) = full.row(perm[static_cast<std::size_t>(j)]) - last;
    }
    std::visit(overloaded{[&](GaussianExperts& g) {
                              const GaussianExperts& src = std::get<GaussianExperts>(params.experts);
                              for (int j = 0; j < k; ++j) {
                                  g.beta.row(j) = src.beta.row(perm[static_cast<std::size_t>(j)]);
                                  g.sigma(j) = src.sigma(perm[static_cast<std::size_t>(j)]);
                              }
                          },
                          [&](PoissonExperts& g) {
                              const PoissonExperts& src = std::get<PoissonExperts>(params.experts);
                              for (int j = 0; j < k; ++j) g.beta.row(j) = src.beta.row(perm[static_cast<std::size_t>(j)]);
                          },
                          [&](MultinomialExperts& g) {
                              const MultinomialExperts& src = std::get<MultinomialExperts>(params.experts);
                              for (int j = 0; j < k; ++j)
                                  g.beta[static_cast<std::size_t>(j)] = src.beta[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])];
                          }},
               out.experts);
    return out;
}

inline Responsibilities permute_columns(const Responsibilities& tau, const std::vector<int>& perm) {
    Responsibilities out(tau.rows(), tau.cols());
    for (std::size_t j = 0; j < perm.size(); ++j) out.col(static_cast<Index>(j)) = tau.col(perm[j]);
    return out;
}

/// Flattened coefficients of expert k (intercept first; multinomial levels in order).
inline VectorXd expert_coefficients(const MoEParameters& params, int k) {
    return std::visit(overloaded{[&](const GaussianExperts& g) -> VectorXd { return g.beta.row(k).transpose(); },
                                 [&](const PoissonExperts& g) -> VectorXd { return g.beta.row(k).transpose(); },
                                 [&](const MultinomialExperts& g) -> VectorXd {
                                     const MatrixXd& b = g.beta[static_cast<std::size_t>(k)];
                                     VectorXd v(b.size());
                                     Index pos = 0;
                                     for (Index r = 0; r < b.rows(); ++r)
                                         for (Index j = 0; j < b.cols(); ++j) v(pos++) = b(r, j);
                                     return v;
                                 }},
                      params.experts);
}

struct Canonicalized {
    MoEParameters params;
    std::vector<int> permutation;
};

/// Orders components by descending expert intercept, ties broken by the
/// remaining coefficients (descending lexicographic).
inline Canonicalized canonicalize_labels(const MoEParameters& params) {
    std::vector<int> perm(static_cast<std::size_t>(params.k));
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<VectorXd> keys;
    for (int k = 0; k < params.k; ++k) keys.push_back(expert_coefficients(params, k));
    std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) {
        const VectorXd& ka = keys[static_cast<std::size_t>(a)];
        const VectorXd& kb = keys[static_cast<std::size_t>(b)];
        for (Index j = 0; j < ka.size(); ++j) {
            if (ka(j) != kb(j)) return ka(j) > kb(j);
        }
        return false;
    });
    return {permute_components(params, perm), perm};
}

/// Permutation of the estimate whose expert blocks are closest (squared
/// distance) to the reference's. Exhaustive for K <= 6, greedy beyond.
inline Canonicalized canonicalize_labels(const MoEParameters& params, const MoEParameters& reference) {
    if (params.k != reference.k || params.p() != reference.p() || params.family() != reference.family())
        throw DimensionError("reference parameters have a different shape");
    const int k = params.k;
    MatrixXd cost(k, k); // cost(j, c): reference j vs estimate c
    for (int j = 0; j < k; ++j)
        for (int c = 0; c < k; ++c)
            cost(j, c) = (expert_coefficients(reference, j) - expert_coefficients(params, c)).squaredNorm();
    std::vector<int> best(static_cast<std::size_t>(k));
    std::iota(best.begin(), best.end(), 0);
    if (k <= 6) {
        std::vector<int> perm = best;
        double best_cost = std::numeric_limits<double>::infinity();
        do {
            double total = 0.0;
            for (int j = 0; j < k; ++j) total += cost(j, perm[static_cast<std::size_t>(j)]);
            if (total < best_cost) {
                best_cost = total;
                best = perm;
            }
        } while (std::next_permutation(perm.begin(), perm.end()));
    } else {
        std::vector<bool> used(static_cast<std::size_t>(k), false);
        for (int j = 0; j < k; ++j) {
            int pick = -1;
            for (int c = 0; c < k; ++c)
                if (!used[static_cast<std::size_t>(c)] && (pick < 0 || cost(j, c) < cost(j, pick))) pick = c;
            best[static_cast<std::size_t>(j)] = pick;
            used[static_cast<std::size_t>(pick)] = true;
        }
    }
    return {permute_components(params, best), best};
}

/// Free parameters counted by the modified BIC: gating intercepts (K-1), nonzero
/// gating slopes, expert intercepts, nonzero expert slopes, and sigmas.
inline int degrees_of_freedom(const MoEParameters& params, bool tied_sigma = false) {
    const auto nonzero_slopes = [](const MatrixXd& m) {
        int count = 0;
        for (Index r = 0; r < m.rows(); ++r)
            for (Index j = 1; j < m.cols(); ++j)
                if (m(r, j) != 0.0) ++count;
        return count;
    };
    int df = static_cast<int>(params.gating.w.rows()) + nonzero_slopes(params.gating.w);
    std::visit(overloaded{[&](const GaussianExperts& g) {
                              df += static_cast<int>(g.beta.rows()) + nonzero_slopes(g.beta);
                              df += tied_sigma ? 1 : static_cast<int>(g.sigma.size());
                          },
                          [&](const PoissonExperts& g) { df += static_cast<int>(g.beta.rows()) + nonzero_slopes(g.beta); },
                          [&](const MultinomialExperts& g) {
                              for (const auto& b : g.beta) df += static_cast<int>(b.rows()) + nonzero_slopes(b);
                          }},
               params.experts);
    return df;
}

// ---------------------------------------------------------------- driver

namespace detail {

inline FitResult run_single_start(const Dataset& data, const FitConfig& config, MoEParameters params) {
    FitResult out;
    std::vector<bool> stale(static_cast<std::size_t>(config.k), false);
    double pl = penalized_log_likelihood(data, params, config.penalty);
    if (!std::isfinite(pl)) throw FitAborted("penalized log-likelihood is not finite at the initial point", {pl});
    out.pl_trace.push_back(pl);

    for (int iter = 1; iter <= config.max_em_iters; ++iter) {
        const Responsibilities tau = e_step(data, params);
        MStepResult ms = m_step(data, tau, params, config);
        params = std::move(ms.params);
        stale = ms.stale;
        if (auto* g = std::get_if<GaussianExperts>(&params.experts); g && config.interleaved_sigma) {
            const Responsibilities tau_mid = e_step(data, params);
            update_sigmas(data, tau_mid, *g, config.tied_sigma);
        }
        const double next = penalized_log_likelihood(data, params, config.penalty);
        out.n_iters = iter;
        if (!std::isfinite(next)) {
            out.pl_trace.push_back(next);
            throw FitAborted("penalized log-likelihood became non-finite at iteration " + std::to_string(iter),
                             out.pl_trace);
        }
        out.pl_trace.push_back(next);
        const double change = std::abs(next - pl) / (std::abs(pl) + 1.0);
        pl = next;
        if (change < config.em_tol) {
            out.converged = true;
            break;
        }
    }

    out.raw_params = params;
    Responsibilities tau = e_step(data, params);
    for (Index k = 0; k < tau.cols(); ++k)
        if (is_empty_component(tau.col(k))) stale[static_cast<std::size_t>(k)] = true;
    // A Gaussian expert that can (nearly) interpolate a handful of points drives
    // sigma towards the floor and the likelihood towards +inf; such fits are
    // spurious. Flag a sigma at the floor on fewer than p+2 points, or one more
    // than kSpuriousSigmaRatio times smaller than the widest expert.
    if (const auto* g = std::get_if<GaussianExperts>(&params.experts)) {
        const double widest = g->sigma.maxCoeff();
        for (Index k = 0; k < tau.cols(); ++k) {
            const bool at_floor = g->sigma(k) <= kSigmaFloor * (1.0 + 1e-6) && tau.col(k).sum() < static_cast<double>(data.p() + 2);
            if (at_floor || g->sigma(k) < kSpuriousSigmaRatio * widest) stale[static_cast<std::size_t>(k)] = true;
        }
    }
    out.degenerate = std::any_of(stale.begin(), stale.end(), [](bool s) { return s; });

    Canonicalized canon = canonicalize_labels(params);
    out.params = std::move(canon.params);
    out.permutation = std::move(canon.permutation);
    out.responsibilities = permute_columns(tau, out.permutation);
    out.ll_final = log_likelihood(data, out.params);
    out.pl_final = pl;
    out.df = degrees_of_freedom(out.params, config.tied_sigma);
    return out;
}

} // namespace detail

/// Penalized EM for one (K, lambda, gamma). Runs n_starts seeded starts
/// (start s uses stream_seed(seed, s)) and keeps the best final PL among the
/// non-degenerate ones.
inline FitResult fit_em(const Dataset& data, const FitConfig& config) {
    validate(data);
    validate(config);
    if (config.warm_start) {
        validate(*config.warm_start);
        if (config.warm_start->k != config.k) throw DimensionError("warm start has a different K");
        return detail::run_single_start(data, config, *config.warm_start);
    }
    std::optional<FitResult> best;
    for (int s = 0; s < config.n_starts; ++s) {
        FitResult r = detail::run_single_start(data, config, init_params(data, config, stream_seed(config.seed, static_cast<std::uint64_t>(s))));
        r.best_start = s;
        // non-degenerate starts win over degenerate ones, then the higher PL
        if (!best || (best->degenerate && !r.degenerate) || (best->degenerate == r.degenerate && r.pl_final > best->pl_final))
            best = std::move(r);
    }
    return std::move(*best);
}

/// Applies f to every item on up to `threads` workers; results keep input
/// order. The first exception (in input order) is rethrown.
template <class T, class F>
auto parallel_map(const std::vector<T>& items, F f, int threads = 1) {
    using R = decltype(f(items.front()));
    std::vector<std::optional<R>> slots(items.size());
    std::vector<std::exception_ptr> errors(items.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < items.size(); i = next++) {
            try {
                slots[i].emplace(f(items[i]));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const int count = std::max(1, std::min<int>(threads, static_cast<int>(items.size())));
    if (count == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < count; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::vector<R> out;
    out.reserve(items.size());
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

} // namespace rmoe

#endif
