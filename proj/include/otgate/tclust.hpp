#pragma once

#include <cstdint>

#include "otgate/templates.hpp"
#include "otgate/types.hpp"

namespace otgate {

struct TclustParams {
    int k = 5;
    double alpha = 0.05;         // ceil(n*alpha) events trimmed
    double restriction_c = 1e6;  // bound on the eigenvalue ratio across clusters
    int max_iter = 100;
    int n_restarts = 20;         // random starts when no initialization is given
    std::uint64_t seed = 99;
};

struct TclustResult {
    std::vector<ClusterModel> models;  // weights sum to 1
    std::vector<int> assignment;       // per event: 0 = trimmed, 1..k
    double objective = 0.0;            // trimmed pseudo-likelihood

    // Per-iteration diagnostics of the winning run. reseed_flags marks
    // iterations where an emptied cluster was re-seeded (the objective may
    // legitimately drop across such a boundary).
    std::vector<double> objective_trace;
    std::vector<bool> reseed_flags;
};

/// Trimmed, eigenvalue-ratio-constrained Gaussian model-based clustering by
/// concentration steps: score events by max_j p_j phi(x; m_j, S_j), trim the
/// ceil(n*alpha) lowest best-scores, hard-assign the rest, refit weights,
/// means and covariances, and clamp all cluster eigenvalues into a band of
/// ratio restriction_c. With an initialization the single seeded run is
/// returned; otherwise the best of n_restarts random starts.
TclustResult tclust(const Eigen::MatrixXd& events, const TclustParams& params,
                    const std::vector<ClusterModel>* init = nullptr);

/// Clamps the pooled cluster eigenvalues into [t, c*t], with t minimizing
/// the size-weighted truncated likelihood penalty
///   sum_j n_j sum_l (log m_jl + e_jl / m_jl),  m = clamp(e, t, c*t).
/// Exposed for tests; eigenvalues enter as (value, cluster size) pairs and
/// the chosen t is returned.
double restriction_threshold(const std::vector<std::pair<double, double>>& eigenvalues,
                             double restriction_c);

struct BestInitResult {
    TclustResult result;
    int template_index = -1;  // 0-based index of the winning initialization
};

/// One tclust run per template, seeded from the template's clusters with k
/// equal to that template's cluster count; the run with the highest
/// objective wins (ties to the lowest template index). Individual failures
/// are tolerated; when every run fails their reasons are aggregated.
BestInitResult best_template_init(const Eigen::MatrixXd& events,
                                  const std::vector<Template>& templates,
                                  const TclustParams& params);

}  // namespace otgate
