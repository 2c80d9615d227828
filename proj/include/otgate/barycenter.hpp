#pragma once

#include <cstdint>

#include "otgate/types.hpp"

namespace otgate {

struct BarycenterOptions {
    int max_iter = 200;
    double tol = 1e-8;        // relative Frobenius fixed-point residual
    double trim_alpha = 0.0;  // fraction of models discarded by k_barycenter
    int restarts = 10;
    std::uint64_t seed = 1234;
};

struct BarycenterDiagnostics {
    int iterations = 0;
    double residual = 0.0;
};

/// Wasserstein barycenter of Gaussian clusters with weights lambda
/// (nonnegative, summing to 1). The mean is the closed form sum(l_i m_i);
/// the covariance is the fixed point of
///   S -> S^-1/2 (sum_i l_i (S^1/2 S_i S^1/2)^1/2)^2 S^-1/2,
/// started from the arithmetic covariance mean and iterated until the
/// relative Frobenius residual drops below opts.tol. Identical inputs and
/// the shared-covariance case short-circuit to the exact answer with zero
/// iterations. The output weight is sum(l_i * w_i); callers renormalize.
ClusterModel gaussian_barycenter(const std::vector<ClusterModel>& models,
                                 const Eigen::VectorXd& lambdas,
                                 const BarycenterOptions& opts = {},
                                 BarycenterDiagnostics* diag = nullptr);

struct KBarycenterResult {
    std::vector<ClusterModel> barycenters;  // weight = assigned lambda mass
    std::vector<int> assignment;            // per model; -1 = trimmed
    double objective = 0.0;                 // sum of retained lambda * W2^2
};

/// Lloyd-style k-barycenter in W2^2 with alpha-trimming: assign each model
/// to its nearest barycenter, drop the ceil(n*alpha) worst-assigned models,
/// recompute barycenters; seeded k-means++ style, best of opts.restarts
/// restarts. The objective is nonincreasing within a restart.
KBarycenterResult k_barycenter(const std::vector<ClusterModel>& models,
                               const Eigen::VectorXd& lambdas, int k,
                               const BarycenterOptions& opts = {});

}  // namespace otgate
