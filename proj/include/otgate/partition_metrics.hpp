#pragma once

#include <cstdint>

#include "otgate/types.hpp"

namespace otgate {

/// Symmetric pairwise distances over a database of summaries.
struct DistanceMatrix {
    Eigen::MatrixXd entries;
    std::vector<std::string> ids;

    Eigen::Index size() const { return entries.rows(); }
    void validate() const;
};

struct SummarizeOptions {
    int min_cluster_size = 0;   // 0 picks d+2
    bool equal_weights = false;
    double ridge = 1e-6;        // diagonal loading, scaled by trace/d
};

/// Collapses labeled events into one Gaussian cluster per label. Labels with
/// fewer than min_cluster_size events are dropped and the remaining weights
/// renormalized (or set uniform when equal_weights is on). Throws
/// std::invalid_argument when no label reaches the threshold.
CytometrySummary summarize_cytometry(const LabeledEvents& x, const SummarizeOptions& opts = {});

/// Pairwise cluster dissimilarities between the clusters of two summaries.
Eigen::MatrixXd pairwise_cluster_costs(const CytometrySummary& a, const CytometrySummary& b,
                                       ClusterMetric metric);

/// Optimal-transport distance between partitions: cost of the optimal
/// coupling of cluster weights under the chosen cluster metric.
double d_ot(const CytometrySummary& a, const CytometrySummary& b,
            ClusterMetric metric = ClusterMetric::GaussianW2);

/// Naive transport distance: cost of the independent coupling p (x) q.
double d_nt(const CytometrySummary& a, const CytometrySummary& b,
            ClusterMetric metric = ClusterMetric::GaussianW2);

/// Similarity distance d_S = d_OT / d_NT in [0, 1]. The degenerate case
/// d_NT = 0 (both summaries one identical cluster) returns 0 and sets
/// *degenerate when provided.
double similarity_distance(const CytometrySummary& a, const CytometrySummary& b,
                           ClusterMetric metric = ClusterMetric::GaussianW2,
                           bool* degenerate = nullptr);

/// Symmetrized Kullback-Leibler divergence between two Gaussian clusters,
/// 0.5 * (KL(a||b) + KL(b||a)). Requires positive definite covariances.
double symmetric_kl(const ClusterModel& a, const ClusterModel& b);

/// Mean pairwise squared Euclidean distance between two event sets. Exact
/// when both sets fit under subsample_cap, otherwise computed on seeded
/// uniform subsamples of that size.
double empirical_cluster_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                  Eigen::Index subsample_cap = 10000, std::uint64_t seed = 17);

/// Unweighted mean of symmetric_kl over all cluster pairs (the flowMatch
/// comparison distance).
double mean_kl_partition_distance(const CytometrySummary& a, const CytometrySummary& b);

/// Full pairwise matrix over a database; entries evaluated in parallel,
/// failures reported with the offending pair of source ids.
DistanceMatrix pairwise_distance_matrix(const std::vector<CytometrySummary>& db,
                                        PartitionMetric metric = PartitionMetric::Similarity,
                                        ClusterMetric cluster_metric = ClusterMetric::GaussianW2);

}  // namespace otgate
