#pragma once

#include "otgate/partition_metrics.hpp"
#include "otgate/types.hpp"

namespace otgate {

enum class Linkage { Single, Complete, Average };

Linkage linkage_from_string(const std::string& s);
const char* to_string(Linkage l);

/// Agglomerative merge history. Leaves are numbered 0..N-1, the t-th merge
/// creates node N+t; merges are stored in execution order.
struct Dendrogram {
    struct Merge {
        int left;
        int right;
        double height;
    };

    std::vector<Merge> merges;
    std::vector<std::string> leaf_ids;

    int leaf_count() const { return static_cast<int>(leaf_ids.size()); }
};

/// Grouping of database entries. Groups are numbered 1..group_count;
/// 0 marks noise (only density methods produce it).
struct MetaPartition {
    std::vector<std::string> ids;
    std::vector<int> assignment;
    int group_count = 0;

    bool is_noise(std::size_t i) const { return assignment[i] == 0; }
    std::vector<std::vector<std::size_t>> groups() const;
};

/// Standard agglomerative clustering on a precomputed distance matrix.
/// Ties break toward the lowest pair of cluster indices, so the result is
/// deterministic. Cluster distances are maintained with the Lance-Williams
/// updates for the chosen linkage.
Dendrogram hierarchical_cluster(const DistanceMatrix& dm, Linkage linkage = Linkage::Complete);

/// Cuts a dendrogram into exactly k groups by undoing the last k-1 merges.
/// Groups are numbered by their smallest leaf index.
MetaPartition cut_tree(const Dendrogram& tree, int k);

/// HDBSCAN-style clustering on a precomputed distance matrix: core
/// distances (the point itself counts as its first neighbor), mutual
/// reachability, minimum spanning tree, and excess-of-mass cluster
/// extraction from the condensed hierarchy. min_cluster_size = 1
/// degenerates to the finest partition (exact duplicates stay together).
MetaPartition density_cluster(const DistanceMatrix& dm, int min_cluster_size = 2);

}  // namespace otgate
