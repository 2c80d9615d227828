#pragma once

#include <optional>

#include "otgate/barycenter.hpp"
#include "otgate/hierarchy.hpp"
#include "otgate/types.hpp"

namespace otgate {

/// Every cluster of every group member was classified as noise, so no
/// consensus cluster could be built.
class EmptyTemplateError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Prototype cytometry for one metacluster group.
struct Template {
    int group = 0;  // 1-based metacluster index
    std::vector<ClusterModel> clusters;

    CytometrySummary to_summary() const;
};

enum class MetaMethod { SingleLinkage, CompleteLinkage, AverageLinkage, Hdbscan };
enum class TemplateMethod { Pooling, Density, KBarycenter };

MetaMethod meta_method_from_string(const std::string& s);
TemplateMethod template_method_from_string(const std::string& s);
const char* to_string(MetaMethod m);
const char* to_string(TemplateMethod m);

/// One consensus cluster per cell-type label occurring in the group: the
/// 1-barycenter of the same-label clusters, lambda proportional to their
/// weights. Requires fully labeled summaries. Member clusters are ordered
/// canonically (label, then source id) so the result is identical for any
/// ordering of the group.
Template template_pooling(const std::vector<CytometrySummary>& group,
                          const BarycenterOptions& opts = {});

/// Pools all member clusters, groups them by density clustering on their
/// pairwise Gaussian W2 matrix, and returns one barycenter per discovered
/// group. Noise clusters are discarded; throws EmptyTemplateError when
/// nothing remains.
Template template_density(const std::vector<CytometrySummary>& group, int min_cluster_size = 2,
                          const BarycenterOptions& opts = {});

/// Pools all member clusters and reduces them to k trimmed Wasserstein
/// barycenters; template weights are the assigned mass.
Template template_kbarycenter(const std::vector<CytometrySummary>& group, int k,
                              const BarycenterOptions& opts = {});

struct TemplatesOptions {
    MetaMethod meta_method = MetaMethod::CompleteLinkage;
    int meta_k = 0;                  // group count for hierarchical methods
    int meta_min_cluster_size = 2;   // HDBSCAN at the metacluster level
    TemplateMethod template_method = TemplateMethod::Pooling;
    int template_k = 0;              // 0: mean member cluster count
    int density_min_cluster_size = 2;
    ClusterMetric metric = ClusterMetric::GaussianW2;
    BarycenterOptions barycenter;
};

struct TemplatesResult {
    DistanceMatrix distances;
    std::optional<Dendrogram> tree;  // absent for HDBSCAN metaclustering
    MetaPartition partition;
    std::vector<Template> templates;  // one per group, in group order
};

/// The full template pipeline: similarity-distance matrix, metaclustering,
/// and one template per group (a group of size one passes its lone summary
/// through unchanged). Noise entries receive no template.
TemplatesResult optimal_flow_templates(const std::vector<CytometrySummary>& db,
                                       const TemplatesOptions& opts = {});

}  // namespace otgate
