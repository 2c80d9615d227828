#include "otgate/templates.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "otgate/parallel.hpp"
#include "otgate/transport.hpp"

namespace otgate {

CytometrySummary Template::to_summary() const {
    CytometrySummary s;
    s.clusters = clusters;
    s.source_id = "template-" + std::to_string(group);
    return s;
}

MetaMethod meta_method_from_string(const std::string& s) {
    if (s == "single") return MetaMethod::SingleLinkage;
    if (s == "complete") return MetaMethod::CompleteLinkage;
    if (s == "average") return MetaMethod::AverageLinkage;
    if (s == "hdbscan") return MetaMethod::Hdbscan;
    throw std::invalid_argument("unknown meta method: " + s);
}

TemplateMethod template_method_from_string(const std::string& s) {
    if (s == "pooling") return TemplateMethod::Pooling;
    if (s == "density") return TemplateMethod::Density;
    if (s == "kbarycenter") return TemplateMethod::KBarycenter;
    throw std::invalid_argument("unknown template method: " + s);
}

const char* to_string(MetaMethod m) {
    switch (m) {
        case MetaMethod::SingleLinkage: return "single";
        case MetaMethod::CompleteLinkage: return "complete";
        case MetaMethod::AverageLinkage: return "average";
        case MetaMethod::Hdbscan: return "hdbscan";
    }
    return "?";
}

const char* to_string(TemplateMethod m) {
    switch (m) {
        case TemplateMethod::Pooling: return "pooling";
        case TemplateMethod::Density: return "density";
        case TemplateMethod::KBarycenter: return "kbarycenter";
    }
    return "?";
}

namespace {

struct PooledCluster {
    const ClusterModel* model;
    std::string source_id;
    std::size_t cluster_index;
    double lambda;  // member weight / group size
};

std::vector<PooledCluster> pool_clusters(const std::vector<CytometrySummary>& group) {
    if (group.empty()) {
        throw std::invalid_argument("template formation: empty group");
    }
    std::vector<PooledCluster> pooled;
    const double n = static_cast<double>(group.size());
    for (const CytometrySummary& summary : group) {
        summary.validate();
        for (std::size_t c = 0; c < summary.clusters.size(); ++c) {
            pooled.push_back({&summary.clusters[c], summary.source_id, c,
                              summary.clusters[c].weight / n});
        }
    }
    return pooled;
}

}  // namespace

Template template_pooling(const std::vector<CytometrySummary>& group,
                          const BarycenterOptions& opts) {
    std::vector<PooledCluster> pooled = pool_clusters(group);
    for (const PooledCluster& p : pooled) {
        if (!p.model->label) {
            throw std::invalid_argument("template_pooling: unlabeled cluster in " + p.source_id);
        }
    }
    // Canonical order makes the output independent of group ordering.
    std::stable_sort(pooled.begin(), pooled.end(), [](const PooledCluster& a, const PooledCluster& b) {
        return std::tie(*a.model->label, a.source_id, a.cluster_index) <
               std::tie(*b.model->label, b.source_id, b.cluster_index);
    });

    Template out;
    std::size_t begin = 0;
    std::vector<double> label_weights;
    while (begin < pooled.size()) {
        std::size_t end = begin;
        while (end < pooled.size() && *pooled[end].model->label == *pooled[begin].model->label) {
            ++end;
        }
        std::vector<ClusterModel> members;
        Eigen::VectorXd lambda(static_cast<Eigen::Index>(end - begin));
        double mass = 0.0, weight_sum = 0.0;
        for (std::size_t i = begin; i < end; ++i) mass += pooled[i].model->weight;
        for (std::size_t i = begin; i < end; ++i) {
            members.push_back(*pooled[i].model);
            lambda(static_cast<Eigen::Index>(i - begin)) = pooled[i].model->weight / mass;
            weight_sum += pooled[i].model->weight;
        }
        ClusterModel cluster = gaussian_barycenter(members, lambda, opts);
        cluster.label = *pooled[begin].model->label;
        cluster.weight = weight_sum / static_cast<double>(end - begin);  // mean member weight
        label_weights.push_back(cluster.weight);
        out.clusters.push_back(std::move(cluster));
        begin = end;
    }

    const double total = std::accumulate(label_weights.begin(), label_weights.end(), 0.0);
    for (ClusterModel& c : out.clusters) c.weight /= total;
    return out;
}

Template template_density(const std::vector<CytometrySummary>& group, int min_cluster_size,
                          const BarycenterOptions& opts) {
    std::vector<PooledCluster> pooled = pool_clusters(group);

    DistanceMatrix dm;
    const Eigen::Index m = static_cast<Eigen::Index>(pooled.size());
    dm.entries = Eigen::MatrixXd::Zero(m, m);
    dm.ids.resize(pooled.size());
    for (std::size_t i = 0; i < pooled.size(); ++i) {
        dm.ids[i] = pooled[i].source_id + "#" + std::to_string(pooled[i].cluster_index);
        for (std::size_t j = i + 1; j < pooled.size(); ++j) {
            const double w2 = gaussian_w2(*pooled[i].model, *pooled[j].model);
            dm.entries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = w2;
            dm.entries(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = w2;
        }
    }

    MetaPartition density;
    if (pooled.size() == 1) {
        // One pooled cluster: nothing to group, keep it.
        density.assignment = {1};
        density.group_count = 1;
    } else {
        density = density_cluster(dm, min_cluster_size);
    }
    if (density.group_count == 0) {
        throw EmptyTemplateError("template_density: all pooled clusters labeled noise");
    }

    Template out;
    std::vector<double> group_mass(static_cast<std::size_t>(density.group_count), 0.0);
    for (std::size_t i = 0; i < pooled.size(); ++i) {
        if (density.assignment[i] > 0) {
            group_mass[static_cast<std::size_t>(density.assignment[i] - 1)] += pooled[i].lambda;
        }
    }
    for (int g = 1; g <= density.group_count; ++g) {
        std::vector<ClusterModel> members;
        std::vector<double> lams;
        for (std::size_t i = 0; i < pooled.size(); ++i) {
            if (density.assignment[i] != g) continue;
            members.push_back(*pooled[i].model);
            lams.push_back(pooled[i].lambda);
        }
        const double mass = group_mass[static_cast<std::size_t>(g - 1)];
        Eigen::VectorXd lambda(static_cast<Eigen::Index>(lams.size()));
        for (std::size_t t = 0; t < lams.size(); ++t) {
            lambda(static_cast<Eigen::Index>(t)) =
                mass > 0.0 ? lams[t] / mass : 1.0 / static_cast<double>(lams.size());
        }
        ClusterModel cluster = gaussian_barycenter(members, lambda, opts);
        cluster.label.reset();
        cluster.weight = mass;
        out.clusters.push_back(std::move(cluster));
    }

    const double total = std::accumulate(group_mass.begin(), group_mass.end(), 0.0);
    for (ClusterModel& c : out.clusters) c.weight /= total;
    return out;
}

Template template_kbarycenter(const std::vector<CytometrySummary>& group, int k,
                              const BarycenterOptions& opts) {
    std::vector<PooledCluster> pooled = pool_clusters(group);
    std::vector<ClusterModel> models;
    Eigen::VectorXd lambda(static_cast<Eigen::Index>(pooled.size()));
    for (std::size_t i = 0; i < pooled.size(); ++i) {
        models.push_back(*pooled[i].model);
        lambda(static_cast<Eigen::Index>(i)) = pooled[i].lambda;
    }

    const KBarycenterResult result = k_barycenter(models, lambda, k, opts);
    Template out;
    double total = 0.0;
    for (const ClusterModel& b : result.barycenters) total += b.weight;
    for (const ClusterModel& b : result.barycenters) {
        ClusterModel cluster = b;
        cluster.label.reset();
        cluster.weight = total > 0.0 ? b.weight / total
                                     : 1.0 / static_cast<double>(result.barycenters.size());
        out.clusters.push_back(std::move(cluster));
    }
    return out;
}

TemplatesResult optimal_flow_templates(const std::vector<CytometrySummary>& db,
                                       const TemplatesOptions& opts) {
    if (db.size() < 2) {
        throw std::invalid_argument("optimal_flow_templates: need at least two summaries");
    }

    TemplatesResult result;
    result.distances = pairwise_distance_matrix(db, PartitionMetric::Similarity, opts.metric);

    if (opts.meta_method == MetaMethod::Hdbscan) {
        result.partition = density_cluster(result.distances, opts.meta_min_cluster_size);
        if (result.partition.group_count == 0) {
            // No density structure at all; fall back to one group so the
            // pipeline still yields a template.
            for (auto& a : result.partition.assignment) a = 1;
            result.partition.group_count = 1;
        }
    } else {
        if (opts.meta_k < 1) {
            throw std::invalid_argument(
                "optimal_flow_templates: hierarchical metaclustering requires k >= 1");
        }
        Linkage linkage = Linkage::Complete;
        switch (opts.meta_method) {
            case MetaMethod::SingleLinkage: linkage = Linkage::Single; break;
            case MetaMethod::CompleteLinkage: linkage = Linkage::Complete; break;
            case MetaMethod::AverageLinkage: linkage = Linkage::Average; break;
            case MetaMethod::Hdbscan: break;
        }
        result.tree = hierarchical_cluster(result.distances, linkage);
        result.partition = cut_tree(*result.tree, opts.meta_k);
    }

    const auto groups = result.partition.groups();
    result.templates.resize(groups.size());
    parallel_for(groups.size(), [&](std::size_t g) {
        const std::vector<std::size_t>& member_idx = groups[g];
        if (member_idx.empty()) {
            throw std::invalid_argument("optimal_flow_templates: empty metacluster group " +
                                        std::to_string(g + 1));
        }
        Template tpl;
        if (member_idx.size() == 1) {
            tpl.clusters = db[member_idx.front()].clusters;  // lone member passes through
        } else {
            std::vector<CytometrySummary> members;
            members.reserve(member_idx.size());
            for (std::size_t i : member_idx) members.push_back(db[i]);
            switch (opts.template_method) {
                case TemplateMethod::Pooling:
                    tpl = template_pooling(members, opts.barycenter);
                    break;
                case TemplateMethod::Density:
                    tpl = template_density(members, opts.density_min_cluster_size,
                                           opts.barycenter);
                    break;
                case TemplateMethod::KBarycenter: {
                    int k = opts.template_k;
                    if (k < 1) {
                        double mean_count = 0.0;
                        for (const CytometrySummary& s : members) {
                            mean_count += static_cast<double>(s.size());
                        }
                        k = static_cast<int>(std::lround(mean_count /
                                                         static_cast<double>(members.size())));
                        k = std::max(1, k);
                    }
                    tpl = template_kbarycenter(members, k, opts.barycenter);
                    break;
                }
            }
        }
        tpl.group = static_cast<int>(g + 1);
        result.templates[g] = std::move(tpl);
    });

    return result;
}

}  // namespace otgate
