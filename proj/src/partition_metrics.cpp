#include "otgate/partition_metrics.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <map>

#include "otgate/parallel.hpp"
#include "otgate/rng.hpp"
#include "otgate/transport.hpp"

namespace otgate {

void DistanceMatrix::validate() const {
    if (entries.rows() != entries.cols() ||
        entries.rows() != static_cast<Eigen::Index>(ids.size())) {
        throw std::invalid_argument("DistanceMatrix: shape does not match ids");
    }
    for (Eigen::Index i = 0; i < entries.rows(); ++i) {
        if (entries(i, i) != 0.0) {
            throw std::invalid_argument("DistanceMatrix: nonzero diagonal");
        }
        for (Eigen::Index j = 0; j < entries.cols(); ++j) {
            if (!(entries(i, j) >= 0.0) || entries(i, j) != entries(j, i)) {
                throw std::invalid_argument("DistanceMatrix: asymmetric or negative entries");
            }
        }
    }
}

CytometrySummary summarize_cytometry(const LabeledEvents& x, const SummarizeOptions& opts) {
    const Eigen::Index n = x.count();
    const Eigen::Index d = x.dim();
    if (n < 1 || d < 1) {
        throw std::invalid_argument("summarize_cytometry: empty event matrix");
    }
    if (!x.labeled() || static_cast<Eigen::Index>(x.labels.size()) != n) {
        throw std::invalid_argument("summarize_cytometry: events must carry labels");
    }
    const int min_size = opts.min_cluster_size > 0 ? opts.min_cluster_size
                                                   : static_cast<int>(d) + 2;
    if (min_size < static_cast<int>(d) + 1) {
        throw std::invalid_argument("summarize_cytometry: min_cluster_size below d+1");
    }

    // Group event indices per label, in order of first appearance.
    std::vector<std::string> order;
    std::map<std::string, std::vector<Eigen::Index>> groups;
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::string& lab = x.labels[i];
        if (lab.empty()) {
            throw std::invalid_argument("summarize_cytometry: empty label at row " +
                                        std::to_string(i + 1));
        }
        auto [it, inserted] = groups.try_emplace(lab);
        if (inserted) order.push_back(lab);
        it->second.push_back(i);
    }

    CytometrySummary summary;
    Eigen::Index retained_events = 0;
    for (const std::string& lab : order) {
        const std::vector<Eigen::Index>& idx = groups[lab];
        if (static_cast<int>(idx.size()) < min_size) continue;

        Eigen::MatrixXd pts(idx.size(), d);
        for (std::size_t r = 0; r < idx.size(); ++r) pts.row(r) = x.events.row(idx[r]);
        const Eigen::VectorXd mean = pts.colwise().mean();
        const Eigen::MatrixXd centered = pts.rowwise() - mean.transpose();
        Eigen::MatrixXd cov =
            centered.transpose() * centered / static_cast<double>(idx.size() - 1);
        cov += (opts.ridge * cov.trace() / static_cast<double>(d)) *
               Eigen::MatrixXd::Identity(d, d);

        ClusterModel cluster;
        cluster.mean = mean;
        cluster.cov = SpdMatrix(cov);
        cluster.weight = static_cast<double>(idx.size());
        cluster.label = lab;
        summary.clusters.push_back(std::move(cluster));
        retained_events += static_cast<Eigen::Index>(idx.size());
    }

    if (summary.clusters.empty()) {
        throw std::invalid_argument(
            "summarize_cytometry: no label reaches min_cluster_size; empty summary");
    }
    for (ClusterModel& c : summary.clusters) {
        c.weight = opts.equal_weights
                       ? 1.0 / static_cast<double>(summary.clusters.size())
                       : c.weight / static_cast<double>(retained_events);
    }
    return summary;
}

namespace {

// Content ordering used to canonicalize symmetric two-summary operations:
// both argument orders then run through identical arithmetic, making
// d_NT, mean-KL and d_OT exactly symmetric.
bool summary_content_less(const CytometrySummary& x, const CytometrySummary& y) {
    if (x.size() != y.size()) return x.size() < y.size();
    for (std::size_t i = 0; i < x.size(); ++i) {
        const ClusterModel& cx = x.clusters[i];
        const ClusterModel& cy = y.clusters[i];
        if (cx.weight != cy.weight) return cx.weight < cy.weight;
        for (Eigen::Index r = 0; r < cx.mean.size() && r < cy.mean.size(); ++r) {
            if (cx.mean(r) != cy.mean(r)) return cx.mean(r) < cy.mean(r);
        }
        const auto& mx = cx.cov.mat();
        const auto& my = cy.cov.mat();
        for (Eigen::Index r = 0; r < mx.size() && r < my.size(); ++r) {
            if (mx(r) != my(r)) return mx(r) < my(r);
        }
    }
    return x.source_id < y.source_id;
}

}  // namespace

Eigen::MatrixXd pairwise_cluster_costs(const CytometrySummary& a, const CytometrySummary& b,
                                       ClusterMetric metric) {
    if (a.dim() != b.dim()) {
        throw std::invalid_argument("cluster costs: summaries have different dimensions");
    }
    Eigen::MatrixXd costs(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            costs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                cluster_distance(a.clusters[i], b.clusters[j], metric);
        }
    }
    return costs;
}

double d_ot(const CytometrySummary& a, const CytometrySummary& b, ClusterMetric metric) {
    a.validate();
    b.validate();
    const CytometrySummary* lo = &a;
    const CytometrySummary* hi = &b;
    if (summary_content_less(*hi, *lo)) std::swap(lo, hi);
    const Eigen::MatrixXd costs = pairwise_cluster_costs(*lo, *hi, metric);
    return solve_discrete_ot(DiscreteMeasure(lo->weights()), DiscreteMeasure(hi->weights()),
                             CostMatrix(costs))
        .cost;
}

double d_nt(const CytometrySummary& a, const CytometrySummary& b, ClusterMetric metric) {
    a.validate();
    b.validate();
    const CytometrySummary* lo = &a;
    const CytometrySummary* hi = &b;
    if (summary_content_less(*hi, *lo)) std::swap(lo, hi);
    const Eigen::MatrixXd costs = pairwise_cluster_costs(*lo, *hi, metric);
    return lo->weights().transpose() * costs * hi->weights();
}

double similarity_distance(const CytometrySummary& a, const CytometrySummary& b,
                           ClusterMetric metric, bool* degenerate) {
    a.validate();
    b.validate();
    if (degenerate) *degenerate = false;
    const CytometrySummary* lo = &a;
    const CytometrySummary* hi = &b;
    if (summary_content_less(*hi, *lo)) std::swap(lo, hi);
    const Eigen::MatrixXd costs = pairwise_cluster_costs(*lo, *hi, metric);
    const double naive = lo->weights().transpose() * costs * hi->weights();
    if (naive <= 0.0) {
        // Both summaries are one and the same cluster; every coupling has
        // zero cost, call the partitions identical.
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    const double optimal = solve_discrete_ot(DiscreteMeasure(lo->weights()),
                                             DiscreteMeasure(hi->weights()), CostMatrix(costs))
                               .cost;
    return std::clamp(optimal / naive, 0.0, 1.0);
}

namespace {

// KL(N(m0,S0) || N(m1,S1)) with diff = m0 - m1; llt1/logdet1 belong to S1.
double gaussian_kl(const Eigen::VectorXd& diff, const Eigen::MatrixXd& s0,
                   const Eigen::LLT<Eigen::MatrixXd>& llt1, double logdet0, double logdet1) {
    const double quad = diff.dot(llt1.solve(diff));
    const double trace = llt1.solve(s0).trace();
    return 0.5 * (trace + quad - static_cast<double>(diff.size()) + logdet1 - logdet0);
}

double llt_logdet(const Eigen::LLT<Eigen::MatrixXd>& llt) {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace

double symmetric_kl(const ClusterModel& a, const ClusterModel& b) {
    if (a.dim() != b.dim()) {
        throw std::invalid_argument("symmetric_kl: dimension mismatch");
    }
    Eigen::LLT<Eigen::MatrixXd> llt_a(a.cov.mat());
    Eigen::LLT<Eigen::MatrixXd> llt_b(b.cov.mat());
    if (llt_a.info() != Eigen::Success || llt_b.info() != Eigen::Success) {
        throw std::invalid_argument("symmetric_kl: covariance not positive definite");
    }
    const double logdet_a = llt_logdet(llt_a);
    const double logdet_b = llt_logdet(llt_b);
    const Eigen::VectorXd diff = a.mean - b.mean;
    const double kl_ab = gaussian_kl(diff, a.cov.mat(), llt_b, logdet_a, logdet_b);
    const double kl_ba = gaussian_kl(diff, b.cov.mat(), llt_a, logdet_b, logdet_a);
    return 0.5 * (kl_ab + kl_ba);
}

double empirical_cluster_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                  Eigen::Index subsample_cap, std::uint64_t seed) {
    if (a.rows() < 1 || b.rows() < 1) {
        throw std::invalid_argument("empirical_cluster_distance: empty cluster");
    }
    if (a.cols() != b.cols()) {
        throw std::invalid_argument("empirical_cluster_distance: dimension mismatch");
    }
    if (subsample_cap < 1) {
        throw std::invalid_argument("empirical_cluster_distance: subsample_cap must be >= 1");
    }

    Rng rng(seed);
    auto maybe_subsample = [&](const Eigen::MatrixXd& pts) -> Eigen::MatrixXd {
        if (pts.rows() <= subsample_cap) return pts;
        const std::vector<std::size_t> keep = rng.sample_without_replacement(
            static_cast<std::size_t>(pts.rows()), static_cast<std::size_t>(subsample_cap));
        Eigen::MatrixXd out(subsample_cap, pts.cols());
        for (Eigen::Index r = 0; r < subsample_cap; ++r) {
            out.row(r) = pts.row(static_cast<Eigen::Index>(keep[static_cast<std::size_t>(r)]));
        }
        return out;
    };
    const Eigen::MatrixXd xs = maybe_subsample(a);
    const Eigen::MatrixXd ys = maybe_subsample(b);

    // (1/nm) sum_xy |x-y|^2 = mean|x|^2 + mean|y|^2 - 2 <mean x, mean y>.
    const double sq_x = xs.rowwise().squaredNorm().mean();
    const double sq_y = ys.rowwise().squaredNorm().mean();
    const Eigen::VectorXd mx = xs.colwise().mean();
    const Eigen::VectorXd my = ys.colwise().mean();
    return std::max(0.0, sq_x + sq_y - 2.0 * mx.dot(my));
}

double mean_kl_partition_distance(const CytometrySummary& a, const CytometrySummary& b) {
    a.validate();
    b.validate();
    if (a.dim() != b.dim()) {
        throw std::invalid_argument("mean_kl_partition_distance: dimension mismatch");
    }
    const CytometrySummary* lo = &a;
    const CytometrySummary* hi = &b;
    if (summary_content_less(*hi, *lo)) std::swap(lo, hi);
    double total = 0.0;
    for (const ClusterModel& ca : lo->clusters) {
        for (const ClusterModel& cb : hi->clusters) total += symmetric_kl(ca, cb);
    }
    return total / static_cast<double>(lo->size() * hi->size());
}

DistanceMatrix pairwise_distance_matrix(const std::vector<CytometrySummary>& db,
                                        PartitionMetric metric, ClusterMetric cluster_metric) {
    const std::size_t n = db.size();
    if (n < 2) {
        throw std::invalid_argument("pairwise_distance_matrix: need at least two summaries");
    }

    DistanceMatrix dm;
    dm.entries = Eigen::MatrixXd::Zero(n, n);
    dm.ids.reserve(n);
    for (const CytometrySummary& s : db) dm.ids.push_back(s.source_id);

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    }

    parallel_for(pairs.size(), [&](std::size_t t) {
        const auto [i, j] = pairs[t];
        double value = 0.0;
        try {
            switch (metric) {
                case PartitionMetric::Similarity:
                    value = similarity_distance(db[i], db[j], cluster_metric);
                    break;
                case PartitionMetric::Ot:
                    value = d_ot(db[i], db[j], cluster_metric);
                    break;
                case PartitionMetric::MeanKl:
                    value = mean_kl_partition_distance(db[i], db[j]);
                    break;
            }
        } catch (const std::exception& e) {
            throw std::invalid_argument("pairwise_distance_matrix: pair (" + db[i].source_id +
                                        ", " + db[j].source_id + "): " + e.what());
        }
        dm.entries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = value;
        dm.entries(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = value;
    });
    return dm;
}

}  // namespace otgate
