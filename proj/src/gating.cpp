#include "otgate/gating.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "otgate/partition_metrics.hpp"
#include "otgate/transport.hpp"

namespace otgate {

int assign_to_template(const CytometrySummary& u, const std::vector<Template>& templates,
                       ClusterMetric metric) {
    if (templates.empty()) {
        throw std::invalid_argument("assign_to_template: no templates");
    }
    int best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < templates.size(); ++t) {
        const double dist = similarity_distance(u, templates[t].to_summary(), metric);
        if (dist < best_dist) {
            best_dist = dist;
            best = static_cast<int>(t);
        }
    }
    return best;
}

QdaModel QdaModel::fit(const CytometrySummary& summary) {
    summary.validate();
    QdaModel model;
    for (const ClusterModel& c : summary.clusters) {
        if (!c.label) {
            throw std::invalid_argument("QdaModel: unlabeled cluster in " + summary.source_id);
        }
        Eigen::LLT<Eigen::MatrixXd> llt(c.cov.mat());
        if (llt.info() != Eigen::Success) {
            throw std::invalid_argument("QdaModel: covariance not positive definite for label " +
                                        *c.label);
        }
        const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        model.labels_.push_back(*c.label);
        model.log_norm_.push_back(std::log(c.weight) - 0.5 * logdet);
        model.means_.push_back(c.mean);
        model.llt_.push_back(std::move(llt));
    }
    return model;
}

std::string QdaModel::predict_one(const Eigen::VectorXd& x) const {
    std::size_t arg = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < labels_.size(); ++j) {
        const Eigen::VectorXd diff = x - means_[j];
        const double score = log_norm_[j] - 0.5 * diff.dot(llt_[j].solve(diff));
        if (score > best) {
            best = score;
            arg = j;
        }
    }
    return labels_[arg];
}

std::vector<std::string> QdaModel::predict(const Eigen::MatrixXd& events) const {
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(events.rows()));
    for (Eigen::Index i = 0; i < events.rows(); ++i) {
        out.push_back(predict_one(events.row(i).transpose()));
    }
    return out;
}

void QdaClassifier::fit(const LabeledEvents& train) {
    model_ = QdaModel::fit(summarize_cytometry(train, opts_));
}

std::vector<std::string> QdaClassifier::predict(const Eigen::MatrixXd& events) const {
    if (!model_) {
        throw std::runtime_error("QdaClassifier: predict called before fit");
    }
    return model_->predict(events);
}

std::vector<int> solve_assignment(const Eigen::MatrixXd& cost, double* total_cost) {
    if (cost.rows() != cost.cols() || cost.rows() < 1) {
        throw std::invalid_argument("solve_assignment: square matrix required");
    }
    const int n = static_cast<int>(cost.rows());

    // Hungarian method with row/column potentials; 1-based work arrays,
    // column 0 is the virtual start.
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<int> match(static_cast<std::size_t>(n) + 1, 0);
    std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);

    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n) + 1,
                                 std::numeric_limits<double>::infinity());
        std::vector<bool> used(static_cast<std::size_t>(n) + 1, false);
        do {
            used[static_cast<std::size_t>(j0)] = true;
            const int i0 = match[static_cast<std::size_t>(j0)];
            double delta = std::numeric_limits<double>::infinity();
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                                   v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(match[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (match[static_cast<std::size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<std::size_t>(j0)];
            match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
    for (int j = 1; j <= n; ++j) {
        row_to_col[static_cast<std::size_t>(match[static_cast<std::size_t>(j)] - 1)] = j - 1;
    }
    if (total_cost) {
        *total_cost = 0.0;
        for (int i = 0; i < n; ++i) {
            *total_cost += cost(i, row_to_col[static_cast<std::size_t>(i)]);
        }
    }
    return row_to_col;
}

namespace {

std::string ref_label_or_index(const CytometrySummary& ref, int index) {
    const auto& label = ref.clusters[static_cast<std::size_t>(index)].label;
    return label ? *label : "group-" + std::to_string(index + 1);
}

}  // namespace

RelabelResult hungarian_relabel(const CytometrySummary& u, const CytometrySummary& ref,
                                ClusterMetric metric) {
    u.validate();
    ref.validate();
    const int ku = static_cast<int>(u.size());
    const int kr = static_cast<int>(ref.size());
    const int n = std::max(ku, kr);

    const Eigen::MatrixXd real = pairwise_cluster_costs(u, ref, metric);
    const double dummy = 10.0 * std::max(real.maxCoeff(), 1e-300);
    Eigen::MatrixXd padded = Eigen::MatrixXd::Constant(n, n, dummy);
    padded.topLeftCorner(ku, kr) = real;

    RelabelResult out;
    const std::vector<int> row_to_col = solve_assignment(padded);
    out.match.assign(static_cast<std::size_t>(ku), -1);
    out.labels.resize(static_cast<std::size_t>(ku));
    for (int i = 0; i < ku; ++i) {
        const int j = row_to_col[static_cast<std::size_t>(i)];
        if (j < kr) {
            out.match[static_cast<std::size_t>(i)] = j;
            out.labels[static_cast<std::size_t>(i)] = ref_label_or_index(ref, j);
            out.total_cost += real(i, j);
        } else {
            out.labels[static_cast<std::size_t>(i)] = "unmatched-" + std::to_string(i + 1);
        }
    }
    return out;
}

FuzzyRelabelling fuzzy_relabel(const CytometrySummary& u, const CytometrySummary& ref,
                               ClusterMetric metric) {
    u.validate();
    ref.validate();
    const Eigen::MatrixXd costs = pairwise_cluster_costs(ref, u, metric);
    const TransportPlan plan = solve_discrete_ot(DiscreteMeasure(ref.weights()),
                                                 DiscreteMeasure(u.weights()), CostMatrix(costs));

    const Eigen::Index kr = static_cast<Eigen::Index>(ref.size());
    const Eigen::Index ku = static_cast<Eigen::Index>(u.size());
    FuzzyRelabelling out;
    out.scores.resize(kr, ku);
    out.weighted_scores.resize(kr, ku);
    for (Eigen::Index l = 0; l < ku; ++l) {
        const double pl = u.clusters[static_cast<std::size_t>(l)].weight;
        for (Eigen::Index k = 0; k < kr; ++k) {
            const double pk = ref.clusters[static_cast<std::size_t>(k)].weight;
            const double s = plan.plan(k, l) / pl;
            out.scores(k, l) = s;
            out.weighted_scores(k, l) = s * plan.plan(k, l) / pk;
        }
    }

    out.hard_assignment.resize(static_cast<std::size_t>(ku));
    out.labels.resize(static_cast<std::size_t>(ku));
    for (Eigen::Index l = 0; l < ku; ++l) {
        Eigen::Index arg = 0;
        for (Eigen::Index k = 1; k < kr; ++k) {
            if (out.weighted_scores(k, l) > out.weighted_scores(arg, l)) arg = k;
        }
        out.hard_assignment[static_cast<std::size_t>(l)] = static_cast<int>(arg);
        out.labels[static_cast<std::size_t>(l)] = ref_label_or_index(ref, static_cast<int>(arg));
    }
    return out;
}

LabelMethod label_method_from_string(const std::string& s) {
    if (s == "qda-template") return LabelMethod::QdaTemplate;
    if (s == "qda-nearest") return LabelMethod::QdaNearest;
    if (s == "label-transfer-hungarian") return LabelMethod::TransferHungarian;
    if (s == "label-transfer-fuzzy") return LabelMethod::TransferFuzzy;
    throw std::invalid_argument("unknown label method: " + s);
}

const char* to_string(LabelMethod m) {
    switch (m) {
        case LabelMethod::QdaTemplate: return "qda-template";
        case LabelMethod::QdaNearest: return "qda-nearest";
        case LabelMethod::TransferHungarian: return "label-transfer-hungarian";
        case LabelMethod::TransferFuzzy: return "label-transfer-fuzzy";
    }
    return "?";
}

namespace {

// Summary of an externally supplied event partition; undersized groups are
// folded into "unassigned" (0).
std::pair<CytometrySummary, std::vector<int>> summarize_external(
    const Eigen::MatrixXd& events, const std::vector<int>& assignment) {
    const Eigen::Index n = events.rows();
    const Eigen::Index d = events.cols();
    if (static_cast<Eigen::Index>(assignment.size()) != n) {
        throw std::invalid_argument("external partition length does not match events");
    }
    const int kmax = *std::max_element(assignment.begin(), assignment.end());
    if (kmax < 1) {
        throw std::invalid_argument("external partition assigns no events");
    }

    std::vector<int> adjusted = assignment;
    CytometrySummary summary;
    summary.source_id = "external";
    std::vector<int> relabel(static_cast<std::size_t>(kmax) + 1, 0);
    double total = 0.0;
    for (int g = 1; g <= kmax; ++g) {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (assignment[static_cast<std::size_t>(i)] == g) idx.push_back(i);
        }
        if (static_cast<Eigen::Index>(idx.size()) < d + 2) {
            for (Eigen::Index i : idx) adjusted[static_cast<std::size_t>(i)] = 0;
            continue;
        }
        Eigen::MatrixXd pts(idx.size(), d);
        for (std::size_t r = 0; r < idx.size(); ++r) pts.row(static_cast<Eigen::Index>(r)) = events.row(idx[r]);
        const Eigen::VectorXd mean = pts.colwise().mean();
        const Eigen::MatrixXd centered = pts.rowwise() - mean.transpose();
        Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(idx.size());
        cov += (1e-6 * cov.trace() / static_cast<double>(d)) * Eigen::MatrixXd::Identity(d, d);

        ClusterModel c;
        c.mean = mean;
        c.cov = SpdMatrix(cov);
        c.weight = static_cast<double>(idx.size());
        total += c.weight;
        summary.clusters.push_back(std::move(c));
        relabel[static_cast<std::size_t>(g)] = static_cast<int>(summary.clusters.size());
    }
    if (summary.clusters.empty()) {
        throw std::invalid_argument("external partition: no group has d+2 events");
    }
    for (ClusterModel& c : summary.clusters) c.weight /= total;
    for (Eigen::Index i = 0; i < n; ++i) {
        auto& a = adjusted[static_cast<std::size_t>(i)];
        if (a > 0) a = relabel[static_cast<std::size_t>(a)];
    }
    return {summary, adjusted};
}

}  // namespace

ClassificationResult optimal_flow_classification(const Eigen::MatrixXd& events,
                                                 const std::vector<Template>& templates,
                                                 const std::vector<CytometrySummary>& db,
                                                 const MetaPartition& meta,
                                                 const ClassificationOptions& opts) {
    if (templates.empty()) {
        throw std::invalid_argument("optimal_flow_classification: no templates");
    }

    ClassificationResult result;
    std::vector<int> event_cluster;  // per event, 0 = trimmed/unassigned

    if (opts.external_assignment) {
        auto [summary, adjusted] = summarize_external(events, *opts.external_assignment);
        result.event_partition = std::move(summary);
        event_cluster = std::move(adjusted);
    } else {
        BestInitResult best = best_template_init(events, templates, opts.tclust);
        result.init_template_index = best.template_index;
        result.tclust_objective = best.result.objective;
        result.event_partition.source_id = "tclust";
        result.event_partition.clusters = best.result.models;
        event_cluster = best.result.assignment;
    }

    result.template_index = assign_to_template(result.event_partition, templates, opts.metric);
    const Template& winner = templates[static_cast<std::size_t>(result.template_index)];
    result.assigned_group = winner.group;

    auto labels_have = [](const CytometrySummary& s) {
        return std::all_of(s.clusters.begin(), s.clusters.end(),
                           [](const ClusterModel& c) { return c.label.has_value(); });
    };

    switch (opts.method) {
        case LabelMethod::QdaTemplate: {
            const CytometrySummary tpl = winner.to_summary();
            if (!labels_have(tpl)) {
                throw ConfigError(
                    "qda-template requires a labeled template, but template for group " +
                    std::to_string(winner.group) + " has unlabeled clusters");
            }
            result.labels = QdaModel::fit(tpl).predict(events);
            break;
        }
        case LabelMethod::QdaNearest: {
            if (db.size() != meta.assignment.size()) {
                throw std::invalid_argument(
                    "optimal_flow_classification: db does not match meta partition");
            }
            int nearest = -1;
            double best_dist = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < db.size(); ++i) {
                if (meta.assignment[i] != winner.group) continue;
                const double dist =
                    similarity_distance(result.event_partition, db[i], opts.metric);
                if (dist < best_dist) {
                    best_dist = dist;
                    nearest = static_cast<int>(i);
                }
            }
            if (nearest < 0) {
                throw std::invalid_argument(
                    "optimal_flow_classification: assigned group has no database members");
            }
            result.nearest_db_index = nearest;
            const CytometrySummary& train = db[static_cast<std::size_t>(nearest)];
            if (!labels_have(train)) {
                throw ConfigError("qda-nearest requires labeled database summaries, but " +
                                  train.source_id + " has unlabeled clusters");
            }
            result.labels = QdaModel::fit(train).predict(events);
            break;
        }
        case LabelMethod::TransferHungarian:
        case LabelMethod::TransferFuzzy: {
            const CytometrySummary tpl = winner.to_summary();
            if (!labels_have(tpl)) {
                throw ConfigError(
                    std::string(to_string(opts.method)) +
                    " requires a labeled template, but template for group " +
                    std::to_string(winner.group) +
                    " has unlabeled clusters (density/k-barycenter templates carry none)");
            }
            std::vector<std::string> cluster_labels;
            if (opts.method == LabelMethod::TransferHungarian) {
                cluster_labels = hungarian_relabel(result.event_partition, tpl, opts.metric).labels;
            } else {
                cluster_labels = fuzzy_relabel(result.event_partition, tpl, opts.metric).labels;
            }
            // Trimmed events get the label of their maximum-posterior cluster.
            QdaModel posterior;
            {
                CytometrySummary named = result.event_partition;
                for (std::size_t c = 0; c < named.clusters.size(); ++c) {
                    named.clusters[c].label = cluster_labels[c];
                }
                posterior = QdaModel::fit(named);
            }
            result.labels.resize(static_cast<std::size_t>(events.rows()));
            for (Eigen::Index i = 0; i < events.rows(); ++i) {
                const int c = event_cluster[static_cast<std::size_t>(i)];
                result.labels[static_cast<std::size_t>(i)] =
                    c > 0 ? cluster_labels[static_cast<std::size_t>(c - 1)]
                          : posterior.predict_one(events.row(i).transpose());
            }
            break;
        }
    }
    return result;
}

}  // namespace otgate
