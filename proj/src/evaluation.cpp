#include "otgate/evaluation.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <unordered_set>

namespace otgate {

PrfResult cluster_prf(std::size_t gt_size, std::size_t pred_size, std::size_t overlap) {
    PrfResult r;
    r.recall = gt_size == 0 ? 1.0 : static_cast<double>(overlap) / static_cast<double>(gt_size);
    r.precision =
        pred_size == 0 ? 1.0 : static_cast<double>(overlap) / static_cast<double>(pred_size);
    r.f = (r.precision + r.recall) > 0.0
              ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
              : 0.0;
    return r;
}

PrfResult cluster_prf(const std::vector<Eigen::Index>& gt_cluster,
                      const std::vector<Eigen::Index>& pred_cluster) {
    std::unordered_set<Eigen::Index> gt(gt_cluster.begin(), gt_cluster.end());
    std::size_t overlap = 0;
    for (Eigen::Index i : pred_cluster) overlap += gt.count(i);
    return cluster_prf(gt_cluster.size(), pred_cluster.size(), overlap);
}

namespace {

struct Contingency {
    std::map<std::string, std::size_t> gt_sizes;
    std::map<std::string, std::size_t> pred_sizes;
    std::map<std::pair<std::string, std::string>, std::size_t> overlap;
    std::size_t total = 0;
};

// An empty label marks an event that belongs to no cluster on that side;
// it contributes to no vocabulary and no overlap.
Contingency build_contingency(const std::vector<std::string>& gt,
                              const std::vector<std::string>& pred) {
    if (gt.size() != pred.size()) {
        throw std::invalid_argument("partition metrics: label vectors differ in length");
    }
    Contingency c;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (!gt[i].empty()) {
            ++c.gt_sizes[gt[i]];
            ++c.total;
        }
        if (!pred[i].empty()) ++c.pred_sizes[pred[i]];
        if (!gt[i].empty() && !pred[i].empty()) ++c.overlap[{gt[i], pred[i]}];
    }
    if (c.total == 0) {
        throw std::invalid_argument("partition metrics: no labeled events");
    }
    return c;
}

}  // namespace

double f_measure(const std::vector<std::string>& gt, const std::vector<std::string>& pred) {
    const Contingency c = build_contingency(gt, pred);
    double total_f = 0.0;
    for (const auto& [gt_label, gt_size] : c.gt_sizes) {
        double best = 0.0;
        for (const auto& [pred_label, pred_size] : c.pred_sizes) {
            const auto it = c.overlap.find({gt_label, pred_label});
            const std::size_t ov = it == c.overlap.end() ? 0 : it->second;
            best = std::max(best, cluster_prf(gt_size, pred_size, ov).f);
        }
        total_f += static_cast<double>(gt_size) / static_cast<double>(c.total) * best;
    }
    return total_f;
}

double median(std::vector<double> values) {
    if (values.empty()) {
        throw std::invalid_argument("median: empty input");
    }
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double median_f_measure(const std::vector<std::string>& gt,
                        const std::vector<std::string>& pred) {
    const Contingency c = build_contingency(gt, pred);
    std::vector<double> per_label;
    for (const auto& [label, gt_size] : c.gt_sizes) {
        const auto pit = c.pred_sizes.find(label);
        if (pit == c.pred_sizes.end()) continue;  // symmetric difference, handled below
        const auto oit = c.overlap.find({label, label});
        const std::size_t ov = oit == c.overlap.end() ? 0 : oit->second;
        per_label.push_back(cluster_prf(gt_size, pit->second, ov).f);
    }
    std::size_t sym_diff = 0;
    for (const auto& [label, size] : c.gt_sizes) {
        (void)size;
        sym_diff += c.pred_sizes.count(label) == 0 ? 1 : 0;
    }
    for (const auto& [label, size] : c.pred_sizes) {
        (void)size;
        sym_diff += c.gt_sizes.count(label) == 0 ? 1 : 0;
    }
    for (std::size_t t = 0; t < sym_diff; ++t) per_label.push_back(0.0);
    if (per_label.empty()) {
        throw std::invalid_argument("median_f_measure: no labels on either side");
    }
    return median(std::move(per_label));
}

MetricReport evaluate_labels(const std::vector<std::string>& gt,
                             const std::vector<std::string>& pred) {
    const Contingency c = build_contingency(gt, pred);
    MetricReport report;
    report.overall_f = f_measure(gt, pred);
    report.median_f = median_f_measure(gt, pred);
    for (const auto& [label, gt_size] : c.gt_sizes) {
        const auto pit = c.pred_sizes.find(label);
        const std::size_t pred_size = pit == c.pred_sizes.end() ? 0 : pit->second;
        const auto oit = c.overlap.find({label, label});
        const std::size_t ov = oit == c.overlap.end() ? 0 : oit->second;
        const PrfResult prf = cluster_prf(gt_size, pred_size, ov);
        report.per_label.push_back({label, prf.f, prf.precision, prf.recall});
    }
    return report;
}

double learning_distance(const LabeledEvents& x, const LabeledEvents& y, Classifier& classifier,
                         LearningVariant variant) {
    if (!x.labeled() || !y.labeled()) {
        throw std::invalid_argument("learning_distance: both samples must be labeled");
    }
    if (x.dim() != y.dim()) {
        throw std::invalid_argument("learning_distance: dimension mismatch");
    }
    auto score = [&](const LabeledEvents& train, const LabeledEvents& test) {
        classifier.fit(train);
        const std::vector<std::string> predicted = classifier.predict(test.events);
        return variant == LearningVariant::Overall ? f_measure(test.labels, predicted)
                                                   : median_f_measure(test.labels, predicted);
    };
    const double f_on_y = score(x, y);
    const double f_on_x = score(y, x);
    return 1.0 - 0.5 * (f_on_y + f_on_x);
}

}  // namespace otgate
