#pragma once

#include "otgate/types.hpp"

namespace otgate {

struct PrfResult {
    double precision = 0.0;
    double recall = 0.0;
    double f = 0.0;
};

/// Precision/recall/F between a ground-truth cluster and a predicted one,
/// with the empty-set conventions R(empty,.) = P(.,empty) = 1 and
/// R(.,empty) = P(empty,.) = 0; F = 0 when precision and recall both vanish.
PrfResult cluster_prf(std::size_t gt_size, std::size_t pred_size, std::size_t overlap);
PrfResult cluster_prf(const std::vector<Eigen::Index>& gt_cluster,
                      const std::vector<Eigen::Index>& pred_cluster);

/// Size-weighted best-match F-measure between two partitions of the same
/// events: sum_k (|gt_k|/M) max_l F(gt_k, pred_l).
double f_measure(const std::vector<std::string>& gt, const std::vector<std::string>& pred);

/// Median over per-label F values of same-label clusters, padded with one
/// zero per label in the symmetric difference of the two vocabularies.
double median_f_measure(const std::vector<std::string>& gt,
                        const std::vector<std::string>& pred);

/// Median with the even-count convention (mean of the middle two).
double median(std::vector<double> values);

struct LabelPrf {
    std::string label;
    double f = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

struct MetricReport {
    double overall_f = 0.0;
    double median_f = 0.0;
    std::vector<LabelPrf> per_label;  // ground-truth labels, sorted
};

/// Full report: overall F, median F, and the per-label table of same-label
/// cluster scores.
MetricReport evaluate_labels(const std::vector<std::string>& gt,
                             const std::vector<std::string>& pred);

/// Pluggable supervised classifier for the learning distances.
class Classifier {
public:
    virtual ~Classifier() = default;
    virtual void fit(const LabeledEvents& train) = 0;
    virtual std::vector<std::string> predict(const Eigen::MatrixXd& events) const = 0;
};

enum class LearningVariant { Overall, Median };

/// Cross-prediction distance between two labeled samples:
///   1 - (F(C^y, C~y) + F(C^x, C~x)) / 2,
/// where C~y are classifier predictions on y after training on x and vice
/// versa; the Median variant substitutes the median F-measure.
double learning_distance(const LabeledEvents& x, const LabeledEvents& y, Classifier& classifier,
                         LearningVariant variant = LearningVariant::Overall);

}  // namespace otgate
