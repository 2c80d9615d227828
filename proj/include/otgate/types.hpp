#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace otgate {

/// Iterative method failed to reach its tolerance; carries the last residual.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double residual)
        : std::runtime_error(what), residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

/// Malformed input file; carries the 1-based row/column when known.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, long row = 0, long column = 0)
        : std::runtime_error(what), row_(row), column_(column) {}
    long row() const { return row_; }
    long column() const { return column_; }

private:
    long row_;
    long column_;
};

/// A serialized object does not match the expected schema/version.
class SchemaError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Incompatible pipeline configuration (e.g. a method requiring labels
/// combined with an unlabeled template).
class ConfigError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Synthetic data generation could not satisfy the requested constraints.
class GenerationError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Symmetric positive semidefinite matrix. Construction symmetrizes the
/// input, rejects matrices that are asymmetric beyond tolerance or have
/// eigenvalues below -1e-10 relative to the largest one, and clamps small
/// negative eigenvalues to zero.
class SpdMatrix {
public:
    SpdMatrix() = default;
    explicit SpdMatrix(const Eigen::MatrixXd& m);

    const Eigen::MatrixXd& mat() const { return m_; }
    Eigen::Index dim() const { return m_.rows(); }

private:
    Eigen::MatrixXd m_;
};

/// One gated population: mean, covariance, mixture weight, optional label.
struct ClusterModel {
    Eigen::VectorXd mean;
    SpdMatrix cov;
    double weight = 1.0;
    std::optional<std::string> label;

    Eigen::Index dim() const { return mean.size(); }
};

/// A gated cytometry summarized as a weighted list of Gaussian clusters.
struct CytometrySummary {
    std::vector<ClusterModel> clusters;
    std::string source_id;

    Eigen::Index dim() const { return clusters.empty() ? 0 : clusters.front().dim(); }
    std::size_t size() const { return clusters.size(); }

    Eigen::VectorXd weights() const;

    /// Throws std::invalid_argument when the summary violates its
    /// invariants (weights in (0,1] summing to 1, consistent dimension).
    void validate() const;
};

/// Raw cytometry events with a per-event label.
struct LabeledEvents {
    Eigen::MatrixXd events;           // n x d marker intensities
    std::vector<std::string> labels;  // length n; empty when unlabeled

    Eigen::Index count() const { return events.rows(); }
    Eigen::Index dim() const { return events.cols(); }
    bool labeled() const { return !labels.empty(); }
};

/// Dissimilarity used between individual clusters.
enum class ClusterMetric {
    GaussianW2,         // 2-Wasserstein between fitted Gaussians
    GaussianW2Squared,  // its square
    SymmetricKl,        // symmetrized Kullback-Leibler
    Empirical,          // E||X-Y||^2 = |dm|^2 + tr(Sa) + tr(Sb)
};

/// Distance used between whole cytometry summaries.
enum class PartitionMetric {
    Similarity,  // d_S = d_OT / d_NT
    Ot,          // d_OT alone
    MeanKl,      // unweighted mean pairwise symmetric KL
};

const char* to_string(ClusterMetric m);
const char* to_string(PartitionMetric m);
ClusterMetric cluster_metric_from_string(const std::string& s);
PartitionMetric partition_metric_from_string(const std::string& s);

}  // namespace otgate
