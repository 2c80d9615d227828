#include "otgate/types.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace otgate {

namespace {
constexpr double kSymmetryTol = 1e-10;
constexpr double kEigenTol = 1e-10;
}  // namespace

SpdMatrix::SpdMatrix(const Eigen::MatrixXd& m) {
    if (m.rows() != m.cols()) {
        throw std::invalid_argument("SpdMatrix: matrix must be square");
    }
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (asym > kSymmetryTol * scale) {
        throw std::invalid_argument("SpdMatrix: matrix asymmetric beyond tolerance");
    }
    m_ = 0.5 * (m + m.transpose());

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m_);
    if (eig.info() != Eigen::Success) {
        throw std::invalid_argument("SpdMatrix: eigendecomposition failed");
    }
    const Eigen::VectorXd& ev = eig.eigenvalues();
    const double lmax = std::max(0.0, ev.maxCoeff());
    if (ev.minCoeff() < -kEigenTol * std::max(1.0, lmax)) {
        throw std::invalid_argument("SpdMatrix: matrix has negative eigenvalues");
    }
    if (ev.minCoeff() < 0.0) {
        // PSD repair: clamp numerical noise to zero.
        Eigen::VectorXd clamped = ev.cwiseMax(0.0);
        m_ = eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
        m_ = 0.5 * (m_ + m_.transpose());
    }
}

Eigen::VectorXd CytometrySummary::weights() const {
    Eigen::VectorXd w(static_cast<Eigen::Index>(clusters.size()));
    for (std::size_t i = 0; i < clusters.size(); ++i) {
        w(static_cast<Eigen::Index>(i)) = clusters[i].weight;
    }
    return w;
}

void CytometrySummary::validate() const {
    if (clusters.empty()) {
        throw std::invalid_argument("CytometrySummary: no clusters (" + source_id + ")");
    }
    const Eigen::Index d = clusters.front().dim();
    double total = 0.0;
    for (const ClusterModel& c : clusters) {
        if (c.dim() != d || c.cov.dim() != d) {
            throw std::invalid_argument("CytometrySummary: inconsistent dimensions (" +
                                        source_id + ")");
        }
        if (!(c.weight > 0.0) || c.weight > 1.0 + 1e-12) {
            throw std::invalid_argument("CytometrySummary: cluster weight outside (0,1] (" +
                                        source_id + ")");
        }
        total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw std::invalid_argument("CytometrySummary: weights do not sum to 1 (" + source_id +
                                    ")");
    }
}

const char* to_string(ClusterMetric m) {
    switch (m) {
        case ClusterMetric::GaussianW2: return "gaussian-w2";
        case ClusterMetric::GaussianW2Squared: return "gaussian-w2-squared";
        case ClusterMetric::SymmetricKl: return "symmetric-kl";
        case ClusterMetric::Empirical: return "empirical";
    }
    return "?";
}

const char* to_string(PartitionMetric m) {
    switch (m) {
        case PartitionMetric::Similarity: return "similarity";
        case PartitionMetric::Ot: return "ot";
        case PartitionMetric::MeanKl: return "mean-kl";
    }
    return "?";
}

ClusterMetric cluster_metric_from_string(const std::string& s) {
    if (s == "gaussian-w2") return ClusterMetric::GaussianW2;
    if (s == "gaussian-w2-squared") return ClusterMetric::GaussianW2Squared;
    if (s == "symmetric-kl") return ClusterMetric::SymmetricKl;
    if (s == "empirical") return ClusterMetric::Empirical;
    throw std::invalid_argument("unknown cluster metric: " + s);
}

PartitionMetric partition_metric_from_string(const std::string& s) {
    if (s == "similarity") return PartitionMetric::Similarity;
    if (s == "ot") return PartitionMetric::Ot;
    if (s == "mean-kl") return PartitionMetric::MeanKl;
    throw std::invalid_argument("unknown partition metric: " + s);
}

}  // namespace otgate
