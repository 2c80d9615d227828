#pragma once

#include "otgate/types.hpp"

namespace otgate {

/// Finitely supported probability measure (the atom locations live in the
/// cost matrix, only the masses are kept here).
class DiscreteMeasure {
public:
    explicit DiscreteMeasure(Eigen::VectorXd weights);

    const Eigen::VectorXd& weights() const { return weights_; }
    Eigen::Index size() const { return weights_.size(); }

private:
    Eigen::VectorXd weights_;
};

/// Pairwise transport costs between source and target atoms.
class CostMatrix {
public:
    explicit CostMatrix(Eigen::MatrixXd entries);

    const Eigen::MatrixXd& entries() const { return entries_; }
    Eigen::Index rows() const { return entries_.rows(); }
    Eigen::Index cols() const { return entries_.cols(); }

private:
    Eigen::MatrixXd entries_;
};

/// Coupling with prescribed marginals plus its objective value.
struct TransportPlan {
    Eigen::MatrixXd plan;
    double cost = 0.0;
};

struct SinkhornOptions {
    double gamma = 0.0;  // <= 0 picks 0.01 * median cost entry
    int max_iter = 10000;
    double tol = 1e-9;  // L1 marginal residual
};

/// Exact solution of the optimal transport linear program by the
/// transportation simplex (northwest-corner start, potential/cycle pivots).
/// Zero-weight atoms are removed before solving and restored as zero
/// rows/columns of the returned plan.
TransportPlan solve_discrete_ot(const DiscreteMeasure& source, const DiscreteMeasure& target,
                                const CostMatrix& cost);

/// Entropy-regularized transport via log-domain Sinkhorn iterations.
/// The reported cost is the regularized objective
///   sum w*c + gamma * sum w*log(w*)
/// evaluated on the returned plan. Throws ConvergenceError (carrying the
/// last marginal residual) when max_iter is exhausted.
TransportPlan sinkhorn(const DiscreteMeasure& source, const DiscreteMeasure& target,
                       const CostMatrix& cost, double gamma, int max_iter = 10000,
                       double tol = 1e-9);
TransportPlan sinkhorn(const DiscreteMeasure& source, const DiscreteMeasure& target,
                       const CostMatrix& cost, const SinkhornOptions& opts);

/// Principal square root of a positive semidefinite matrix.
SpdMatrix spd_sqrt(const SpdMatrix& m);
SpdMatrix spd_sqrt(const Eigen::MatrixXd& m);

/// Square root and (pseudo-)inverse square root from one eigendecomposition.
/// Eigenvalues below rel_floor * max eigenvalue are not inverted.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> spd_sqrt_and_inv_sqrt(const Eigen::MatrixXd& m,
                                                                  double rel_floor = 1e-14);

/// 2-Wasserstein distance between the Gaussians N(a.mean, a.cov) and
/// N(b.mean, b.cov):
///   W2^2 = |m_a - m_b|^2 + tr(S_a + S_b - 2 (S_b^1/2 S_a S_b^1/2)^1/2).
/// Arguments are ordered canonically first, so the value is exactly
/// symmetric; identical parameters give exactly zero.
double gaussian_w2(const ClusterModel& a, const ClusterModel& b);
double gaussian_w2_squared(const ClusterModel& a, const ClusterModel& b);

/// Dispatch on the configured cluster dissimilarity. `Empirical` uses the
/// Gaussian moment form E|X-Y|^2 = |m_a-m_b|^2 + tr(S_a) + tr(S_b).
double cluster_distance(const ClusterModel& a, const ClusterModel& b, ClusterMetric metric);

}  // namespace otgate
