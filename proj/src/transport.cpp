#include "otgate/transport.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <vector>

#include "otgate/partition_metrics.hpp"

namespace otgate {

DiscreteMeasure::DiscreteMeasure(Eigen::VectorXd weights) : weights_(std::move(weights)) {
    if (weights_.size() < 1) {
        throw std::invalid_argument("DiscreteMeasure: needs at least one atom");
    }
    double total = 0.0;
    for (Eigen::Index i = 0; i < weights_.size(); ++i) {
        const double w = weights_(i);
        if (!std::isfinite(w) || w < 0.0) {
            throw std::invalid_argument("DiscreteMeasure: weights must be nonnegative");
        }
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw std::invalid_argument("DiscreteMeasure: weights must sum to 1");
    }
}

CostMatrix::CostMatrix(Eigen::MatrixXd entries) : entries_(std::move(entries)) {
    if (entries_.rows() < 1 || entries_.cols() < 1) {
        throw std::invalid_argument("CostMatrix: empty matrix");
    }
    for (Eigen::Index i = 0; i < entries_.rows(); ++i) {
        for (Eigen::Index j = 0; j < entries_.cols(); ++j) {
            const double c = entries_(i, j);
            if (!std::isfinite(c) || c < 0.0) {
                throw std::invalid_argument("CostMatrix: entries must be finite and nonnegative");
            }
        }
    }
}

namespace {

// ---------------------------------------------------------------------------
// Transportation simplex
// ---------------------------------------------------------------------------

struct BasicCell {
    int row;
    int col;
    double flow;
    bool active = true;
};

class TransportSimplex {
public:
    TransportSimplex(std::vector<double> supply, std::vector<double> demand,
                     Eigen::MatrixXd cost)
        : a_(std::move(supply)), b_(std::move(demand)), c_(std::move(cost)),
          m_(static_cast<int>(a_.size())), n_(static_cast<int>(b_.size())) {}

    // Runs to optimality; returns the reduced-problem plan.
    Eigen::MatrixXd solve() {
        northwest_corner();
        const double scale = std::max(1.0, c_.cwiseAbs().maxCoeff());
        const double rc_tol = 1e-12 * scale;
        const long bland_after = 4L * (m_ + n_) * (m_ + n_) + 1000;
        const long hard_cap = bland_after * 64 + 1000000;

        for (long pivot = 0;; ++pivot) {
            if (pivot > hard_cap) {
                throw std::runtime_error("solve_discrete_ot: pivot limit exceeded");
            }
            compute_potentials();
            const bool bland = pivot >= bland_after;
            int ei = -1, ej = -1;
            double best = -rc_tol;
            for (int i = 0; i < m_ && ei < 0; ++i) {
                for (int j = 0; j < n_; ++j) {
                    if (in_basis_(i, j)) continue;
                    const double rc = c_(i, j) - u_[i] - v_[j];
                    if (rc < best) {
                        best = rc;
                        ei = i;
                        ej = j;
                        if (bland) break;  // first eligible cell
                    }
                }
                if (bland && ei >= 0) break;
            }
            if (ei < 0) break;  // optimal
            pivot_on(ei, ej);
        }

        Eigen::MatrixXd plan = Eigen::MatrixXd::Zero(m_, n_);
        for (const BasicCell& cell : cells_) {
            if (cell.active) plan(cell.row, cell.col) = cell.flow;
        }
        return plan;
    }

private:
    void northwest_corner() {
        in_basis_ = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(m_, n_, false);
        std::vector<double> ra = a_, rb = b_;
        int i = 0, j = 0;
        for (;;) {
            const double x = std::min(ra[i], rb[j]);
            add_basic(i, j, x);
            ra[i] -= x;
            rb[j] -= x;
            if (i == m_ - 1 && j == n_ - 1) break;
            // Advance exactly one index per step so the basis stays a tree
            // with m+n-1 cells (ties advance the row and leave a degenerate
            // zero-flow cell behind).
            if (i < m_ - 1 && (ra[i] <= rb[j] || j == n_ - 1)) {
                ++i;
            } else {
                ++j;
            }
        }
    }

    void add_basic(int i, int j, double flow) {
        cells_.push_back({i, j, flow, true});
        in_basis_(i, j) = true;
        row_cells_.resize(m_);
        col_cells_.resize(n_);
        row_cells_[i].push_back(static_cast<int>(cells_.size()) - 1);
        col_cells_[j].push_back(static_cast<int>(cells_.size()) - 1);
    }

    // u_i + v_j = c_ij on basic cells, rooted at u_0 = 0. The basis is a
    // spanning tree of the bipartite row/column graph, so one sweep fixes
    // every potential.
    void compute_potentials() {
        u_.assign(m_, 0.0);
        v_.assign(n_, 0.0);
        std::vector<bool> row_done(m_, false), col_done(n_, false);
        std::deque<int> queue;  // nodes: rows [0,m), cols [m, m+n)
        row_done[0] = true;
        queue.push_back(0);
        while (!queue.empty()) {
            const int node = queue.front();
            queue.pop_front();
            if (node < m_) {
                for (int ci : row_cells_[node]) {
                    const BasicCell& cell = cells_[ci];
                    if (!cell.active || col_done[cell.col]) continue;
                    v_[cell.col] = c_(cell.row, cell.col) - u_[cell.row];
                    col_done[cell.col] = true;
                    queue.push_back(m_ + cell.col);
                }
            } else {
                const int j = node - m_;
                for (int ci : col_cells_[j]) {
                    const BasicCell& cell = cells_[ci];
                    if (!cell.active || row_done[cell.row]) continue;
                    u_[cell.row] = c_(cell.row, cell.col) - v_[cell.col];
                    row_done[cell.row] = true;
                    queue.push_back(cell.row);
                }
            }
        }
    }

    // Entering cell closes a unique cycle with the basis tree; alternate
    // +/- around it, move the bottleneck flow, drop the blocking cell.
    void pivot_on(int ei, int ej) {
        const int nodes = m_ + n_;
        std::vector<int> parent_node(nodes, -2), parent_cell(nodes, -1);
        std::deque<int> queue;
        parent_node[ei] = -1;
        queue.push_back(ei);
        while (!queue.empty()) {
            const int node = queue.front();
            queue.pop_front();
            if (node == m_ + ej) break;
            if (node < m_) {
                for (int ci : row_cells_[node]) {
                    const BasicCell& cell = cells_[ci];
                    if (!cell.active) continue;
                    const int next = m_ + cell.col;
                    if (parent_node[next] != -2) continue;
                    parent_node[next] = node;
                    parent_cell[next] = ci;
                    queue.push_back(next);
                }
            } else {
                for (int ci : col_cells_[node - m_]) {
                    const BasicCell& cell = cells_[ci];
                    if (!cell.active) continue;
                    const int next = cell.row;
                    if (parent_node[next] != -2) continue;
                    parent_node[next] = node;
                    parent_cell[next] = ci;
                    queue.push_back(next);
                }
            }
        }

        // Walk back from col(ej) to row(ei); signs alternate starting with -.
        std::vector<int> minus_cells, plus_cells;
        int node = m_ + ej;
        bool minus = true;
        while (parent_node[node] != -1) {
            const int ci = parent_cell[node];
            (minus ? minus_cells : plus_cells).push_back(ci);
            minus = !minus;
            node = parent_node[node];
        }

        double theta = std::numeric_limits<double>::infinity();
        int leaving = -1;
        for (int ci : minus_cells) {
            const BasicCell& cell = cells_[ci];
            if (cell.flow < theta ||
                (cell.flow == theta && leaving >= 0 &&
                 std::make_pair(cell.row, cell.col) <
                     std::make_pair(cells_[leaving].row, cells_[leaving].col))) {
                theta = cell.flow;
                leaving = ci;
            }
        }

        for (int ci : plus_cells) cells_[ci].flow += theta;
        for (int ci : minus_cells) {
            cells_[ci].flow = std::max(0.0, cells_[ci].flow - theta);
        }
        cells_[leaving].active = false;
        in_basis_(cells_[leaving].row, cells_[leaving].col) = false;
        add_basic(ei, ej, theta);
    }

    std::vector<double> a_, b_;
    Eigen::MatrixXd c_;
    int m_, n_;
    std::vector<BasicCell> cells_;
    std::vector<std::vector<int>> row_cells_, col_cells_;
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> in_basis_;
    std::vector<double> u_, v_;
};

double log_sum_exp(const Eigen::VectorXd& x) {
    const double m = x.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((x.array() - m).exp().sum());
}

}  // namespace

TransportPlan solve_discrete_ot(const DiscreteMeasure& source, const DiscreteMeasure& target,
                                const CostMatrix& cost) {
    if (cost.rows() != source.size() || cost.cols() != target.size()) {
        throw std::invalid_argument("solve_discrete_ot: cost dimensions do not match measures");
    }

    // Zero-weight atoms would make the simplex basis degenerate from the
    // start; solve on the support and restore zero rows/columns after.
    std::vector<int> rows, cols;
    for (Eigen::Index i = 0; i < source.size(); ++i) {
        if (source.weights()(i) > 0.0) rows.push_back(static_cast<int>(i));
    }
    for (Eigen::Index j = 0; j < target.size(); ++j) {
        if (target.weights()(j) > 0.0) cols.push_back(static_cast<int>(j));
    }

    const int m = static_cast<int>(rows.size());
    const int n = static_cast<int>(cols.size());
    std::vector<double> a(m), b(n);
    Eigen::MatrixXd c(m, n);
    for (int i = 0; i < m; ++i) {
        a[i] = source.weights()(rows[i]);
        for (int j = 0; j < n; ++j) c(i, j) = cost.entries()(rows[i], cols[j]);
    }
    for (int j = 0; j < n; ++j) b[j] = target.weights()(cols[j]);

    TransportSimplex simplex(a, b, c);
    const Eigen::MatrixXd reduced = simplex.solve();

    TransportPlan result;
    result.plan = Eigen::MatrixXd::Zero(source.size(), target.size());
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) result.plan(rows[i], cols[j]) = reduced(i, j);
    }
    result.cost = (result.plan.array() * cost.entries().array()).sum();
    return result;
}

TransportPlan sinkhorn(const DiscreteMeasure& source, const DiscreteMeasure& target,
                       const CostMatrix& cost, const SinkhornOptions& opts) {
    double gamma = opts.gamma;
    if (gamma <= 0.0) {
        std::vector<double> entries(cost.entries().data(),
                                    cost.entries().data() + cost.entries().size());
        std::nth_element(entries.begin(), entries.begin() + entries.size() / 2, entries.end());
        gamma = 0.01 * std::max(entries[entries.size() / 2], 1e-12);
    }
    return sinkhorn(source, target, cost, gamma, opts.max_iter, opts.tol);
}

TransportPlan sinkhorn(const DiscreteMeasure& source, const DiscreteMeasure& target,
                       const CostMatrix& cost, double gamma, int max_iter, double tol) {
    if (!(gamma > 0.0)) {
        throw std::invalid_argument("sinkhorn: gamma must be positive");
    }
    if (cost.rows() != source.size() || cost.cols() != target.size()) {
        throw std::invalid_argument("sinkhorn: cost dimensions do not match measures");
    }

    std::vector<int> rows, cols;
    for (Eigen::Index i = 0; i < source.size(); ++i) {
        if (source.weights()(i) > 0.0) rows.push_back(static_cast<int>(i));
    }
    for (Eigen::Index j = 0; j < target.size(); ++j) {
        if (target.weights()(j) > 0.0) cols.push_back(static_cast<int>(j));
    }
    const int m = static_cast<int>(rows.size());
    const int n = static_cast<int>(cols.size());

    Eigen::VectorXd logp(m), logq(n);
    Eigen::MatrixXd c(m, n);
    for (int i = 0; i < m; ++i) {
        logp(i) = std::log(source.weights()(rows[i]));
        for (int j = 0; j < n; ++j) c(i, j) = cost.entries()(rows[i], cols[j]);
    }
    for (int j = 0; j < n; ++j) logq(j) = std::log(target.weights()(cols[j]));

    // Dual potentials, log-domain scaling. Columns are exact after every g
    // update; the row L1 residual is the convergence measure.
    Eigen::VectorXd f = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
    Eigen::MatrixXd logw(m, n);
    double residual = std::numeric_limits<double>::infinity();

    auto rebuild_plan = [&]() {
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) logw(i, j) = (f(i) + g(j) - c(i, j)) / gamma;
        }
    };

    bool converged = false;
    for (int it = 0; it < max_iter; ++it) {
        for (int i = 0; i < m; ++i) {
            f(i) = gamma * logp(i) - gamma * log_sum_exp((g - c.row(i).transpose()) / gamma);
        }
        for (int j = 0; j < n; ++j) {
            g(j) = gamma * logq(j) - gamma * log_sum_exp((f - c.col(j)) / gamma);
        }
        rebuild_plan();
        const Eigen::VectorXd row_sums = logw.array().exp().matrix().rowwise().sum();
        const Eigen::VectorXd col_sums = logw.array().exp().matrix().colwise().sum();
        const double row_res = (row_sums - logp.array().exp().matrix()).cwiseAbs().sum();
        const double col_res = (col_sums - logq.array().exp().matrix()).cwiseAbs().sum();
        residual = std::max(row_res, col_res);
        if (residual < tol) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        throw ConvergenceError("sinkhorn: marginal residual " + std::to_string(residual) +
                                   " after max_iter iterations",
                               residual);
    }

    TransportPlan result;
    result.plan = Eigen::MatrixXd::Zero(source.size(), target.size());
    double transport = 0.0, entropy = 0.0;
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            const double w = std::exp(logw(i, j));
            result.plan(rows[i], cols[j]) = w;
            transport += w * c(i, j);
            if (w > 0.0) entropy += w * std::log(w);
        }
    }
    result.cost = transport + gamma * entropy;
    return result;
}

SpdMatrix spd_sqrt(const SpdMatrix& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m.mat());
    if (eig.info() != Eigen::Success) {
        throw std::invalid_argument("spd_sqrt: eigendecomposition failed");
    }
    const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    Eigen::MatrixXd r = eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
    r = 0.5 * (r + r.transpose());
    return SpdMatrix(r);
}

SpdMatrix spd_sqrt(const Eigen::MatrixXd& m) { return spd_sqrt(SpdMatrix(m)); }

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> spd_sqrt_and_inv_sqrt(const Eigen::MatrixXd& m,
                                                                  double rel_floor) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
    if (eig.info() != Eigen::Success) {
        throw std::invalid_argument("spd_sqrt_and_inv_sqrt: eigendecomposition failed");
    }
    const Eigen::VectorXd ev = eig.eigenvalues().cwiseMax(0.0);
    const double floor = rel_floor * std::max(ev.maxCoeff(), 1e-300);
    Eigen::VectorXd root(ev.size()), inv_root(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        root(i) = std::sqrt(ev(i));
        inv_root(i) = ev(i) > floor ? 1.0 / root(i) : 0.0;
    }
    const Eigen::MatrixXd& q = eig.eigenvectors();
    return {q * root.asDiagonal() * q.transpose(), q * inv_root.asDiagonal() * q.transpose()};
}

namespace {

// Strict ordering on Gaussian parameters; used only to canonicalize the
// argument order so W2(a,b) and W2(b,a) run through the same arithmetic.
bool gaussian_less(const ClusterModel& a, const ClusterModel& b) {
    for (Eigen::Index i = 0; i < a.mean.size(); ++i) {
        if (a.mean(i) != b.mean(i)) return a.mean(i) < b.mean(i);
    }
    const auto& ma = a.cov.mat();
    const auto& mb = b.cov.mat();
    for (Eigen::Index i = 0; i < ma.rows(); ++i) {
        for (Eigen::Index j = 0; j < ma.cols(); ++j) {
            if (ma(i, j) != mb(i, j)) return ma(i, j) < mb(i, j);
        }
    }
    return false;
}

}  // namespace

double gaussian_w2_squared(const ClusterModel& a, const ClusterModel& b) {
    if (a.dim() != b.dim() || a.cov.dim() != a.dim() || b.cov.dim() != b.dim()) {
        throw std::invalid_argument("gaussian_w2: dimension mismatch");
    }
    const ClusterModel* lo = &a;
    const ClusterModel* hi = &b;
    if (gaussian_less(*hi, *lo)) std::swap(lo, hi);

    const double mean_part = (lo->mean - hi->mean).squaredNorm();
    if (lo->cov.mat() == hi->cov.mat()) {
        return mean_part;  // shared covariance cancels exactly
    }

    const SpdMatrix root_hi = spd_sqrt(hi->cov);
    Eigen::MatrixXd inner = root_hi.mat() * lo->cov.mat() * root_hi.mat();
    inner = 0.5 * (inner + inner.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(inner);
    if (eig.info() != Eigen::Success) {
        throw std::invalid_argument("gaussian_w2: eigendecomposition failed");
    }
    const double cross = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    const double bures =
        std::max(0.0, lo->cov.mat().trace() + hi->cov.mat().trace() - 2.0 * cross);
    return mean_part + bures;
}

double gaussian_w2(const ClusterModel& a, const ClusterModel& b) {
    return std::sqrt(gaussian_w2_squared(a, b));
}

double cluster_distance(const ClusterModel& a, const ClusterModel& b, ClusterMetric metric) {
    switch (metric) {
        case ClusterMetric::GaussianW2:
            return gaussian_w2(a, b);
        case ClusterMetric::GaussianW2Squared:
            return gaussian_w2_squared(a, b);
        case ClusterMetric::SymmetricKl:
            return symmetric_kl(a, b);
        case ClusterMetric::Empirical:
            return (a.mean - b.mean).squaredNorm() + a.cov.mat().trace() + b.cov.mat().trace();
    }
    throw std::invalid_argument("cluster_distance: unknown metric");
}

}  // namespace otgate
