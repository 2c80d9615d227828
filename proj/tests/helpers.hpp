// Shared generators and independent oracles for the test suites. Oracles
// deliberately avoid the library's solver paths: the transport oracle
// enumerates basic feasible solutions, the linkage oracle recomputes
// cluster distances from the original matrix, the assignment oracle tries
// every permutation.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include "otgate/rng.hpp"
#include "otgate/types.hpp"

namespace testhelp {

inline Eigen::MatrixXd random_spd(otgate::Rng& rng, int d, double eig_lo = 0.3,
                                  double eig_hi = 2.0) {
    Eigen::MatrixXd g(d, d);
    for (int r = 0; r < d; ++r) {
        for (int c = 0; c < d; ++c) g(r, c) = rng.normal();
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ();
    Eigen::VectorXd eig(d);
    for (int i = 0; i < d; ++i) eig(i) = rng.uniform(eig_lo, eig_hi);
    Eigen::MatrixXd s = q * eig.asDiagonal() * q.transpose();
    return 0.5 * (s + s.transpose());
}

inline otgate::ClusterModel random_cluster(otgate::Rng& rng, int d, double spread = 5.0) {
    otgate::ClusterModel c;
    c.mean = spread * rng.normal_vector(d);
    c.cov = otgate::SpdMatrix(random_spd(rng, d));
    c.weight = 1.0;
    return c;
}

inline Eigen::VectorXd random_simplex(otgate::Rng& rng, int k) {
    Eigen::VectorXd w(k);
    double total = 0.0;
    for (int i = 0; i < k; ++i) {
        w(i) = 0.05 + rng.uniform();
        total += w(i);
    }
    w /= total;
    // Renormalize exactly enough for the 1e-9 sum check.
    w(k - 1) = 1.0 - w.head(k - 1).sum();
    return w;
}

inline otgate::CytometrySummary random_summary(otgate::Rng& rng, int k, int d,
                                               const std::string& id = "random",
                                               double spread = 5.0) {
    otgate::CytometrySummary s;
    s.source_id = id;
    const Eigen::VectorXd w = random_simplex(rng, k);
    for (int i = 0; i < k; ++i) {
        otgate::ClusterModel c = random_cluster(rng, d, spread);
        c.weight = w(i);
        s.clusters.push_back(std::move(c));
    }
    return s;
}

// Minimum transport cost by enumerating every basic feasible solution of
// the transportation polytope (spanning trees of the bipartite graph,
// flows solved by leaf stripping). Exact for small instances.
inline double ot_bruteforce(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                            const Eigen::MatrixXd& cost) {
    const int m = static_cast<int>(a.size());
    const int n = static_cast<int>(b.size());
    const int cells = m * n;
    const int basis_size = m + n - 1;
    double best = std::numeric_limits<double>::infinity();

    // Gosper's hack over all cell subsets with exactly m+n-1 members.
    const unsigned full = 1u << cells;
    unsigned mask = (1u << basis_size) - 1u;
    while (mask < full) {
        // Spanning-tree check via union-find over m+n nodes.
        std::vector<int> parent(m + n);
        std::iota(parent.begin(), parent.end(), 0);
        auto find = [&](int x) {
            while (parent[x] != x) x = parent[x] = parent[parent[x]];
            return x;
        };
        bool acyclic = true;
        for (int cell = 0; cell < cells && acyclic; ++cell) {
            if (!(mask & (1u << cell))) continue;
            const int i = cell / n;
            const int j = cell % n;
            const int ri = find(i);
            const int rj = find(m + j);
            if (ri == rj) {
                acyclic = false;
            } else {
                parent[ri] = rj;
            }
        }
        if (acyclic) {  // m+n-1 acyclic edges over m+n nodes => spanning tree
            std::vector<double> node_mass(m + n);
            for (int i = 0; i < m; ++i) node_mass[i] = a(i);
            for (int j = 0; j < n; ++j) node_mass[m + j] = b(j);
            std::vector<int> degree(m + n, 0);
            std::vector<std::vector<int>> incident(m + n);
            for (int cell = 0; cell < cells; ++cell) {
                if (!(mask & (1u << cell))) continue;
                const int i = cell / n;
                const int j = m + cell % n;
                ++degree[i];
                ++degree[j];
                incident[i].push_back(cell);
                incident[j].push_back(cell);
            }
            std::vector<bool> used_cell(cells, false), done_node(m + n, false);
            double total = 0.0;
            bool feasible = true;
            for (int round = 0; round < basis_size && feasible; ++round) {
                int leaf = -1;
                for (int v = 0; v < m + n; ++v) {
                    if (!done_node[v] && degree[v] == 1) {
                        leaf = v;
                        break;
                    }
                }
                if (leaf < 0) break;
                int cell = -1;
                for (int e : incident[leaf]) {
                    if (!used_cell[e]) {
                        cell = e;
                        break;
                    }
                }
                const double flow = node_mass[leaf];
                if (flow < -1e-12) {
                    feasible = false;
                    break;
                }
                const int i = cell / n;
                const int j = m + cell % n;
                total += std::max(0.0, flow) * cost(i, cell % n);
                used_cell[cell] = true;
                done_node[leaf] = true;
                const int other = (leaf == i) ? j : i;
                node_mass[other] -= flow;
                --degree[i];
                --degree[j];
            }
            if (feasible) best = std::min(best, total);
        }
        // Next subset of the same size.
        const unsigned c0 = mask & static_cast<unsigned>(-static_cast<int>(mask));
        const unsigned r = mask + c0;
        if (r >= full || c0 == 0) break;
        mask = (((mask ^ r) >> 2) / c0) | r;
    }
    return best;
}

// Feasible coupling by greedy filling in a random cell order; exhausts both
// marginals for any order.
inline Eigen::MatrixXd random_feasible_plan(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                                            otgate::Rng& rng) {
    const int m = static_cast<int>(a.size());
    const int n = static_cast<int>(b.size());
    std::vector<int> order(static_cast<std::size_t>(m * n));
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1],
                  order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(i) - 1))]);
    }
    Eigen::VectorXd ra = a, rb = b;
    Eigen::MatrixXd plan = Eigen::MatrixXd::Zero(m, n);
    for (int cell : order) {
        const int i = cell / n;
        const int j = cell % n;
        const double f = std::min(ra(i), rb(j));
        plan(i, j) = f;
        ra(i) -= f;
        rb(j) -= f;
    }
    return plan;
}

// Direct-recomputation agglomerative reference: cluster distances are
// evaluated from the original matrix at every step (no Lance-Williams).
struct NaiveMerge {
    int left, right;
    double height;
};

inline std::vector<NaiveMerge> naive_linkage(const Eigen::MatrixXd& dist,
                                             const std::string& linkage) {
    const int n = static_cast<int>(dist.rows());
    struct Cluster {
        std::vector<int> members;
        int node;
        int min_leaf;
    };
    std::vector<Cluster> active;
    for (int i = 0; i < n; ++i) active.push_back({{i}, i, i});
    std::vector<NaiveMerge> merges;
    int next_node = n;
    while (active.size() > 1) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 1;
        for (std::size_t x = 0; x < active.size(); ++x) {
            for (std::size_t y = 0; y < active.size(); ++y) {
                if (active[x].min_leaf >= active[y].min_leaf) continue;
                double d;
                if (linkage == "single") {
                    d = std::numeric_limits<double>::infinity();
                    for (int p : active[x].members) {
                        for (int q : active[y].members) d = std::min(d, dist(p, q));
                    }
                } else if (linkage == "complete") {
                    d = 0.0;
                    for (int p : active[x].members) {
                        for (int q : active[y].members) d = std::max(d, dist(p, q));
                    }
                } else {
                    d = 0.0;
                    for (int p : active[x].members) {
                        for (int q : active[y].members) d += dist(p, q);
                    }
                    d /= static_cast<double>(active[x].members.size() * active[y].members.size());
                }
                const bool better =
                    d < best ||
                    (d == best && std::make_pair(active[x].min_leaf, active[y].min_leaf) <
                                      std::make_pair(active[bi].min_leaf, active[bj].min_leaf));
                if (better) {
                    best = d;
                    bi = x;
                    bj = y;
                }
            }
        }
        merges.push_back({active[bi].node, active[bj].node, best});
        Cluster merged;
        merged.members = active[bi].members;
        merged.members.insert(merged.members.end(), active[bj].members.begin(),
                              active[bj].members.end());
        merged.node = next_node++;
        merged.min_leaf = std::min(active[bi].min_leaf, active[bj].min_leaf);
        active.erase(active.begin() + static_cast<long>(std::max(bi, bj)));
        active.erase(active.begin() + static_cast<long>(std::min(bi, bj)));
        active.push_back(merged);
    }
    return merges;
}

// Exhaustive assignment minimum over all column permutations.
inline double assignment_bruteforce(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (int i = 0; i < n; ++i) total += cost(i, perm[static_cast<std::size_t>(i)]);
        best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

// Straightforward set-based F-measure (independent of the library's
// contingency-table route).
inline double naive_f_measure(const std::vector<std::string>& gt,
                              const std::vector<std::string>& pred) {
    std::map<std::string, std::set<std::size_t>> gt_clusters, pred_clusters;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        gt_clusters[gt[i]].insert(i);
        pred_clusters[pred[i]].insert(i);
    }
    double total = 0.0;
    for (const auto& [gl, gset] : gt_clusters) {
        double best = 0.0;
        for (const auto& [pl, pset] : pred_clusters) {
            std::size_t overlap = 0;
            for (std::size_t idx : pset) overlap += gset.count(idx);
            const double r = static_cast<double>(overlap) / static_cast<double>(gset.size());
            const double p = static_cast<double>(overlap) / static_cast<double>(pset.size());
            const double f = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
            best = std::max(best, f);
        }
        total += static_cast<double>(gset.size()) / static_cast<double>(gt.size()) * best;
    }
    return total;
}

// Adjusted Rand index between two assignments.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    const std::size_t n = a.size();
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> ca, cb;
    for (std::size_t i = 0; i < n; ++i) {
        ++joint[{a[i], b[i]}];
        ++ca[a[i]];
        ++cb[b[i]];
    }
    auto comb2 = [](double x) { return x * (x - 1.0) / 2.0; };
    double sum_joint = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (const auto& [k, v] : joint) {
        (void)k;
        sum_joint += comb2(v);
    }
    for (const auto& [k, v] : ca) {
        (void)k;
        sum_a += comb2(v);
    }
    for (const auto& [k, v] : cb) {
        (void)k;
        sum_b += comb2(v);
    }
    const double expected = sum_a * sum_b / comb2(static_cast<double>(n));
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 1.0;
    return (sum_joint - expected) / (max_index - expected);
}

// Events drawn from a Gaussian mixture, labels = component names.
inline otgate::LabeledEvents sample_mixture(otgate::Rng& rng,
                                            const std::vector<otgate::ClusterModel>& components,
                                            const std::vector<int>& counts) {
    const int d = static_cast<int>(components.front().dim());
    int total = 0;
    for (int c : counts) total += c;
    otgate::LabeledEvents out;
    out.events.resize(total, d);
    out.labels.reserve(static_cast<std::size_t>(total));
    Eigen::Index row = 0;
    for (std::size_t k = 0; k < components.size(); ++k) {
        const Eigen::MatrixXd chol =
            Eigen::LLT<Eigen::MatrixXd>(components[k].cov.mat()).matrixL();
        for (int e = 0; e < counts[k]; ++e) {
            out.events.row(row++) =
                (components[k].mean + chol * rng.normal_vector(d)).transpose();
            out.labels.push_back(components[k].label ? *components[k].label
                                                     : "c" + std::to_string(k));
        }
    }
    return out;
}

}  // namespace testhelp
