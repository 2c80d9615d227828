#include "otgate/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <tuple>

namespace otgate {

Linkage linkage_from_string(const std::string& s) {
    if (s == "single") return Linkage::Single;
    if (s == "complete") return Linkage::Complete;
    if (s == "average") return Linkage::Average;
    throw std::invalid_argument("unknown linkage: " + s);
}

const char* to_string(Linkage l) {
    switch (l) {
        case Linkage::Single: return "single";
        case Linkage::Complete: return "complete";
        case Linkage::Average: return "average";
    }
    return "?";
}

std::vector<std::vector<std::size_t>> MetaPartition::groups() const {
    std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(group_count));
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        if (assignment[i] > 0) out[static_cast<std::size_t>(assignment[i] - 1)].push_back(i);
    }
    return out;
}

Dendrogram hierarchical_cluster(const DistanceMatrix& dm, Linkage linkage) {
    dm.validate();
    const int n = static_cast<int>(dm.size());
    if (n < 2) {
        throw std::invalid_argument("hierarchical_cluster: need at least two entries");
    }

    // Slot s holds the cluster whose smallest leaf is s, so scanning slots
    // in lexicographic order realizes the lowest-index tie break.
    Eigen::MatrixXd dist = dm.entries;
    std::vector<bool> active(n, true);
    std::vector<int> node_of(n), size_of(n, 1);
    std::iota(node_of.begin(), node_of.end(), 0);

    Dendrogram tree;
    tree.leaf_ids = dm.ids;
    tree.merges.reserve(n - 1);

    for (int step = 0; step < n - 1; ++step) {
        int best_i = -1, best_j = -1;
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) {
            if (!active[i]) continue;
            for (int j = i + 1; j < n; ++j) {
                if (!active[j]) continue;
                if (dist(i, j) < best) {
                    best = dist(i, j);
                    best_i = i;
                    best_j = j;
                }
            }
        }

        tree.merges.push_back({node_of[best_i], node_of[best_j], best});
        const double si = size_of[best_i];
        const double sj = size_of[best_j];
        for (int c = 0; c < n; ++c) {
            if (!active[c] || c == best_i || c == best_j) continue;
            double merged = 0.0;
            switch (linkage) {
                case Linkage::Single:
                    merged = std::min(dist(best_i, c), dist(best_j, c));
                    break;
                case Linkage::Complete:
                    merged = std::max(dist(best_i, c), dist(best_j, c));
                    break;
                case Linkage::Average:
                    merged = (si * dist(best_i, c) + sj * dist(best_j, c)) / (si + sj);
                    break;
            }
            dist(best_i, c) = merged;
            dist(c, best_i) = merged;
        }
        node_of[best_i] = n + step;
        size_of[best_i] += size_of[best_j];
        active[best_j] = false;
    }
    return tree;
}

MetaPartition cut_tree(const Dendrogram& tree, int k) {
    const int n = tree.leaf_count();
    if (k < 1 || k > n) {
        throw std::invalid_argument("cut_tree: k must be in [1, leaf count]");
    }
    if (static_cast<int>(tree.merges.size()) != n - 1) {
        throw std::invalid_argument("cut_tree: malformed dendrogram");
    }

    // Union-find over leaves; applying the first n-k merges leaves exactly
    // k components.
    std::vector<int> parent(2 * n - 1);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    for (int t = 0; t < n - k; ++t) {
        const auto& m = tree.merges[static_cast<std::size_t>(t)];
        const int target = n + t;
        parent[find(m.left)] = target;
        parent[find(m.right)] = target;
    }

    MetaPartition part;
    part.ids = tree.leaf_ids;
    part.assignment.assign(static_cast<std::size_t>(n), 0);
    std::vector<int> group_of_root(2 * n - 1, 0);
    int next_group = 0;
    for (int leaf = 0; leaf < n; ++leaf) {
        const int root = find(leaf);
        if (group_of_root[root] == 0) group_of_root[root] = ++next_group;
        part.assignment[static_cast<std::size_t>(leaf)] = group_of_root[root];
    }
    part.group_count = next_group;
    return part;
}

namespace {

// Lambda scale for the condensed hierarchy; distances below the floor are
// treated as coincident points.
double to_lambda(double dist) { return 1.0 / std::max(dist, 1e-12); }

struct SlNode {
    int left = -1;   // child node ids; -1 for leaves
    int right = -1;
    double dist = 0.0;
    int size = 1;
};

void collect_leaves(const std::vector<SlNode>& nodes, int node, std::vector<int>& out) {
    if (nodes[static_cast<std::size_t>(node)].left < 0) {
        out.push_back(node);
        return;
    }
    collect_leaves(nodes, nodes[static_cast<std::size_t>(node)].left, out);
    collect_leaves(nodes, nodes[static_cast<std::size_t>(node)].right, out);
}

}  // namespace

MetaPartition density_cluster(const DistanceMatrix& dm, int min_cluster_size) {
    dm.validate();
    const int n = static_cast<int>(dm.size());
    if (n < 2) {
        throw std::invalid_argument("density_cluster: need at least two entries");
    }
    if (min_cluster_size < 1) {
        throw std::invalid_argument("density_cluster: min_cluster_size must be >= 1");
    }

    MetaPartition part;
    part.ids = dm.ids;
    part.assignment.assign(static_cast<std::size_t>(n), 0);

    if (min_cluster_size == 1) {
        // Every point is dense by itself: the finest partition, with exact
        // duplicates (distance 0) kept together.
        std::vector<int> uf(static_cast<std::size_t>(n));
        std::iota(uf.begin(), uf.end(), 0);
        std::function<int(int)> find = [&](int x) {
            while (uf[static_cast<std::size_t>(x)] != x) x = uf[static_cast<std::size_t>(x)];
            return x;
        };
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                if (dm.entries(i, j) <= 1e-12) uf[static_cast<std::size_t>(find(j))] = find(i);
            }
        }
        std::vector<int> group_of_root(static_cast<std::size_t>(n), 0);
        int next_group = 0;
        for (int i = 0; i < n; ++i) {
            const int root = find(i);
            if (group_of_root[static_cast<std::size_t>(root)] == 0) {
                group_of_root[static_cast<std::size_t>(root)] = ++next_group;
            }
            part.assignment[static_cast<std::size_t>(i)] =
                group_of_root[static_cast<std::size_t>(root)];
        }
        part.group_count = next_group;
        return part;
    }

    // Core distance: the point is its own first neighbor, so the
    // min_cluster_size-th neighbor is the (min_cluster_size-1)-th other.
    Eigen::VectorXd core(n);
    {
        std::vector<double> row(static_cast<std::size_t>(n) - 1);
        for (int i = 0; i < n; ++i) {
            std::size_t w = 0;
            for (int j = 0; j < n; ++j) {
                if (j != i) row[w++] = dm.entries(i, j);
            }
            std::sort(row.begin(), row.end());
            const std::size_t idx =
                std::min<std::size_t>(static_cast<std::size_t>(min_cluster_size) - 2, row.size() - 1);
            core(i) = row[idx];
        }
    }

    // Prim's MST on the mutual-reachability graph.
    auto mreach = [&](int i, int j) {
        return std::max({core(i), core(j), dm.entries(i, j)});
    };
    struct Edge {
        int a, b;
        double w;
    };
    std::vector<Edge> mst;
    mst.reserve(static_cast<std::size_t>(n) - 1);
    {
        std::vector<bool> in_tree(static_cast<std::size_t>(n), false);
        std::vector<double> best(static_cast<std::size_t>(n),
                                 std::numeric_limits<double>::infinity());
        std::vector<int> from(static_cast<std::size_t>(n), -1);
        in_tree[0] = true;
        for (int j = 1; j < n; ++j) {
            best[static_cast<std::size_t>(j)] = mreach(0, j);
            from[static_cast<std::size_t>(j)] = 0;
        }
        for (int step = 1; step < n; ++step) {
            int pick = -1;
            for (int j = 0; j < n; ++j) {
                if (in_tree[static_cast<std::size_t>(j)]) continue;
                if (pick < 0 || best[static_cast<std::size_t>(j)] < best[static_cast<std::size_t>(pick)]) {
                    pick = j;
                }
            }
            in_tree[static_cast<std::size_t>(pick)] = true;
            mst.push_back({std::min(from[static_cast<std::size_t>(pick)], pick),
                           std::max(from[static_cast<std::size_t>(pick)], pick),
                           best[static_cast<std::size_t>(pick)]});
            for (int j = 0; j < n; ++j) {
                if (in_tree[static_cast<std::size_t>(j)]) continue;
                const double w = mreach(pick, j);
                if (w < best[static_cast<std::size_t>(j)]) {
                    best[static_cast<std::size_t>(j)] = w;
                    from[static_cast<std::size_t>(j)] = pick;
                }
            }
        }
    }
    std::sort(mst.begin(), mst.end(), [](const Edge& x, const Edge& y) {
        return std::tie(x.w, x.a, x.b) < std::tie(y.w, y.a, y.b);
    });

    // Single-linkage tree over mutual reachability. Union-find roots are
    // always the id of the component's current top node.
    std::vector<SlNode> nodes(static_cast<std::size_t>(2 * n - 1));
    {
        std::vector<int> uf(static_cast<std::size_t>(2 * n - 1));
        std::iota(uf.begin(), uf.end(), 0);
        auto find = [&](int x) {
            while (uf[static_cast<std::size_t>(x)] != x) {
                uf[static_cast<std::size_t>(x)] =
                    uf[static_cast<std::size_t>(uf[static_cast<std::size_t>(x)])];
                x = uf[static_cast<std::size_t>(x)];
            }
            return x;
        };
        int next = n;
        for (const Edge& e : mst) {
            const int ra = find(e.a);
            const int rb = find(e.b);
            SlNode& nd = nodes[static_cast<std::size_t>(next)];
            nd.left = std::min(ra, rb);
            nd.right = std::max(ra, rb);
            nd.dist = e.w;
            nd.size = nodes[static_cast<std::size_t>(nd.left)].size +
                      nodes[static_cast<std::size_t>(nd.right)].size;
            uf[static_cast<std::size_t>(ra)] = next;
            uf[static_cast<std::size_t>(rb)] = next;
            ++next;
        }
    }
    const int sl_root = 2 * n - 2;

    // Condense: clusters persist while they keep >= min_cluster_size points;
    // smaller split-offs depart as candidate noise.
    struct Cluster {
        int parent = -1;
        double birth = 0.0;
        double stability = 0.0;
        bool has_children = false;
    };
    std::vector<Cluster> clusters;
    std::vector<int> depart_cluster(static_cast<std::size_t>(n), -1);

    clusters.push_back({-1, 0.0, 0.0, false});
    struct Item {
        int sl_node;
        int cluster;
    };
    std::vector<Item> stack{{sl_root, 0}};
    auto shed = [&](int sl_node, int cluster, double lambda) {
        std::vector<int> leaves;
        collect_leaves(nodes, sl_node, leaves);
        for (int leaf : leaves) depart_cluster[static_cast<std::size_t>(leaf)] = cluster;
        clusters[static_cast<std::size_t>(cluster)].stability +=
            static_cast<double>(leaves.size()) *
            (lambda - clusters[static_cast<std::size_t>(cluster)].birth);
    };
    while (!stack.empty()) {
        const Item item = stack.back();
        stack.pop_back();
        const SlNode& nd = nodes[static_cast<std::size_t>(item.sl_node)];
        const double lambda = to_lambda(nd.dist);
        const int ls = nodes[static_cast<std::size_t>(nd.left)].size;
        const int rs = nodes[static_cast<std::size_t>(nd.right)].size;
        if (ls >= min_cluster_size && rs >= min_cluster_size) {
            clusters[static_cast<std::size_t>(item.cluster)].stability +=
                static_cast<double>(nd.size) *
                (lambda - clusters[static_cast<std::size_t>(item.cluster)].birth);
            clusters[static_cast<std::size_t>(item.cluster)].has_children = true;
            for (int child : {nd.left, nd.right}) {
                clusters.push_back({item.cluster, lambda, 0.0, false});
                stack.push_back({child, static_cast<int>(clusters.size()) - 1});
            }
        } else if (ls >= min_cluster_size) {
            shed(nd.right, item.cluster, lambda);
            stack.push_back({nd.left, item.cluster});
        } else if (rs >= min_cluster_size) {
            shed(nd.left, item.cluster, lambda);
            stack.push_back({nd.right, item.cluster});
        } else {
            shed(nd.left, item.cluster, lambda);
            shed(nd.right, item.cluster, lambda);
        }
    }

    // Excess-of-mass selection; the root is never selectable on its own.
    const std::size_t m = clusters.size();
    std::vector<double> best_mass(m, 0.0);
    std::vector<bool> selected(m, false);
    std::vector<double> child_sum(m, 0.0);
    for (std::size_t c = m; c-- > 0;) {
        const Cluster& cl = clusters[c];
        if (c == 0) {
            selected[0] = false;
            break;
        }
        if (!cl.has_children || cl.stability >= child_sum[c]) {
            best_mass[c] = cl.stability;
            selected[c] = true;
        } else {
            best_mass[c] = child_sum[c];
        }
        child_sum[static_cast<std::size_t>(cl.parent)] += best_mass[c];
    }
    // Keep only the highest selected cluster on every root-to-leaf chain.
    for (std::size_t c = 1; c < m; ++c) {
        if (!selected[c]) continue;
        for (int a = clusters[c].parent; a > 0; a = clusters[static_cast<std::size_t>(a)].parent) {
            if (selected[static_cast<std::size_t>(a)]) {
                selected[c] = false;
                break;
            }
        }
    }

    // Points belong to the selected ancestor of their departure cluster.
    std::vector<int> chosen(static_cast<std::size_t>(n), -1);
    for (int p = 0; p < n; ++p) {
        for (int c = depart_cluster[static_cast<std::size_t>(p)]; c >= 0;
             c = clusters[static_cast<std::size_t>(c)].parent) {
            if (selected[static_cast<std::size_t>(c)]) {
                chosen[static_cast<std::size_t>(p)] = c;
                break;
            }
        }
    }

    // Number groups by their smallest member index.
    std::vector<int> group_of_cluster(m, 0);
    int next_group = 0;
    for (int p = 0; p < n; ++p) {
        const int c = chosen[static_cast<std::size_t>(p)];
        if (c < 0) continue;
        if (group_of_cluster[static_cast<std::size_t>(c)] == 0) {
            group_of_cluster[static_cast<std::size_t>(c)] = ++next_group;
        }
        part.assignment[static_cast<std::size_t>(p)] = group_of_cluster[static_cast<std::size_t>(c)];
    }
    part.group_count = next_group;
    return part;
}

}  // namespace otgate
