#include "otgate/barycenter.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numeric>

#include "otgate/rng.hpp"
#include "otgate/transport.hpp"

namespace otgate {

namespace {

void check_lambdas(const std::vector<ClusterModel>& models, const Eigen::VectorXd& lambdas) {
    if (models.empty()) {
        throw std::invalid_argument("barycenter: no input models");
    }
    if (lambdas.size() != static_cast<Eigen::Index>(models.size())) {
        throw std::invalid_argument("barycenter: lambda count does not match models");
    }
    double total = 0.0;
    for (Eigen::Index i = 0; i < lambdas.size(); ++i) {
        if (!(lambdas(i) >= 0.0)) {
            throw std::invalid_argument("barycenter: lambdas must be nonnegative");
        }
        total += lambdas(i);
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw std::invalid_argument("barycenter: lambdas must sum to 1");
    }
    const Eigen::Index d = models.front().dim();
    for (const ClusterModel& m : models) {
        if (m.dim() != d || m.cov.dim() != d) {
            throw std::invalid_argument("barycenter: inconsistent dimensions");
        }
    }
}

}  // namespace

ClusterModel gaussian_barycenter(const std::vector<ClusterModel>& models,
                                 const Eigen::VectorXd& lambdas, const BarycenterOptions& opts,
                                 BarycenterDiagnostics* diag) {
    check_lambdas(models, lambdas);
    const Eigen::Index d = models.front().dim();
    const std::size_t n = models.size();

    ClusterModel out;
    out.weight = 0.0;
    for (std::size_t i = 0; i < n; ++i) out.weight += lambdas(static_cast<Eigen::Index>(i)) * models[i].weight;
    if (std::all_of(models.begin(), models.end(), [&](const ClusterModel& m) {
            return m.label == models.front().label;
        })) {
        out.label = models.front().label;
    }

    bool same_mean = true, same_cov = true;
    for (std::size_t i = 1; i < n; ++i) {
        same_mean = same_mean && models[i].mean == models.front().mean;
        same_cov = same_cov && models[i].cov.mat() == models.front().cov.mat();
    }

    if (same_mean) {
        out.mean = models.front().mean;
    } else {
        out.mean = Eigen::VectorXd::Zero(d);
        for (std::size_t i = 0; i < n; ++i) {
            out.mean += lambdas(static_cast<Eigen::Index>(i)) * models[i].mean;
        }
    }

    if (same_cov) {
        // Any shared covariance is a fixed point of the iteration.
        out.cov = models.front().cov;
        if (diag) *diag = {0, 0.0};
        return out;
    }

    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t i = 0; i < n; ++i) {
        s += lambdas(static_cast<Eigen::Index>(i)) * models[i].cov.mat();
    }

    double residual = std::numeric_limits<double>::infinity();
    for (int it = 0; it < opts.max_iter; ++it) {
        const auto [root, inv_root] = spd_sqrt_and_inv_sqrt(s);
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d, d);
        for (std::size_t i = 0; i < n; ++i) {
            if (lambdas(static_cast<Eigen::Index>(i)) == 0.0) continue;
            Eigen::MatrixXd inner = root * models[i].cov.mat() * root;
            acc += lambdas(static_cast<Eigen::Index>(i)) * spd_sqrt(inner).mat();
        }
        Eigen::MatrixXd next = inv_root * acc * acc * inv_root;
        next = 0.5 * (next + next.transpose());
        residual = (next - s).norm() / std::max(s.norm(), 1e-15);
        s = next;
        if (residual < opts.tol) {
            out.cov = SpdMatrix(s);
            if (diag) *diag = {it + 1, residual};
            return out;
        }
    }
    throw ConvergenceError("gaussian_barycenter: fixed point residual " +
                               std::to_string(residual) + " after max_iter iterations",
                           residual);
}

namespace {

Eigen::MatrixXd barycenter_costs(const std::vector<ClusterModel>& models,
                                 const std::vector<ClusterModel>& centers) {
    Eigen::MatrixXd c(models.size(), centers.size());
    for (std::size_t i = 0; i < models.size(); ++i) {
        for (std::size_t j = 0; j < centers.size(); ++j) {
            c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                gaussian_w2_squared(models[i], centers[j]);
        }
    }
    return c;
}

// Seeded k-means++ in W2^2: first pick lambda-weighted, then distance^2
// weighted; exhausted weights fall back to the lowest unchosen index.
std::vector<std::size_t> seed_centers(const std::vector<ClusterModel>& models,
                                      const Eigen::VectorXd& lambdas, int k, Rng& rng) {
    const std::size_t n = models.size();
    std::vector<std::size_t> chosen;
    std::vector<bool> is_chosen(n, false);
    std::vector<double> weight(n);
    for (std::size_t i = 0; i < n; ++i) weight[i] = lambdas(static_cast<Eigen::Index>(i));

    auto draw = [&](const std::vector<double>& w) -> std::size_t {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!is_chosen[i]) total += w[i];
        }
        if (total <= 0.0) {
            for (std::size_t i = 0; i < n; ++i) {
                if (!is_chosen[i]) return i;
            }
            return 0;
        }
        double u = rng.uniform() * total;
        for (std::size_t i = 0; i < n; ++i) {
            if (is_chosen[i]) continue;
            u -= w[i];
            if (u <= 0.0) return i;
        }
        for (std::size_t i = n; i-- > 0;) {
            if (!is_chosen[i]) return i;
        }
        return 0;
    };

    std::vector<double> dist2(n, std::numeric_limits<double>::infinity());
    for (int c = 0; c < k; ++c) {
        std::size_t pick;
        if (chosen.empty()) {
            pick = draw(weight);
        } else {
            std::vector<double> w(n);
            for (std::size_t i = 0; i < n; ++i) w[i] = weight[i] * dist2[i];
            pick = draw(w);
        }
        chosen.push_back(pick);
        is_chosen[pick] = true;
        for (std::size_t i = 0; i < n; ++i) {
            dist2[i] = std::min(dist2[i], gaussian_w2_squared(models[i], models[pick]));
        }
    }
    return chosen;
}

}  // namespace

KBarycenterResult k_barycenter(const std::vector<ClusterModel>& models,
                               const Eigen::VectorXd& lambdas, int k,
                               const BarycenterOptions& opts) {
    check_lambdas(models, lambdas);
    const std::size_t n = models.size();
    if (!(opts.trim_alpha >= 0.0 && opts.trim_alpha < 1.0)) {
        throw std::invalid_argument("k_barycenter: trim_alpha must be in [0,1)");
    }
    const std::size_t trim_count =
        static_cast<std::size_t>(std::ceil(static_cast<double>(n) * opts.trim_alpha));
    if (k < 1 || static_cast<std::size_t>(k) > n - trim_count) {
        throw std::invalid_argument("k_barycenter: k exceeds number of models after trimming");
    }

    const int restarts = std::max(1, opts.restarts);
    KBarycenterResult best;
    best.objective = std::numeric_limits<double>::infinity();
    Rng base(opts.seed);

    for (int r = 0; r < restarts; ++r) {
        Rng rng = base.fork(static_cast<std::uint64_t>(r));
        std::vector<ClusterModel> centers;
        for (std::size_t idx : seed_centers(models, lambdas, k, rng)) {
            centers.push_back(models[idx]);
        }

        std::vector<int> assign(n, -1), prev_assign;
        double objective = std::numeric_limits<double>::infinity();
        for (int it = 0; it < opts.max_iter; ++it) {
            Eigen::MatrixXd costs = barycenter_costs(models, centers);

            for (std::size_t i = 0; i < n; ++i) {
                int arg = 0;
                for (int j = 1; j < k; ++j) {
                    if (costs(static_cast<Eigen::Index>(i), j) <
                        costs(static_cast<Eigen::Index>(i), arg)) {
                        arg = j;
                    }
                }
                assign[i] = arg;
            }

            // Trim the worst-assigned models (largest W2^2 first).
            if (trim_count > 0) {
                std::vector<std::size_t> order(n);
                std::iota(order.begin(), order.end(), 0);
                std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                    return costs(static_cast<Eigen::Index>(a), assign[a]) >
                           costs(static_cast<Eigen::Index>(b), assign[b]);
                });
                for (std::size_t t = 0; t < trim_count; ++t) assign[order[t]] = -1;
            }

            // Re-seed empty barycenters from the farthest retained model;
            // the refreshed center can only lower the objective.
            for (int j = 0; j < k; ++j) {
                if (std::find(assign.begin(), assign.end(), j) != assign.end()) continue;
                std::size_t farthest = n;
                double worst = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (assign[i] < 0) continue;
                    const double cost = costs(static_cast<Eigen::Index>(i), assign[i]);
                    if (cost > worst) {
                        worst = cost;
                        farthest = i;
                    }
                }
                if (farthest < n) {
                    centers[static_cast<std::size_t>(j)] = models[farthest];
                    assign[farthest] = j;
                }
            }

            double new_objective = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (assign[i] < 0) continue;
                new_objective += lambdas(static_cast<Eigen::Index>(i)) *
                                 gaussian_w2_squared(models[i], centers[static_cast<std::size_t>(assign[i])]);
            }
            assert(new_objective <= objective * (1.0 + 1e-9) + 1e-12);
            objective = new_objective;

            if (assign == prev_assign) break;
            prev_assign = assign;

            for (int j = 0; j < k; ++j) {
                std::vector<ClusterModel> member_models;
                std::vector<double> member_lambda;
                double mass = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (assign[i] != j) continue;
                    member_models.push_back(models[i]);
                    member_lambda.push_back(lambdas(static_cast<Eigen::Index>(i)));
                    mass += lambdas(static_cast<Eigen::Index>(i));
                }
                if (member_models.empty()) continue;
                Eigen::VectorXd lam(static_cast<Eigen::Index>(member_lambda.size()));
                for (std::size_t t = 0; t < member_lambda.size(); ++t) {
                    lam(static_cast<Eigen::Index>(t)) =
                        mass > 0.0 ? member_lambda[t] / mass
                                   : 1.0 / static_cast<double>(member_lambda.size());
                }
                centers[static_cast<std::size_t>(j)] =
                    gaussian_barycenter(member_models, lam, opts);
            }
        }

        if (objective < best.objective) {
            best.barycenters = centers;
            best.assignment = assign;
            best.objective = objective;
        }
    }

    // Barycenter weights report the assigned lambda mass.
    for (int j = 0; j < k; ++j) {
        double mass = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (best.assignment[i] == j) mass += lambdas(static_cast<Eigen::Index>(i));
        }
        best.barycenters[static_cast<std::size_t>(j)].weight = mass;
    }
    return best;
}

}  // namespace otgate
