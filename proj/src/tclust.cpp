#include "otgate/tclust.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "otgate/parallel.hpp"
#include "otgate/rng.hpp"

namespace otgate {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double truncation_penalty(const std::vector<std::pair<double, double>>& eigs, double c,
                          double t) {
    double obj = 0.0;
    for (const auto& [e, w] : eigs) {
        const double m = std::clamp(e, t, c * t);
        obj += w * (std::log(m) + e / m);
    }
    return obj;
}

}  // namespace

double restriction_threshold(const std::vector<std::pair<double, double>>& eigenvalues,
                             double restriction_c) {
    const double c = restriction_c;
    std::vector<double> breaks;
    double emax = 0.0;
    for (const auto& [e, w] : eigenvalues) {
        (void)w;
        emax = std::max(emax, e);
        if (e > 0.0) {
            breaks.push_back(e);
            breaks.push_back(e / c);
        }
    }
    if (breaks.empty()) {
        // Every eigenvalue is zero; any positive band works.
        return 1e-12;
    }
    const double floor = 1e-12 * std::max(1.0, emax);
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

    std::vector<double> candidates = breaks;
    // Interval-wise stationary points: within an interval the clamp sets are
    // fixed and the optimum is a weighted mean of the clamped entries.
    for (std::size_t s = 0; s <= breaks.size(); ++s) {
        const double lo = s == 0 ? floor : breaks[s - 1];
        const double hi = s == breaks.size() ? breaks.back() * 2.0 : breaks[s];
        if (!(lo < hi)) continue;
        const double mid = 0.5 * (lo + hi);
        double num = 0.0, den = 0.0;
        for (const auto& [e, w] : eigenvalues) {
            if (e < mid) {
                num += w * e;
                den += w;
            } else if (e > c * mid) {
                num += w * e / c;
                den += w;
            }
        }
        if (den > 0.0) candidates.push_back(std::clamp(num / den, lo, hi));
    }

    double best_t = floor;
    double best_obj = std::numeric_limits<double>::infinity();
    for (double t : candidates) {
        t = std::max(t, floor);
        const double obj = truncation_penalty(eigenvalues, c, t);
        if (obj < best_obj || (obj == best_obj && t < best_t)) {
            best_obj = obj;
            best_t = t;
        }
    }
    return best_t;
}

namespace {

// Applies the ratio restriction across all cluster covariances in place.
// sizes carry the per-cluster weights of the truncated likelihood.
void enforce_restriction(std::vector<Eigen::MatrixXd>& covs, const std::vector<double>& sizes,
                         double c) {
    const std::size_t k = covs.size();
    std::vector<Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>> eigs(k);
    std::vector<std::pair<double, double>> pooled;
    double emin = std::numeric_limits<double>::infinity();
    double emax = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        eigs[j].compute(covs[j]);
        for (Eigen::Index l = 0; l < eigs[j].eigenvalues().size(); ++l) {
            const double e = std::max(0.0, eigs[j].eigenvalues()(l));
            pooled.emplace_back(e, sizes[j]);
            emin = std::min(emin, e);
            emax = std::max(emax, e);
        }
    }
    if (emin > 0.0 && emax / emin <= c) return;  // already feasible

    const double t = restriction_threshold(pooled, c);
    for (std::size_t j = 0; j < k; ++j) {
        Eigen::VectorXd ev = eigs[j].eigenvalues().cwiseMax(0.0);
        for (Eigen::Index l = 0; l < ev.size(); ++l) ev(l) = std::clamp(ev(l), t, c * t);
        covs[j] = eigs[j].eigenvectors() * ev.asDiagonal() * eigs[j].eigenvectors().transpose();
        covs[j] = 0.5 * (covs[j] + covs[j].transpose());
    }
}

struct Scorer {
    std::vector<Eigen::LLT<Eigen::MatrixXd>> llt;
    std::vector<double> log_norm;  // log p_j - d/2 log 2pi - 1/2 logdet S_j
    std::vector<Eigen::VectorXd> means;

    void prepare(const std::vector<double>& weights, const std::vector<Eigen::VectorXd>& m,
                 const std::vector<Eigen::MatrixXd>& s, Eigen::Index d) {
        const std::size_t k = weights.size();
        llt.resize(k);
        log_norm.resize(k);
        means = m;
        for (std::size_t j = 0; j < k; ++j) {
            llt[j].compute(s[j]);
            if (llt[j].info() != Eigen::Success) {
                throw std::runtime_error("tclust: covariance not positive definite after restriction");
            }
            const double logdet = 2.0 * llt[j].matrixLLT().diagonal().array().log().sum();
            log_norm[j] = (weights[j] > 0.0 ? std::log(weights[j])
                                            : -std::numeric_limits<double>::infinity()) -
                          0.5 * static_cast<double>(d) * kLog2Pi - 0.5 * logdet;
        }
    }

    double log_score(const Eigen::VectorXd& x, std::size_t j) const {
        const Eigen::VectorXd diff = x - means[j];
        return log_norm[j] - 0.5 * diff.dot(llt[j].solve(diff));
    }
};

struct RunState {
    std::vector<double> weights;
    std::vector<Eigen::VectorXd> means;
    std::vector<Eigen::MatrixXd> covs;
};

TclustResult run_tclust(const Eigen::MatrixXd& events, const TclustParams& params,
                        RunState state) {
    const Eigen::Index n = events.rows();
    const Eigen::Index d = events.cols();
    const int k = params.k;
    const Eigen::Index trim_count =
        static_cast<Eigen::Index>(std::ceil(static_cast<double>(n) * params.alpha));

    std::vector<double> sizes(static_cast<std::size_t>(k), 1.0);
    enforce_restriction(state.covs, sizes, params.restriction_c);

    Scorer scorer;
    std::vector<int> assignment(static_cast<std::size_t>(n), 0), previous;
    std::vector<double> best_score(static_cast<std::size_t>(n));
    TclustResult result;

    for (int it = 0; it < params.max_iter; ++it) {
        scorer.prepare(state.weights, state.means, state.covs, d);

        for (Eigen::Index i = 0; i < n; ++i) {
            int arg = 0;
            double best = scorer.log_score(events.row(i).transpose(), 0);
            for (int j = 1; j < k; ++j) {
                const double s = scorer.log_score(events.row(i).transpose(),
                                                  static_cast<std::size_t>(j));
                if (s > best) {
                    best = s;
                    arg = j;
                }
            }
            assignment[static_cast<std::size_t>(i)] = arg + 1;
            best_score[static_cast<std::size_t>(i)] = best;
        }

        if (trim_count > 0) {
            std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
                return best_score[static_cast<std::size_t>(a)] <
                       best_score[static_cast<std::size_t>(b)];
            });
            for (Eigen::Index t = 0; t < trim_count; ++t) {
                assignment[static_cast<std::size_t>(order[static_cast<std::size_t>(t)])] = 0;
            }
        }

        double objective = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (assignment[static_cast<std::size_t>(i)] > 0) {
                objective += best_score[static_cast<std::size_t>(i)];
            }
        }
        result.objective_trace.push_back(objective);
        result.objective = objective;

        if (assignment == previous) break;
        previous = assignment;

        // Refit (p, m, S) from the retained hard assignment.
        std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (assignment[static_cast<std::size_t>(i)] > 0) {
                ++counts[static_cast<std::size_t>(assignment[static_cast<std::size_t>(i)] - 1)];
            }
        }
        const double retained = static_cast<double>(n - trim_count);

        bool reseeded = false;
        std::vector<Eigen::Index> empty_clusters;
        for (int j = 0; j < k; ++j) {
            if (counts[static_cast<std::size_t>(j)] == 0) {
                empty_clusters.push_back(j);
            }
        }

        for (int j = 0; j < k; ++j) {
            const auto uj = static_cast<std::size_t>(j);
            if (counts[uj] == 0) continue;
            Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
            for (Eigen::Index i = 0; i < n; ++i) {
                if (assignment[static_cast<std::size_t>(i)] == j + 1) {
                    mean += events.row(i).transpose();
                }
            }
            mean /= static_cast<double>(counts[uj]);
            Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
            for (Eigen::Index i = 0; i < n; ++i) {
                if (assignment[static_cast<std::size_t>(i)] == j + 1) {
                    const Eigen::VectorXd diff = events.row(i).transpose() - mean;
                    cov += diff * diff.transpose();
                }
            }
            cov /= static_cast<double>(counts[uj]);
            state.means[uj] = mean;
            state.covs[uj] = cov;
            state.weights[uj] = static_cast<double>(counts[uj]) / retained;
        }

        if (!empty_clusters.empty()) {
            // Restart-local repair: plant emptied clusters on the worst
            // fitting retained events, with the pooled covariance.
            reseeded = true;
            Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(d, d);
            double pooled_n = 0.0;
            for (int j = 0; j < k; ++j) {
                const auto uj = static_cast<std::size_t>(j);
                if (counts[uj] > 0) {
                    pooled += static_cast<double>(counts[uj]) * state.covs[uj];
                    pooled_n += static_cast<double>(counts[uj]);
                }
            }
            pooled = pooled_n > 0.0 ? Eigen::MatrixXd(pooled / pooled_n)
                                    : Eigen::MatrixXd::Identity(d, d);

            std::vector<Eigen::Index> retained_order;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (assignment[static_cast<std::size_t>(i)] > 0) retained_order.push_back(i);
            }
            std::stable_sort(retained_order.begin(), retained_order.end(),
                             [&](Eigen::Index a, Eigen::Index b) {
                                 return best_score[static_cast<std::size_t>(a)] <
                                        best_score[static_cast<std::size_t>(b)];
                             });
            std::size_t next_seed = 0;
            for (Eigen::Index j : empty_clusters) {
                const auto uj = static_cast<std::size_t>(j);
                if (next_seed < retained_order.size()) {
                    state.means[uj] =
                        events.row(retained_order[next_seed]).transpose();
                    ++next_seed;
                }
                state.covs[uj] = pooled;
                // An even share keeps the refreshed cluster competitive in
                // the next concentration step.
                state.weights[uj] = 1.0 / static_cast<double>(k);
            }
            double wsum = std::accumulate(state.weights.begin(), state.weights.end(), 0.0);
            for (double& w : state.weights) w /= wsum;
        }

        for (int j = 0; j < k; ++j) {
            sizes[static_cast<std::size_t>(j)] =
                std::max<double>(1.0, static_cast<double>(counts[static_cast<std::size_t>(j)]));
        }
        enforce_restriction(state.covs, sizes, params.restriction_c);
        result.reseed_flags.push_back(reseeded);
    }
    while (result.reseed_flags.size() < result.objective_trace.size()) {
        result.reseed_flags.push_back(false);
    }

    result.assignment = assignment;
    result.models.resize(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
        const auto uj = static_cast<std::size_t>(j);
        result.models[uj].mean = state.means[uj];
        result.models[uj].cov = SpdMatrix(state.covs[uj]);
        result.models[uj].weight = state.weights[uj];
    }
    return result;
}

RunState random_init(const Eigen::MatrixXd& events, const TclustParams& params, Rng& rng) {
    const Eigen::Index n = events.rows();
    const Eigen::Index d = events.cols();
    RunState state;
    state.weights.assign(static_cast<std::size_t>(params.k), 1.0 / params.k);
    // Classic tclust start: fit each cluster to d+1 random events.
    const std::size_t per_cluster = static_cast<std::size_t>(d) + 1;
    const std::vector<std::size_t> picks = rng.sample_without_replacement(
        static_cast<std::size_t>(n), per_cluster * static_cast<std::size_t>(params.k));
    for (int j = 0; j < params.k; ++j) {
        Eigen::MatrixXd pts(per_cluster, d);
        for (std::size_t t = 0; t < per_cluster; ++t) {
            pts.row(static_cast<Eigen::Index>(t)) =
                events.row(static_cast<Eigen::Index>(picks[static_cast<std::size_t>(j) * per_cluster + t]));
        }
        const Eigen::VectorXd mean = pts.colwise().mean();
        const Eigen::MatrixXd centered = pts.rowwise() - mean.transpose();
        Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(per_cluster);
        state.means.push_back(mean);
        state.covs.push_back(cov);
    }
    return state;
}

}  // namespace

TclustResult tclust(const Eigen::MatrixXd& events, const TclustParams& params,
                    const std::vector<ClusterModel>* init) {
    const Eigen::Index n = events.rows();
    const Eigen::Index d = events.cols();
    if (params.k < 1) {
        throw std::invalid_argument("tclust: k must be >= 1");
    }
    if (!(params.alpha >= 0.0 && params.alpha < 1.0)) {
        throw std::invalid_argument("tclust: alpha must be in [0,1)");
    }
    if (params.restriction_c < 1.0) {
        throw std::invalid_argument("tclust: restriction_c must be >= 1");
    }
    if (n <= static_cast<Eigen::Index>(params.k) * (d + 1)) {
        throw std::invalid_argument("tclust: need more than k*(d+1) events");
    }

    if (init) {
        if (static_cast<int>(init->size()) != params.k) {
            throw std::invalid_argument("tclust: init size does not match k");
        }
        RunState state;
        double wsum = 0.0;
        for (const ClusterModel& m : *init) {
            if (m.dim() != d) {
                throw std::invalid_argument("tclust: init dimension mismatch");
            }
            wsum += m.weight;
        }
        for (const ClusterModel& m : *init) {
            state.weights.push_back(m.weight / wsum);
            state.means.push_back(m.mean);
            state.covs.push_back(m.cov.mat());
        }
        return run_tclust(events, params, std::move(state));
    }

    const int restarts = std::max(1, params.n_restarts);
    std::vector<TclustResult> results(static_cast<std::size_t>(restarts));
    std::vector<std::string> failures(static_cast<std::size_t>(restarts));
    Rng base(params.seed);
    parallel_for(static_cast<std::size_t>(restarts), [&](std::size_t r) {
        Rng rng = base.fork(r);
        try {
            results[r] = run_tclust(events, params, random_init(events, params, rng));
        } catch (const std::exception& e) {
            failures[r] = e.what();
            results[r].objective = -std::numeric_limits<double>::infinity();
        }
    });

    int best = -1;
    for (int r = 0; r < restarts; ++r) {
        if (!failures[static_cast<std::size_t>(r)].empty()) continue;
        if (best < 0 || results[static_cast<std::size_t>(r)].objective >
                            results[static_cast<std::size_t>(best)].objective) {
            best = r;
        }
    }
    if (best < 0) {
        throw std::runtime_error("tclust: every restart failed; first error: " +
                                 failures.front());
    }
    return results[static_cast<std::size_t>(best)];
}

BestInitResult best_template_init(const Eigen::MatrixXd& events,
                                  const std::vector<Template>& templates,
                                  const TclustParams& params) {
    if (templates.empty()) {
        throw std::invalid_argument("best_template_init: no templates");
    }
    const std::size_t n = templates.size();
    std::vector<TclustResult> results(n);
    std::vector<std::string> failures(n);

    parallel_for(n, [&](std::size_t t) {
        TclustParams run_params = params;
        run_params.k = static_cast<int>(templates[t].clusters.size());
        try {
            results[t] = tclust(events, run_params, &templates[t].clusters);
        } catch (const std::exception& e) {
            failures[t] = e.what();
            results[t].objective = -std::numeric_limits<double>::infinity();
        }
    });

    int best = -1;
    for (std::size_t t = 0; t < n; ++t) {
        if (!failures[t].empty()) continue;
        if (best < 0 || results[t].objective > results[static_cast<std::size_t>(best)].objective) {
            best = static_cast<int>(t);
        }
    }
    if (best < 0) {
        std::string all;
        for (std::size_t t = 0; t < n; ++t) {
            all += "[template " + std::to_string(t) + "] " + failures[t] + "; ";
        }
        throw std::runtime_error("best_template_init: every run failed: " + all);
    }
    BestInitResult out;
    out.result = std::move(results[static_cast<std::size_t>(best)]);
    out.template_index = best;
    return out;
}

}  // namespace otgate
