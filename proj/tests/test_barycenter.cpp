#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "otgate/barycenter.hpp"
#include "otgate/transport.hpp"

using namespace otgate;

namespace {

ClusterModel gaussian1d(double mean, double sd) {
    ClusterModel c;
    c.mean = Eigen::VectorXd::Constant(1, mean);
    c.cov = SpdMatrix(Eigen::MatrixXd::Constant(1, 1, sd * sd));
    return c;
}

Eigen::VectorXd uniform_lambda(int n) {
    Eigen::VectorXd l = Eigen::VectorXd::Constant(n, 1.0 / n);
    l(n - 1) = 1.0 - l.head(n - 1).sum();
    return l;
}

}  // namespace

TEST_CASE("gaussian_barycenter: identical inputs returned unchanged in zero iterations") {
    Rng rng(1);
    const ClusterModel m = testhelp::random_cluster(rng, 3);
    BarycenterDiagnostics diag;
    const ClusterModel bary =
        gaussian_barycenter({m, m, m}, uniform_lambda(3), BarycenterOptions{}, &diag);
    CHECK(diag.iterations == 0);
    CHECK(bary.mean == m.mean);
    CHECK(bary.cov.mat() == m.cov.mat());
}

TEST_CASE("gaussian_barycenter: a single model is its own barycenter exactly") {
    Rng rng(21);
    const ClusterModel m = testhelp::random_cluster(rng, 4);
    Eigen::VectorXd one(1);
    one << 1.0;
    BarycenterDiagnostics diag;
    const ClusterModel bary = gaussian_barycenter({m}, one, BarycenterOptions{}, &diag);
    CHECK(diag.iterations == 0);
    CHECK(bary.mean == m.mean);
    CHECK(bary.cov.mat() == m.cov.mat());
}

TEST_CASE("gaussian_barycenter: shared covariance with distinct means") {
    Rng rng(2);
    const Eigen::MatrixXd s = testhelp::random_spd(rng, 3);
    std::vector<ClusterModel> models(4);
    Eigen::VectorXd mean_of_means = Eigen::VectorXd::Zero(3);
    for (auto& m : models) {
        m.mean = rng.normal_vector(3);
        m.cov = SpdMatrix(s);
        mean_of_means += 0.25 * m.mean;
    }
    BarycenterDiagnostics diag;
    const ClusterModel bary =
        gaussian_barycenter(models, uniform_lambda(4), BarycenterOptions{}, &diag);
    CHECK(diag.iterations == 0);  // the shared covariance is already the fixed point
    CHECK(bary.cov.mat() == models[0].cov.mat());
    CHECK((bary.mean - mean_of_means).norm() < 1e-14);
}

TEST_CASE("gaussian_barycenter: 1-D standard deviations average") {
    Rng rng(3);
    for (int t = 0; t < 25; ++t) {
        const int n = static_cast<int>(rng.uniform_int(2, 5));
        std::vector<ClusterModel> models;
        Eigen::VectorXd lambda = testhelp::random_simplex(rng, n);
        double expected_sd = 0.0;
        for (int i = 0; i < n; ++i) {
            const double sd = rng.uniform(0.2, 3.0);
            models.push_back(gaussian1d(rng.uniform(-2, 2), sd));
            expected_sd += lambda(i) * sd;
        }
        const ClusterModel bary = gaussian_barycenter(models, lambda);
        CHECK(std::sqrt(bary.cov.mat()(0, 0)) == doctest::Approx(expected_sd).epsilon(1e-8));
    }
}

TEST_CASE("gaussian_barycenter: fixed-point residual below tolerance at return") {
    Rng rng(4);
    for (int t = 0; t < 20; ++t) {
        const int d = static_cast<int>(rng.uniform_int(2, 4));
        const int n = static_cast<int>(rng.uniform_int(2, 6));
        std::vector<ClusterModel> models;
        for (int i = 0; i < n; ++i) models.push_back(testhelp::random_cluster(rng, d, 2.0));
        BarycenterDiagnostics diag;
        BarycenterOptions opts;
        const ClusterModel bary = gaussian_barycenter(models, uniform_lambda(n), opts, &diag);
        CHECK(diag.residual < opts.tol);

        // Check the fixed point directly: T(S) == S within tolerance.
        const Eigen::MatrixXd s = bary.cov.mat();
        const auto [root, inv_root] = spd_sqrt_and_inv_sqrt(s);
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d, d);
        for (int i = 0; i < n; ++i) {
            acc += spd_sqrt(Eigen::MatrixXd(root * models[static_cast<std::size_t>(i)].cov.mat() *
                                            root))
                       .mat() /
                   n;
        }
        const Eigen::MatrixXd mapped = inv_root * acc * acc * inv_root;
        CHECK((mapped - s).norm() / s.norm() < 1e-6);

        // The mean is the closed-form weighted average regardless.
        Eigen::VectorXd expected_mean = Eigen::VectorXd::Zero(d);
        for (int i = 0; i < n; ++i) {
            expected_mean += models[static_cast<std::size_t>(i)].mean / n;
        }
        CHECK((bary.mean - expected_mean).norm() < 1e-12);
    }
}

TEST_CASE("gaussian_barycenter: argument checks and non-convergence") {
    Rng rng(5);
    const ClusterModel a = testhelp::random_cluster(rng, 2);
    const ClusterModel b = testhelp::random_cluster(rng, 2);
    Eigen::VectorXd bad(2);
    bad << 0.6, 0.6;
    CHECK_THROWS_AS(gaussian_barycenter({a, b}, bad), std::invalid_argument);
    BarycenterOptions strict;
    strict.max_iter = 1;
    strict.tol = 1e-16;
    CHECK_THROWS_AS(gaussian_barycenter({a, b}, uniform_lambda(2), strict), ConvergenceError);
}

TEST_CASE("k_barycenter: k equals model count gives objective zero") {
    Rng rng(6);
    std::vector<ClusterModel> models;
    for (int i = 0; i < 4; ++i) models.push_back(testhelp::random_cluster(rng, 2, 8.0));
    const KBarycenterResult r = k_barycenter(models, uniform_lambda(4), 4);
    CHECK(r.objective == doctest::Approx(0.0).epsilon(1e-10));
    std::set<int> used(r.assignment.begin(), r.assignment.end());
    CHECK(used.size() == 4);
}

TEST_CASE("k_barycenter: two groups of identical models recovered exactly") {
    Rng rng(7);
    const ClusterModel a = testhelp::random_cluster(rng, 2, 1.0);
    ClusterModel b = testhelp::random_cluster(rng, 2, 1.0);
    b.mean.array() += 100.0;
    const std::vector<ClusterModel> models = {a, a, a, b, b, b};
    const KBarycenterResult r = k_barycenter(models, uniform_lambda(6), 2);
    CHECK(r.objective == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.assignment[0] == r.assignment[1]);
    CHECK(r.assignment[1] == r.assignment[2]);
    CHECK(r.assignment[3] == r.assignment[4]);
    CHECK(r.assignment[4] == r.assignment[5]);
    CHECK(r.assignment[0] != r.assignment[3]);
    // Exact recovery: barycenter of identical models is that model.
    for (int g : {0, 3}) {
        const ClusterModel& center =
            r.barycenters[static_cast<std::size_t>(r.assignment[static_cast<std::size_t>(g)])];
        CHECK(center.mean == models[static_cast<std::size_t>(g)].mean);
        CHECK(center.cov.mat() == models[static_cast<std::size_t>(g)].cov.mat());
    }
}

TEST_CASE("k_barycenter: trimming removes planted outliers") {
    Rng rng(8);
    std::vector<ClusterModel> models;
    for (int i = 0; i < 10; ++i) {
        ClusterModel m = testhelp::random_cluster(rng, 2, 0.5);
        m.mean.array() += 0.0;
        models.push_back(std::move(m));
    }
    for (int i = 0; i < 10; ++i) {
        ClusterModel m = testhelp::random_cluster(rng, 2, 0.5);
        m.mean.array() += 60.0;
        models.push_back(std::move(m));
    }
    for (double shift : {300.0, -300.0}) {
        ClusterModel outlier = testhelp::random_cluster(rng, 2, 0.5);
        outlier.mean.array() += shift;
        models.push_back(std::move(outlier));
    }
    BarycenterOptions opts;
    opts.trim_alpha = 0.1;  // ceil(22 * 0.1) = 3 trimmed, covers both outliers
    const KBarycenterResult r = k_barycenter(models, uniform_lambda(22), 2, opts);
    CHECK(r.assignment[20] == -1);
    CHECK(r.assignment[21] == -1);
    int trimmed = 0;
    for (int a : r.assignment) trimmed += a < 0 ? 1 : 0;
    CHECK(trimmed == 3);
    // Planted two-group structure recovered on the retained models.
    for (int i = 1; i < 10; ++i) {
        if (r.assignment[static_cast<std::size_t>(i)] < 0) continue;
        CHECK(r.assignment[static_cast<std::size_t>(i)] == r.assignment[0]);
    }
    for (int i = 11; i < 20; ++i) {
        if (r.assignment[static_cast<std::size_t>(i)] < 0) continue;
        CHECK(r.assignment[static_cast<std::size_t>(i)] == r.assignment[10]);
    }
}

TEST_CASE("k_barycenter: matches exhaustive assignment search at k=2") {
    Rng rng(9);
    for (int trial = 0; trial < 5; ++trial) {
        const int n = 8;
        std::vector<ClusterModel> models;
        for (int i = 0; i < n; ++i) models.push_back(testhelp::random_cluster(rng, 2, 3.0));
        const Eigen::VectorXd lambda = uniform_lambda(n);

        BarycenterOptions opts;
        opts.restarts = 20;
        const KBarycenterResult got = k_barycenter(models, lambda, 2, opts);

        // Oracle: enumerate all 2-partitions, build each side's barycenter,
        // evaluate the objective.
        double best = std::numeric_limits<double>::infinity();
        for (unsigned mask = 1; mask + 1 < (1u << n); ++mask) {
            std::vector<ClusterModel> left, right;
            std::vector<double> wl, wr;
            for (int i = 0; i < n; ++i) {
                if (mask & (1u << i)) {
                    left.push_back(models[static_cast<std::size_t>(i)]);
                    wl.push_back(lambda(i));
                } else {
                    right.push_back(models[static_cast<std::size_t>(i)]);
                    wr.push_back(lambda(i));
                }
            }
            auto side_cost = [&](const std::vector<ClusterModel>& side,
                                 const std::vector<double>& w) {
                const double mass = std::accumulate(w.begin(), w.end(), 0.0);
                Eigen::VectorXd lam(static_cast<Eigen::Index>(w.size()));
                for (std::size_t s = 0; s < w.size(); ++s) {
                    lam(static_cast<Eigen::Index>(s)) = w[s] / mass;
                }
                const ClusterModel center = gaussian_barycenter(side, lam);
                double cost = 0.0;
                for (std::size_t s = 0; s < side.size(); ++s) {
                    cost += w[s] * gaussian_w2_squared(side[s], center);
                }
                return cost;
            };
            best = std::min(best, side_cost(left, wl) + side_cost(right, wr));
        }
        CHECK(got.objective == doctest::Approx(best).epsilon(1e-6));
    }
}

TEST_CASE("k_barycenter: preconditions") {
    Rng rng(10);
    std::vector<ClusterModel> models = {testhelp::random_cluster(rng, 2),
                                        testhelp::random_cluster(rng, 2)};
    CHECK_THROWS_AS(k_barycenter(models, uniform_lambda(2), 3), std::invalid_argument);
    BarycenterOptions opts;
    opts.trim_alpha = 0.5;  // ceil(2*0.5) = 1 trimmed, so k=2 infeasible
    CHECK_THROWS_AS(k_barycenter(models, uniform_lambda(2), 2, opts), std::invalid_argument);
}
