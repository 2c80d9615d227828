#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "otgate/partition_metrics.hpp"
#include "otgate/transport.hpp"

using namespace otgate;

namespace {

ClusterModel point_cluster(const Eigen::VectorXd& mean, double weight) {
    ClusterModel c;
    c.mean = mean;
    c.cov = SpdMatrix(Eigen::MatrixXd::Zero(mean.size(), mean.size()));
    c.weight = weight;
    return c;
}

Eigen::VectorXd v2(double x, double y) {
    Eigen::VectorXd v(2);
    v << x, y;
    return v;
}

// Planar embedding realizing the pairwise distances [[1,2],[3,1]] between
// {A1,A2} and {B1,B2}; paired with weights (0.7,0.3)/(0.4,0.6) this is the
// d_OT = 1.3 instance of the transport suite.
struct EmbeddedInstance {
    CytometrySummary a, b;
};

EmbeddedInstance embedded_22() {
    const double y = (104.0 - std::sqrt(176.0)) / 40.0;
    const double x = (4.0 * y - 11.0) / 2.0;
    EmbeddedInstance e;
    e.a.source_id = "a";
    e.a.clusters = {point_cluster(v2(0, 0), 0.7), point_cluster(v2(x, y), 0.3)};
    e.b.source_id = "b";
    e.b.clusters = {point_cluster(v2(1, 0), 0.4), point_cluster(v2(0, 2), 0.6)};
    return e;
}

CytometrySummary separated_summary(int k, int d, const std::string& id) {
    CytometrySummary s;
    s.source_id = id;
    for (int i = 0; i < k; ++i) {
        ClusterModel c;
        c.mean = Eigen::VectorXd::Constant(d, 100.0 * i);
        c.cov = SpdMatrix(Eigen::MatrixXd::Identity(d, d));
        c.weight = 1.0 / k;
        s.clusters.push_back(std::move(c));
    }
    return s;
}

}  // namespace

TEST_CASE("summarize_cytometry: two balanced labels") {
    Rng rng(1);
    std::vector<ClusterModel> comps(2);
    comps[0].mean = v2(0, 0);
    comps[0].cov = SpdMatrix(Eigen::MatrixXd::Identity(2, 2));
    comps[0].label = "a";
    comps[1].mean = v2(10, 10);
    comps[1].cov = SpdMatrix(Eigen::MatrixXd::Identity(2, 2));
    comps[1].label = "b";
    const LabeledEvents data = testhelp::sample_mixture(rng, comps, {100, 100});
    const CytometrySummary s = summarize_cytometry(data);
    REQUIRE(s.size() == 2);
    CHECK(s.clusters[0].weight == doctest::Approx(0.5));
    CHECK(s.clusters[1].weight == doctest::Approx(0.5));
    CHECK(*s.clusters[0].label == "a");
}

TEST_CASE("summarize_cytometry: undersized label dropped and weights renormalized") {
    Rng rng(2);
    std::vector<ClusterModel> comps(3);
    for (int i = 0; i < 3; ++i) {
        comps[static_cast<std::size_t>(i)].mean = Eigen::VectorXd::Constant(3, 5.0 * i);
        comps[static_cast<std::size_t>(i)].cov = SpdMatrix(Eigen::MatrixXd::Identity(3, 3));
        comps[static_cast<std::size_t>(i)].label = "l" + std::to_string(i);
    }
    const LabeledEvents data = testhelp::sample_mixture(rng, comps, {100, 100, 2});
    SummarizeOptions opts;
    opts.min_cluster_size = 4;
    const CytometrySummary s = summarize_cytometry(data, opts);
    REQUIRE(s.size() == 2);
    CHECK(s.clusters[0].weight == doctest::Approx(0.5));
    CHECK(s.clusters[1].weight == doctest::Approx(0.5));
    CHECK(s.weights().sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("summarize_cytometry: sample statistics approach the generator") {
    Rng rng(3);
    const int n = 10000;
    ClusterModel comp;
    comp.mean = v2(1.5, -2.0);
    Eigen::MatrixXd cov(2, 2);
    cov << 2.0, 0.7, 0.7, 1.0;
    comp.cov = SpdMatrix(cov);
    comp.label = "only";
    const LabeledEvents data = testhelp::sample_mixture(rng, {comp}, {n});
    const CytometrySummary s = summarize_cytometry(data);
    REQUIRE(s.size() == 1);
    for (int i = 0; i < 2; ++i) {
        const double sigma = std::sqrt(cov(i, i));
        CHECK(std::abs(s.clusters[0].mean(i) - comp.mean(i)) < 4.0 * sigma / std::sqrt(n));
    }
    CHECK((s.clusters[0].cov.mat() - cov).cwiseAbs().maxCoeff() < 0.15);
}

TEST_CASE("summarize_cytometry: errors") {
    LabeledEvents data;
    data.events = Eigen::MatrixXd::Zero(3, 2);
    data.labels = {"a", "a", "a"};
    SummarizeOptions opts;
    opts.min_cluster_size = 10;  // nothing reaches it
    CHECK_THROWS_AS(summarize_cytometry(data, opts), std::invalid_argument);
    opts.min_cluster_size = 2;  // below d+1
    CHECK_THROWS_AS(summarize_cytometry(data, opts), std::invalid_argument);
    data.labels.clear();
    CHECK_THROWS_AS(summarize_cytometry(data), std::invalid_argument);
}

TEST_CASE("d_ot: identical summaries at zero") {
    Rng rng(4);
    const CytometrySummary s = testhelp::random_summary(rng, 3, 2, "s");
    CHECK(d_ot(s, s) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("d_ot: singletons give the cluster metric") {
    CytometrySummary a, b;
    a.source_id = "a";
    b.source_id = "b";
    a.clusters = {point_cluster(v2(0, 0), 1.0)};
    b.clusters = {point_cluster(v2(3, 4), 1.0)};
    CHECK(d_ot(a, b) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(d_nt(a, b) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(similarity_distance(a, b) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("d_ot / d_nt / d_S on the embedded 2x2 instance") {
    const EmbeddedInstance e = embedded_22();
    CHECK(d_ot(e.a, e.b) == doctest::Approx(1.3).epsilon(1e-9));
    // 0.7*0.4*1 + 0.7*0.6*2 + 0.3*0.4*3 + 0.3*0.6*1 = 1.66
    CHECK(d_nt(e.a, e.b) == doctest::Approx(1.66).epsilon(1e-9));
    CHECK(similarity_distance(e.a, e.b) == doctest::Approx(1.3 / 1.66).epsilon(1e-9));
}

TEST_CASE("d_nt dominates d_ot on random instances") {
    Rng rng(5);
    for (int t = 0; t < 50; ++t) {
        const int d = static_cast<int>(rng.uniform_int(1, 4));
        const CytometrySummary a =
            testhelp::random_summary(rng, static_cast<int>(rng.uniform_int(1, 5)), d, "a");
        const CytometrySummary b =
            testhelp::random_summary(rng, static_cast<int>(rng.uniform_int(1, 5)), d, "b");
        CHECK(d_ot(a, b) <= d_nt(a, b) + 1e-10);
    }
}

TEST_CASE("partition distances are symmetric in their arguments") {
    Rng rng(15);
    for (int t = 0; t < 30; ++t) {
        const int d = static_cast<int>(rng.uniform_int(1, 4));
        const CytometrySummary a =
            testhelp::random_summary(rng, static_cast<int>(rng.uniform_int(1, 5)), d, "a");
        const CytometrySummary b =
            testhelp::random_summary(rng, static_cast<int>(rng.uniform_int(1, 5)), d, "b");
        // Canonical argument ordering makes these exact, not just close.
        CHECK(d_nt(a, b) == d_nt(b, a));
        CHECK(mean_kl_partition_distance(a, b) == mean_kl_partition_distance(b, a));
        CHECK(std::abs(d_ot(a, b) - d_ot(b, a)) <= 1e-9);
        CHECK(similarity_distance(a, b) == similarity_distance(b, a));
    }
}

TEST_CASE("similarity_distance: bounds and identity") {
    Rng rng(6);
    for (int t = 0; t < 1000; ++t) {
        const int d = static_cast<int>(rng.uniform_int(1, 4));
        const CytometrySummary a =
            testhelp::random_summary(rng, static_cast<int>(rng.uniform_int(1, 6)), d, "a");
        const CytometrySummary b =
            testhelp::random_summary(rng, static_cast<int>(rng.uniform_int(1, 6)), d, "b");
        const double ds = similarity_distance(a, b);
        CHECK(ds >= 0.0);
        CHECK(ds <= 1.0);
    }
    const CytometrySummary s = separated_summary(4, 2, "s");
    CHECK(similarity_distance(s, s) < 1e-9);
}

TEST_CASE("similarity_distance: degenerate d_NT = 0 flagged as zero") {
    CytometrySummary a, b;
    a.source_id = "a";
    b.source_id = "b";
    a.clusters = {point_cluster(v2(1, 1), 1.0)};
    b.clusters = {point_cluster(v2(1, 1), 1.0)};
    bool degenerate = false;
    CHECK(similarity_distance(a, b, ClusterMetric::GaussianW2, &degenerate) == 0.0);
    CHECK(degenerate);
}

TEST_CASE("symmetric_kl: identical and 1-D shift") {
    ClusterModel a, b;
    a.mean = Eigen::VectorXd::Zero(1);
    a.cov = SpdMatrix(Eigen::MatrixXd::Identity(1, 1));
    b.mean = Eigen::VectorXd::Ones(1);
    b.cov = SpdMatrix(Eigen::MatrixXd::Identity(1, 1));
    CHECK(symmetric_kl(a, a) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(symmetric_kl(a, b) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("symmetric_kl: symmetric on random pairs, singular rejected") {
    Rng rng(7);
    for (int t = 0; t < 100; ++t) {
        const int d = static_cast<int>(rng.uniform_int(1, 4));
        const ClusterModel a = testhelp::random_cluster(rng, d);
        const ClusterModel b = testhelp::random_cluster(rng, d);
        CHECK(symmetric_kl(a, b) == doctest::Approx(symmetric_kl(b, a)).epsilon(1e-10));
        CHECK(symmetric_kl(a, b) >= 0.0);
    }
    ClusterModel s;
    s.mean = v2(0, 0);
    s.cov = SpdMatrix(Eigen::MatrixXd::Zero(2, 2));
    CHECK_THROWS_AS(symmetric_kl(s, s), std::invalid_argument);
}

TEST_CASE("empirical_cluster_distance: tiny exact cases") {
    Eigen::MatrixXd a(1, 1), b(1, 1);
    a << 0.0;
    b << 2.0;
    CHECK(empirical_cluster_distance(a, b) == doctest::Approx(4.0).epsilon(1e-12));
    Eigen::MatrixXd c(2, 1);
    c << 0.0, 2.0;
    CHECK(empirical_cluster_distance(c, c) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK_THROWS_AS(empirical_cluster_distance(Eigen::MatrixXd(0, 1), b),
                    std::invalid_argument);
}

TEST_CASE("empirical_cluster_distance: matches the brute-force double sum") {
    Rng rng(8);
    for (int t = 0; t < 20; ++t) {
        const int d = static_cast<int>(rng.uniform_int(1, 3));
        const int na = static_cast<int>(rng.uniform_int(1, 30));
        const int nb = static_cast<int>(rng.uniform_int(1, 30));
        Eigen::MatrixXd a(na, d), b(nb, d);
        for (int i = 0; i < na; ++i) a.row(i) = rng.normal_vector(d).transpose();
        for (int i = 0; i < nb; ++i) b.row(i) = 2.0 + rng.normal_vector(d).transpose().array();
        double brute = 0.0;
        for (int i = 0; i < na; ++i) {
            for (int j = 0; j < nb; ++j) brute += (a.row(i) - b.row(j)).squaredNorm();
        }
        brute /= static_cast<double>(na) * nb;
        CHECK(empirical_cluster_distance(a, b) == doctest::Approx(brute).epsilon(1e-9));
    }
}

TEST_CASE("empirical_cluster_distance: seeded subsampling is deterministic") {
    Rng rng(9);
    Eigen::MatrixXd a(500, 2), b(500, 2);
    for (int i = 0; i < 500; ++i) {
        a.row(i) = rng.normal_vector(2).transpose();
        b.row(i) = rng.normal_vector(2).transpose();
    }
    const double first = empirical_cluster_distance(a, b, 100, 42);
    const double second = empirical_cluster_distance(a, b, 100, 42);
    CHECK(first == second);
    // Moment identity: E|X-Y|^2 = |dm|^2 + tr(Sa) + tr(Sb); here roughly 4.
    CHECK(empirical_cluster_distance(a, b, 10000) == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("mean_kl_partition_distance: trivial and 2x2 enumeration") {
    Rng rng(10);
    const CytometrySummary single = testhelp::random_summary(rng, 1, 2, "s");
    CHECK(mean_kl_partition_distance(single, single) == doctest::Approx(0.0).epsilon(1e-12));

    const CytometrySummary a = testhelp::random_summary(rng, 2, 2, "a");
    const CytometrySummary b = testhelp::random_summary(rng, 2, 2, "b");
    double expected = 0.0;
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            expected += symmetric_kl(a.clusters[static_cast<std::size_t>(i)],
                                     b.clusters[static_cast<std::size_t>(j)]);
        }
    }
    expected /= 4.0;
    CHECK(mean_kl_partition_distance(a, b) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("pairwise_distance_matrix: structure and independent recomputation") {
    Rng rng(11);
    std::vector<CytometrySummary> db;
    for (int i = 0; i < 5; ++i) {
        db.push_back(testhelp::random_summary(rng, 3, 2, "s" + std::to_string(i)));
    }
    const DistanceMatrix dm = pairwise_distance_matrix(db);
    dm.validate();
    for (std::size_t i = 0; i < db.size(); ++i) {
        for (std::size_t j = i + 1; j < db.size(); ++j) {
            const double expected = similarity_distance(db[i], db[j]);
            CHECK(dm.entries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) ==
                  doctest::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("pairwise_distance_matrix: identical separated summaries give zeros") {
    std::vector<CytometrySummary> db;
    for (int i = 0; i < 4; ++i) db.push_back(separated_summary(3, 2, "s" + std::to_string(i)));
    const DistanceMatrix dm = pairwise_distance_matrix(db);
    CHECK(dm.entries.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("pairwise_distance_matrix: N=2 mirrored and error reporting") {
    Rng rng(12);
    std::vector<CytometrySummary> db = {testhelp::random_summary(rng, 2, 2, "x"),
                                        testhelp::random_summary(rng, 3, 2, "y")};
    const DistanceMatrix dm = pairwise_distance_matrix(db);
    CHECK(dm.entries(0, 1) == dm.entries(1, 0));
    CHECK(dm.entries(0, 1) == doctest::Approx(similarity_distance(db[0], db[1])));

    // Mismatched dimensions must surface the offending pair ids.
    db.push_back(testhelp::random_summary(rng, 2, 3, "z"));
    try {
        pairwise_distance_matrix(db);
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("z") != std::string::npos);
    }
    CHECK_THROWS_AS(pairwise_distance_matrix({db[0]}), std::invalid_argument);
}
