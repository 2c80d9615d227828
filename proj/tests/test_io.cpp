#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "otgate/hierarchy.hpp"
#include "otgate/io.hpp"
#include "otgate/partition_metrics.hpp"
#include "otgate/synthetic.hpp"
#include "otgate/templates.hpp"

using namespace otgate;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("otgate_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

// Minimal independent Newick reader: counts leaves and checks balanced
// structure; enough to show standard parsers accept the output.
struct NewickParser {
    const std::string& text;
    std::size_t pos = 0;
    int leaves = 0;

    explicit NewickParser(const std::string& t) : text(t) {}

    void parse() {
        node();
        expect(';');
    }
    void node() {
        if (peek() == '(') {
            ++pos;
            node();
            while (peek() == ',') {
                ++pos;
                node();
            }
            expect(')');
        } else {
            const std::size_t start = pos;
            while (pos < text.size() && text[pos] != ':' && text[pos] != ',' &&
                   text[pos] != ')' && text[pos] != ';') {
                ++pos;
            }
            if (pos == start) throw std::runtime_error("newick: empty leaf name");
            ++leaves;
        }
        if (peek() == ':') {
            ++pos;
            const std::size_t start = pos;
            while (pos < text.size() &&
                   (std::isdigit(static_cast<unsigned char>(text[pos])) || text[pos] == '.' ||
                    text[pos] == '-' || text[pos] == '+' || text[pos] == 'e' ||
                    text[pos] == 'E')) {
                ++pos;
            }
            if (pos == start) throw std::runtime_error("newick: missing branch length");
        }
    }
    char peek() const { return pos < text.size() ? text[pos] : '\0'; }
    void expect(char c) {
        if (peek() != c) throw std::runtime_error(std::string("newick: expected ") + c);
        ++pos;
    }
};

}  // namespace

TEST_CASE("load_csv: markers plus label column") {
    TempDir dir;
    const std::string path = dir.file("events.csv");
    atomic_write_text(path, "fsc,ssc,label\n1.5,2.5,a\n3.5,4.5,b\n5.5,6.5,a\n");
    const CsvData csv = load_csv(path);
    CHECK(csv.had_label_column);
    CHECK(csv.markers == std::vector<std::string>{"fsc", "ssc"});
    CHECK(csv.data.count() == 3);
    CHECK(csv.data.dim() == 2);
    CHECK(csv.data.events(1, 0) == 3.5);
    CHECK(csv.data.labels[2] == "a");
}

TEST_CASE("load_csv: no label column yields unlabeled events") {
    TempDir dir;
    const std::string path = dir.file("bare.csv");
    atomic_write_text(path, "x,y\n1,2\n3,4\n");
    const CsvData csv = load_csv(path);
    CHECK(!csv.had_label_column);
    CHECK(!csv.data.labeled());
    CHECK(csv.data.count() == 2);
}

TEST_CASE("load_csv: errors carry row and column") {
    TempDir dir;
    const std::string path = dir.file("bad.csv");
    atomic_write_text(path, "x,y,label\n1,oops,a\n");
    try {
        load_csv(path);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.row() == 2);
        CHECK(e.column() == 2);
    }
    const std::string empty = dir.file("empty.csv");
    atomic_write_text(empty, "");
    CHECK_THROWS_AS(load_csv(empty), ParseError);
    CHECK_THROWS_AS(load_csv(dir.file("missing.csv")), ParseError);
}

TEST_CASE("csv round-trip preserves values to full precision") {
    TempDir dir;
    Rng rng(1);
    LabeledEvents data;
    data.events.resize(20, 3);
    for (int i = 0; i < 20; ++i) {
        data.events.row(i) = (1000.0 * rng.normal_vector(3)).transpose();
        data.labels.push_back("l" + std::to_string(i % 3));
    }
    const std::string path = dir.file("round.csv");
    save_csv(data, {"a", "b", "c"}, path);
    const CsvData back = load_csv(path);
    // %.17g output: the round trip is exact, well past 12 significant digits.
    CHECK((back.data.events - data.events).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.data.labels == data.labels);
}

TEST_CASE("summary json round-trip is lossless") {
    TempDir dir;
    Rng rng(2);
    CytometrySummary s = testhelp::random_summary(rng, 5, 3, "case-7");
    s.clusters[2].label = "CD4+CD8-";
    const std::string path = dir.file("summary.json");
    save_summary(s, path);
    const CytometrySummary back = load_summary(path);
    CHECK(back.source_id == s.source_id);
    REQUIRE(back.size() == s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK((back.clusters[i].mean - s.clusters[i].mean).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((back.clusters[i].cov.mat() - s.clusters[i].cov.mat()).cwiseAbs().maxCoeff() <
              1e-12);
        CHECK(back.clusters[i].weight == s.clusters[i].weight);
        CHECK(back.clusters[i].label == s.clusters[i].label);
    }
}

TEST_CASE("summary json: truncated file is a schema error, not a crash") {
    TempDir dir;
    Rng rng(3);
    const CytometrySummary s = testhelp::random_summary(rng, 3, 2, "t");
    const std::string text = summary_to_json(s);
    const std::string path = dir.file("broken.json");
    atomic_write_text(path, text.substr(0, text.size() / 2));
    CHECK_THROWS_AS(load_summary(path), SchemaError);
    atomic_write_text(path, "{\"schema\":\"otgate.summary/999\"}");
    CHECK_THROWS_AS(load_summary(path), SchemaError);
}

TEST_CASE("templates json: absent labels serialize as null") {
    TempDir dir;
    Rng rng(4);
    Template t;
    t.group = 2;
    t.clusters = testhelp::random_summary(rng, 3, 2, "x").clusters;
    t.clusters[0].label.reset();
    t.clusters[1].label = "pop";
    MetaPartition meta;
    meta.ids = {"a", "b"};
    meta.assignment = {1, 2};
    meta.group_count = 2;
    const std::string path = dir.file("templates.json");
    save_templates({t}, meta, path);

    std::ifstream in(path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(text.find("\"label\": null") != std::string::npos);

    const auto [templates, parts] = load_templates(path);
    REQUIRE(templates.size() == 1);
    CHECK(!templates[0].clusters[0].label.has_value());
    CHECK(*templates[0].clusters[1].label == "pop");
    CHECK(parts.assignment == meta.assignment);
}

TEST_CASE("dendrogram: two-leaf newick uses half heights") {
    Dendrogram tree;
    tree.leaf_ids = {"a", "b"};
    tree.merges = {{0, 1, 3.0}};
    CHECK(dendrogram_to_newick(tree) == "(a:1.5,b:1.5);\n");
}

TEST_CASE("dendrogram: json round-trip reproduces the merge list") {
    Rng rng(5);
    std::vector<CytometrySummary> db;
    for (int i = 0; i < 6; ++i) {
        db.push_back(testhelp::random_summary(rng, 3, 2, "s" + std::to_string(i)));
    }
    const Dendrogram tree = hierarchical_cluster(pairwise_distance_matrix(db));
    const Dendrogram back = dendrogram_from_json(dendrogram_to_json(tree));
    CHECK(back.leaf_ids == tree.leaf_ids);
    REQUIRE(back.merges.size() == tree.merges.size());
    for (std::size_t i = 0; i < tree.merges.size(); ++i) {
        CHECK(back.merges[i].left == tree.merges[i].left);
        CHECK(back.merges[i].right == tree.merges[i].right);
        CHECK(back.merges[i].height == tree.merges[i].height);
    }
}

TEST_CASE("dendrogram: 27-leaf newick parses with an independent reader") {
    Rng rng(6);
    Eigen::MatrixXd dist = Eigen::MatrixXd::Zero(27, 27);
    DistanceMatrix dm;
    for (int i = 0; i < 27; ++i) {
        for (int j = i + 1; j < 27; ++j) {
            dist(i, j) = dist(j, i) = rng.uniform(1.0, 9.0);
        }
        dm.ids.push_back("cyto (" + std::to_string(i) + ")");  // needs sanitizing
    }
    dm.entries = dist;
    const Dendrogram tree = hierarchical_cluster(dm, Linkage::Average);
    const std::string newick = dendrogram_to_newick(tree);
    NewickParser parser(newick);
    parser.parse();
    CHECK(parser.leaves == 27);
}

TEST_CASE("manifest: load resolves paths and rejects duplicates") {
    TempDir dir;
    atomic_write_text(dir.file("a.csv"), "x,label\n1,a\n");
    const std::string good =
        "{\"schema\":\"otgate.manifest/1\",\"entries\":[{\"id\":\"a\",\"path\":\"a.csv\","
        "\"role\":\"database\"}],\"markers\":[\"x\"],\"options\":{\"k\":3}}";
    atomic_write_text(dir.file("manifest.json"), good);
    const DatasetManifest m = load_manifest(dir.file("manifest.json"));
    CHECK(m.entries.size() == 1);
    CHECK(m.k == 3);
    CHECK(fs::path(m.entries[0].path).is_absolute());

    const std::string dup =
        "{\"schema\":\"otgate.manifest/1\",\"entries\":[{\"id\":\"a\",\"path\":\"a.csv\","
        "\"role\":\"database\"},{\"id\":\"a\",\"path\":\"a.csv\",\"role\":\"test\"}]}";
    atomic_write_text(dir.file("dup.json"), dup);
    CHECK_THROWS_AS(load_manifest(dir.file("dup.json")), SchemaError);

    const std::string missing =
        "{\"schema\":\"otgate.manifest/1\",\"entries\":[{\"id\":\"b\",\"path\":\"nope.csv\","
        "\"role\":\"test\"}]}";
    atomic_write_text(dir.file("missing.json"), missing);
    CHECK_THROWS_AS(load_manifest(dir.file("missing.json")), SchemaError);
}

TEST_CASE("atomic_write_text: failure leaves no partial target") {
    TempDir dir;
    const std::string target = (dir.path / "sub" / "file.txt").string();
    CHECK_THROWS(atomic_write_text(target, "data"));  // parent dir missing
    CHECK(!fs::exists(target));
}

TEST_CASE("generate_synthetic: zero jitter members sit on their template") {
    SyntheticSpec spec;
    spec.groups = 2;
    spec.cytometries_per_group = 3;
    spec.clusters_per_cytometry = 3;
    spec.dim = 2;
    spec.events_per_cytometry = 900;
    spec.mean_jitter = 0.0;
    spec.cov_jitter = 0.0;
    spec.seed = 11;
    const SyntheticDataset data = generate_synthetic(spec);
    REQUIRE(data.cytometries.size() == 6);
    REQUIRE(data.truth_templates.size() == 2);
    for (std::size_t i = 0; i < data.cytometries.size(); ++i) {
        CytometrySummary s = summarize_cytometry(data.cytometries[i]);
        s.source_id = data.ids[i];
        const CytometrySummary tpl =
            data.truth_templates[static_cast<std::size_t>(data.group_of[i] - 1)].to_summary();
        CHECK(similarity_distance(s, tpl) < 0.05);
    }
}

TEST_CASE("generate_synthetic: same seed gives byte-identical csv output") {
    TempDir dir;
    SyntheticSpec spec;
    spec.seed = 99;
    spec.events_per_cytometry = 200;
    const SyntheticDataset a = generate_synthetic(spec);
    const SyntheticDataset b = generate_synthetic(spec);
    save_csv(a.cytometries[0], a.markers, dir.file("a.csv"));
    save_csv(b.cytometries[0], b.markers, dir.file("b.csv"));
    std::ifstream fa(dir.file("a.csv")), fb(dir.file("b.csv"));
    const std::string ta((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    const std::string tb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    CHECK(ta == tb);
    CHECK(!ta.empty());
}

TEST_CASE("generate_synthetic: infeasible separation raises a generation error") {
    SyntheticSpec spec;
    spec.groups = 1;
    spec.clusters_per_cytometry = 40;
    spec.dim = 1;
    spec.box_scale = 0.05;  // box far too small for 40 separated means
    CHECK_THROWS_AS(generate_synthetic(spec), GenerationError);
    spec.box_scale = 1.5;
    spec.noise_fraction = 1.5;
    CHECK_THROWS_AS(generate_synthetic(spec), std::invalid_argument);
}

TEST_CASE("generate_synthetic: noise events carry the noise label") {
    SyntheticSpec spec;
    spec.groups = 1;
    spec.cytometries_per_group = 1;
    spec.events_per_cytometry = 1000;
    spec.noise_fraction = 0.1;
    spec.seed = 5;
    const SyntheticDataset data = generate_synthetic(spec);
    const auto& labels = data.cytometries[0].labels;
    const long noise = std::count(labels.begin(), labels.end(), "noise");
    CHECK(noise == 100);
}
