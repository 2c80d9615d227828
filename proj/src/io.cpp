#include "otgate/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace otgate {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kSummarySchema = "otgate.summary/1";
constexpr const char* kSummariesSchema = "otgate.summaries/1";
constexpr const char* kTemplatesSchema = "otgate.templates/1";
constexpr const char* kMetricsSchema = "otgate.metrics/1";
constexpr const char* kDendrogramSchema = "otgate.dendrogram/1";
constexpr const char* kManifestSchema = "otgate.manifest/1";

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("cannot open file: " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json parse_json(const std::string& text, const std::string& what) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) {
        throw SchemaError(what + ": not valid JSON");
    }
    return j;
}

void require_schema(const json& j, const char* schema, const std::string& what) {
    if (!j.is_object() || !j.contains("schema") || !j["schema"].is_string()) {
        throw SchemaError(what + ": missing schema field");
    }
    if (j["schema"].get<std::string>() != schema) {
        throw SchemaError(what + ": expected schema " + schema + ", found " +
                          j["schema"].get<std::string>());
    }
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            out.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    out.push_back(field);
    return out;
}

}  // namespace

CsvData load_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("cannot open file: " + path);
    }
    std::string line;
    if (!std::getline(in, line) || line.empty()) {
        throw ParseError("empty file: " + path);
    }
    const std::vector<std::string> header = split_line(line);
    long label_col = -1;
    std::vector<long> marker_cols;
    CsvData out;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (lower(header[c]) == "label") {
            if (label_col >= 0) {
                throw ParseError("duplicate label column", 1, static_cast<long>(c + 1));
            }
            label_col = static_cast<long>(c);
        } else {
            marker_cols.push_back(static_cast<long>(c));
            out.markers.push_back(header[c]);
        }
    }
    if (marker_cols.empty()) {
        throw ParseError("no marker columns in header", 1);
    }
    out.had_label_column = label_col >= 0;

    std::vector<double> values;
    std::vector<std::string> labels;
    long row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        const std::vector<std::string> fields = split_line(line);
        if (fields.size() != header.size()) {
            throw ParseError("row has " + std::to_string(fields.size()) + " fields, expected " +
                                 std::to_string(header.size()),
                             row);
        }
        for (long c : marker_cols) {
            const std::string& cell = fields[static_cast<std::size_t>(c)];
            double v = 0.0;
            const char* begin = cell.data();
            const char* end = begin + cell.size();
            auto [ptr, ec] = std::from_chars(begin, end, v);
            if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
                throw ParseError("non-numeric marker cell '" + cell + "'", row, c + 1);
            }
            values.push_back(v);
        }
        if (label_col >= 0) {
            labels.push_back(fields[static_cast<std::size_t>(label_col)]);
        }
    }
    const Eigen::Index n = static_cast<Eigen::Index>(values.size() / marker_cols.size());
    if (n == 0) {
        throw ParseError("file has no data rows: " + path);
    }
    out.data.events.resize(n, static_cast<Eigen::Index>(marker_cols.size()));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < out.data.events.cols(); ++j) {
            out.data.events(i, j) =
                values[static_cast<std::size_t>(i * out.data.events.cols() + j)];
        }
    }
    out.data.labels = std::move(labels);
    return out;
}

void save_csv(const LabeledEvents& data, const std::vector<std::string>& markers,
              const std::string& path) {
    if (static_cast<Eigen::Index>(markers.size()) != data.dim()) {
        throw std::invalid_argument("save_csv: marker names do not match dimension");
    }
    std::ostringstream ss;
    for (std::size_t c = 0; c < markers.size(); ++c) {
        if (c) ss << ',';
        ss << markers[c];
    }
    if (data.labeled()) ss << ",label";
    ss << '\n';
    for (Eigen::Index i = 0; i < data.count(); ++i) {
        for (Eigen::Index j = 0; j < data.dim(); ++j) {
            if (j) ss << ',';
            ss << format_double(data.events(i, j));
        }
        if (data.labeled()) ss << ',' << data.labels[static_cast<std::size_t>(i)];
        ss << '\n';
    }
    atomic_write_text(path, ss.str());
}

void atomic_write_text(const std::string& path, const std::string& content) {
    const fs::path target(path);
    const fs::path tmp = target.parent_path() / (target.filename().string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot open for writing: " + tmp.string());
        }
        out << content;
        out.flush();
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw std::runtime_error("write failed: " + tmp.string());
        }
    }
    fs::rename(tmp, target);
}

namespace {

json cluster_to_json(const ClusterModel& c) {
    json j;
    j["weight"] = c.weight;
    j["label"] = c.label ? json(*c.label) : json(nullptr);
    j["mean"] = std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size());
    json cov = json::array();
    for (Eigen::Index r = 0; r < c.cov.dim(); ++r) {
        json cov_row = json::array();
        for (Eigen::Index col = 0; col < c.cov.dim(); ++col) cov_row.push_back(c.cov.mat()(r, col));
        cov.push_back(std::move(cov_row));
    }
    j["cov"] = std::move(cov);
    return j;
}

ClusterModel cluster_from_json(const json& j) {
    try {
        ClusterModel c;
        const auto& mean = j.at("mean");
        c.mean.resize(static_cast<Eigen::Index>(mean.size()));
        for (std::size_t i = 0; i < mean.size(); ++i) {
            c.mean(static_cast<Eigen::Index>(i)) = mean[i].get<double>();
        }
        const auto& cov = j.at("cov");
        Eigen::MatrixXd m(cov.size(), cov.size());
        for (std::size_t r = 0; r < cov.size(); ++r) {
            if (cov[r].size() != cov.size()) {
                throw SchemaError("cluster: covariance is not square");
            }
            for (std::size_t col = 0; col < cov.size(); ++col) {
                m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col)) =
                    cov[r][col].get<double>();
            }
        }
        c.cov = SpdMatrix(m);  // re-validates symmetry on load
        c.weight = j.at("weight").get<double>();
        if (j.contains("label") && !j["label"].is_null()) {
            c.label = j["label"].get<std::string>();
        }
        return c;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("cluster: ") + e.what());
    }
}

json summary_to_json_obj(const CytometrySummary& s) {
    json j;
    j["schema"] = kSummarySchema;
    j["source_id"] = s.source_id;
    json clusters = json::array();
    for (const ClusterModel& c : s.clusters) clusters.push_back(cluster_to_json(c));
    j["clusters"] = std::move(clusters);
    return j;
}

CytometrySummary summary_from_json_obj(const json& j) {
    require_schema(j, kSummarySchema, "summary");
    try {
        CytometrySummary s;
        s.source_id = j.at("source_id").get<std::string>();
        for (const json& c : j.at("clusters")) s.clusters.push_back(cluster_from_json(c));
        return s;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("summary: ") + e.what());
    }
}

}  // namespace

std::string summary_to_json(const CytometrySummary& summary) {
    return summary_to_json_obj(summary).dump(2) + "\n";
}

CytometrySummary summary_from_json(const std::string& text) {
    return summary_from_json_obj(parse_json(text, "summary"));
}

void save_summary(const CytometrySummary& summary, const std::string& path) {
    atomic_write_text(path, summary_to_json(summary));
}

CytometrySummary load_summary(const std::string& path) {
    return summary_from_json(read_file(path));
}

void save_summaries(const std::vector<CytometrySummary>& summaries, const std::string& path) {
    json j;
    j["schema"] = kSummariesSchema;
    json list = json::array();
    for (const CytometrySummary& s : summaries) list.push_back(summary_to_json_obj(s));
    j["summaries"] = std::move(list);
    atomic_write_text(path, j.dump(2) + "\n");
}

std::vector<CytometrySummary> load_summaries(const std::string& path) {
    const json j = parse_json(read_file(path), "summaries");
    require_schema(j, kSummariesSchema, "summaries");
    std::vector<CytometrySummary> out;
    try {
        for (const json& s : j.at("summaries")) out.push_back(summary_from_json_obj(s));
    } catch (const json::exception& e) {
        throw SchemaError(std::string("summaries: ") + e.what());
    }
    return out;
}

void save_templates(const std::vector<Template>& templates, const MetaPartition& partition,
                    const std::string& path) {
    json j;
    j["schema"] = kTemplatesSchema;
    json list = json::array();
    for (const Template& t : templates) {
        json jt;
        jt["group"] = t.group;
        json clusters = json::array();
        for (const ClusterModel& c : t.clusters) clusters.push_back(cluster_to_json(c));
        jt["clusters"] = std::move(clusters);
        list.push_back(std::move(jt));
    }
    j["templates"] = std::move(list);
    j["meta_partition"] = {{"ids", partition.ids},
                           {"assignment", partition.assignment},
                           {"group_count", partition.group_count}};
    atomic_write_text(path, j.dump(2) + "\n");
}

std::pair<std::vector<Template>, MetaPartition> load_templates(const std::string& path) {
    const json j = parse_json(read_file(path), "templates");
    require_schema(j, kTemplatesSchema, "templates");
    try {
        std::vector<Template> templates;
        for (const json& jt : j.at("templates")) {
            Template t;
            t.group = jt.at("group").get<int>();
            for (const json& c : jt.at("clusters")) t.clusters.push_back(cluster_from_json(c));
            templates.push_back(std::move(t));
        }
        MetaPartition partition;
        const json& mp = j.at("meta_partition");
        partition.ids = mp.at("ids").get<std::vector<std::string>>();
        partition.assignment = mp.at("assignment").get<std::vector<int>>();
        partition.group_count = mp.at("group_count").get<int>();
        return {std::move(templates), std::move(partition)};
    } catch (const json::exception& e) {
        throw SchemaError(std::string("templates: ") + e.what());
    }
}

void save_metrics(const MetricReport& report, const std::string& path) {
    json j;
    j["schema"] = kMetricsSchema;
    j["overall_f"] = report.overall_f;
    j["median_f"] = report.median_f;
    json per_label = json::array();
    for (const LabelPrf& l : report.per_label) {
        per_label.push_back({{"label", l.label},
                             {"f", l.f},
                             {"precision", l.precision},
                             {"recall", l.recall}});
    }
    j["per_label"] = std::move(per_label);
    atomic_write_text(path, j.dump(2) + "\n");
}

namespace {

std::string sanitize_leaf(const std::string& id) {
    std::string out = id;
    for (char& c : out) {
        if (c == ',' || c == '(' || c == ')' || c == ':' || c == ';' || c == ' ' || c == '\'') {
            c = '_';
        }
    }
    return out;
}

void build_newick(const Dendrogram& tree, int node, double parent_height, std::string& out) {
    const int n = tree.leaf_count();
    if (node < n) {
        out += sanitize_leaf(tree.leaf_ids[static_cast<std::size_t>(node)]);
        out += ':';
        out += format_double(parent_height / 2.0);
        return;
    }
    const auto& m = tree.merges[static_cast<std::size_t>(node - n)];
    out += '(';
    build_newick(tree, m.left, m.height, out);
    out += ',';
    build_newick(tree, m.right, m.height, out);
    out += ')';
    out += ':';
    out += format_double((parent_height - m.height) / 2.0);
}

}  // namespace

std::string dendrogram_to_newick(const Dendrogram& tree) {
    const int n = tree.leaf_count();
    if (n == 1) {
        return sanitize_leaf(tree.leaf_ids[0]) + ";\n";
    }
    const auto& root = tree.merges.back();
    std::string out = "(";
    build_newick(tree, root.left, root.height, out);
    out += ',';
    build_newick(tree, root.right, root.height, out);
    out += ");\n";
    return out;
}

std::string dendrogram_to_json(const Dendrogram& tree) {
    json j;
    j["schema"] = kDendrogramSchema;
    j["leaf_ids"] = tree.leaf_ids;
    json merges = json::array();
    for (const auto& m : tree.merges) {
        merges.push_back({{"left", m.left}, {"right", m.right}, {"height", m.height}});
    }
    j["merges"] = std::move(merges);
    return j.dump(2) + "\n";
}

Dendrogram dendrogram_from_json(const std::string& text) {
    const json j = parse_json(text, "dendrogram");
    require_schema(j, kDendrogramSchema, "dendrogram");
    try {
        Dendrogram tree;
        tree.leaf_ids = j.at("leaf_ids").get<std::vector<std::string>>();
        for (const json& m : j.at("merges")) {
            tree.merges.push_back({m.at("left").get<int>(), m.at("right").get<int>(),
                                   m.at("height").get<double>()});
        }
        return tree;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("dendrogram: ") + e.what());
    }
}

void save_dendrogram(const Dendrogram& tree, const std::string& newick_path,
                     const std::string& json_path) {
    atomic_write_text(newick_path, dendrogram_to_newick(tree));
    atomic_write_text(json_path, dendrogram_to_json(tree));
}

std::vector<ManifestEntry> DatasetManifest::by_role(const std::string& role) const {
    std::vector<ManifestEntry> out;
    for (const ManifestEntry& e : entries) {
        if (e.role == role) out.push_back(e);
    }
    return out;
}

DatasetManifest load_manifest(const std::string& path) {
    const json j = parse_json(read_file(path), "manifest");
    require_schema(j, kManifestSchema, "manifest");
    DatasetManifest m;
    try {
        for (const json& e : j.at("entries")) {
            ManifestEntry entry;
            entry.id = e.at("id").get<std::string>();
            entry.path = e.at("path").get<std::string>();
            entry.role = e.at("role").get<std::string>();
            if (entry.role != "database" && entry.role != "test") {
                throw SchemaError("manifest: role must be 'database' or 'test', found '" +
                                  entry.role + "'");
            }
            m.entries.push_back(std::move(entry));
        }
        if (j.contains("markers")) m.markers = j["markers"].get<std::vector<std::string>>();
        if (j.contains("options")) {
            const json& o = j["options"];
            if (o.contains("equal_weights")) m.equal_weights = o["equal_weights"].get<bool>();
            if (o.contains("min_cluster_size")) m.min_cluster_size = o["min_cluster_size"].get<int>();
            if (o.contains("metric")) m.metric = o["metric"].get<std::string>();
            if (o.contains("meta_method")) m.meta_method = o["meta_method"].get<std::string>();
            if (o.contains("k")) m.k = o["k"].get<int>();
            if (o.contains("template_method")) m.template_method = o["template_method"].get<std::string>();
            if (o.contains("template_k")) m.template_k = o["template_k"].get<int>();
            if (o.contains("density_min_cluster_size")) {
                m.density_min_cluster_size = o["density_min_cluster_size"].get<int>();
            }
            if (o.contains("seed")) m.seed = o["seed"].get<std::uint64_t>();
            if (o.contains("tclust")) {
                const json& t = o["tclust"];
                if (t.contains("alpha")) m.tclust.alpha = t["alpha"].get<double>();
                if (t.contains("restriction_c")) m.tclust.restriction_c = t["restriction_c"].get<double>();
                if (t.contains("max_iter")) m.tclust.max_iter = t["max_iter"].get<int>();
                if (t.contains("n_restarts")) m.tclust.n_restarts = t["n_restarts"].get<int>();
            }
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("manifest: ") + e.what());
    }

    // Unique ids, resolvable paths.
    std::vector<std::string> ids;
    const fs::path base = fs::path(path).parent_path();
    for (ManifestEntry& e : m.entries) {
        if (std::find(ids.begin(), ids.end(), e.id) != ids.end()) {
            throw SchemaError("manifest: duplicate id '" + e.id + "'");
        }
        ids.push_back(e.id);
        fs::path p(e.path);
        if (p.is_relative()) p = base / p;
        if (!fs::exists(p)) {
            throw SchemaError("manifest: path does not exist: " + p.string());
        }
        e.path = p.string();
    }
    return m;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
    json j;
    j["schema"] = kManifestSchema;
    json entries = json::array();
    for (const ManifestEntry& e : manifest.entries) {
        entries.push_back({{"id", e.id}, {"path", e.path}, {"role", e.role}});
    }
    j["entries"] = std::move(entries);
    j["markers"] = manifest.markers;
    j["options"] = {{"equal_weights", manifest.equal_weights},
                    {"min_cluster_size", manifest.min_cluster_size},
                    {"metric", manifest.metric},
                    {"meta_method", manifest.meta_method},
                    {"k", manifest.k},
                    {"template_method", manifest.template_method},
                    {"template_k", manifest.template_k},
                    {"density_min_cluster_size", manifest.density_min_cluster_size},
                    {"seed", manifest.seed},
                    {"tclust",
                     {{"alpha", manifest.tclust.alpha},
                      {"restriction_c", manifest.tclust.restriction_c},
                      {"max_iter", manifest.tclust.max_iter},
                      {"n_restarts", manifest.tclust.n_restarts}}}};
    atomic_write_text(path, j.dump(2) + "\n");
}

}  // namespace otgate
