// otgate: optimal-transport metaclustering and template-guided gating of
// cytometry summaries. Subcommands: summarize, templates, classify, eval,
// simulate.

#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "otgate/evaluation.hpp"
#include "otgate/gating.hpp"
#include "otgate/io.hpp"
#include "otgate/synthetic.hpp"
#include "otgate/tclust.hpp"
#include "otgate/templates.hpp"

namespace fs = std::filesystem;
using namespace otgate;

namespace {

std::string json_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                    out += buf;
                } else {
                    out += c;
                }
        }
    }
    return out;
}

int fail(const std::string& type, const std::string& message) {
    std::cerr << "{\"error\":{\"type\":\"" << type << "\",\"message\":\""
              << json_escape(message) << "\"}}" << std::endl;
    return 1;
}

SummarizeOptions summarize_options(const DatasetManifest& m) {
    SummarizeOptions opts;
    opts.min_cluster_size = m.min_cluster_size;
    opts.equal_weights = m.equal_weights;
    return opts;
}

std::vector<CytometrySummary> summarize_database(const DatasetManifest& manifest) {
    std::vector<CytometrySummary> db;
    for (const ManifestEntry& entry : manifest.by_role("database")) {
        const CsvData csv = load_csv(entry.path);
        if (!csv.had_label_column) {
            throw std::invalid_argument("database entry '" + entry.id +
                                        "' has no label column; gated input required");
        }
        CytometrySummary s = summarize_cytometry(csv.data, summarize_options(manifest));
        s.source_id = entry.id;
        db.push_back(std::move(s));
    }
    if (db.size() < 2) {
        throw std::invalid_argument("manifest needs at least two database entries");
    }
    return db;
}

struct TemplatesCli {
    std::string manifest_path;
    std::string output_dir;
    std::string meta_method;
    std::string template_method;
    std::string metric;
    int k = -1;
    int template_k = -1;
    int min_cluster_size = -1;
    bool equal_weights = false;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

int run_templates(const TemplatesCli& cli) {
    DatasetManifest manifest = load_manifest(cli.manifest_path);
    if (!cli.meta_method.empty()) manifest.meta_method = cli.meta_method;
    if (!cli.template_method.empty()) manifest.template_method = cli.template_method;
    if (!cli.metric.empty()) manifest.metric = cli.metric;
    if (cli.k >= 0) manifest.k = cli.k;
    if (cli.template_k >= 0) manifest.template_k = cli.template_k;
    if (cli.min_cluster_size >= 0) manifest.min_cluster_size = cli.min_cluster_size;
    if (cli.equal_weights) manifest.equal_weights = true;
    if (cli.seed_set) manifest.seed = cli.seed;

    const std::vector<CytometrySummary> db = summarize_database(manifest);

    TemplatesOptions opts;
    opts.meta_method = meta_method_from_string(manifest.meta_method);
    opts.meta_k = manifest.k;
    opts.template_method = template_method_from_string(manifest.template_method);
    opts.template_k = manifest.template_k;
    opts.density_min_cluster_size = manifest.density_min_cluster_size;
    opts.metric = cluster_metric_from_string(manifest.metric);
    opts.barycenter.seed = manifest.seed;

    const TemplatesResult result = optimal_flow_templates(db, opts);

    fs::create_directories(cli.output_dir);
    const fs::path out(cli.output_dir);
    save_summaries(db, (out / "summaries.json").string());
    save_templates(result.templates, result.partition, (out / "templates.json").string());
    if (result.tree) {
        save_dendrogram(*result.tree, (out / "dendrogram.nwk").string(),
                        (out / "dendrogram.json").string());
    }

    std::cout << "templates: " << result.partition.group_count << " group(s) over " << db.size()
              << " cytometries -> " << out.string() << std::endl;
    return 0;
}

struct ClassifyCli {
    std::string templates_path;
    std::string summaries_path;
    std::string input_path;
    std::string output_dir;
    std::string method = "qda-template";
    std::string metric = "gaussian-w2";
    std::string external_partition;
    double alpha = 0.05;
    double restriction_c = 1e6;
    int max_iter = 100;
    int restarts = 20;
    std::uint64_t seed = 99;
};

int run_classify(const ClassifyCli& cli) {
    auto [templates, meta] = load_templates(cli.templates_path);
    std::vector<CytometrySummary> db;
    if (!cli.summaries_path.empty()) {
        db = load_summaries(cli.summaries_path);
    }
    const CsvData csv = load_csv(cli.input_path);

    std::vector<LabelMethod> methods;
    if (cli.method == "all") {
        methods = {LabelMethod::QdaTemplate, LabelMethod::QdaNearest,
                   LabelMethod::TransferHungarian, LabelMethod::TransferFuzzy};
    } else {
        methods = {label_method_from_string(cli.method)};
    }

    std::vector<int> external;
    if (!cli.external_partition.empty()) {
        std::ifstream in(cli.external_partition);
        if (!in) {
            throw ParseError("cannot open external partition: " + cli.external_partition);
        }
        int v;
        while (in >> v) external.push_back(v);
    }

    fs::create_directories(cli.output_dir);
    const fs::path out(cli.output_dir);
    const std::string stem = fs::path(cli.input_path).stem().string();
    const bool suffixed = methods.size() > 1;

    int succeeded = 0;
    std::string first_error;
    for (LabelMethod method : methods) {
        ClassificationOptions opts;
        opts.method = method;
        opts.metric = cluster_metric_from_string(cli.metric);
        opts.tclust.alpha = cli.alpha;
        opts.tclust.restriction_c = cli.restriction_c;
        opts.tclust.max_iter = cli.max_iter;
        opts.tclust.n_restarts = cli.restarts;
        opts.tclust.seed = cli.seed;
        if (!external.empty()) opts.external_assignment = &external;
        if (method == LabelMethod::QdaNearest && db.empty()) {
            if (!suffixed) {
                throw ConfigError("qda-nearest needs --summaries from the templates run");
            }
            std::cout << "classify: " << stem << " [qda-nearest] skipped: needs --summaries"
                      << std::endl;
            continue;
        }

        ClassificationResult result;
        try {
            result = optimal_flow_classification(csv.data.events, templates, db, meta, opts);
        } catch (const ConfigError& e) {
            if (!suffixed) throw;
            // Reporting every method: incompatible ones are noted, not fatal.
            if (first_error.empty()) first_error = e.what();
            std::cout << "classify: " << stem << " [" << to_string(method)
                      << "] skipped: " << e.what() << std::endl;
            continue;
        }
        ++succeeded;

        const std::string tag = suffixed ? "_" + std::string(to_string(method)) : "";
        LabeledEvents labeled;
        labeled.events = csv.data.events;
        labeled.labels = result.labels;
        save_csv(labeled, csv.markers, (out / (stem + tag + "_labeled.csv")).string());

        if (csv.had_label_column) {
            const MetricReport report = evaluate_labels(csv.data.labels, result.labels);
            save_metrics(report, (out / (stem + tag + "_metrics.json")).string());
            std::cout << "classify: " << stem << " [" << to_string(method) << "] -> group "
                      << result.assigned_group << ", overall F " << report.overall_f
                      << ", median F " << report.median_f << std::endl;
        } else {
            std::cout << "classify: " << stem << " [" << to_string(method) << "] -> group "
                      << result.assigned_group << std::endl;
        }
    }
    if (succeeded == 0) {
        throw ConfigError("classify: no method applicable" +
                          (first_error.empty() ? "" : ": " + first_error));
    }
    return 0;
}

int run_eval(const std::string& truth_path, const std::string& pred_path,
             const std::string& output) {
    const CsvData truth = load_csv(truth_path);
    const CsvData pred = load_csv(pred_path);
    if (!truth.had_label_column || !pred.had_label_column) {
        throw std::invalid_argument("eval: both files need a label column");
    }
    const MetricReport report = evaluate_labels(truth.data.labels, pred.data.labels);
    save_metrics(report, output);
    std::cout << "eval: overall F " << report.overall_f << ", median F " << report.median_f
              << " -> " << output << std::endl;
    return 0;
}

struct SimulateCli {
    std::string spec_path;
    std::string output_dir;
    int holdout = 0;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

int run_simulate(const SimulateCli& cli) {
    SyntheticSpec spec;
    if (!cli.spec_path.empty()) {
        std::ifstream in(cli.spec_path, std::ios::binary);
        if (!in) {
            throw ParseError("cannot open spec: " + cli.spec_path);
        }
        std::ostringstream ss;
        ss << in.rdbuf();
        spec = synthetic_spec_from_json(ss.str());
    }
    if (cli.seed_set) spec.seed = cli.seed;
    if (cli.holdout < 0 || cli.holdout >= spec.cytometries_per_group) {
        throw std::invalid_argument("simulate: holdout must be in [0, cytometries_per_group)");
    }

    const SyntheticDataset data = generate_synthetic(spec);
    fs::create_directories(cli.output_dir);
    const fs::path out(cli.output_dir);

    DatasetManifest manifest;
    manifest.markers = data.markers;
    manifest.seed = spec.seed;
    for (std::size_t i = 0; i < data.cytometries.size(); ++i) {
        save_csv(data.cytometries[i], data.markers, (out / (data.ids[i] + ".csv")).string());
        // The last `holdout` members of each group become test entries.
        std::size_t within = i % static_cast<std::size_t>(spec.cytometries_per_group);
        const bool test =
            within >= static_cast<std::size_t>(spec.cytometries_per_group - cli.holdout);
        manifest.entries.push_back(
            {data.ids[i], data.ids[i] + ".csv", test ? "test" : "database"});
    }
    save_manifest(manifest, (out / "manifest.json").string());

    MetaPartition truth_groups;
    truth_groups.ids = data.ids;
    truth_groups.assignment = data.group_of;
    truth_groups.group_count = spec.groups;
    save_templates(data.truth_templates, truth_groups, (out / "truth_templates.json").string());
    atomic_write_text((out / "spec.json").string(), synthetic_spec_to_json(spec));

    std::cout << "simulate: " << data.cytometries.size() << " cytometries in " << spec.groups
              << " group(s) -> " << out.string() << std::endl;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Optimal-transport metaclustering and supervised gating of cytometries"};
    app.require_subcommand(1);

    // summarize
    auto* sum = app.add_subcommand("summarize", "Collapse a gated CSV into a Gaussian summary");
    std::string sum_input, sum_output, sum_id;
    int sum_min_size = 0;
    bool sum_equal = false;
    sum->add_option("--input", sum_input, "gated CSV with a label column")->required();
    sum->add_option("--output", sum_output, "summary JSON path")->required();
    sum->add_option("--id", sum_id, "source id recorded in the summary");
    sum->add_option("--min-cluster-size", sum_min_size, "events required per label (0 = d+2)");
    sum->add_flag("--equal-weights", sum_equal, "uniform cluster weights");

    // templates
    auto* tpl = app.add_subcommand("templates", "Metacluster a database and build templates");
    TemplatesCli tpl_cli;
    tpl->add_option("--manifest", tpl_cli.manifest_path, "dataset manifest JSON")->required();
    tpl->add_option("--output-dir", tpl_cli.output_dir, "output directory")->required();
    tpl->add_option("--meta-method", tpl_cli.meta_method, "single|complete|average|hdbscan");
    tpl->add_option("--k", tpl_cli.k, "metacluster count (hierarchical methods)");
    tpl->add_option("--template-method", tpl_cli.template_method, "pooling|density|kbarycenter");
    tpl->add_option("--template-k", tpl_cli.template_k, "clusters per template (kbarycenter)");
    tpl->add_option("--metric", tpl_cli.metric,
                    "gaussian-w2|gaussian-w2-squared|symmetric-kl|empirical");
    tpl->add_option("--min-cluster-size", tpl_cli.min_cluster_size, "summarize threshold");
    tpl->add_flag("--equal-weights", tpl_cli.equal_weights, "uniform cluster weights");
    auto* tpl_seed = tpl->add_option("--seed", tpl_cli.seed, "barycenter seed");

    // classify
    auto* cls = app.add_subcommand("classify", "Gate a new cytometry with the template database");
    ClassifyCli cls_cli;
    cls->add_option("--templates", cls_cli.templates_path, "templates JSON")->required();
    cls->add_option("--summaries", cls_cli.summaries_path, "database summaries JSON");
    cls->add_option("--input", cls_cli.input_path, "test CSV")->required();
    cls->add_option("--output-dir", cls_cli.output_dir, "output directory")->required();
    cls->add_option("--method", cls_cli.method,
                    "qda-template|qda-nearest|label-transfer-hungarian|label-transfer-fuzzy|all");
    cls->add_option("--metric", cls_cli.metric, "cluster metric");
    cls->add_option("--external-partition", cls_cli.external_partition,
                    "per-event cluster file (skips tclust)");
    cls->add_option("--alpha", cls_cli.alpha, "tclust trimming level");
    cls->add_option("--restriction-c", cls_cli.restriction_c, "eigenvalue ratio bound");
    cls->add_option("--max-iter", cls_cli.max_iter, "tclust iteration cap");
    cls->add_option("--restarts", cls_cli.restarts, "tclust restarts when unseeded");
    cls->add_option("--seed", cls_cli.seed, "tclust seed");

    // eval
    auto* ev = app.add_subcommand("eval", "Score a predicted gating against a manual one");
    std::string ev_truth, ev_pred, ev_output;
    ev->add_option("--truth", ev_truth, "ground-truth labeled CSV")->required();
    ev->add_option("--pred", ev_pred, "predicted labeled CSV")->required();
    ev->add_option("--output", ev_output, "metrics JSON path")->required();

    // simulate
    auto* sim = app.add_subcommand("simulate", "Generate a planted synthetic database");
    SimulateCli sim_cli;
    sim->add_option("--spec", sim_cli.spec_path, "SyntheticSpec JSON (defaults when omitted)");
    sim->add_option("--output-dir", sim_cli.output_dir, "output directory")->required();
    sim->add_option("--holdout", sim_cli.holdout, "per-group members marked as test entries");
    auto* sim_seed = sim->add_option("--seed", sim_cli.seed, "generator seed (overrides spec)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e);  // --help
        }
        std::cerr << "{\"error\":{\"type\":\"usage\",\"message\":\"" << json_escape(e.what())
                  << "\"}}" << std::endl;
        return 2;
    }

    try {
        if (sum->parsed()) {
            const CsvData csv = load_csv(sum_input);
            if (!csv.had_label_column) {
                throw std::invalid_argument("summarize: input has no label column");
            }
            SummarizeOptions opts;
            opts.min_cluster_size = sum_min_size;
            opts.equal_weights = sum_equal;
            CytometrySummary s = summarize_cytometry(csv.data, opts);
            s.source_id = sum_id.empty() ? fs::path(sum_input).stem().string() : sum_id;
            save_summary(s, sum_output);
            std::cout << "summarize: " << s.size() << " cluster(s) -> " << sum_output
                      << std::endl;
            return 0;
        }
        if (tpl->parsed()) {
            tpl_cli.seed_set = tpl_seed->count() > 0;
            return run_templates(tpl_cli);
        }
        if (cls->parsed()) {
            return run_classify(cls_cli);
        }
        if (ev->parsed()) {
            return run_eval(ev_truth, ev_pred, ev_output);
        }
        if (sim->parsed()) {
            sim_cli.seed_set = sim_seed->count() > 0;
            return run_simulate(sim_cli);
        }
    } catch (const ParseError& e) {
        return fail("parse_error", e.what());
    } catch (const SchemaError& e) {
        return fail("schema_error", e.what());
    } catch (const ConfigError& e) {
        return fail("config_error", e.what());
    } catch (const ConvergenceError& e) {
        return fail("convergence_error", e.what());
    } catch (const GenerationError& e) {
        return fail("generation_error", e.what());
    } catch (const EmptyTemplateError& e) {
        return fail("empty_template", e.what());
    } catch (const std::invalid_argument& e) {
        return fail("argument_error", e.what());
    } catch (const std::exception& e) {
        return fail("runtime_error", e.what());
    }
    return 0;
}
