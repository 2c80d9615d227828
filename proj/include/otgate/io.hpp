#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "otgate/evaluation.hpp"
#include "otgate/hierarchy.hpp"
#include "otgate/tclust.hpp"
#include "otgate/templates.hpp"
#include "otgate/types.hpp"

namespace otgate {

/// CSV with a header row; numeric columns become markers in header order, a
/// column named "label" (any case) supplies event labels. Parse failures
/// carry the 1-based row/column.
struct CsvData {
    LabeledEvents data;
    std::vector<std::string> markers;
    bool had_label_column = false;
};
CsvData load_csv(const std::string& path);

void save_csv(const LabeledEvents& data, const std::vector<std::string>& markers,
              const std::string& path);

/// All file writes go through write-temp-and-rename so failures never leave
/// partial outputs behind.
void atomic_write_text(const std::string& path, const std::string& content);

std::string summary_to_json(const CytometrySummary& summary);
CytometrySummary summary_from_json(const std::string& text);
void save_summary(const CytometrySummary& summary, const std::string& path);
CytometrySummary load_summary(const std::string& path);

void save_summaries(const std::vector<CytometrySummary>& summaries, const std::string& path);
std::vector<CytometrySummary> load_summaries(const std::string& path);

void save_templates(const std::vector<Template>& templates, const MetaPartition& partition,
                    const std::string& path);
std::pair<std::vector<Template>, MetaPartition> load_templates(const std::string& path);

void save_metrics(const MetricReport& report, const std::string& path);

/// Newick with midpoint branch lengths: an edge from a node at merge height
/// h_c to its parent at h_p contributes (h_p - h_c) / 2.
std::string dendrogram_to_newick(const Dendrogram& tree);
std::string dendrogram_to_json(const Dendrogram& tree);
Dendrogram dendrogram_from_json(const std::string& text);
void save_dendrogram(const Dendrogram& tree, const std::string& newick_path,
                     const std::string& json_path);

struct ManifestEntry {
    std::string id;
    std::string path;  // resolved against the manifest directory on load
    std::string role;  // "database" | "test"
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    std::vector<std::string> markers;

    bool equal_weights = false;
    int min_cluster_size = 0;  // 0 = d+2
    std::string metric = "gaussian-w2";
    std::string meta_method = "complete";
    int k = 0;
    std::string template_method = "pooling";
    int template_k = 0;
    int density_min_cluster_size = 2;
    TclustParams tclust;
    std::uint64_t seed = 42;

    std::vector<ManifestEntry> by_role(const std::string& role) const;
};

DatasetManifest load_manifest(const std::string& path);
void save_manifest(const DatasetManifest& manifest, const std::string& path);

}  // namespace otgate
