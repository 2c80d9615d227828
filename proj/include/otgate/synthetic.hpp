#pragma once

#include <cstdint>

#include "otgate/templates.hpp"
#include "otgate/types.hpp"

namespace otgate {

/// Parameters of the planted-structure generator. Each of `groups` base
/// mixtures gets `cytometries_per_group` members whose means/covariances are
/// perturbed by the jitter scales; a noise fraction is drawn uniformly over
/// the data box with label "noise".
struct SyntheticSpec {
    int groups = 3;
    int cytometries_per_group = 5;
    int clusters_per_cytometry = 4;
    int dim = 2;
    int events_per_cytometry = 1000;
    double separation = 10.0;   // minimum distance between population means
    double mean_jitter = 0.5;
    double cov_jitter = 0.05;
    double noise_fraction = 0.0;
    double box_scale = 1.5;     // sampling box size relative to packing bound
    std::uint64_t seed = 7;

    void validate() const;
};

struct SyntheticDataset {
    std::vector<std::string> ids;  // "g<group>_c<index>"
    std::vector<LabeledEvents> cytometries;
    std::vector<int> group_of;  // 1..groups
    std::vector<Template> truth_templates;
    std::vector<std::string> markers;
};

/// Deterministic given the seed (byte-identical CSV output on repeat runs).
/// Throws GenerationError when the requested separation cannot be packed
/// into the sampling box.
SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

SyntheticSpec synthetic_spec_from_json(const std::string& text);
std::string synthetic_spec_to_json(const SyntheticSpec& spec);

}  // namespace otgate
