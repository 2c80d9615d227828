#include "otgate/synthetic.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "otgate/rng.hpp"

namespace otgate {

using nlohmann::json;

void SyntheticSpec::validate() const {
    if (groups < 1 || cytometries_per_group < 1 || clusters_per_cytometry < 1 || dim < 1 ||
        events_per_cytometry < 1) {
        throw std::invalid_argument("SyntheticSpec: all counts must be >= 1");
    }
    if (mean_jitter < 0.0 || cov_jitter < 0.0) {
        throw std::invalid_argument("SyntheticSpec: jitter scales must be >= 0");
    }
    if (!(noise_fraction >= 0.0 && noise_fraction < 1.0)) {
        throw std::invalid_argument("SyntheticSpec: noise_fraction must be in [0,1)");
    }
    if (separation <= 0.0 || box_scale <= 0.0) {
        throw std::invalid_argument("SyntheticSpec: separation and box_scale must be positive");
    }
}

namespace {

Eigen::MatrixXd random_spd(Rng& rng, int d, double eig_lo, double eig_hi) {
    // Orthogonal basis from the QR of a Gaussian matrix, eigenvalues uniform.
    Eigen::MatrixXd g(d, d);
    for (int r = 0; r < d; ++r) {
        for (int c = 0; c < d; ++c) g(r, c) = rng.normal();
    }
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    const Eigen::MatrixXd q = qr.householderQ();
    Eigen::VectorXd eig(d);
    for (int i = 0; i < d; ++i) eig(i) = rng.uniform(eig_lo, eig_hi);
    Eigen::MatrixXd s = q * eig.asDiagonal() * q.transpose();
    return 0.5 * (s + s.transpose());
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const int d = spec.dim;
    const int total_populations = spec.groups * spec.clusters_per_cytometry;

    // Sample all population means jointly with pairwise separation.
    const double box = spec.separation * spec.box_scale *
                       std::pow(static_cast<double>(total_populations), 1.0 / d);
    std::vector<Eigen::VectorXd> means;
    means.reserve(static_cast<std::size_t>(total_populations));
    int attempts = 0;
    while (static_cast<int>(means.size()) < total_populations) {
        if (++attempts > 20000) {
            throw GenerationError(
                "generate_synthetic: cannot place " + std::to_string(total_populations) +
                " means at separation " + std::to_string(spec.separation) +
                " in dimension " + std::to_string(d) + "; enlarge box_scale or reduce counts");
        }
        Eigen::VectorXd m(d);
        for (int i = 0; i < d; ++i) m(i) = rng.uniform(0.0, box);
        bool ok = true;
        for (const Eigen::VectorXd& other : means) {
            if ((m - other).norm() < spec.separation) {
                ok = false;
                break;
            }
        }
        if (ok) means.push_back(std::move(m));
    }

    SyntheticDataset out;
    for (int i = 0; i < d; ++i) out.markers.push_back("m" + std::to_string(i + 1));

    const int kc = spec.clusters_per_cytometry;
    for (int g = 0; g < spec.groups; ++g) {
        // Base mixture of the group.
        std::vector<Eigen::VectorXd> base_means(means.begin() + g * kc,
                                                means.begin() + (g + 1) * kc);
        std::vector<Eigen::MatrixXd> base_covs;
        Eigen::VectorXd weights(kc);
        for (int k = 0; k < kc; ++k) {
            base_covs.push_back(random_spd(rng, d, 0.5, 1.5));
            weights(k) = 1.0 + rng.uniform();
        }
        weights /= weights.sum();

        Template truth;
        truth.group = g + 1;
        for (int k = 0; k < kc; ++k) {
            ClusterModel c;
            c.mean = base_means[static_cast<std::size_t>(k)];
            c.cov = SpdMatrix(base_covs[static_cast<std::size_t>(k)]);
            c.weight = weights(k);
            c.label = "pop_" + std::to_string(k + 1);
            truth.clusters.push_back(std::move(c));
        }
        out.truth_templates.push_back(std::move(truth));

        for (int m = 0; m < spec.cytometries_per_group; ++m) {
            LabeledEvents events;
            const int n = spec.events_per_cytometry;
            const int n_noise =
                static_cast<int>(std::floor(static_cast<double>(n) * spec.noise_fraction + 0.5));
            const int n_signal = n - n_noise;

            // Member-specific perturbation of the base mixture.
            std::vector<Eigen::VectorXd> mem_means(static_cast<std::size_t>(kc));
            std::vector<Eigen::MatrixXd> mem_chol(static_cast<std::size_t>(kc));
            for (int k = 0; k < kc; ++k) {
                mem_means[static_cast<std::size_t>(k)] =
                    base_means[static_cast<std::size_t>(k)] +
                    spec.mean_jitter * rng.normal_vector(d);
                Eigen::MatrixXd bump(d, d);
                for (int r = 0; r < d; ++r) {
                    for (int c2 = 0; c2 < d; ++c2) bump(r, c2) = rng.normal();
                }
                bump = 0.5 * (bump + bump.transpose()) / std::sqrt(static_cast<double>(d));
                const Eigen::MatrixXd b =
                    Eigen::MatrixXd::Identity(d, d) + spec.cov_jitter * bump;
                const Eigen::MatrixXd cov =
                    b * base_covs[static_cast<std::size_t>(k)] * b.transpose();
                mem_chol[static_cast<std::size_t>(k)] =
                    Eigen::LLT<Eigen::MatrixXd>(0.5 * (cov + cov.transpose())).matrixL();
            }

            // Population counts by largest remainder.
            std::vector<int> counts(static_cast<std::size_t>(kc), 0);
            {
                std::vector<std::pair<double, int>> rema;
                int assigned = 0;
                for (int k = 0; k < kc; ++k) {
                    const double exact = weights(k) * n_signal;
                    counts[static_cast<std::size_t>(k)] = static_cast<int>(std::floor(exact));
                    assigned += counts[static_cast<std::size_t>(k)];
                    rema.emplace_back(-(exact - std::floor(exact)), k);
                }
                std::sort(rema.begin(), rema.end());
                for (int r = 0; r < n_signal - assigned; ++r) {
                    ++counts[static_cast<std::size_t>(rema[static_cast<std::size_t>(r)].second)];
                }
            }

            events.events.resize(n, d);
            events.labels.reserve(static_cast<std::size_t>(n));
            Eigen::Index row = 0;
            for (int k = 0; k < kc; ++k) {
                for (int e = 0; e < counts[static_cast<std::size_t>(k)]; ++e) {
                    events.events.row(row++) =
                        (mem_means[static_cast<std::size_t>(k)] +
                         mem_chol[static_cast<std::size_t>(k)] * rng.normal_vector(d))
                            .transpose();
                    events.labels.push_back("pop_" + std::to_string(k + 1));
                }
            }
            for (int e = 0; e < n_noise; ++e) {
                for (int c2 = 0; c2 < d; ++c2) {
                    events.events(row, c2) = rng.uniform(-3.0, box + 3.0);
                }
                ++row;
                events.labels.push_back("noise");
            }

            out.ids.push_back("g" + std::to_string(g + 1) + "_c" + std::to_string(m + 1));
            out.group_of.push_back(g + 1);
            out.cytometries.push_back(std::move(events));
        }
    }
    return out;
}

SyntheticSpec synthetic_spec_from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) {
        throw SchemaError("synthetic spec: not valid JSON");
    }
    SyntheticSpec spec;
    try {
        if (j.contains("groups")) spec.groups = j["groups"].get<int>();
        if (j.contains("cytometries_per_group")) {
            spec.cytometries_per_group = j["cytometries_per_group"].get<int>();
        }
        if (j.contains("clusters_per_cytometry")) {
            spec.clusters_per_cytometry = j["clusters_per_cytometry"].get<int>();
        }
        if (j.contains("dim")) spec.dim = j["dim"].get<int>();
        if (j.contains("events_per_cytometry")) {
            spec.events_per_cytometry = j["events_per_cytometry"].get<int>();
        }
        if (j.contains("separation")) spec.separation = j["separation"].get<double>();
        if (j.contains("mean_jitter")) spec.mean_jitter = j["mean_jitter"].get<double>();
        if (j.contains("cov_jitter")) spec.cov_jitter = j["cov_jitter"].get<double>();
        if (j.contains("noise_fraction")) spec.noise_fraction = j["noise_fraction"].get<double>();
        if (j.contains("box_scale")) spec.box_scale = j["box_scale"].get<double>();
        if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("synthetic spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

std::string synthetic_spec_to_json(const SyntheticSpec& spec) {
    json j;
    j["groups"] = spec.groups;
    j["cytometries_per_group"] = spec.cytometries_per_group;
    j["clusters_per_cytometry"] = spec.clusters_per_cytometry;
    j["dim"] = spec.dim;
    j["events_per_cytometry"] = spec.events_per_cytometry;
    j["separation"] = spec.separation;
    j["mean_jitter"] = spec.mean_jitter;
    j["cov_jitter"] = spec.cov_jitter;
    j["noise_fraction"] = spec.noise_fraction;
    j["box_scale"] = spec.box_scale;
    j["seed"] = spec.seed;
    return j.dump(2) + "\n";
}

}  // namespace otgate
