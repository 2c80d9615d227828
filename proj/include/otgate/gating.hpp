#pragma once

#include "otgate/evaluation.hpp"
#include "otgate/tclust.hpp"
#include "otgate/templates.hpp"
#include "otgate/types.hpp"

namespace otgate {

/// Index of the template closest to u in similarity distance (ties to the
/// lowest index).
int assign_to_template(const CytometrySummary& u, const std::vector<Template>& templates,
                       ClusterMetric metric = ClusterMetric::GaussianW2);

/// Quadratic discriminant analysis over the Gaussian clusters of a labeled
/// summary: predicted label = argmax_j log p_j - 1/2 log det S_j
/// - 1/2 (x-m_j)' S_j^-1 (x-m_j).
class QdaModel {
public:
    static QdaModel fit(const CytometrySummary& summary);

    std::string predict_one(const Eigen::VectorXd& x) const;
    std::vector<std::string> predict(const Eigen::MatrixXd& events) const;
    const std::vector<std::string>& classes() const { return labels_; }

private:
    std::vector<std::string> labels_;
    std::vector<double> log_norm_;
    std::vector<Eigen::VectorXd> means_;
    std::vector<Eigen::LLT<Eigen::MatrixXd>> llt_;
};

/// QDA behind the pluggable classifier interface (events are summarized per
/// label, then QdaModel applies).
class QdaClassifier : public Classifier {
public:
    explicit QdaClassifier(SummarizeOptions opts = {}) : opts_(opts) {}
    void fit(const LabeledEvents& train) override;
    std::vector<std::string> predict(const Eigen::MatrixXd& events) const override;

private:
    SummarizeOptions opts_;
    std::optional<QdaModel> model_;
};

/// Minimum-cost square assignment (Hungarian method with potentials).
/// Returns row -> column; total cost optionally reported.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost, double* total_cost = nullptr);

struct RelabelResult {
    std::vector<int> match;           // u cluster -> ref cluster, -1 unmatched
    std::vector<std::string> labels;  // per u cluster
    double total_cost = 0.0;          // over real matches
};

/// One-to-one relabelling of u's clusters against ref by minimum-cost
/// bipartite matching. Rectangular instances are padded with dummies at
/// 10x the largest real cost; u clusters matched to a dummy receive a fresh
/// "unmatched-<i>" label.
RelabelResult hungarian_relabel(const CytometrySummary& u, const CytometrySummary& ref,
                                ClusterMetric metric = ClusterMetric::GaussianW2);

struct FuzzyRelabelling {
    Eigen::MatrixXd scores;           // s^l_k, (ref k) x (u l); columns sum to 1
    Eigen::MatrixXd weighted_scores;  // s~^l_k = s^l_k * w_kl / p^ref_k
    std::vector<int> hard_assignment; // per u cluster: argmax_k of s~
    std::vector<std::string> labels;  // derived from ref labels
};

/// Fuzzy relabelling from the optimal transport plan between ref (source)
/// and u (target): s^l_k = w*_kl / p^u_l and s~^l_k = s^l_k * w*_kl / p^ref_k.
FuzzyRelabelling fuzzy_relabel(const CytometrySummary& u, const CytometrySummary& ref,
                               ClusterMetric metric = ClusterMetric::GaussianW2);

enum class LabelMethod { QdaTemplate, QdaNearest, TransferHungarian, TransferFuzzy };

LabelMethod label_method_from_string(const std::string& s);
const char* to_string(LabelMethod m);

struct ClassificationOptions {
    LabelMethod method = LabelMethod::QdaTemplate;
    TclustParams tclust;
    ClusterMetric metric = ClusterMetric::GaussianW2;
    // When set, skips tclust and uses this per-event partition instead
    // (0 = unassigned, 1..K cluster index).
    const std::vector<int>* external_assignment = nullptr;
};

struct ClassificationResult {
    std::vector<std::string> labels;   // per event
    int template_index = -1;           // winner by similarity distance (0-based)
    int assigned_group = 0;            // that template's metacluster
    int init_template_index = -1;      // winner of best_template_init, -1 when external
    int nearest_db_index = -1;         // qda-nearest training summary, -1 otherwise
    double tclust_objective = 0.0;
    CytometrySummary event_partition;  // the unsupervised clustering of the events
};

/// Template-guided supervised gating: cluster the events (tclust seeded from
/// each template, best objective wins, unless an external partition is
/// given), pick the closest template by similarity distance, then label by
/// QDA or by label transfer. Methods that need labels raise ConfigError
/// when the chosen template (or nearest database summary) lacks them.
ClassificationResult optimal_flow_classification(const Eigen::MatrixXd& events,
                                                 const std::vector<Template>& templates,
                                                 const std::vector<CytometrySummary>& db,
                                                 const MetaPartition& meta,
                                                 const ClassificationOptions& opts = {});

}  // namespace otgate
