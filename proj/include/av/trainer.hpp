#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "av/dataprep.hpp"
#include "av/ensemble.hpp"
#include "av/metrics.hpp"
#include "av/optim.hpp"
#include "av/pipeline.hpp"

namespace av::trainer {

struct TrainConfig {
    ModelConfig model;
    int epochs = 20;
    int batch_size = 32;
    optim::AdamConfig adam;
    // Optional decoupled decay for the encoder and projection weights.
    double weight_decay = 0.0;
    std::uint64_t seed = 1;

    dataprep::PairQuotas train_quotas{160, 285, 643, 427};
    // Development-style pairs (cross-topic only) drawn once from the
    // calibration split and used for early stopping.
    dataprep::PairQuotas dev_quotas{0, 52, 70, 0};
    int patience = 5;

    int o2d2_epochs = 30;
    dataprep::PairQuotas o2d2_quotas{21, 27, 41, 41};
    bool o2d2_class_weights = true;
    // Inverse-frequency weights are capped so a rare detector class cannot
    // dominate the loss outright.
    double o2d2_weight_cap = 2.0;
    double epsilon = 0.1;
    std::vector<double> epsilon_grid{0.05, 0.075, 0.10, 0.125, 0.15};

    bool fandom_probe = false;
};

struct EpochLog {
    int epoch = 0;
    double dml_loss = 0.0;
    double bfs_loss = 0.0;
    double ual_loss = 0.0;
    double auth_acc = 0.0;
    double fandom_acc = 0.0;  // populated only when the probe runs
    std::optional<double> dev_overall;
};

struct StageOneResult {
    VerifierModel model;
    std::vector<EpochLog> log;
    int best_epoch = -1;
};

// Shared featurization cache; featurize is pure so entries are immutable
// and can be read concurrently.
class FeatureCache {
public:
    void add(const std::vector<Document>& docs, const ModelConfig& cfg);
    const Vec& get(const Document& doc) const;

private:
    std::unordered_map<std::string, Vec> by_id_;
};

// Stage 1: joint training of the verifier components, each loss updating
// only its own parameter set (gradients stop at the LEVs for scoring and at
// both LEVs and the scoring posterior for the adaptation layer).
StageOneResult train_stage1(const std::vector<Document>& train_docs,
                            const std::vector<Document>& dev_docs,
                            const TrainConfig& cfg);

struct StageTwoResult {
    std::vector<double> epoch_loss;
    double label_rate = 0.0;  // fraction of positive detector labels seen
};

// Stage 2: trains the undecidability detector on calibration pairs while
// every other parameter stays frozen.
StageTwoResult train_o2d2(VerifierModel& model,
                          const std::vector<Document>& calibration_docs,
                          const TrainConfig& cfg, double epsilon);

struct EpsilonChoice {
    double epsilon = 0.1;
    std::vector<std::pair<double, double>> table;  // (epsilon, overall)
};

// Grid search over epsilon: retrains the detector per grid point and keeps
// the value with the best overall score on the validation pairs (ties take
// the smaller epsilon).
EpsilonChoice tune_epsilon(const VerifierModel& frozen,
                           const std::vector<Document>& calibration_docs,
                           const std::vector<Trial>& validation_pairs,
                           const std::vector<double>& grid, const TrainConfig& cfg);

// Answers for a trial list from an ensemble (single models pass M = 1).
std::vector<dataprep::AnswerRecord> predict_answers(
    const std::vector<VerifierModel>& models, const std::vector<Trial>& trials,
    bool use_o2d2 = true);

metrics::AnswerSet score_trials(const std::vector<VerifierModel>& models,
                                const std::vector<Trial>& trials, bool use_o2d2 = true);

// ---- finite-difference verification harness ---------------------------------

struct ComponentCheck {
    std::string name;
    double max_rel_err = 0.0;
    int cases = 0;
};

struct GradCheckReport {
    std::vector<ComponentCheck> components;
    double threshold = 1e-4;

    double worst() const;
    bool pass() const { return worst() < threshold; }
};

// Central finite differences (step 1e-5) against the analytic gradients of
// all four losses on random small instances.
GradCheckReport grad_check_all(int cases_per_component = 200, int max_dim = 8,
                               std::uint64_t seed = 42);

}  // namespace av::trainer
