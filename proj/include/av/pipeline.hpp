#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "av/bfs.hpp"
#include "av/dml.hpp"
#include "av/encoder.hpp"
#include "av/o2d2.hpp"
#include "av/types.hpp"
#include "av/ual.hpp"

namespace av {

struct ModelConfig {
    int d_feat = 4096;
    int d_emb = 128;
    int d_lev = 64;
    int d_bfs = 16;
    int d_ual = 32;
    int d_h1 = 64;
    int d_h2 = 32;
    std::set<int> n_grams{2, 3, 4};
    int min_tokens = 32;
    double tau_s = 0.91;
    double tau_d = 0.09;
    double beta = 0.1;
    bool train_kernel = true;

    int o2d2_input_dim() const { return 2 * d_lev + 4; }
};

// Per-trial forward outputs of one verifier.
struct TrialEval {
    Vec x1, x2;    // document embeddings
    Vec y1, y2;    // LEVs
    double dist = 0.0;
    double p_dml = 0.0;
    double llr = 0.0;
    double p_bfs = 0.5;
    ual::Confusion cm;
    double p_ual_h1 = 0.5;
    double p_h2 = 0.5;

    int a_hat() const { return p_ual_h1 > 0.5 ? 1 : 0; }
};

// One complete verifier: feature extraction config plus all component
// parameters, evaluated end to end on a document pair.
struct VerifierModel {
    ModelConfig cfg;
    std::uint64_t seed = 0;
    bool o2d2_trained = false;
    encoder::EncoderParams encoder_params;
    dml::DmlParams dml_params;
    bfs::BfsParams bfs_params;
    ual::UalParams ual_params;
    o2d2::O2d2Params o2d2_params;

    static VerifierModel init(const ModelConfig& cfg, std::uint64_t seed);

    Vec features(const Document& doc) const;
    Vec embed(const Vec& features) const;
    TrialEval evaluate_features(const Vec& f1, const Vec& f2) const;
    TrialEval evaluate(const Document& d1, const Document& d2) const;
};

// ---- persistence -------------------------------------------------------------

std::string config_to_json(const ModelConfig& cfg);
std::uint64_t fnv1a64_str(const std::string& s);
std::string config_hash(const ModelConfig& cfg);

void save_model(const std::string& path, const VerifierModel& model);
VerifierModel load_model(const std::string& path);

// Hash over all parameter bytes; used by freeze checks and determinism tests.
std::uint64_t params_hash(const VerifierModel& model);

struct BundleManifest {
    int version = 1;
    int members = 0;
    std::string config_hash;
    std::vector<std::uint64_t> seeds;
    bool o2d2_trained = false;
};

void save_bundle(const std::string& dir, const std::vector<VerifierModel>& models);
std::vector<VerifierModel> load_bundle(const std::string& dir,
                                       BundleManifest* manifest = nullptr);

}  // namespace av
