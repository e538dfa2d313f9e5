#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "av/metrics.hpp"
#include "av/types.hpp"

namespace av::dataprep {

struct SplitRatios {
    double training = 0.6;
    double calibration = 0.2;
    double validation = 0.2;
};

struct SplitSpec {
    std::vector<Document> training;
    std::vector<Document> calibration;
    std::vector<Document> validation;
    std::size_t removed = 0;  // overlap documents dropped
};

// Partitions authors and fandoms independently into three sets; a document
// survives only if its author and fandom land in the same set, so the splits
// are disjoint in both. Deterministic given the seed.
SplitSpec split_corpus(const std::vector<Document>& docs, const SplitRatios& ratios,
                       std::uint64_t seed);

struct PairQuotas {
    int sa_sf = 0;
    int sa_df = 0;
    int da_sf = 0;
    int da_df = 0;

    int quota(Subset s) const {
        switch (s) {
            case Subset::SA_SF: return sa_sf;
            case Subset::SA_DF: return sa_df;
            case Subset::DA_SF: return da_sf;
            case Subset::DA_DF: return da_df;
        }
        return 0;
    }
    int total() const { return sa_sf + sa_df + da_sf + da_df; }
};

// Draws the requested number of pairs per subset, always extending the
// least-used documents first so per-document usage stays within +-1 inside
// each subset. Fresh sample per epoch seed.
std::vector<Trial> resample_pairs(const std::vector<Document>& docs,
                                  const PairQuotas& quotas, std::uint64_t epoch_seed);

struct SynthConfig {
    int n_authors = 200;
    int docs_per_author = 2;
    int n_fandoms = 8;
    double style_strength = 0.8;   // per-character substitution probability
    double topic_strength = 0.6;   // probability a token comes from the fandom pool
    int tokens_per_doc = 96;
    int fandom_vocab = 40;
    int shared_vocab = 120;
    double fandom_repeat = 0.2;    // chance a later doc reuses the author's previous fandom
    std::uint64_t seed = 1;
};

// Synthetic desk-scale corpus: authorship signal is carried by per-author
// character substitution habits, topical signal by per-fandom vocabulary.
std::vector<Document> gen_synthetic(const SynthConfig& cfg);

// ---- line-delimited JSON I/O ------------------------------------------------

void write_corpus(const std::string& path, const std::vector<Document>& docs);
std::vector<Document> load_corpus(const std::string& path);

// pairs: {"id", "fandoms", "pair"}; truth: {"id", "same", "authors", "fandoms"}
void write_pairs(const std::string& path, const std::vector<Trial>& trials);
void write_truth(const std::string& path, const std::vector<Trial>& trials);

// Joins a pairs file with its truth file by id.
std::vector<Trial> load_pan_pairs(const std::string& pairs_path,
                                  const std::string& truth_path);

// Pairs without ground truth (prediction-time input); labels default to 0.
std::vector<Trial> load_pairs_only(const std::string& pairs_path);

struct AnswerRecord {
    std::string id;
    double value = 0.5;
};

// answers: {"id", "value"}
void write_answers(const std::string& path, const std::vector<AnswerRecord>& answers);
std::vector<AnswerRecord> load_answers(const std::string& path);

struct TruthRecord {
    std::string id;
    int same = 0;
    std::string author1, author2;
    std::string fandom1, fandom2;
    bool has_fandoms = false;
};

std::vector<TruthRecord> load_truth(const std::string& path);

// Joins answers with truth into a scored set; throws IdMismatch when ids
// do not line up one-to-one.
metrics::AnswerSet join_answers(const std::vector<AnswerRecord>& answers,
                                const std::vector<TruthRecord>& truth);

}  // namespace av::dataprep
