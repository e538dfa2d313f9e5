#pragma once

#include <string>
#include <vector>

#include "av/types.hpp"

namespace av::metrics {

// One scored trial joined with its ground truth. value == 0.5 is the
// non-response sentinel used by the shared-task evaluator.
struct ScoredTrial {
    std::string id;
    double value = 0.5;
    int truth = 0;  // a in {0,1}
};

using AnswerSet = std::vector<ScoredTrial>;

inline bool is_nonresponse(double value) { return value == 0.5; }

// ROC AUC over raw values, ties contributing half a pair. Exact integer
// counting internally, so it agrees bitwise with a pairwise comparator.
double auc(const AnswerSet& answers);

// (n_c + n_u * n_c / n) / n, rewarding abstention at the answered accuracy.
double c_at_1(const AnswerSet& answers);

// F_{0.5} where unanswered positive trials count as false negatives.
double f_05_u(const AnswerSet& answers);

// F1 over answered trials; non-responses hurt recall but not precision.
double f1(const AnswerSet& answers);

// 1 - mean squared error of values against labels.
double brier_complement(const AnswerSet& answers);

double overall(double auc_v, double c_at_1_v, double f_05_u_v, double f1_v,
               double brier_v);

struct PanMetrics {
    double auc = 0.0;
    double c_at_1 = 0.0;
    double f_05_u = 0.0;
    double f1 = 0.0;
    double brier = 0.0;
    double overall = 0.0;
};

PanMetrics pan_metrics(const AnswerSet& answers);

struct BinStats {
    double lo = 0.0;
    double hi = 0.0;
    long count = 0;
    double conf = 0.0;  // mean confidence of members
    double acc = 0.0;   // mean correctness of members
};

struct Reliability {
    double acc = 0.0;
    double conf = 0.0;
    double ece = 0.0;
    double mce = 0.0;
    std::vector<BinStats> bins;
};

// Confidence = value if the implied label is 1, else 1 - value, so all
// confidences live in [0.5, 1]. Non-responses are excluded. Bins are
// half-open except the last, which closes at 1.
Reliability reliability(const AnswerSet& answers, int n_bins = 10);

}  // namespace av::metrics
