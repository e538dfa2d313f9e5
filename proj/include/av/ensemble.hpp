#pragma once

#include <utility>
#include <vector>

#include "av/pipeline.hpp"
#include "av/types.hpp"

namespace av::ensemble {

// Per-member outputs for one trial: (p_ual_h1, p_h2).
using MemberOutputs = std::vector<std::pair<double, double>>;

// True when more than floor(M/2) members flag the trial as undecidable
// (p_h2 >= 0.5). M must be odd.
bool vote(const std::vector<double>& per_model_p_h2);

// Mean verifier posterior over the members with p_h2 < 0.5. Callers must
// ensure the vote failed so the confident set is nonempty.
double confident_average(const MemberOutputs& per_model);

struct Verdict {
    double value = 0.5;          // exactly 0.5 iff non-response
    bool is_nonresponse = false;
    MemberOutputs per_model;
};

// Pure aggregation of precomputed member outputs. With use_o2d2 = false the
// verdict is the plain posterior mean and never abstains.
Verdict combine(const MemberOutputs& per_model, bool use_o2d2 = true);

Verdict predict(const std::vector<VerifierModel>& models, const Document& d1,
                const Document& d2, bool use_o2d2 = true);

}  // namespace av::ensemble
