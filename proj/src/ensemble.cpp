#include "av/ensemble.hpp"

#include <cassert>
#include <cmath>

namespace av::ensemble {

bool vote(const std::vector<double>& per_model_p_h2) {
    const std::size_t m = per_model_p_h2.size();
    if (m == 0 || m % 2 == 0) {
        throw EvenEnsemble("vote: ensemble size must be odd and nonzero");
    }
    std::size_t flags = 0;
    for (double p : per_model_p_h2) {
        if (p >= 0.5) ++flags;
    }
    return flags > m / 2;
}

double confident_average(const MemberOutputs& per_model) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& [p_ual, p_h2] : per_model) {
        if (p_h2 < 0.5) {
            sum += p_ual;
            ++n;
        }
    }
    if (n == 0) throw EmptyConfidentSet("confident_average: no confident members");
    return sum / static_cast<double>(n);
}

Verdict combine(const MemberOutputs& per_model, bool use_o2d2) {
    for (const auto& [p_ual, p_h2] : per_model) {
        if (!std::isfinite(p_ual) || !std::isfinite(p_h2)) {
            throw NonFiniteLoss("combine: member produced a non-finite posterior");
        }
    }
    Verdict v;
    v.per_model = per_model;

    if (!use_o2d2) {
        double sum = 0.0;
        for (const auto& [p_ual, p_h2] : per_model) sum += p_ual;
        v.value = sum / static_cast<double>(per_model.size());
        v.is_nonresponse = false;
        if (v.value == 0.5) v.value = 0.499999;  // 0.5 is reserved for abstention
        return v;
    }

    std::vector<double> p_h2s;
    p_h2s.reserve(per_model.size());
    for (const auto& [p_ual, p_h2] : per_model) p_h2s.push_back(p_h2);

    if (vote(p_h2s)) {
        v.value = 0.5;
        v.is_nonresponse = true;
        return v;
    }
    v.value = confident_average(per_model);
    v.is_nonresponse = false;
    if (v.value == 0.5) v.value = 0.499999;
    return v;
}

Verdict predict(const std::vector<VerifierModel>& models, const Document& d1,
                const Document& d2, bool use_o2d2) {
    MemberOutputs outputs;
    outputs.reserve(models.size());
    for (const auto& m : models) {
        const TrialEval ev = m.evaluate(d1, d2);
        outputs.emplace_back(ev.p_ual_h1, ev.p_h2);
    }
    return combine(outputs, use_o2d2);
}

}  // namespace av::ensemble
