#include "av/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace av::metrics {

double auc(const AnswerSet& answers) {
    std::vector<std::pair<double, int>> scored;
    scored.reserve(answers.size());
    long n_pos = 0;
    long n_neg = 0;
    for (const auto& t : answers) {
        scored.emplace_back(t.value, t.truth);
        if (t.truth) ++n_pos; else ++n_neg;
    }
    if (n_pos == 0 || n_neg == 0) {
        throw SingleClass("auc: both classes must be present");
    }
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    // Sweep over tie groups; pairs counted exactly (integers and halves).
    double correct = 0.0;
    long neg_below = 0;
    std::size_t i = 0;
    while (i < scored.size()) {
        std::size_t j = i;
        long pos_here = 0;
        long neg_here = 0;
        while (j < scored.size() && scored[j].first == scored[i].first) {
            if (scored[j].second) ++pos_here; else ++neg_here;
            ++j;
        }
        correct += static_cast<double>(pos_here) * static_cast<double>(neg_below);
        correct += 0.5 * static_cast<double>(pos_here) * static_cast<double>(neg_here);
        neg_below += neg_here;
        i = j;
    }
    return correct / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double c_at_1(const AnswerSet& answers) {
    const double n = static_cast<double>(answers.size());
    if (answers.empty()) return 0.0;
    double n_correct = 0.0;
    double n_unanswered = 0.0;
    for (const auto& t : answers) {
        if (is_nonresponse(t.value)) {
            n_unanswered += 1.0;
        } else if ((t.value > 0.5 && t.truth == 1) || (t.value < 0.5 && t.truth == 0)) {
            n_correct += 1.0;
        }
    }
    return (n_correct + n_unanswered * n_correct / n) / n;
}

namespace {

struct Counts {
    double tp = 0.0;
    double fp = 0.0;
    double fn_answered = 0.0;
    double pos_unanswered = 0.0;
    double n_pos = 0.0;
};

Counts tally(const AnswerSet& answers) {
    Counts c;
    for (const auto& t : answers) {
        if (t.truth) c.n_pos += 1.0;
        if (is_nonresponse(t.value)) {
            if (t.truth) c.pos_unanswered += 1.0;
            continue;
        }
        const int pred = t.value > 0.5 ? 1 : 0;
        if (pred == 1 && t.truth == 1) c.tp += 1.0;
        else if (pred == 1 && t.truth == 0) c.fp += 1.0;
        else if (pred == 0 && t.truth == 1) c.fn_answered += 1.0;
    }
    return c;
}

double f_beta(double precision, double recall, double beta2) {
    const double denom = beta2 * precision + recall;
    if (denom == 0.0) return 0.0;
    return (1.0 + beta2) * precision * recall / denom;
}

}  // namespace

double f_05_u(const AnswerSet& answers) {
    const Counts c = tally(answers);
    if (c.n_pos == 0.0) throw NoPositives("f_05_u: no positive trials");
    const double fn = c.fn_answered + c.pos_unanswered;
    const double precision = (c.tp + c.fp) > 0.0 ? c.tp / (c.tp + c.fp) : 0.0;
    const double recall = (c.tp + fn) > 0.0 ? c.tp / (c.tp + fn) : 0.0;
    return f_beta(precision, recall, 0.25);
}

double f1(const AnswerSet& answers) {
    const Counts c = tally(answers);
    if (c.n_pos == 0.0) throw NoPositives("f1: no positive trials");
    const double precision = (c.tp + c.fp) > 0.0 ? c.tp / (c.tp + c.fp) : 0.0;
    const double recall = c.n_pos > 0.0 ? c.tp / c.n_pos : 0.0;
    return f_beta(precision, recall, 1.0);
}

double brier_complement(const AnswerSet& answers) {
    if (answers.empty()) return 0.0;
    double se = 0.0;
    for (const auto& t : answers) {
        const double d = t.value - static_cast<double>(t.truth);
        se += d * d;
    }
    return 1.0 - se / static_cast<double>(answers.size());
}

double overall(double auc_v, double c_at_1_v, double f_05_u_v, double f1_v,
               double brier_v) {
    return (auc_v + c_at_1_v + f_05_u_v + f1_v + brier_v) / 5.0;
}

PanMetrics pan_metrics(const AnswerSet& answers) {
    PanMetrics m;
    m.auc = auc(answers);
    m.c_at_1 = c_at_1(answers);
    m.f_05_u = f_05_u(answers);
    m.f1 = f1(answers);
    m.brier = brier_complement(answers);
    m.overall = overall(m.auc, m.c_at_1, m.f_05_u, m.f1, m.brier);
    return m;
}

Reliability reliability(const AnswerSet& answers, int n_bins) {
    if (n_bins < 1) throw InvalidConfig("reliability: n_bins must be >= 1");
    Reliability r;
    r.bins.resize(static_cast<std::size_t>(n_bins));
    const double width = 0.5 / static_cast<double>(n_bins);
    std::vector<double> conf_sum(n_bins, 0.0), acc_sum(n_bins, 0.0);
    std::vector<long> count(n_bins, 0);

    for (const auto& t : answers) {
        if (is_nonresponse(t.value)) continue;
        const int pred = t.value > 0.5 ? 1 : 0;
        const double conf = pred == 1 ? t.value : 1.0 - t.value;
        int b = static_cast<int>((conf - 0.5) / width);
        if (b >= n_bins) b = n_bins - 1;
        if (b < 0) b = 0;
        conf_sum[b] += conf;
        acc_sum[b] += (pred == t.truth) ? 1.0 : 0.0;
        ++count[b];
    }

    long total = 0;
    for (int b = 0; b < n_bins; ++b) total += count[b];

    double ece = 0.0;
    double mce = 0.0;
    double acc_total = 0.0;
    double conf_total = 0.0;
    for (int b = 0; b < n_bins; ++b) {
        auto& bin = r.bins[static_cast<std::size_t>(b)];
        bin.lo = 0.5 + b * width;
        bin.hi = 0.5 + (b + 1) * width;
        bin.count = count[b];
        if (count[b] > 0) {
            bin.conf = conf_sum[b] / static_cast<double>(count[b]);
            bin.acc = acc_sum[b] / static_cast<double>(count[b]);
            const double gap = std::abs(bin.conf - bin.acc);
            const double wgt = static_cast<double>(count[b]) / static_cast<double>(total);
            ece += wgt * gap;
            mce = std::max(mce, gap);
            acc_total += wgt * bin.acc;
            conf_total += wgt * bin.conf;
        }
    }
    r.ece = ece;
    r.mce = mce;
    r.acc = acc_total;
    r.conf = conf_total;
    return r;
}

}  // namespace av::metrics
