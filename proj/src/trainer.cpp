#include "av/trainer.hpp"

#include <algorithm>
#include <cmath>

namespace av::trainer {

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

void FeatureCache::add(const std::vector<Document>& docs, const ModelConfig& cfg) {
    for (const auto& d : docs) {
        if (by_id_.count(d.id)) continue;
        by_id_.emplace(d.id, encoder::featurize(d, cfg.n_grams, cfg.d_feat, cfg.min_tokens));
    }
}

const Vec& FeatureCache::get(const Document& doc) const {
    const auto it = by_id_.find(doc.id);
    if (it == by_id_.end()) throw InvalidConfig("FeatureCache: unknown document " + doc.id);
    return it->second;
}

namespace {

// One DML+BFS+UAL head; the fandom probe instantiates a second one with the
// same shapes but its own parameters.
struct HeadParams {
    dml::DmlParams dml;
    bfs::BfsParams bfs;
    ual::UalParams ual;
};

struct HeadGrads {
    dml::DmlParams dml;
    bfs::BfsParams bfs;
    ual::UalParams ual;
};

struct HeadAdams {
    optim::Adam<dml::DmlParams> dml;
    optim::Adam<bfs::BfsParams> bfs;
    optim::Adam<ual::UalParams> ual;

    // Weight decay stays off the Gaussian and confusion parameters; shrinking
    // raw Cholesky factors or softmax logits would bias them, not regularize.
    HeadAdams(const HeadParams& like, optim::AdamConfig cfg, double weight_decay)
        : dml(like.dml, with_decay(cfg, weight_decay)), bfs(like.bfs, cfg), ual(like.ual, cfg) {}

    static optim::AdamConfig with_decay(optim::AdamConfig cfg, double wd) {
        cfg.weight_decay = wd;
        return cfg;
    }
};

struct HeadStep {
    double l_dml = 0.0;
    double l_bfs = 0.0;
    double l_ual = 0.0;
    double p_ual_h1 = 0.5;
};

// Forward + backward for one trial through one head. Each loss feeds only
// its own parameter block: the scoring loss stops at the LEVs, the
// adaptation loss stops at the LEVs and the scoring posterior. Only the
// contrastive loss reaches back through the projection into the embeddings
// (grad_x1/grad_x2), and from there into the encoder.
HeadStep head_step(const Vec& x1, const Vec& x2, int label, const HeadParams& p,
                   double tau_s, double tau_d, double upstream, HeadGrads& g,
                   Vec* grad_x1, Vec* grad_x2) {
    HeadStep out;

    const auto pc = dml::pair_forward(x1, x2, p.dml);
    out.l_dml = dml::dml_loss(pc.p, label, tau_s, tau_d);
    dml::dml_backward(pc, p.dml, label, tau_s, tau_d, upstream, g.dml, grad_x1, grad_x2);

    const auto sc = bfs::score_forward(pc.y1, pc.y2, p.bfs);
    out.l_bfs = bfs::bfs_loss(sc.score.posterior_h1, label);
    bfs::bfs_backward(sc, p.bfs, upstream * (sc.score.posterior_h1 - label), g.bfs);

    const auto uc = ual::forward(pc.y1, pc.y2, sc.score.posterior_h1, p.ual);
    out.l_ual = ual::ual_loss(uc.p_ual, uc.cm, label, p.ual.beta);
    ual::ual_backward(uc, p.ual, label, upstream, g.ual);

    out.p_ual_h1 = uc.p_ual[1];
    return out;
}

void head_zero(HeadGrads& g) {
    optim::zero_fields(g.dml);
    optim::zero_fields(g.bfs);
    optim::zero_fields(g.ual);
}

void head_apply(HeadParams& p, const HeadGrads& g, HeadAdams& adams) {
    adams.dml.step(p.dml, g.dml);
    adams.bfs.step(p.bfs, g.bfs);
    adams.ual.step(p.ual, g.ual);
    // alpha >= 1 keeps the kernel gradient bounded near zero distance.
    if (p.dml.alpha_log < 0.0) p.dml.alpha_log = 0.0;
    // The Cholesky parameterization cannot leave the SPD cone; verify anyway
    // after every update so numerical blowups surface immediately.
    if (Eigen::LLT<Mat>(p.bfs.within_prec()).info() != Eigen::Success ||
        Eigen::LLT<Mat>(p.bfs.between_prec()).info() != Eigen::Success) {
        throw NotPositiveDefinite("precision matrix left the SPD cone after an update");
    }
}

}  // namespace

StageOneResult train_stage1(const std::vector<Document>& train_docs,
                            const std::vector<Document>& dev_docs,
                            const TrainConfig& cfg) {
    if (train_docs.empty()) throw InvalidConfig("train_stage1: empty training split");
    if (cfg.batch_size < 1 || cfg.epochs < 0) {
        throw InvalidConfig("train_stage1: batch size must be positive, epochs nonnegative");
    }
    if (cfg.epochs > 0 && cfg.train_quotas.total() <= 0) {
        throw InvalidConfig("train_stage1: all pair quotas are zero");
    }

    VerifierModel model = VerifierModel::init(cfg.model, cfg.seed);

    FeatureCache cache;
    cache.add(train_docs, cfg.model);
    cache.add(dev_docs, cfg.model);

    std::vector<Trial> dev_pairs;
    if (!dev_docs.empty() && cfg.dev_quotas.total() > 0) {
        dev_pairs = dataprep::resample_pairs(dev_docs, cfg.dev_quotas, mix(cfg.seed, 0xdefULL));
    }

    HeadParams head{model.dml_params, model.bfs_params, model.ual_params};
    HeadGrads grads{head.dml.zeros_like(), head.bfs.zeros_like(), head.ual.zeros_like()};
    HeadAdams adams(head, cfg.adam, cfg.weight_decay);
    auto enc_grads = model.encoder_params.zeros_like();
    optim::Adam<encoder::EncoderParams> enc_adam(
        model.encoder_params, HeadAdams::with_decay(cfg.adam, cfg.weight_decay));

    // The probe mirrors the verifier head but never touches the encoder.
    std::optional<HeadParams> probe;
    std::optional<HeadGrads> probe_grads;
    std::optional<HeadAdams> probe_adams;
    if (cfg.fandom_probe) {
        Rng prng(mix(cfg.seed, 0x980beULL));
        probe = HeadParams{dml::DmlParams::init(cfg.model.d_lev, cfg.model.d_emb, prng),
                           bfs::BfsParams::init(cfg.model.d_bfs, cfg.model.d_lev, prng),
                           ual::UalParams::init(cfg.model.d_ual, cfg.model.d_lev, prng)};
        probe->dml.train_kernel = cfg.model.train_kernel;
        probe->ual.beta = cfg.model.beta;
        probe_grads = HeadGrads{probe->dml.zeros_like(), probe->bfs.zeros_like(),
                                probe->ual.zeros_like()};
        probe_adams.emplace(*probe, cfg.adam, cfg.weight_decay);
    }

    StageOneResult result;
    VerifierModel best = model;
    HeadParams best_head = head;
    double best_score = -1.0;
    int since_best = 0;

    Vec gx1, gx2;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto pairs = dataprep::resample_pairs(train_docs, cfg.train_quotas,
                                              mix(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch)));
        Rng order_rng(mix(cfg.seed, 2000 + static_cast<std::uint64_t>(epoch)));
        order_rng.shuffle(pairs);

        EpochLog log;
        log.epoch = epoch;
        long auth_correct = 0;
        long fandom_correct = 0;

        for (std::size_t start = 0; start < pairs.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(pairs.size(), start + cfg.batch_size);
            const double upstream = 1.0 / static_cast<double>(stop - start);
            head_zero(grads);
            optim::zero_fields(enc_grads);
            if (probe) head_zero(*probe_grads);

            for (std::size_t k = start; k < stop; ++k) {
                const Trial& t = pairs[k];
                const Vec& f1 = cache.get(t.doc1);
                const Vec& f2 = cache.get(t.doc2);
                const Vec x1 = encoder::encode(f1, model.encoder_params);
                const Vec x2 = encoder::encode(f2, model.encoder_params);

                const HeadStep hs = head_step(x1, x2, t.same_author, head, cfg.model.tau_s,
                                              cfg.model.tau_d, upstream, grads, &gx1, &gx2);
                encoder::encode_backward(f1, model.encoder_params, x1, gx1, enc_grads);
                encoder::encode_backward(f2, model.encoder_params, x2, gx2, enc_grads);

                const double total = hs.l_dml + hs.l_bfs + hs.l_ual;
                if (!std::isfinite(total)) {
                    throw NonFiniteLoss("stage 1 loss is not finite at epoch " +
                                        std::to_string(epoch) + ", trial " + t.id);
                }
                log.dml_loss += hs.l_dml;
                log.bfs_loss += hs.l_bfs;
                log.ual_loss += hs.l_ual;
                if ((hs.p_ual_h1 > 0.5 ? 1 : 0) == t.same_author) ++auth_correct;

                if (probe) {
                    const HeadStep ps = head_step(x1, x2, t.same_fandom, *probe,
                                                  cfg.model.tau_s, cfg.model.tau_d, upstream,
                                                  *probe_grads, nullptr, nullptr);
                    if ((ps.p_ual_h1 > 0.5 ? 1 : 0) == t.same_fandom) ++fandom_correct;
                }
            }

            head_apply(head, grads, adams);
            enc_adam.step(model.encoder_params, enc_grads);
            if (probe) head_apply(*probe, *probe_grads, *probe_adams);
        }

        const double n = static_cast<double>(pairs.size());
        log.dml_loss /= n;
        log.bfs_loss /= n;
        log.ual_loss /= n;
        log.auth_acc = static_cast<double>(auth_correct) / n;
        if (probe) log.fandom_acc = static_cast<double>(fandom_correct) / n;

        if (!dev_pairs.empty()) {
            model.dml_params = head.dml;
            model.bfs_params = head.bfs;
            model.ual_params = head.ual;
            const auto answers = score_trials({model}, dev_pairs, /*use_o2d2=*/false);
            try {
                log.dev_overall = metrics::pan_metrics(answers).overall;
            } catch (const SingleClass&) {
                // Degenerate dev sample; skip early stopping this epoch.
            }
        }
        if (log.dev_overall) {
            if (*log.dev_overall > best_score) {
                best_score = *log.dev_overall;
                best = model;
                best_head = head;
                result.best_epoch = epoch;
                since_best = 0;
            } else if (++since_best > cfg.patience) {
                result.log.push_back(log);
                break;
            }
        }
        result.log.push_back(log);
    }

    if (!dev_pairs.empty() && result.best_epoch >= 0) {
        model = best;
        head = best_head;
    }
    model.dml_params = head.dml;
    model.bfs_params = head.bfs;
    model.ual_params = head.ual;
    result.model = std::move(model);
    return result;
}

StageTwoResult train_o2d2(VerifierModel& model,
                          const std::vector<Document>& calibration_docs,
                          const TrainConfig& cfg, double epsilon) {
    if (calibration_docs.empty()) throw InvalidConfig("train_o2d2: empty calibration split");
    if (cfg.batch_size < 1 || cfg.o2d2_epochs < 0) {
        throw InvalidConfig("train_o2d2: batch size must be positive, epochs nonnegative");
    }
    if (epsilon < 0.05 || epsilon > 0.15) {
        throw InvalidEpsilon("train_o2d2: epsilon must lie in [0.05, 0.15]");
    }

    FeatureCache cache;
    cache.add(calibration_docs, cfg.model);
    // Stage-1 parameters are frozen, so LEVs per document are fixed.
    std::unordered_map<std::string, Vec> lev;
    for (const auto& d : calibration_docs) {
        if (lev.count(d.id)) continue;
        lev.emplace(d.id, dml::project(encoder::encode(cache.get(d), model.encoder_params),
                                       model.dml_params));
    }

    optim::Adam<o2d2::O2d2Params> adam(model.o2d2_params, cfg.adam);
    auto grads = model.o2d2_params.zeros_like();

    StageTwoResult result;
    long label_pos_total = 0;
    long label_total = 0;

    struct Prepared {
        Vec input;
        int label;
    };

    for (int epoch = 0; epoch < cfg.o2d2_epochs; ++epoch) {
        auto pairs = dataprep::resample_pairs(calibration_docs, cfg.o2d2_quotas,
                                              mix(cfg.seed, 5000 + static_cast<std::uint64_t>(epoch)));
        Rng order_rng(mix(cfg.seed, 6000 + static_cast<std::uint64_t>(epoch)));
        order_rng.shuffle(pairs);

        std::vector<Prepared> prepared;
        prepared.reserve(pairs.size());
        long n_pos = 0;
        for (const auto& t : pairs) {
            const Vec& y1 = lev.at(t.doc1.id);
            const Vec& y2 = lev.at(t.doc2.id);
            const auto sc = bfs::score_forward(y1, y2, model.bfs_params);
            const auto uc = ual::forward(y1, y2, sc.score.posterior_h1, model.ual_params);
            const int a_hat = uc.p_ual[1] > 0.5 ? 1 : 0;
            Prepared p;
            p.label = o2d2::o2d2_label(t.same_author, a_hat, uc.p_ual[1], epsilon);
            p.input = o2d2::build_input(y1, y2, uc.cm);
            if (p.label) ++n_pos;
            prepared.push_back(std::move(p));
        }
        label_pos_total += n_pos;
        label_total += static_cast<long>(prepared.size());

        double w_pos = 1.0;
        double w_neg = 1.0;
        if (cfg.o2d2_class_weights && n_pos > 0 &&
            n_pos < static_cast<long>(prepared.size())) {
            const double n = static_cast<double>(prepared.size());
            w_pos = std::min(cfg.o2d2_weight_cap, n / (2.0 * static_cast<double>(n_pos)));
            w_neg = std::min(cfg.o2d2_weight_cap,
                             n / (2.0 * static_cast<double>(prepared.size() - n_pos)));
        }

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < prepared.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(prepared.size(), start + cfg.batch_size);
            const double upstream = 1.0 / static_cast<double>(stop - start);
            optim::zero_fields(grads);
            for (std::size_t k = start; k < stop; ++k) {
                const auto fc = o2d2::forward(prepared[k].input, model.o2d2_params);
                const double loss = o2d2::o2d2_loss(fc.p_h2, prepared[k].label, w_pos, w_neg);
                if (!std::isfinite(loss)) {
                    throw NonFiniteLoss("o2d2 loss is not finite at epoch " +
                                        std::to_string(epoch));
                }
                epoch_loss += loss;
                o2d2::o2d2_backward(fc, model.o2d2_params, prepared[k].label, upstream,
                                    grads, w_pos, w_neg);
            }
            adam.step(model.o2d2_params, grads);
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(prepared.size()));
    }

    result.label_rate = label_total > 0
                            ? static_cast<double>(label_pos_total) / static_cast<double>(label_total)
                            : 0.0;
    model.o2d2_params.epsilon = epsilon;
    model.o2d2_trained = true;
    return result;
}

EpsilonChoice tune_epsilon(const VerifierModel& frozen,
                           const std::vector<Document>& calibration_docs,
                           const std::vector<Trial>& validation_pairs,
                           const std::vector<double>& grid, const TrainConfig& cfg) {
    if (grid.empty()) throw EmptyGrid("tune_epsilon: empty grid");
    std::vector<double> sorted = grid;
    std::sort(sorted.begin(), sorted.end());

    EpsilonChoice choice;
    double best_overall = -1.0;
    for (double eps : sorted) {
        VerifierModel candidate = frozen;
        train_o2d2(candidate, calibration_docs, cfg, eps);
        const auto answers = score_trials({candidate}, validation_pairs, /*use_o2d2=*/true);
        const double overall = metrics::pan_metrics(answers).overall;
        choice.table.emplace_back(eps, overall);
        if (overall > best_overall) {  // ties keep the smaller epsilon
            best_overall = overall;
            choice.epsilon = eps;
        }
    }
    return choice;
}

namespace {

// Members share the featurization config, so hash each document once.
ensemble::Verdict verdict_for(const std::vector<VerifierModel>& models, const Trial& t,
                              bool use_o2d2) {
    const Vec f1 = models.front().features(t.doc1);
    const Vec f2 = models.front().features(t.doc2);
    ensemble::MemberOutputs outputs;
    outputs.reserve(models.size());
    for (const auto& m : models) {
        const TrialEval ev = m.evaluate_features(f1, f2);
        outputs.emplace_back(ev.p_ual_h1, ev.p_h2);
    }
    return ensemble::combine(outputs, use_o2d2);
}

}  // namespace

std::vector<dataprep::AnswerRecord> predict_answers(
    const std::vector<VerifierModel>& models, const std::vector<Trial>& trials,
    bool use_o2d2) {
    std::vector<dataprep::AnswerRecord> answers;
    answers.reserve(trials.size());
    for (const auto& t : trials) {
        answers.push_back({t.id, verdict_for(models, t, use_o2d2).value});
    }
    return answers;
}

metrics::AnswerSet score_trials(const std::vector<VerifierModel>& models,
                                const std::vector<Trial>& trials, bool use_o2d2) {
    metrics::AnswerSet out;
    out.reserve(trials.size());
    for (const auto& t : trials) {
        out.push_back({t.id, verdict_for(models, t, use_o2d2).value, t.same_author});
    }
    return out;
}

double GradCheckReport::worst() const {
    double w = 0.0;
    for (const auto& c : components) w = std::max(w, c.max_rel_err);
    return w;
}

}  // namespace av::trainer
