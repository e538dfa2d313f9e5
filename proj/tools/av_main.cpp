// Batch front door for the verification pipeline: corpus synthesis, splits,
// pair sampling, two-stage training, epsilon tuning, prediction, evaluation,
// gradient checks and the fandom probe.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "av/dataprep.hpp"
#include "av/ensemble.hpp"
#include "av/metrics.hpp"
#include "av/pipeline.hpp"
#include "av/trainer.hpp"

using nlohmann::json;

namespace {

struct Options {
    // shared
    std::string config_file;
    std::uint64_t seed = 1;

    // synth
    int authors = 200;
    int docs_per_author = 2;
    int fandoms = 8;
    double style_strength = 0.8;
    double topic_strength = 0.6;
    int tokens = 96;
    std::string out;

    // split
    std::string corpus;
    std::string out_dir;
    std::vector<double> ratios{0.5, 0.25, 0.25};

    // pairs
    std::vector<int> quotas{16, 28, 64, 42};
    std::string pairs_path;
    std::string truth_path;

    // train
    std::string train_corpus;
    std::string calibration_corpus;
    std::string bundle_dir;
    int members = 5;
    int parallel = 1;
    int epochs = 20;
    int batch_size = 32;
    double lr = 1e-3;
    int patience = 5;
    double weight_decay = 0.0;
    std::vector<int> dev_quotas{0, 26, 35, 0};
    bool probe = false;

    // model dims
    int d_feat = 4096;
    int d_emb = 128;
    int d_lev = 64;
    int d_bfs = 16;
    int d_ual = 32;
    int d_h1 = 64;
    int d_h2 = 32;
    std::vector<int> n_grams{2, 3, 4};
    int min_tokens = 32;
    double tau_s = 0.91;
    double tau_d = 0.09;
    double beta = 0.1;
    bool freeze_kernel = false;

    // o2d2 / epsilon
    double epsilon = 0.1;
    int o2d2_epochs = 30;
    double o2d2_weight_cap = 2.0;
    std::vector<int> o2d2_quotas{21, 27, 41, 41};
    std::vector<double> grid{0.05, 0.075, 0.10, 0.125, 0.15};

    // predict / evaluate
    std::string answers_path;
    bool no_o2d2 = false;
    int bins = 10;
    bool subsets = false;
    std::string report_prefix;

    // grad-check
    int cases = 200;
    int max_dim = 8;
};

av::ModelConfig model_config(const Options& o) {
    av::ModelConfig cfg;
    cfg.d_feat = o.d_feat;
    cfg.d_emb = o.d_emb;
    cfg.d_lev = o.d_lev;
    cfg.d_bfs = o.d_bfs;
    cfg.d_ual = o.d_ual;
    cfg.d_h1 = o.d_h1;
    cfg.d_h2 = o.d_h2;
    cfg.n_grams = std::set<int>(o.n_grams.begin(), o.n_grams.end());
    cfg.min_tokens = o.min_tokens;
    cfg.tau_s = o.tau_s;
    cfg.tau_d = o.tau_d;
    cfg.beta = o.beta;
    cfg.train_kernel = !o.freeze_kernel;
    return cfg;
}

av::dataprep::PairQuotas quotas_of(const std::vector<int>& q, const char* what) {
    if (q.size() != 4) throw av::InvalidConfig(std::string(what) + ": need four quotas");
    return {q[0], q[1], q[2], q[3]};
}

av::trainer::TrainConfig train_config(const Options& o) {
    av::trainer::TrainConfig cfg;
    cfg.model = model_config(o);
    cfg.epochs = o.epochs;
    cfg.batch_size = o.batch_size;
    cfg.adam.lr = o.lr;
    cfg.weight_decay = o.weight_decay;
    cfg.seed = o.seed;
    cfg.train_quotas = quotas_of(o.quotas, "--quotas");
    cfg.dev_quotas = quotas_of(o.dev_quotas, "--dev-quotas");
    cfg.patience = o.patience;
    cfg.o2d2_epochs = o.o2d2_epochs;
    cfg.o2d2_quotas = quotas_of(o.o2d2_quotas, "--o2d2-quotas");
    cfg.o2d2_weight_cap = o.o2d2_weight_cap;
    cfg.epsilon = o.epsilon;
    cfg.epsilon_grid = o.grid;
    cfg.fandom_probe = o.probe;
    return cfg;
}

// The full resolved invocation, hashed into every artifact this run writes.
json resolved_json(const Options& o, const std::string& command) {
    json j;
    j["command"] = command;
    j["seed"] = o.seed;
    j["model"] = json::parse(av::config_to_json(model_config(o)));
    j["epochs"] = o.epochs;
    j["batch_size"] = o.batch_size;
    j["lr"] = o.lr;
    j["weight_decay"] = o.weight_decay;
    j["members"] = o.members;
    j["quotas"] = o.quotas;
    j["dev_quotas"] = o.dev_quotas;
    j["o2d2_quotas"] = o.o2d2_quotas;
    j["o2d2_epochs"] = o.o2d2_epochs;
    j["o2d2_weight_cap"] = o.o2d2_weight_cap;
    j["epsilon"] = o.epsilon;
    j["grid"] = o.grid;
    j["authors"] = o.authors;
    j["docs_per_author"] = o.docs_per_author;
    j["fandoms"] = o.fandoms;
    j["style_strength"] = o.style_strength;
    j["topic_strength"] = o.topic_strength;
    j["tokens"] = o.tokens;
    j["ratios"] = o.ratios;
    return j;
}

std::string hash_hex(const std::string& s) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(av::fnv1a64_str(s)));
    return buf;
}

std::string echo_run(const Options& o, const std::string& command) {
    const std::string hash = hash_hex(resolved_json(o, command).dump());
    std::cerr << "[av] command=" << command << " seed=" << o.seed
              << " config_hash=" << hash << "\n";
    return hash;
}

void write_meta(const std::string& artifact_path, const Options& o,
                const std::string& command, const std::string& hash,
                json extra = json::object()) {
    json meta = resolved_json(o, command);
    meta["config_hash"] = hash;
    for (auto& [k, v] : extra.items()) meta[k] = v;
    std::ofstream out(artifact_path + ".meta.json");
    out << meta.dump(2) << "\n";
}

// ---- subcommand bodies -------------------------------------------------------

int run_synth(const Options& o) {
    const auto hash = echo_run(o, "synth");
    av::dataprep::SynthConfig cfg;
    cfg.n_authors = o.authors;
    cfg.docs_per_author = o.docs_per_author;
    cfg.n_fandoms = o.fandoms;
    cfg.style_strength = o.style_strength;
    cfg.topic_strength = o.topic_strength;
    cfg.tokens_per_doc = o.tokens;
    cfg.seed = o.seed;
    const auto docs = av::dataprep::gen_synthetic(cfg);
    av::dataprep::write_corpus(o.out, docs);
    write_meta(o.out, o, "synth", hash, {{"documents", docs.size()}});
    std::cout << "wrote " << docs.size() << " documents to " << o.out << "\n";
    return 0;
}

int run_split(const Options& o) {
    const auto hash = echo_run(o, "split");
    if (o.ratios.size() != 3) throw av::InvalidConfig("--ratios: need three values");
    const auto docs = av::dataprep::load_corpus(o.corpus);
    const av::dataprep::SplitRatios ratios{o.ratios[0], o.ratios[1], o.ratios[2]};
    const auto split = av::dataprep::split_corpus(docs, ratios, o.seed);
    std::filesystem::create_directories(o.out_dir);
    av::dataprep::write_corpus(o.out_dir + "/training.jsonl", split.training);
    av::dataprep::write_corpus(o.out_dir + "/calibration.jsonl", split.calibration);
    av::dataprep::write_corpus(o.out_dir + "/validation.jsonl", split.validation);
    write_meta(o.out_dir + "/split", o, "split", hash,
               {{"training", split.training.size()},
                {"calibration", split.calibration.size()},
                {"validation", split.validation.size()},
                {"removed", split.removed}});
    std::cout << "training=" << split.training.size()
              << " calibration=" << split.calibration.size()
              << " validation=" << split.validation.size() << " removed=" << split.removed
              << "\n";
    return 0;
}

int run_sample_pairs(const Options& o) {
    const auto hash = echo_run(o, "sample-pairs");
    const auto docs = av::dataprep::load_corpus(o.corpus);
    const auto trials =
        av::dataprep::resample_pairs(docs, quotas_of(o.quotas, "--quotas"), o.seed);
    av::dataprep::write_pairs(o.pairs_path, trials);
    av::dataprep::write_truth(o.truth_path, trials);
    write_meta(o.pairs_path, o, "sample-pairs", hash, {{"pairs", trials.size()}});
    std::cout << "wrote " << trials.size() << " pairs\n";
    return 0;
}

int run_train(const Options& o) {
    const auto hash = echo_run(o, "train");
    if (o.members < 1 || o.members % 2 == 0) {
        throw av::InvalidConfig("--members must be odd (ensemble voting needs it)");
    }
    const auto train_docs = av::dataprep::load_corpus(o.train_corpus);
    std::vector<av::Document> dev_docs;
    if (!o.calibration_corpus.empty()) {
        dev_docs = av::dataprep::load_corpus(o.calibration_corpus);
    }

    std::vector<av::VerifierModel> models(static_cast<std::size_t>(o.members));
    std::vector<std::vector<av::trainer::EpochLog>> logs(static_cast<std::size_t>(o.members));
    std::vector<std::string> failures(static_cast<std::size_t>(o.members));
    std::atomic<int> next{0};
    const int workers = std::max(1, std::min(o.parallel, o.members));
    auto worker = [&] {
        for (int m = next.fetch_add(1); m < o.members; m = next.fetch_add(1)) {
            try {
                auto cfg = train_config(o);
                cfg.seed = o.seed + static_cast<std::uint64_t>(m);
                auto result = av::trainer::train_stage1(train_docs, dev_docs, cfg);
                models[static_cast<std::size_t>(m)] = std::move(result.model);
                logs[static_cast<std::size_t>(m)] = std::move(result.log);
                std::ostringstream line;
                line << "[av] member " << m << " done, epochs=" << result.log.size();
                if (!result.log.empty() && result.log.back().dev_overall) {
                    line << " dev_overall=" << *result.log.back().dev_overall;
                }
                line << "\n";
                std::cerr << line.str();
            } catch (const std::exception& e) {
                failures[static_cast<std::size_t>(m)] = e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (const auto& f : failures) {
        if (!f.empty()) throw av::NonFiniteLoss("member training failed: " + f);
    }

    av::save_bundle(o.bundle_dir, models);
    for (int m = 0; m < o.members; ++m) {
        std::ofstream log_out(o.bundle_dir + "/train_log_member_" + std::to_string(m) +
                              ".jsonl");
        for (const auto& e : logs[static_cast<std::size_t>(m)]) {
            json j{{"epoch", e.epoch},       {"dml_loss", e.dml_loss},
                   {"bfs_loss", e.bfs_loss}, {"ual_loss", e.ual_loss},
                   {"auth_acc", e.auth_acc}};
            if (e.dev_overall) j["dev_overall"] = *e.dev_overall;
            log_out << j.dump() << "\n";
        }
    }
    write_meta(o.bundle_dir + "/bundle", o, "train", hash,
               {{"members", o.members}, {"model_config_hash", av::config_hash(models[0].cfg)}});
    std::cout << "trained " << o.members << " member(s) into " << o.bundle_dir << "\n";
    return 0;
}

int run_train_o2d2(const Options& o) {
    const auto hash = echo_run(o, "train-o2d2");
    auto models = av::load_bundle(o.bundle_dir);
    const auto cal_docs = av::dataprep::load_corpus(o.calibration_corpus);
    for (std::size_t m = 0; m < models.size(); ++m) {
        auto cfg = train_config(o);
        cfg.model = models[m].cfg;
        cfg.seed = models[m].seed;
        const auto st2 = av::trainer::train_o2d2(models[m], cal_docs, cfg, o.epsilon);
        std::cerr << "[av] member " << m << " detector trained, label_rate=" << st2.label_rate
                  << "\n";
    }
    av::save_bundle(o.bundle_dir, models);
    write_meta(o.bundle_dir + "/bundle", o, "train-o2d2", hash, {{"epsilon", o.epsilon}});
    std::cout << "detector trained for " << models.size() << " member(s)\n";
    return 0;
}

int run_tune_epsilon(const Options& o) {
    const auto hash = echo_run(o, "tune-epsilon");
    auto models = av::load_bundle(o.bundle_dir);
    const auto cal_docs = av::dataprep::load_corpus(o.calibration_corpus);
    const auto val_pairs = av::dataprep::load_pan_pairs(o.pairs_path, o.truth_path);

    json table = json::array();
    for (std::size_t m = 0; m < models.size(); ++m) {
        auto cfg = train_config(o);
        cfg.model = models[m].cfg;
        cfg.seed = models[m].seed;
        const auto choice =
            av::trainer::tune_epsilon(models[m], cal_docs, val_pairs, o.grid, cfg);
        std::cout << "member " << m << ": epsilon=" << choice.epsilon << "\n";
        for (const auto& [eps, overall] : choice.table) {
            std::cout << "  eps=" << std::fixed << std::setprecision(3) << eps
                      << " overall=" << std::setprecision(4) << overall << "\n";
            table.push_back({{"member", m}, {"epsilon", eps}, {"overall", overall}});
        }
        av::trainer::train_o2d2(models[m], cal_docs, cfg, choice.epsilon);
    }
    av::save_bundle(o.bundle_dir, models);
    write_meta(o.bundle_dir + "/bundle", o, "tune-epsilon", hash, {{"table", table}});
    return 0;
}

int run_predict(const Options& o) {
    const auto hash = echo_run(o, "predict");
    const auto models = av::load_bundle(o.bundle_dir);
    const auto trials = o.truth_path.empty()
                            ? av::dataprep::load_pairs_only(o.pairs_path)
                            : av::dataprep::load_pan_pairs(o.pairs_path, o.truth_path);
    const auto answers = av::trainer::predict_answers(models, trials, !o.no_o2d2);
    av::dataprep::write_answers(o.answers_path, answers);
    long nonresponses = 0;
    for (const auto& a : answers) {
        if (a.value == 0.5) ++nonresponses;
    }
    write_meta(o.answers_path, o, "predict", hash,
               {{"bundle", o.bundle_dir},
                {"model_config_hash", av::config_hash(models[0].cfg)},
                {"trials", answers.size()},
                {"nonresponses", nonresponses}});
    std::cout << "wrote " << answers.size() << " answers (" << nonresponses
              << " non-responses) to " << o.answers_path << "\n";
    return 0;
}

void print_metrics_row(std::ostream& os, const std::string& name,
                       const av::metrics::PanMetrics& m) {
    os << std::left << std::setw(14) << name << std::fixed << std::setprecision(4)
       << "  auc=" << m.auc << "  c@1=" << m.c_at_1 << "  f_05_u=" << m.f_05_u
       << "  F1=" << m.f1 << "  brier=" << m.brier << "  overall=" << m.overall << "\n";
}

json metrics_record(const std::string& subset, const av::metrics::PanMetrics& m,
                    const std::string& hash) {
    return json{{"subset", subset},     {"auc", m.auc},       {"c@1", m.c_at_1},
                {"f_05_u", m.f_05_u},   {"F1", m.f1},         {"brier", m.brier},
                {"overall", m.overall}, {"config_hash", hash}};
}

int run_evaluate(const Options& o) {
    const auto hash = echo_run(o, "evaluate");
    const auto answers = av::dataprep::load_answers(o.answers_path);
    const auto truth = av::dataprep::load_truth(o.truth_path);
    const auto joined = av::dataprep::join_answers(answers, truth);

    const auto pan = av::metrics::pan_metrics(joined);
    const auto rel = av::metrics::reliability(joined, o.bins);
    print_metrics_row(std::cout, "all", pan);
    std::cout << std::fixed << std::setprecision(4) << "calibration     acc=" << rel.acc
              << "  conf=" << rel.conf << "  ECE=" << rel.ece << "  MCE=" << rel.mce << "\n";

    std::vector<json> records;
    records.push_back(metrics_record("all", pan, hash));

    if (o.subsets) {
        std::unordered_map<std::string, const av::dataprep::TruthRecord*> truth_by_id;
        bool have_fandoms = true;
        for (const auto& t : truth) {
            truth_by_id[t.id] = &t;
            have_fandoms = have_fandoms && t.has_fandoms;
        }
        if (!have_fandoms) {
            throw av::MalformedRecord("--subsets needs fandom fields in the truth file");
        }
        const std::vector<std::pair<std::string, std::pair<av::Subset, av::Subset>>> combos = {
            {"SA_SF+DA_DF", {av::Subset::SA_SF, av::Subset::DA_DF}},
            {"SA_SF+DA_SF", {av::Subset::SA_SF, av::Subset::DA_SF}},
            {"SA_DF+DA_DF", {av::Subset::SA_DF, av::Subset::DA_DF}},
            {"SA_DF+DA_SF", {av::Subset::SA_DF, av::Subset::DA_SF}},
        };
        for (const auto& [name, combo] : combos) {
            av::metrics::AnswerSet filtered;
            for (const auto& row : joined) {
                const auto* tr = truth_by_id.at(row.id);
                const av::Subset s =
                    av::subset_of(tr->same, tr->fandom1 == tr->fandom2 ? 1 : 0);
                if (s == combo.first || s == combo.second) filtered.push_back(row);
            }
            if (filtered.empty()) continue;
            const auto pm = av::metrics::pan_metrics(filtered);
            print_metrics_row(std::cout, name, pm);
            records.push_back(metrics_record(name, pm, hash));
        }
    }

    if (!o.report_prefix.empty()) {
        std::ofstream rep(o.report_prefix + ".metrics.jsonl");
        for (const auto& r : records) rep << r.dump() << "\n";

        json bins = json::array();
        for (const auto& b : rel.bins) {
            bins.push_back({{"lo", b.lo},
                            {"hi", b.hi},
                            {"count", b.count},
                            {"conf", b.count ? b.conf : 0.0},
                            {"acc", b.count ? b.acc : 0.0}});
        }
        json relj{{"acc", rel.acc},   {"conf", rel.conf}, {"ece", rel.ece},
                  {"mce", rel.mce},   {"bins", bins},     {"config_hash", hash}};
        std::ofstream relout(o.report_prefix + ".reliability.json");
        relout << relj.dump(2) << "\n";
    }
    return 0;
}

int run_grad_check(const Options& o) {
    echo_run(o, "grad-check");
    const auto report = av::trainer::grad_check_all(o.cases, o.max_dim, o.seed);
    for (const auto& c : report.components) {
        std::cout << std::left << std::setw(16) << c.name << " cases=" << c.cases
                  << "  max_rel_err=" << std::scientific << std::setprecision(3)
                  << c.max_rel_err << (c.max_rel_err < report.threshold ? "  ok" : "  FAIL")
                  << "\n";
    }
    std::cout << (report.pass() ? "PASS" : "FAIL") << " (threshold " << report.threshold
              << ")\n";
    return report.pass() ? 0 : 3;
}

int run_probe(const Options& o) {
    const auto hash = echo_run(o, "probe-fandom");
    const auto train_docs = av::dataprep::load_corpus(o.train_corpus);
    std::vector<av::Document> dev_docs;
    if (!o.calibration_corpus.empty()) {
        dev_docs = av::dataprep::load_corpus(o.calibration_corpus);
    }
    auto cfg = train_config(o);
    cfg.fandom_probe = true;
    const auto result = av::trainer::train_stage1(train_docs, dev_docs, cfg);

    std::ofstream out(o.out);
    if (!out) throw av::MalformedRecord("cannot write " + o.out);
    for (const auto& log : result.log) {
        json j{{"epoch", log.epoch},
               {"dml_loss", log.dml_loss},
               {"bfs_loss", log.bfs_loss},
               {"ual_loss", log.ual_loss},
               {"auth_acc", log.auth_acc},
               {"fandom_acc", log.fandom_acc}};
        if (log.dev_overall) j["dev_overall"] = *log.dev_overall;
        out << j.dump() << "\n";
        std::cout << "epoch " << log.epoch << ": auth_acc=" << std::fixed
                  << std::setprecision(3) << log.auth_acc
                  << " fandom_acc=" << log.fandom_acc << "\n";
    }
    write_meta(o.out, o, "probe-fandom", hash);
    return 0;
}

// Config-file values fill in any option the command line left untouched.
void apply_config_file(CLI::App& app, Options& o) {
    if (o.config_file.empty()) return;
    std::ifstream in(o.config_file);
    if (!in) throw av::InvalidConfig("cannot open config file: " + o.config_file);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw av::InvalidConfig(std::string("config file: ") + e.what());
    }

    CLI::App* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front();
    auto unset = [&](const std::string& flag) {
        if (sub != nullptr) {
            const auto* opt = sub->get_option_no_throw(flag);
            if (opt != nullptr) return opt->count() == 0;
        }
        const auto* opt = app.get_option_no_throw(flag);
        return opt == nullptr || opt->count() == 0;
    };
    auto load = [&](const char* key, const std::string& flag, auto& field) {
        if (j.contains(key) && unset(flag)) {
            j.at(key).get_to(field);
        }
    };
    load("seed", "--seed", o.seed);
    load("epochs", "--epochs", o.epochs);
    load("batch_size", "--batch", o.batch_size);
    load("lr", "--lr", o.lr);
    load("members", "--members", o.members);
    load("parallel", "--parallel", o.parallel);
    load("patience", "--patience", o.patience);
    load("weight_decay", "--weight-decay", o.weight_decay);
    load("d_feat", "--d-feat", o.d_feat);
    load("d_emb", "--d-emb", o.d_emb);
    load("d_lev", "--d-lev", o.d_lev);
    load("d_bfs", "--d-bfs", o.d_bfs);
    load("d_ual", "--d-ual", o.d_ual);
    load("d_h1", "--d-h1", o.d_h1);
    load("d_h2", "--d-h2", o.d_h2);
    load("n_grams", "--ngrams", o.n_grams);
    load("min_tokens", "--min-tokens", o.min_tokens);
    load("tau_s", "--tau-s", o.tau_s);
    load("tau_d", "--tau-d", o.tau_d);
    load("beta", "--beta", o.beta);
    load("quotas", "--quotas", o.quotas);
    load("dev_quotas", "--dev-quotas", o.dev_quotas);
    load("o2d2_quotas", "--o2d2-quotas", o.o2d2_quotas);
    load("o2d2_epochs", "--o2d2-epochs", o.o2d2_epochs);
    load("o2d2_weight_cap", "--o2d2-weight-cap", o.o2d2_weight_cap);
    load("epsilon", "--epsilon", o.epsilon);
    load("grid", "--grid", o.grid);
}

}  // namespace

int main(int argc, char** argv) {
    Options o;
    CLI::App app{"hybrid neural-probabilistic authorship verification pipeline"};
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--config", o.config_file, "JSON config file (flags take precedence)");
    app.add_option("--seed", o.seed, "master random seed");

    auto add_model_opts = [&](CLI::App* cmd) {
        cmd->add_option("--d-feat", o.d_feat, "hashed feature dimension");
        cmd->add_option("--d-emb", o.d_emb, "document embedding dimension");
        cmd->add_option("--d-lev", o.d_lev, "LEV dimension");
        cmd->add_option("--d-bfs", o.d_bfs, "reduced scoring dimension");
        cmd->add_option("--d-ual", o.d_ual, "adaptation layer width");
        cmd->add_option("--d-h1", o.d_h1, "detector hidden width 1");
        cmd->add_option("--d-h2", o.d_h2, "detector hidden width 2");
        cmd->add_option("--ngrams", o.n_grams, "character n-gram orders")->delimiter(',');
        cmd->add_option("--min-tokens", o.min_tokens, "minimum tokens per document");
        cmd->add_option("--tau-s", o.tau_s, "same-author hinge threshold");
        cmd->add_option("--tau-d", o.tau_d, "different-author hinge threshold");
        cmd->add_option("--beta", o.beta, "confusion entropy regularizer weight");
        cmd->add_flag("--freeze-kernel", o.freeze_kernel,
                      "treat kernel gamma/alpha as fixed hyperparameters");
    };
    auto add_train_opts = [&](CLI::App* cmd) {
        cmd->add_option("--epochs", o.epochs, "training epochs");
        cmd->add_option("--batch", o.batch_size, "mini-batch size");
        cmd->add_option("--lr", o.lr, "learning rate");
        cmd->add_option("--patience", o.patience, "early-stopping patience");
        cmd->add_option("--weight-decay", o.weight_decay, "encoder/projection weight decay");
        cmd->add_option("--quotas", o.quotas,
                        "per-epoch pair quotas: SA_SF,SA_DF,DA_SF,DA_DF")->delimiter(',');
        cmd->add_option("--dev-quotas", o.dev_quotas, "held-out dev pair quotas")->delimiter(',');
    };

    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus")->fallthrough();
    synth->add_option("--out", o.out, "corpus output path")->required();
    synth->add_option("--authors", o.authors, "number of authors");
    synth->add_option("--docs-per-author", o.docs_per_author, "documents per author");
    synth->add_option("--fandoms", o.fandoms, "number of fandoms");
    synth->add_option("--style-strength", o.style_strength, "substitution probability");
    synth->add_option("--topic-strength", o.topic_strength, "fandom vocabulary rate");
    synth->add_option("--tokens", o.tokens, "tokens per document");

    auto* split = app.add_subcommand("split", "author/fandom-disjoint corpus splits")->fallthrough();
    split->add_option("--corpus", o.corpus, "corpus path")->required();
    split->add_option("--out-dir", o.out_dir, "output directory")->required();
    split->add_option("--ratios", o.ratios, "training,calibration,validation ratios")->delimiter(',');

    auto* pairs = app.add_subcommand("sample-pairs", "draw labeled pairs from a corpus")->fallthrough();
    pairs->add_option("--corpus", o.corpus, "corpus path")->required();
    pairs->add_option("--quotas", o.quotas, "SA_SF,SA_DF,DA_SF,DA_DF quotas")->delimiter(',');
    pairs->add_option("--pairs", o.pairs_path, "pairs output path")->required();
    pairs->add_option("--truth", o.truth_path, "truth output path")->required();

    auto* train = app.add_subcommand("train", "stage 1: train verifier members")->fallthrough();
    train->add_option("--train", o.train_corpus, "training corpus")->required();
    train->add_option("--calibration", o.calibration_corpus,
                      "calibration corpus (dev pairs for early stopping)");
    train->add_option("--out-dir", o.bundle_dir, "bundle output directory")->required();
    train->add_option("--members", o.members, "ensemble size (odd)");
    train->add_option("--parallel", o.parallel, "concurrent member trainings");
    add_train_opts(train);
    add_model_opts(train);

    auto* t2 = app.add_subcommand("train-o2d2", "stage 2: train the abstention detector")->fallthrough();
    t2->add_option("--bundle", o.bundle_dir, "bundle directory")->required();
    t2->add_option("--calibration", o.calibration_corpus, "calibration corpus")->required();
    t2->add_option("--epsilon", o.epsilon, "undecidable band half-width");
    t2->add_option("--o2d2-epochs", o.o2d2_epochs, "detector epochs");
    t2->add_option("--o2d2-quotas", o.o2d2_quotas, "calibration pair quotas")->delimiter(',');
    t2->add_option("--o2d2-weight-cap", o.o2d2_weight_cap, "class-weight ceiling");
    t2->add_option("--batch", o.batch_size, "mini-batch size");
    t2->add_option("--lr", o.lr, "learning rate");

    auto* tune = app.add_subcommand("tune-epsilon", "grid-search epsilon per member")->fallthrough();
    tune->add_option("--bundle", o.bundle_dir, "bundle directory")->required();
    tune->add_option("--calibration", o.calibration_corpus, "calibration corpus")->required();
    tune->add_option("--pairs", o.pairs_path, "validation pairs")->required();
    tune->add_option("--truth", o.truth_path, "validation truth")->required();
    tune->add_option("--grid", o.grid, "epsilon grid")->delimiter(',');
    tune->add_option("--o2d2-epochs", o.o2d2_epochs, "detector epochs");
    tune->add_option("--o2d2-quotas", o.o2d2_quotas, "calibration pair quotas")->delimiter(',');
    tune->add_option("--o2d2-weight-cap", o.o2d2_weight_cap, "class-weight ceiling");
    tune->add_option("--batch", o.batch_size, "mini-batch size");
    tune->add_option("--lr", o.lr, "learning rate");

    auto* predict = app.add_subcommand("predict", "score pairs with a bundle")->fallthrough();
    predict->add_option("--bundle", o.bundle_dir, "bundle directory")->required();
    predict->add_option("--pairs", o.pairs_path, "pairs path")->required();
    predict->add_option("--truth", o.truth_path, "truth path (optional pair metadata)");
    predict->add_option("--out", o.answers_path, "answers output path")->required();
    predict->add_flag("--no-o2d2", o.no_o2d2, "disable abstention (plain posterior mean)");

    auto* eval = app.add_subcommand("evaluate", "score an answers file against truth")->fallthrough();
    eval->add_option("--answers", o.answers_path, "answers path")->required();
    eval->add_option("--truth", o.truth_path, "truth path")->required();
    eval->add_option("--bins", o.bins, "reliability bins");
    eval->add_flag("--subsets", o.subsets, "also report author/fandom subset combos");
    eval->add_option("--report", o.report_prefix, "write machine-readable reports here");

    auto* gc = app.add_subcommand("grad-check", "finite-difference gradient verification")->fallthrough();
    gc->add_option("--cases", o.cases, "cases per component");
    gc->add_option("--max-dim", o.max_dim, "maximum random dimension");

    auto* probe = app.add_subcommand("probe-fandom", "train with the parallel fandom probe")->fallthrough();
    probe->add_option("--train", o.train_corpus, "training corpus")->required();
    probe->add_option("--calibration", o.calibration_corpus, "calibration corpus");
    probe->add_option("--out", o.out, "per-epoch curve output path")->required();
    add_train_opts(probe);
    add_model_opts(probe);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        apply_config_file(app, o);
        if (synth->parsed()) return run_synth(o);
        if (split->parsed()) return run_split(o);
        if (pairs->parsed()) return run_sample_pairs(o);
        if (train->parsed()) return run_train(o);
        if (t2->parsed()) return run_train_o2d2(o);
        if (tune->parsed()) return run_tune_epsilon(o);
        if (predict->parsed()) return run_predict(o);
        if (eval->parsed()) return run_evaluate(o);
        if (gc->parsed()) return run_grad_check(o);
        if (probe->parsed()) return run_probe(o);
        return 1;
    } catch (const av::InvalidConfig& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const av::InvalidHyperparam& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const av::InvalidThresholds& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const av::InvalidEpsilon& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const av::EvenEnsemble& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const av::EmptyGrid& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const av::NonFiniteLoss& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const av::NotPositiveDefinite& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const av::Error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    }
}
