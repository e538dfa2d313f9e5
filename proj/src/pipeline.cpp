#include "av/pipeline.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace av {

using nlohmann::json;

VerifierModel VerifierModel::init(const ModelConfig& cfg, std::uint64_t seed) {
    VerifierModel m;
    m.cfg = cfg;
    m.seed = seed;
    Rng rng(seed);
    m.encoder_params = encoder::EncoderParams::init(cfg.d_emb, cfg.d_feat, rng);
    m.dml_params = dml::DmlParams::init(cfg.d_lev, cfg.d_emb, rng);
    m.dml_params.train_kernel = cfg.train_kernel;
    m.bfs_params = bfs::BfsParams::init(cfg.d_bfs, cfg.d_lev, rng);
    m.ual_params = ual::UalParams::init(cfg.d_ual, cfg.d_lev, rng);
    m.ual_params.beta = cfg.beta;
    m.o2d2_params = o2d2::O2d2Params::init(cfg.o2d2_input_dim(), cfg.d_h1, cfg.d_h2, rng);
    return m;
}

Vec VerifierModel::features(const Document& doc) const {
    return encoder::featurize(doc, cfg.n_grams, cfg.d_feat, cfg.min_tokens);
}

Vec VerifierModel::embed(const Vec& f) const { return encoder::encode(f, encoder_params); }

TrialEval VerifierModel::evaluate_features(const Vec& f1, const Vec& f2) const {
    TrialEval ev;
    ev.x1 = encoder::encode(f1, encoder_params);
    ev.x2 = encoder::encode(f2, encoder_params);
    ev.y1 = dml::project(ev.x1, dml_params);
    ev.y2 = dml::project(ev.x2, dml_params);
    ev.dist = dml::distance(ev.y1, ev.y2);
    ev.p_dml = dml::kernel_prob(ev.dist, dml_params.gamma(), dml_params.alpha());

    const Vec y1r = bfs::reduce(ev.y1, bfs_params);
    const Vec y2r = bfs::reduce(ev.y2, bfs_params);
    const auto liks = bfs::log_likelihoods(y1r, y2r, bfs_params);
    ev.llr = liks.h1 - liks.h0;
    ev.p_bfs = bfs::bfs_posterior(ev.llr);

    const auto uc = ual::forward(ev.y1, ev.y2, ev.p_bfs, ual_params);
    ev.cm = uc.cm;
    ev.p_ual_h1 = uc.p_ual[1];

    ev.p_h2 = o2d2::o2d2_forward(o2d2::build_input(ev.y1, ev.y2, ev.cm), o2d2_params);
    return ev;
}

TrialEval VerifierModel::evaluate(const Document& d1, const Document& d2) const {
    return evaluate_features(features(d1), features(d2));
}

// ---- persistence -------------------------------------------------------------

namespace {

json mat_to_json(const Mat& m) {
    json data = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
    }
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Mat mat_from_json(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto& data = j.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
        throw MalformedRecord("matrix payload size disagrees with shape");
    }
    Mat m(rows, cols);
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index jc = 0; jc < cols; ++jc) m(i, jc) = data.at(k++).get<double>();
    }
    return m;
}

json vec_to_json(const Vec& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

Vec vec_from_json(const json& j) {
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j.at(static_cast<std::size_t>(i)).get<double>();
    return v;
}

json config_json(const ModelConfig& c) {
    return json{{"d_feat", c.d_feat}, {"d_emb", c.d_emb},   {"d_lev", c.d_lev},
                {"d_bfs", c.d_bfs},   {"d_ual", c.d_ual},   {"d_h1", c.d_h1},
                {"d_h2", c.d_h2},     {"n_grams", c.n_grams}, {"min_tokens", c.min_tokens},
                {"tau_s", c.tau_s},   {"tau_d", c.tau_d},   {"beta", c.beta},
                {"train_kernel", c.train_kernel}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.d_feat = j.at("d_feat").get<int>();
    c.d_emb = j.at("d_emb").get<int>();
    c.d_lev = j.at("d_lev").get<int>();
    c.d_bfs = j.at("d_bfs").get<int>();
    c.d_ual = j.at("d_ual").get<int>();
    c.d_h1 = j.at("d_h1").get<int>();
    c.d_h2 = j.at("d_h2").get<int>();
    c.n_grams = j.at("n_grams").get<std::set<int>>();
    c.min_tokens = j.at("min_tokens").get<int>();
    c.tau_s = j.at("tau_s").get<double>();
    c.tau_d = j.at("tau_d").get<double>();
    c.beta = j.at("beta").get<double>();
    c.train_kernel = j.at("train_kernel").get<bool>();
    return c;
}

}  // namespace

std::string config_to_json(const ModelConfig& cfg) { return config_json(cfg).dump(); }

std::uint64_t fnv1a64_str(const std::string& s) { return encoder::fnv1a64(s); }

std::string config_hash(const ModelConfig& cfg) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64_str(config_to_json(cfg))));
    return std::string(buf);
}

void save_model(const std::string& path, const VerifierModel& m) {
    json j;
    j["version"] = 1;
    j["seed"] = m.seed;
    j["o2d2_trained"] = m.o2d2_trained;
    j["config"] = config_json(m.cfg);
    j["config_hash"] = config_hash(m.cfg);
    j["encoder"] = {{"weight", mat_to_json(m.encoder_params.weight)},
                    {"bias", vec_to_json(m.encoder_params.bias)}};
    j["dml"] = {{"weight", mat_to_json(m.dml_params.weight)},
                {"bias", vec_to_json(m.dml_params.bias)},
                {"gamma_log", m.dml_params.gamma_log},
                {"alpha_log", m.dml_params.alpha_log},
                {"train_kernel", m.dml_params.train_kernel}};
    j["bfs"] = {{"reduce_weight", mat_to_json(m.bfs_params.reduce_weight)},
                {"reduce_bias", vec_to_json(m.bfs_params.reduce_bias)},
                {"mu", vec_to_json(m.bfs_params.mu)},
                {"w_chol_raw", mat_to_json(m.bfs_params.w_chol_raw)},
                {"b_chol_raw", mat_to_json(m.bfs_params.b_chol_raw)}};
    j["ual"] = {{"fuse_weight", mat_to_json(m.ual_params.fuse_weight)},
                {"fuse_bias", vec_to_json(m.ual_params.fuse_bias)},
                {"cm_weight", mat_to_json(m.ual_params.cm_weight)},
                {"cm_bias", vec_to_json(m.ual_params.cm_bias)},
                {"beta", m.ual_params.beta}};
    j["o2d2"] = {{"w1", mat_to_json(m.o2d2_params.w1)}, {"b1", vec_to_json(m.o2d2_params.b1)},
                 {"w2", mat_to_json(m.o2d2_params.w2)}, {"b2", vec_to_json(m.o2d2_params.b2)},
                 {"w3", mat_to_json(m.o2d2_params.w3)}, {"b3", vec_to_json(m.o2d2_params.b3)},
                 {"epsilon", m.o2d2_params.epsilon}};

    std::ofstream out(path);
    if (!out) throw MalformedRecord("cannot write model file: " + path);
    out << j.dump(2) << "\n";
}

VerifierModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MalformedRecord("cannot open model file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw MalformedRecord(path + ": " + e.what());
    }

    VerifierModel m;
    m.cfg = config_from_json(j.at("config"));
    m.seed = j.at("seed").get<std::uint64_t>();
    m.o2d2_trained = j.at("o2d2_trained").get<bool>();
    const auto& je = j.at("encoder");
    m.encoder_params.weight = mat_from_json(je.at("weight"));
    m.encoder_params.bias = vec_from_json(je.at("bias"));
    const auto& jd = j.at("dml");
    m.dml_params.weight = mat_from_json(jd.at("weight"));
    m.dml_params.bias = vec_from_json(jd.at("bias"));
    m.dml_params.gamma_log = jd.at("gamma_log").get<double>();
    m.dml_params.alpha_log = jd.at("alpha_log").get<double>();
    m.dml_params.train_kernel = jd.at("train_kernel").get<bool>();
    const auto& jb = j.at("bfs");
    m.bfs_params.reduce_weight = mat_from_json(jb.at("reduce_weight"));
    m.bfs_params.reduce_bias = vec_from_json(jb.at("reduce_bias"));
    m.bfs_params.mu = vec_from_json(jb.at("mu"));
    m.bfs_params.w_chol_raw = mat_from_json(jb.at("w_chol_raw"));
    m.bfs_params.b_chol_raw = mat_from_json(jb.at("b_chol_raw"));
    const auto& ju = j.at("ual");
    m.ual_params.fuse_weight = mat_from_json(ju.at("fuse_weight"));
    m.ual_params.fuse_bias = vec_from_json(ju.at("fuse_bias"));
    m.ual_params.cm_weight = mat_from_json(ju.at("cm_weight"));
    m.ual_params.cm_bias = vec_from_json(ju.at("cm_bias"));
    m.ual_params.beta = ju.at("beta").get<double>();
    const auto& jo = j.at("o2d2");
    m.o2d2_params.w1 = mat_from_json(jo.at("w1"));
    m.o2d2_params.b1 = vec_from_json(jo.at("b1"));
    m.o2d2_params.w2 = mat_from_json(jo.at("w2"));
    m.o2d2_params.b2 = vec_from_json(jo.at("b2"));
    m.o2d2_params.w3 = mat_from_json(jo.at("w3"));
    m.o2d2_params.b3 = vec_from_json(jo.at("b3"));
    m.o2d2_params.epsilon = jo.at("epsilon").get<double>();
    return m;
}

std::uint64_t params_hash(const VerifierModel& m) {
    std::string bytes;
    auto absorb_mat = [&](const Mat& mat) {
        bytes.append(reinterpret_cast<const char*>(mat.data()),
                     static_cast<std::size_t>(mat.size()) * sizeof(double));
    };
    auto absorb_vec = [&](const Vec& v) {
        bytes.append(reinterpret_cast<const char*>(v.data()),
                     static_cast<std::size_t>(v.size()) * sizeof(double));
    };
    auto absorb_scalar = [&](double x) {
        bytes.append(reinterpret_cast<const char*>(&x), sizeof(double));
    };
    absorb_mat(m.encoder_params.weight);
    absorb_vec(m.encoder_params.bias);
    absorb_mat(m.dml_params.weight);
    absorb_vec(m.dml_params.bias);
    absorb_scalar(m.dml_params.gamma_log);
    absorb_scalar(m.dml_params.alpha_log);
    absorb_mat(m.bfs_params.reduce_weight);
    absorb_vec(m.bfs_params.reduce_bias);
    absorb_vec(m.bfs_params.mu);
    absorb_mat(m.bfs_params.w_chol_raw);
    absorb_mat(m.bfs_params.b_chol_raw);
    absorb_mat(m.ual_params.fuse_weight);
    absorb_vec(m.ual_params.fuse_bias);
    absorb_mat(m.ual_params.cm_weight);
    absorb_vec(m.ual_params.cm_bias);
    absorb_mat(m.o2d2_params.w1);
    absorb_vec(m.o2d2_params.b1);
    absorb_mat(m.o2d2_params.w2);
    absorb_vec(m.o2d2_params.b2);
    absorb_mat(m.o2d2_params.w3);
    absorb_vec(m.o2d2_params.b3);
    return encoder::fnv1a64(bytes);
}

void save_bundle(const std::string& dir, const std::vector<VerifierModel>& models) {
    if (models.empty()) throw InvalidConfig("save_bundle: empty model list");
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["version"] = 1;
    manifest["members"] = models.size();
    manifest["config_hash"] = config_hash(models.front().cfg);
    manifest["o2d2_trained"] = models.front().o2d2_trained;
    json seeds = json::array();
    for (std::size_t k = 0; k < models.size(); ++k) {
        seeds.push_back(models[k].seed);
        save_model(dir + "/member_" + std::to_string(k) + ".json", models[k]);
    }
    manifest["seeds"] = std::move(seeds);
    std::ofstream out(dir + "/manifest.json");
    if (!out) throw MalformedRecord("cannot write bundle manifest in " + dir);
    out << manifest.dump(2) << "\n";
}

std::vector<VerifierModel> load_bundle(const std::string& dir, BundleManifest* manifest) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw MalformedRecord("cannot open bundle manifest in " + dir);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw MalformedRecord(dir + "/manifest.json: " + e.what());
    }
    const auto members = j.at("members").get<std::size_t>();
    std::vector<VerifierModel> models;
    models.reserve(members);
    for (std::size_t k = 0; k < members; ++k) {
        models.push_back(load_model(dir + "/member_" + std::to_string(k) + ".json"));
    }
    if (manifest) {
        manifest->version = j.at("version").get<int>();
        manifest->members = static_cast<int>(members);
        manifest->config_hash = j.at("config_hash").get<std::string>();
        manifest->seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        manifest->o2d2_trained = j.at("o2d2_trained").get<bool>();
    }
    return models;
}

}  // namespace av
