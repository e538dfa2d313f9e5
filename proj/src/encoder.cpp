#include "av/encoder.hpp"

#include <cctype>
#include <cmath>
#include <unordered_map>

namespace av::encoder {

std::size_t count_tokens(const std::string& text) {
    std::size_t n = 0;
    bool in_token = false;
    for (unsigned char c : text) {
        const bool ws = std::isspace(c) != 0;
        if (!ws && !in_token) ++n;
        in_token = !ws;
    }
    return n;
}

Vec featurize(const Document& doc, const std::set<int>& n_grams, int d_feat,
              int min_tokens) {
    for (int n : n_grams) {
        if (n < 2 || n > 5) throw InvalidConfig("featurize: n-gram orders must lie in {2,3,4,5}");
    }
    if (d_feat < 64) throw InvalidConfig("featurize: d_feat must be >= 64");
    if (count_tokens(doc.text) < static_cast<std::size_t>(min_tokens)) {
        throw DocumentTooShort("document '" + doc.id + "' has fewer than " +
                               std::to_string(min_tokens) + " tokens");
    }

    std::unordered_map<std::size_t, std::uint32_t> counts;
    const std::string& t = doc.text;
    for (int n : n_grams) {
        if (t.size() < static_cast<std::size_t>(n)) continue;
        for (std::size_t i = 0; i + n <= t.size(); ++i) {
            const std::size_t bucket =
                static_cast<std::size_t>(fnv1a64(std::string_view(t).substr(i, n)) %
                                         static_cast<std::uint64_t>(d_feat));
            ++counts[bucket];
        }
    }

    Vec out = Vec::Zero(d_feat);
    for (const auto& [bucket, c] : counts) {
        out[static_cast<Eigen::Index>(bucket)] = std::log1p(static_cast<double>(c));
    }
    const double norm = out.norm();
    if (norm > 0.0) out /= norm;
    return out;
}

EncoderParams EncoderParams::init(int d_emb, int d_feat, Rng& rng, double scale) {
    EncoderParams p;
    p.weight = Mat::NullaryExpr(d_emb, d_feat, [&] { return rng.gaussian(0.0, scale); });
    p.bias = Vec::Zero(d_emb);
    return p;
}

EncoderParams EncoderParams::zeros(int d_emb, int d_feat) {
    EncoderParams p;
    p.weight = Mat::Zero(d_emb, d_feat);
    p.bias = Vec::Zero(d_emb);
    return p;
}

Vec encode(const Vec& features, const EncoderParams& p) {
    require_dims(p.weight.cols() == features.size() && p.weight.rows() == p.bias.size(),
                 "encode: parameter/feature dimensions disagree");
    return tanh_open_vec(p.weight * features + p.bias);
}

void encode_backward(const Vec& features, const EncoderParams& p, const Vec& output,
                     const Vec& upstream, EncoderParams& grads, Vec* grad_features) {
    require_dims(upstream.size() == output.size() && output.size() == p.bias.size(),
                 "encode_backward: upstream dimension disagrees");
    const Vec dz = (upstream.array() * (1.0 - output.array().square())).matrix();
    grads.weight.noalias() += dz * features.transpose();
    grads.bias += dz;
    if (grad_features) {
        grad_features->noalias() = p.weight.transpose() * dz;
    }
}

}  // namespace av::encoder
