#pragma once

#include <cstdint>
#include <set>
#include <string_view>
#include <tuple>

#include "av/rng.hpp"
#include "av/types.hpp"

namespace av::encoder {

// FNV-1a 64-bit over raw bytes. Fixed here so feature buckets are identical
// across platforms and runs.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= static_cast<std::uint64_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::size_t count_tokens(const std::string& text);

// Hashed character n-gram features: counts of byte n-grams bucketed by
// fnv1a64(ngram) % d_feat, log(1+count) scaled, L2-normalized.
Vec featurize(const Document& doc, const std::set<int>& n_grams, int d_feat,
              int min_tokens = 32);

struct EncoderParams {
    Mat weight;  // D_emb x D_feat
    Vec bias;    // D_emb

    static EncoderParams init(int d_emb, int d_feat, Rng& rng, double scale = 0.1);
    static EncoderParams zeros(int d_emb, int d_feat);
    EncoderParams zeros_like() const { return zeros(static_cast<int>(weight.rows()), static_cast<int>(weight.cols())); }

    static constexpr auto fields() {
        return std::make_tuple(&EncoderParams::weight, &EncoderParams::bias);
    }
};

// x = tanh(W f + b), entries strictly inside (-1, 1).
Vec encode(const Vec& features, const EncoderParams& p);

// Accumulates dL/dW, dL/db into `grads` given dL/dx; optionally returns dL/df.
void encode_backward(const Vec& features, const EncoderParams& p, const Vec& output,
                     const Vec& upstream, EncoderParams& grads, Vec* grad_features = nullptr);

}  // namespace av::encoder
