#pragma once
// Shared fixtures and independent reference computations for the test
// binaries. Nothing here calls into the encoder's internals.

#include "promptsteer/attack.hpp"
#include "promptsteer/encoder.hpp"
#include "promptsteer/lexicon.hpp"

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace testsupport {

using namespace promptsteer;

inline const std::vector<std::string> kToyWords = {"a",    "cat",  "dog",   "red",  "blue", "sky",
                                                   "tree", "house", "run", "sun",  "moon", "car"};

/// 4 specials followed by `words`.
inline Vocabulary make_vocab(const std::vector<std::string>& words = kToyWords) {
    std::vector<std::string> tokens = {"<bos>", "<eos>", "<pad>", "<unk>"};
    tokens.insert(tokens.end(), words.begin(), words.end());
    return Vocabulary(tokens);
}

inline EncoderConfig tiny_config(int vocab_size = 16, int n_layers = 2) {
    EncoderConfig c;
    c.d_model = 8;
    c.n_layers = n_layers;
    c.n_heads = 2;
    c.d_ff = 16;
    c.max_len = 16;
    c.vocab_size = vocab_size;
    c.d_out = 8;
    return c;
}

inline TokenSequence seq(std::vector<TokenId> ids) { return TokenSequence{std::move(ids), std::nullopt}; }

inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max(std::abs(b[i]), 1e-300);
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

inline double vec_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num / den);
}

inline PrefixLogits random_logits(std::size_t k, std::size_t L, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, scale);
    PrefixLogits p{Matrix(k, L)};
    for (auto& v : p.values.flat()) v = n(rng);
    return p;
}

/// Saturated one-hot rows: +40 at the chosen id, -40 elsewhere.
inline PrefixLogits saturated(const std::vector<TokenId>& ids, std::size_t L) {
    PrefixLogits p{Matrix(ids.size(), L, -40.0)};
    for (std::size_t i = 0; i < ids.size(); ++i) p.values(i, ids[i]) = 40.0;
    return p;
}

// ---- Straightforward second implementation of the encoder forward pass ----

using Rows = std::vector<std::vector<double>>;

inline std::vector<double> ref_layernorm(const std::vector<double>& x, const LayerNorm& ln) {
    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= n;
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        y[i] = (x[i] - mean) / std::sqrt(var + kLayerNormEps) * ln.gain[i] + ln.bias[i];
    return y;
}

inline std::vector<double> ref_linear(const std::vector<double>& x, const Linear& lin) {
    std::vector<double> y(lin.weight.cols());
    for (std::size_t o = 0; o < y.size(); ++o) {
        double s = lin.bias[o];
        for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * lin.weight(i, o);
        y[o] = s;
    }
    return y;
}

/// Runs the transformer over already-embedded input rows (token rows only,
/// positions are added here) and returns the pooled output.
inline std::vector<double> ref_forward_rows(const EncoderWeights& w, Rows x) {
    const auto& c = w.config;
    const std::size_t S = x.size();
    const std::size_t D = static_cast<std::size_t>(c.d_model);
    const std::size_t H = static_cast<std::size_t>(c.n_heads);
    const std::size_t hd = D / H;
    for (std::size_t t = 0; t < S; ++t)
        for (std::size_t d = 0; d < D; ++d) x[t][d] += w.position_embedding(t, d);

    for (const auto& layer : w.layers) {
        Rows q(S), k(S), v(S);
        for (std::size_t t = 0; t < S; ++t) {
            const auto h = ref_layernorm(x[t], layer.ln1);
            q[t] = ref_linear(h, layer.query);
            k[t] = ref_linear(h, layer.key);
            v[t] = ref_linear(h, layer.value);
        }
        Rows ctx(S, std::vector<double>(D, 0.0));
        for (std::size_t head = 0; head < H; ++head) {
            for (std::size_t t = 0; t < S; ++t) {
                std::vector<double> score(t + 1);
                double mx = -INFINITY;
                for (std::size_t s = 0; s <= t; ++s) {
                    double dot = 0.0;
                    for (std::size_t e = 0; e < hd; ++e) dot += q[t][head * hd + e] * k[s][head * hd + e];
                    score[s] = dot / std::sqrt(static_cast<double>(hd));
                    mx = std::max(mx, score[s]);
                }
                double z = 0.0;
                for (auto& sc : score) z += (sc = std::exp(sc - mx));
                for (std::size_t s = 0; s <= t; ++s)
                    for (std::size_t e = 0; e < hd; ++e) ctx[t][head * hd + e] += score[s] / z * v[s][head * hd + e];
            }
        }
        for (std::size_t t = 0; t < S; ++t) {
            const auto o = ref_linear(ctx[t], layer.out);
            for (std::size_t d = 0; d < D; ++d) x[t][d] += o[d];
            auto f = ref_linear(ref_layernorm(x[t], layer.ln2), layer.fc1);
            for (auto& a : f) a = a / (1.0 + std::exp(-1.702 * a));
            const auto m = ref_linear(f, layer.fc2);
            for (std::size_t d = 0; d < D; ++d) x[t][d] += m[d];
        }
    }
    auto pooled = ref_layernorm(x[S - 1], w.final_norm);
    if (!c.has_projection) return pooled;
    std::vector<double> out(static_cast<std::size_t>(c.d_out), 0.0);
    for (std::size_t o = 0; o < out.size(); ++o)
        for (std::size_t d = 0; d < D; ++d) out[o] += pooled[d] * w.projection(d, o);
    return out;
}

inline std::vector<double> token_row(const EncoderWeights& w, TokenId id) {
    const auto r = w.token_embedding.row(id);
    return {r.begin(), r.end()};
}

/// Soft row computed directly from the definition, softmax via exp/sum.
inline std::vector<double> ref_soft_row(const EncoderWeights& w, std::span<const double> logits) {
    double mx = -INFINITY;
    for (double v : logits) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : logits) z += std::exp(v - mx);
    std::vector<double> row(w.token_embedding.cols(), 0.0);
    for (std::size_t j = 0; j < logits.size(); ++j) {
        const double p = std::exp(logits[j] - mx) / z;
        for (std::size_t d = 0; d < row.size(); ++d) row[d] += p * w.token_embedding(j, d);
    }
    return row;
}

inline std::vector<double> ref_encode(const EncoderWeights& w, const std::vector<TokenId>& ids) {
    Rows x{token_row(w, 0)};
    for (TokenId id : ids) x.push_back(token_row(w, id));
    x.push_back(token_row(w, 1));
    return ref_forward_rows(w, std::move(x));
}

inline std::vector<double> ref_encode_soft(const EncoderWeights& w, const PrefixLogits& logits,
                                           const std::vector<TokenId>& suffix) {
    Rows x{token_row(w, 0)};
    for (std::size_t i = 0; i < logits.k(); ++i) x.push_back(ref_soft_row(w, logits.values.row(i)));
    for (TokenId id : suffix) x.push_back(token_row(w, id));
    x.push_back(token_row(w, 1));
    return ref_forward_rows(w, std::move(x));
}

inline double ref_cos(const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    return ab / std::sqrt(aa * bb);
}

/// Best hard cosine over every k=2 prefix of allowed ids.
struct BruteForce {
    double best = -2.0;
    std::vector<TokenId> argbest;
};

inline BruteForce brute_force_k2(const EncoderWeights& w, const std::vector<TokenId>& allowed,
                                 const std::vector<TokenId>& prompt, const std::vector<double>& target) {
    BruteForce bf;
    for (TokenId a : allowed) {
        for (TokenId b : allowed) {
            std::vector<TokenId> ids{a, b};
            ids.insert(ids.end(), prompt.begin(), prompt.end());
            const double c = ref_cos(encode(w, seq(ids)), target);
            if (c > bf.best) {
                bf.best = c;
                bf.argbest = {a, b};
            }
        }
    }
    return bf;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("promptsteer_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testsupport
