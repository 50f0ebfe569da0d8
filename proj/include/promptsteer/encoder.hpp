#pragma once
// Causal pre-norm transformer text encoder with eos pooling, a hard-token
// forward pass, a soft-assignment forward pass over the vocabulary, and a
// hand-written reverse pass down to the soft-assignment logits.
//
// Layout of every encoded sequence: [bos] prefix suffix [eos], positions
// 0..S-1, pooled output = final-norm hidden state at the eos row, times the
// projection when present. Linear layers compute y = x W + b with W stored
// (in x out) row-major.

#include "promptsteer/embedding.hpp"
#include "promptsteer/lexicon.hpp"
#include "promptsteer/matrix.hpp"

#include <cstdint>
#include <vector>

namespace promptsteer {

struct EncoderConfig {
    int d_model = 8;
    int n_layers = 2;
    int n_heads = 2;
    int d_ff = 16;
    int max_len = 16;
    int vocab_size = 16;
    bool has_projection = false;
    int d_out = 8;

    /// Throws ConfigError on non-positive sizes, vocab_size < 2, d_model % n_heads != 0,
    /// max_len < 3, or d_out != d_model without a projection.
    void validate() const;

    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

inline constexpr double kLayerNormEps = 1e-5;

struct LayerNorm {
    std::vector<double> gain;
    std::vector<double> bias;
    friend bool operator==(const LayerNorm&, const LayerNorm&) = default;
};

struct Linear {
    Matrix weight;  // in x out
    std::vector<double> bias;
    friend bool operator==(const Linear&, const Linear&) = default;
};

struct EncoderLayer {
    LayerNorm ln1;
    Linear query, key, value, out;
    LayerNorm ln2;
    Linear fc1, fc2;
    friend bool operator==(const EncoderLayer&, const EncoderLayer&) = default;
};

/// Every parameter is an f32 value widened to double, so a PFW1 round trip
/// is lossless. Immutable once built; share freely across threads.
struct EncoderWeights {
    EncoderConfig config;
    Matrix token_embedding;     // L x d_model
    Matrix position_embedding;  // max_len x d_model
    std::vector<EncoderLayer> layers;
    LayerNorm final_norm;
    Matrix projection;  // d_model x d_out, empty without projection

    friend bool operator==(const EncoderWeights&, const EncoderWeights&) = default;
};

/// Soft-assignment scores, one row per prefix position, one column per
/// vocabulary token. k may be 0 only for the degenerate no-prefix case.
struct PrefixLogits {
    Matrix values;

    std::size_t k() const noexcept { return values.rows(); }
    std::size_t vocab_size() const noexcept { return values.cols(); }
    friend bool operator==(const PrefixLogits&, const PrefixLogits&) = default;
};

/// d loss / d logits, same shape as PrefixLogits.
using GradientMatrix = Matrix;

/// Embeddings and attention/MLP weights ~ N(0, 0.02^2) rounded to f32,
/// norm gains 1, biases 0, projection ~ N(0, 1/d_model).
EncoderWeights init_random_encoder(const EncoderConfig& config, std::uint64_t seed);

/// Shape and finiteness check; throws FormatError.
void validate_weights(const EncoderWeights& w);

EmbeddingVector encode(const EncoderWeights& w, const TokenSequence& seq);

/// Row i = sum_j softmax(logits_i)_j E_j, accumulated in column order.
Matrix soft_embed(const PrefixLogits& logits, const EncoderWeights& w);

EmbeddingVector encode_soft(const EncoderWeights& w, const PrefixLogits& logits,
                            const TokenSequence& suffix);

struct LossGradient {
    double loss = 0.0;
    GradientMatrix grad;
};

/// loss = -cos(encode_soft(w, logits, suffix), target) and its gradient with
/// respect to every logit.
LossGradient grad_loss_wrt_logits(const EncoderWeights& w, const PrefixLogits& logits,
                                  const TokenSequence& suffix, const EmbeddingVector& target);

}  // namespace promptsteer
