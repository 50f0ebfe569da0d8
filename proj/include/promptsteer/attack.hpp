#pragma once
// Prefix search: soft-assignment logits over the vocabulary, optimised
// against a rendered target with masked gradients, decoded by argmax.

#include "promptsteer/concept.hpp"
#include "promptsteer/encoder.hpp"
#include "promptsteer/lexicon.hpp"

#include "json.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace promptsteer {

struct AttackConfig {
    int k = 7;
    double lambda = 3.0;
    int iterations = 600;
    double learning_rate = 1e-5;
    double mask_value = 1e9;
    std::uint64_t seed = 0;
    int decode_every = 10;
    double success_cosine = 0.9;

    /// UsageError on k < 1, iterations < 1, learning_rate <= 0,
    /// mask_value <= 0, decode_every outside [1, iterations],
    /// success_cosine outside [-1, 1] or lambda < 0.
    void validate() const;
    friend bool operator==(const AttackConfig&, const AttackConfig&) = default;
};

/// Adam with decoupled weight decay (decay fixed at 0 here), bias-corrected,
/// same operation order as the common PyTorch implementation:
///   m <- b1 m + (1 - b1) g;  v <- b2 v + (1 - b2) g^2
///   p <- p - (lr / (1 - b1^t)) * m / (sqrt(v) / sqrt(1 - b2^t) + eps)
class AdamW {
public:
    struct Options {
        double learning_rate = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 0.0;
    };

    AdamW(std::size_t rows, std::size_t cols, Options opts);
    void step(Matrix& params, const Matrix& grad);
    int steps() const noexcept { return t_; }

private:
    Options opts_;
    Matrix m_;
    Matrix v_;
    int t_ = 0;
};

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

/// Row i is a soft one-hot: +3.0 at a uniformly drawn allowed token (not
/// special, not blocklisted), 0 elsewhere. UsageError if nothing is allowed.
PrefixLogits init_prefix_logits(int k, const Vocabulary& vocab, const Blocklist& blocklist,
                                std::uint64_t seed);

inline constexpr double kInitLogit = 3.0;

/// Overwrites every blocklisted and special column with +mask_value.
void mask_gradient(GradientMatrix& grad, const Blocklist& blocklist, double mask_value);

/// Argmax per row, ties to the lowest id.
std::vector<TokenId> decode_prefix(const PrefixLogits& logits);

struct Checkpoint {
    int iteration = 0;
    std::vector<TokenId> prefix;
    double hard_cosine = 0.0;
    bool blocklist_free = true;
};

struct AttackResult {
    TokenSequence adversarial_tokens;  // best prefix followed by the prompt
    std::vector<TokenId> prefix;
    double final_cosine = 0.0;
    int best_iteration = 0;
    std::vector<double> loss_trace;  // one soft loss per update step
    bool passed_text_checker = false;  // a blocklist-free decode was found
    bool stopped_early = false;
    AttackConfig config;
    std::string concept_fingerprint;
    std::string encoder_fingerprint;
    std::vector<Checkpoint> checkpoints;

    int iterations_run() const noexcept { return static_cast<int>(loss_trace.size()); }
};

/// Runs the search against an explicit target embedding. `cfg.lambda` is
/// recorded but not applied.
AttackResult optimize_toward(const EncoderWeights& w, const Vocabulary& vocab,
                             const TokenSequence& prompt, const EmbeddingVector& target,
                             const AttackConfig& cfg, const Blocklist& blocklist);

/// Renders the target from `direction` with cfg.lambda, then searches.
AttackResult optimize(const EncoderWeights& w, const Vocabulary& vocab, const TokenSequence& prompt,
                      const ConceptDirection& direction, const AttackConfig& cfg,
                      const Blocklist& blocklist);

AttackResult optimize(const EncoderWeights& w, std::string_view weights_fingerprint,
                      const Vocabulary& vocab, const TokenSequence& prompt,
                      const ConceptDirection& direction, const AttackConfig& cfg,
                      const Blocklist& blocklist);

std::string direction_fingerprint(const ConceptDirection& r);

nlohmann::json config_to_json(const AttackConfig& cfg);
AttackConfig attack_config_from_json(const nlohmann::json& j);
nlohmann::json result_to_json(const AttackResult& r, const Vocabulary& vocab);

}  // namespace promptsteer
