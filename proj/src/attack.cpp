#include "promptsteer/attack.hpp"

#include "promptsteer/digest.hpp"
#include "promptsteer/errors.hpp"
#include "promptsteer/weights_io.hpp"

#include <cmath>
#include <optional>
#include <random>

namespace promptsteer {

using json = nlohmann::json;

void AttackConfig::validate() const {
    auto fail = [](const std::string& what) { throw UsageError("invalid attack config: " + what); };
    if (k < 1) fail("k must be at least 1");
    if (!(lambda >= 0.0)) fail("lambda must be non-negative");
    if (iterations < 1) fail("iterations must be at least 1");
    if (!(learning_rate > 0.0)) fail("learning rate must be positive");
    if (!(mask_value > 0.0)) fail("mask value must be positive");
    if (decode_every < 1 || decode_every > iterations) fail("decode_every must lie in [1, iterations]");
    if (!(success_cosine >= -1.0 && success_cosine <= 1.0)) fail("success cosine must lie in [-1, 1]");
}

AdamW::AdamW(std::size_t rows, std::size_t cols, Options opts)
    : opts_(opts), m_(rows, cols), v_(rows, cols) {}

void AdamW::step(Matrix& params, const Matrix& grad) {
    ++t_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, t_);
    const double bc2_sqrt = std::sqrt(1.0 - std::pow(opts_.beta2, t_));
    const double step_size = opts_.learning_rate / bc1;
    auto p = params.flat();
    auto g = grad.flat();
    auto m = m_.flat();
    auto v = v_.flat();
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (opts_.weight_decay != 0.0) p[i] *= 1.0 - opts_.learning_rate * opts_.weight_decay;
        m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g[i];
        v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g[i] * g[i];
        const double denom = std::sqrt(v[i]) / bc2_sqrt + opts_.eps;
        p[i] -= step_size * (m[i] / denom);
    }
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    return cosine_similarity(std::span<const double>(a), std::span<const double>(b));
}

PrefixLogits init_prefix_logits(int k, const Vocabulary& vocab, const Blocklist& blocklist,
                                std::uint64_t seed) {
    if (k < 1) throw UsageError("prefix length must be at least 1");
    std::vector<TokenId> allowed;
    for (TokenId id = 0; id < vocab.size(); ++id) {
        if (!vocab.is_special(id) && !blocklist.blocks(id)) allowed.push_back(id);
    }
    if (allowed.empty()) throw UsageError("every vocabulary token is special or blocklisted");

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, allowed.size() - 1);
    PrefixLogits logits{Matrix(static_cast<std::size_t>(k), vocab.size())};
    for (std::size_t i = 0; i < logits.k(); ++i) logits.values(i, allowed[pick(rng)]) = kInitLogit;
    return logits;
}

void mask_gradient(GradientMatrix& grad, const Blocklist& blocklist, double mask_value) {
    if (!(mask_value > 0.0)) throw UsageError("mask value must be positive");
    for (std::size_t i = 0; i < grad.rows(); ++i) {
        for (const auto* ids : {&blocklist.token_ids, &blocklist.special_ids}) {
            for (TokenId id : *ids) {
                if (id < grad.cols()) grad(i, id) = mask_value;
            }
        }
    }
}

std::vector<TokenId> decode_prefix(const PrefixLogits& logits) {
    std::vector<TokenId> ids(logits.k(), 0);
    for (std::size_t i = 0; i < logits.k(); ++i) {
        const auto row = logits.values.row(i);
        std::size_t best = 0;
        for (std::size_t j = 1; j < row.size(); ++j) {
            if (row[j] > row[best]) best = j;
        }
        ids[i] = static_cast<TokenId>(best);
    }
    return ids;
}

namespace {

TokenSequence join(const std::vector<TokenId>& prefix, const TokenSequence& prompt) {
    TokenSequence seq;
    seq.ids = prefix;
    seq.ids.insert(seq.ids.end(), prompt.ids.begin(), prompt.ids.end());
    return seq;
}

bool blocklist_free(const std::vector<TokenId>& ids, const Blocklist& blocklist) {
    for (TokenId id : ids) {
        if (blocklist.blocks(id)) return false;
    }
    return true;
}

}  // namespace

AttackResult optimize_toward(const EncoderWeights& w, const Vocabulary& vocab,
                             const TokenSequence& prompt, const EmbeddingVector& target,
                             const AttackConfig& cfg, const Blocklist& blocklist) {
    cfg.validate();
    if (prompt.empty()) throw UsageError("prompt tokenizes to nothing");
    if (vocab.size() != static_cast<std::size_t>(w.config.vocab_size)) {
        throw CompatibilityError("vocabulary has " + std::to_string(vocab.size()) +
                                 " tokens but the encoder expects " +
                                 std::to_string(w.config.vocab_size));
    }

    AttackResult result;
    result.config = cfg;

    PrefixLogits logits = init_prefix_logits(cfg.k, vocab, blocklist, cfg.seed);
    AdamW adam(logits.k(), logits.vocab_size(), {.learning_rate = cfg.learning_rate});

    std::optional<std::size_t> best;
    auto checkpoint = [&](int iteration) {
        Checkpoint cp;
        cp.iteration = iteration;
        cp.prefix = decode_prefix(logits);
        cp.blocklist_free = blocklist_free(cp.prefix, blocklist);
        cp.hard_cosine = cosine_similarity(encode(w, join(cp.prefix, prompt)), target);
        const bool improves =
            cp.blocklist_free && (!best || cp.hard_cosine > result.checkpoints[*best].hard_cosine);
        const bool success = cp.blocklist_free && cp.hard_cosine >= cfg.success_cosine;
        result.checkpoints.push_back(std::move(cp));
        if (improves) best = result.checkpoints.size() - 1;
        return success;
    };

    bool done = checkpoint(0);
    for (int n = 1; n <= cfg.iterations && !done; ++n) {
        LossGradient lg = grad_loss_wrt_logits(w, logits, prompt, target);
        result.loss_trace.push_back(lg.loss);
        mask_gradient(lg.grad, blocklist, cfg.mask_value);
        adam.step(logits.values, lg.grad);
        if (n % cfg.decode_every == 0 || n == cfg.iterations) {
            done = checkpoint(n);
            result.stopped_early = done && n < cfg.iterations;
        }
    }
    if (done && result.loss_trace.empty()) result.stopped_early = true;

    if (best) {
        result.prefix = result.checkpoints[*best].prefix;
        result.best_iteration = result.checkpoints[*best].iteration;
        result.passed_text_checker = true;
    } else {
        result.prefix = result.checkpoints.back().prefix;
        result.best_iteration = result.checkpoints.back().iteration;
        result.passed_text_checker = false;
    }
    result.adversarial_tokens = join(result.prefix, prompt);
    result.final_cosine = cosine_similarity(encode(w, result.adversarial_tokens), target);
    return result;
}

AttackResult optimize(const EncoderWeights& w, std::string_view weights_fp, const Vocabulary& vocab,
                      const TokenSequence& prompt, const ConceptDirection& direction,
                      const AttackConfig& cfg, const Blocklist& blocklist) {
    cfg.validate();
    const RenderedTarget target = render_target(w, weights_fp, prompt, direction, cfg.lambda);
    AttackResult result = optimize_toward(w, vocab, prompt, target.values, cfg, blocklist);
    result.concept_fingerprint = direction_fingerprint(direction);
    result.encoder_fingerprint = std::string(weights_fp);
    return result;
}

AttackResult optimize(const EncoderWeights& w, const Vocabulary& vocab, const TokenSequence& prompt,
                      const ConceptDirection& direction, const AttackConfig& cfg,
                      const Blocklist& blocklist) {
    return optimize(w, weights_fingerprint(w), vocab, prompt, direction, cfg, blocklist);
}

std::string direction_fingerprint(const ConceptDirection& r) {
    return sha256_hex(direction_to_json(r).dump());
}

json config_to_json(const AttackConfig& cfg) {
    return {{"k", cfg.k},
            {"lambda", cfg.lambda},
            {"iterations", cfg.iterations},
            {"learning_rate", cfg.learning_rate},
            {"mask_value", cfg.mask_value},
            {"seed", cfg.seed},
            {"decode_every", cfg.decode_every},
            {"success_cosine", cfg.success_cosine}};
}

AttackConfig attack_config_from_json(const json& j) {
    AttackConfig cfg;
    try {
        cfg.k = j.at("k").get<int>();
        cfg.lambda = j.at("lambda").get<double>();
        cfg.iterations = j.at("iterations").get<int>();
        cfg.learning_rate = j.at("learning_rate").get<double>();
        cfg.mask_value = j.at("mask_value").get<double>();
        cfg.seed = j.at("seed").get<std::uint64_t>();
        cfg.decode_every = j.at("decode_every").get<int>();
        cfg.success_cosine = j.at("success_cosine").get<double>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("attack config: ") + e.what());
    }
    return cfg;
}

json result_to_json(const AttackResult& r, const Vocabulary& vocab) {
    json checkpoints = json::array();
    for (const auto& cp : r.checkpoints) {
        checkpoints.push_back({{"iteration", cp.iteration},
                               {"prefix_ids", cp.prefix},
                               {"hard_cosine", cp.hard_cosine},
                               {"blocklist_free", cp.blocklist_free}});
    }
    return {{"config", config_to_json(r.config)},
            {"token_ids", r.adversarial_tokens.ids},
            {"prefix_ids", r.prefix},
            {"decoded_text", detokenize(r.adversarial_tokens, vocab)},
            {"prefix_text", detokenize(TokenSequence{r.prefix, {}}, vocab)},
            {"final_cosine", r.final_cosine},
            {"best_iteration", r.best_iteration},
            {"iterations_run", r.iterations_run()},
            {"stopped_early", r.stopped_early},
            {"passed_text_checker", r.passed_text_checker},
            {"loss_trace", r.loss_trace},
            {"checkpoints", checkpoints},
            {"fingerprints", {{"encoder", r.encoder_fingerprint}, {"concept", r.concept_fingerprint}}}};
}

}  // namespace promptsteer
