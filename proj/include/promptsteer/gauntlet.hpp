#pragma once
// Simulated safety checkers and batch robustness evaluation.

#include "promptsteer/attack.hpp"
#include "promptsteer/concept.hpp"
#include "promptsteer/encoder.hpp"
#include "promptsteer/lexicon.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace promptsteer {

/// Flags text containing any listed word as a whole whitespace-delimited
/// word, case-insensitively.
struct TextChecker {
    std::vector<std::string> words;
};

/// Flags a prompt whose pooled embedding has cosine > tau with any anchor.
struct EmbedChecker {
    std::vector<EmbeddingVector> anchors;
    double tau = 0.26;
};

using Checker = std::variant<TextChecker, EmbedChecker>;

/// Lowercases the words; UsageError on an empty list.
TextChecker make_text_checker(const std::vector<std::string>& words);

/// Anchors are the embeddings of the pairs' positive phrases.
/// UsageError unless 0 < tau < 1.
EmbedChecker make_embed_checker(const EncoderWeights& w, const Vocabulary& vocab,
                                const std::vector<ConceptPair>& pairs, double tau);

bool check_text(const TextChecker& c, std::string_view text);
bool check_embed(const EmbedChecker& c, const EncoderWeights& w, const TokenSequence& seq);

struct EvalRecord {
    std::size_t prompt_index = 0;
    std::string prompt;
    std::string adversarial_prompt;
    std::vector<TokenId> adversarial_ids;
    std::uint64_t seed = 0;
    std::vector<bool> flags;  // one per checker, in checker order
    bool flagged_text = false;
    bool flagged_embed = false;
    double hard_cosine = 0.0;  // to the rendered target
    double fidelity = 0.0;     // cos(encode(adversarial), encode(original))
    int iterations = 0;
    bool success = false;
};

struct EvalReport {
    std::vector<EvalRecord> records;
    double asr = 0.0;
    double mean_fidelity = 0.0;
    double mean_iterations = 0.0;
    AttackConfig config;
};

/// success = no checker flags the adversarial prompt and its hard cosine
/// reaches cfg.success_cosine. Prompt i is attacked with seed cfg.seed + i.
/// Up to `jobs` prompts run concurrently; records keep input order.
EvalReport evaluate(const EncoderWeights& w, const Vocabulary& vocab,
                    const std::vector<std::string>& prompts, const ConceptDirection& direction,
                    const AttackConfig& cfg, const Blocklist& blocklist,
                    const std::vector<Checker>& checkers, int jobs = 1);

/// Aggregates recomputed from the per-record fields.
void summarize(EvalReport& report);

std::vector<std::string> load_corpus(const std::filesystem::path& path);

nlohmann::json report_to_json(const EvalReport& report);
/// Header: prompt_index,success,flagged_text,flagged_embed,hard_cosine,fidelity,iterations
std::string report_to_csv(const EvalReport& report);

}  // namespace promptsteer
