#pragma once
// Concept directions from antonym pairs, and lambda-scaled rendering of a
// prompt embedding along such a direction.

#include "promptsteer/embedding.hpp"
#include "promptsteer/encoder.hpp"
#include "promptsteer/lexicon.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace promptsteer {

struct ConceptPair {
    std::string positive;
    std::string negative;
    friend bool operator==(const ConceptPair&, const ConceptPair&) = default;
};

struct ConceptDirection {
    EmbeddingVector values;
    std::vector<ConceptPair> pairs;
    std::string encoder_fingerprint;
    std::vector<std::string> warnings;  // e.g. a side that only produced unk
};

struct RenderedTarget {
    EmbeddingVector values;
    double lambda = 0.0;
    TokenSequence source_prompt;
};

/// Mean over pairs of encode(positive) - encode(negative), summed in list
/// order in double precision. The direction is not normalised.
ConceptDirection concept_direction(const EncoderWeights& w, const Vocabulary& vocab,
                                   const std::vector<ConceptPair>& pairs);

/// base + lambda * r, elementwise.
EmbeddingVector render_embedding(const EmbeddingVector& base, const EmbeddingVector& r, double lambda);

/// encode(w, prompt) + lambda * r. CompatibilityError when `r` was computed
/// with different weights; UsageError on a negative lambda.
RenderedTarget render_target(const EncoderWeights& w, const TokenSequence& prompt,
                             const ConceptDirection& r, double lambda);

/// Same as above with the weights fingerprint already known.
RenderedTarget render_target(const EncoderWeights& w, std::string_view weights_fingerprint,
                             const TokenSequence& prompt, const ConceptDirection& r, double lambda);

/// JSON array of {"pos": ..., "neg": ...}.
std::vector<ConceptPair> load_pairs(const std::filesystem::path& path);
std::vector<ConceptPair> parse_pairs(const nlohmann::json& j);

/// JSON header with the vector as base64 little-endian f32. Loading rounds
/// the values to f32.
nlohmann::json direction_to_json(const ConceptDirection& r);
ConceptDirection direction_from_json(const nlohmann::json& j);
void save_direction(const ConceptDirection& r, const std::filesystem::path& path);
ConceptDirection load_direction(const std::filesystem::path& path);

}  // namespace promptsteer
