#include "promptsteer/concept.hpp"

#include "promptsteer/digest.hpp"
#include "promptsteer/errors.hpp"
#include "promptsteer/fileio.hpp"
#include "promptsteer/weights_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace promptsteer {

using json = nlohmann::json;

namespace {

constexpr const char* kDirectionFormat = "promptsteer.concept.v1";

TokenSequence tokenize_side(const std::string& text, const Vocabulary& vocab, std::size_t index,
                            const char* side, std::vector<std::string>& warnings) {
    TokenSequence seq = tokenize(text, vocab);
    if (seq.empty()) {
        throw UsageError("pair " + std::to_string(index) + " " + side + " side '" + text +
                         "' produced no tokens");
    }
    const bool all_unk = std::all_of(seq.ids.begin(), seq.ids.end(),
                                     [&](TokenId id) { return id == vocab.unk_id(); });
    if (all_unk) {
        warnings.push_back("pair " + std::to_string(index) + " " + side + " side '" + text +
                           "' tokenizes to unk only");
    }
    return seq;
}

}  // namespace

ConceptDirection concept_direction(const EncoderWeights& w, const Vocabulary& vocab,
                                   const std::vector<ConceptPair>& pairs) {
    if (pairs.empty()) throw UsageError("concept direction needs at least one pair");
    ConceptDirection r;
    r.pairs = pairs;
    r.encoder_fingerprint = weights_fingerprint(w);

    EmbeddingVector sum(static_cast<std::size_t>(w.config.d_out), 0.0);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& pair = pairs[i];
        if (pair.positive.empty() || pair.negative.empty()) {
            throw UsageError("pair " + std::to_string(i) + " has an empty side");
        }
        if (pair.positive == pair.negative) {
            throw UsageError("pair " + std::to_string(i) + " has identical sides");
        }
        const auto pos = encode(w, tokenize_side(pair.positive, vocab, i, "positive", r.warnings));
        const auto neg = encode(w, tokenize_side(pair.negative, vocab, i, "negative", r.warnings));
        for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += pos[j] - neg[j];
    }
    const auto n = static_cast<double>(pairs.size());
    r.values.resize(sum.size());
    for (std::size_t j = 0; j < sum.size(); ++j) r.values[j] = sum[j] / n;
    return r;
}

EmbeddingVector render_embedding(const EmbeddingVector& base, const EmbeddingVector& r, double lambda) {
    if (base.size() != r.size()) {
        throw CompatibilityError("concept direction width " + std::to_string(r.size()) +
                                 " does not match embedding width " + std::to_string(base.size()));
    }
    EmbeddingVector out(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) out[i] = base[i] + lambda * r[i];
    return out;
}

RenderedTarget render_target(const EncoderWeights& w, std::string_view weights_fp,
                             const TokenSequence& prompt, const ConceptDirection& r, double lambda) {
    if (!(lambda >= 0.0)) throw UsageError("lambda must be non-negative");
    if (r.encoder_fingerprint != weights_fp) {
        throw CompatibilityError("concept direction was computed with encoder " +
                                 r.encoder_fingerprint.substr(0, 12) + ", not " +
                                 std::string(weights_fp.substr(0, 12)));
    }
    RenderedTarget t;
    t.values = render_embedding(encode(w, prompt), r.values, lambda);
    t.lambda = lambda;
    t.source_prompt = prompt;
    return t;
}

RenderedTarget render_target(const EncoderWeights& w, const TokenSequence& prompt,
                             const ConceptDirection& r, double lambda) {
    return render_target(w, weights_fingerprint(w), prompt, r, lambda);
}

std::vector<ConceptPair> parse_pairs(const json& j) {
    if (!j.is_array()) throw FormatError("pairs file must hold a JSON array");
    std::vector<ConceptPair> pairs;
    for (const auto& item : j) {
        try {
            pairs.push_back({item.at("pos").get<std::string>(), item.at("neg").get<std::string>()});
        } catch (const json::exception& e) {
            throw FormatError(std::string("pair entry: ") + e.what());
        }
    }
    return pairs;
}

std::vector<ConceptPair> load_pairs(const std::filesystem::path& path) {
    try {
        return parse_pairs(json::parse(read_text_file(path)));
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

json direction_to_json(const ConceptDirection& r) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(r.values.size() * 4);
    for (double v : r.values) {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
    json pairs = json::array();
    for (const auto& p : r.pairs) pairs.push_back({{"pos", p.positive}, {"neg", p.negative}});
    return {{"format", kDirectionFormat},
            {"pairs", pairs},
            {"encoder_fingerprint", r.encoder_fingerprint},
            {"d_out", r.values.size()},
            {"warnings", r.warnings},
            {"vector_f32_le_base64", base64_encode(bytes)}};
}

ConceptDirection direction_from_json(const json& j) {
    ConceptDirection r;
    try {
        if (j.at("format").get<std::string>() != kDirectionFormat) {
            throw FormatError("unknown concept direction format");
        }
        r.pairs = parse_pairs(j.at("pairs"));
        r.encoder_fingerprint = j.at("encoder_fingerprint").get<std::string>();
        if (j.contains("warnings")) r.warnings = j["warnings"].get<std::vector<std::string>>();
        const auto d = j.at("d_out").get<std::size_t>();
        const auto bytes = base64_decode(j.at("vector_f32_le_base64").get<std::string>());
        if (bytes.size() != d * 4) throw FormatError("concept vector length does not match d_out");
        r.values.resize(d);
        for (std::size_t i = 0; i < d; ++i) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
            r.values[i] = static_cast<double>(std::bit_cast<float>(bits));
            if (!std::isfinite(r.values[i])) throw FormatError("concept vector has a non-finite entry");
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("concept direction: ") + e.what());
    }
    if (r.pairs.empty()) throw FormatError("concept direction lists no pairs");
    return r;
}

void save_direction(const ConceptDirection& r, const std::filesystem::path& path) {
    write_file_atomic(path, direction_to_json(r).dump(2) + "\n");
}

ConceptDirection load_direction(const std::filesystem::path& path) {
    try {
        return direction_from_json(json::parse(read_text_file(path)));
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace promptsteer
