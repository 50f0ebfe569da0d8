#include "promptsteer/lexicon.hpp"

#include "promptsteer/errors.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace promptsteer {

namespace {

constexpr std::size_t kMinVocab = 8;

bool is_space(unsigned char c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// ASCII punctuation only; UTF-8 continuation bytes belong to words.
bool is_punct(unsigned char c) noexcept {
    return c < 0x80 && c > 0x20 && c != 0x7f && !(c >= '0' && c <= '9') &&
           !(c >= 'a' && c <= 'z') && !(c >= 'A' && c <= 'Z');
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
    }
    return lines;
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.size() < kMinVocab) {
        throw FormatError("vocabulary needs at least " + std::to_string(kMinVocab) +
                          " tokens, got " + std::to_string(tokens_.size()));
    }
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        const std::string& t = tokens_[i];
        if (t.empty()) {
            throw FormatError(i < kSpecialCount ? "missing special token declaration on line " +
                                                      std::to_string(i + 1)
                                                : "empty token on line " + std::to_string(i + 1));
        }
        if (!index_.emplace(t, static_cast<TokenId>(i)).second) {
            throw FormatError("duplicate token '" + t + "' on line " + std::to_string(i + 1));
        }
        if (i >= kSpecialCount) max_token_bytes_ = std::max(max_token_bytes_, t.size());
    }
}

const std::string& Vocabulary::token(TokenId id) const {
    if (id >= tokens_.size()) {
        throw RangeError("token id " + std::to_string(id) + " out of range for vocabulary of " +
                         std::to_string(tokens_.size()));
    }
    return tokens_[id];
}

std::optional<TokenId> Vocabulary::find(std::string_view s) const {
    auto it = index_.find(std::string(s));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

Blocklist Blocklist::specials_only(const Vocabulary& /*vocab*/) {
    Blocklist b;
    for (TokenId id = 0; id < Vocabulary::kSpecialCount; ++id) b.special_ids.insert(id);
    return b;
}

Vocabulary load_vocab(const std::filesystem::path& path) {
    auto lines = read_lines(path);
    if (lines.size() < Vocabulary::kSpecialCount) {
        throw FormatError(path.string() + ": the first four lines must declare bos/eos/pad/unk");
    }
    return Vocabulary(std::move(lines));
}

void save_vocab(const Vocabulary& vocab, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& t : vocab.tokens()) out << t << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

std::string to_lower(std::string_view text) {
    std::string out(text);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

std::vector<std::string> split_words(std::string_view text) {
    const std::string lowered = to_lower(text);
    std::vector<std::string> words;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) words.push_back(std::move(current));
        current.clear();
    };
    for (char ch : lowered) {
        const auto c = static_cast<unsigned char>(ch);
        if (is_space(c)) {
            flush();
        } else if (is_punct(c)) {
            flush();
            words.emplace_back(1, ch);
        } else {
            current.push_back(ch);
        }
    }
    flush();
    return words;
}

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab) {
    TokenSequence seq;
    seq.text_span = std::string(text);
    for (const std::string& word : split_words(text)) {
        std::size_t pos = 0;
        while (pos < word.size()) {
            const std::size_t longest = std::min(vocab.max_token_bytes(), word.size() - pos);
            std::optional<TokenId> hit;
            std::size_t len = longest;
            for (; len > 0; --len) {
                hit = vocab.find(std::string_view(word).substr(pos, len));
                if (hit && !vocab.is_special(*hit)) break;
                hit.reset();
            }
            if (!hit) {
                seq.ids.push_back(vocab.unk_id());
                break;
            }
            seq.ids.push_back(*hit);
            pos += len;
        }
    }
    return seq;
}

std::string detokenize(const TokenSequence& seq, const Vocabulary& vocab) {
    std::string out;
    for (TokenId id : seq.ids) {
        const std::string& t = vocab.token(id);
        if (vocab.is_special(id)) continue;
        if (!out.empty()) out.push_back(' ');
        out += t;
    }
    return out;
}

Blocklist build_blocklist(const std::vector<std::string>& words, const Vocabulary& vocab) {
    if (words.empty()) throw UsageError("blocklist word list is empty");
    Blocklist b = Blocklist::specials_only(vocab);
    for (const auto& w : words) {
        const std::string lowered = to_lower(w);
        b.words.push_back(lowered);
        for (TokenId id : tokenize(lowered, vocab).ids) {
            if (!vocab.is_special(id)) b.token_ids.insert(id);
        }
    }
    // Entries that detokenize to text containing a listed word as a whole
    // word are blocked too, e.g. "18+", which the punctuation-splitting
    // tokenizer never produces.
    std::set<std::string> listed(b.words.begin(), b.words.end());
    for (TokenId id = Vocabulary::kSpecialCount; id < vocab.size(); ++id) {
        std::istringstream pieces(to_lower(vocab.token(id)));
        std::string piece;
        while (pieces >> piece) {
            if (listed.contains(piece)) {
                b.token_ids.insert(id);
                break;
            }
        }
    }
    return b;
}

std::vector<std::string> load_word_list(const std::filesystem::path& path) {
    std::vector<std::string> words;
    for (auto& line : read_lines(path)) {
        auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        auto last = line.find_last_not_of(" \t");
        words.push_back(line.substr(first, last - first + 1));
    }
    return words;
}

}  // namespace promptsteer
