#pragma once
// Vocabulary, reference tokenizer and the sensitive-token blocklist.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace promptsteer {

using TokenId = std::uint32_t;

/// Ordered token strings; id = position. Immutable after construction.
class Vocabulary {
public:
    /// `tokens[0..3]` are bos, eos, pad, unk. Throws FormatError on empty
    /// or duplicate tokens and on fewer than 8 tokens.
    explicit Vocabulary(std::vector<std::string> tokens);

    std::size_t size() const noexcept { return tokens_.size(); }
    const std::string& token(TokenId id) const;  // RangeError if id >= size()
    std::optional<TokenId> find(std::string_view s) const;

    TokenId bos_id() const noexcept { return 0; }
    TokenId eos_id() const noexcept { return 1; }
    TokenId pad_id() const noexcept { return 2; }
    TokenId unk_id() const noexcept { return 3; }
    bool is_special(TokenId id) const noexcept { return id < kSpecialCount; }

    std::size_t max_token_bytes() const noexcept { return max_token_bytes_; }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

    static constexpr std::size_t kSpecialCount = 4;

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
    std::size_t max_token_bytes_ = 0;
};

struct TokenSequence {
    std::vector<TokenId> ids;
    std::optional<std::string> text_span;

    std::size_t size() const noexcept { return ids.size(); }
    bool empty() const noexcept { return ids.empty(); }
    friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

/// Token ids that the attack must never emit. `token_ids` never holds a
/// special id; `special_ids` is kept alongside because gradient masking
/// covers both.
struct Blocklist {
    std::vector<std::string> words;
    std::set<TokenId> token_ids;
    std::set<TokenId> special_ids;

    bool blocks(TokenId id) const noexcept {
        return token_ids.contains(id) || special_ids.contains(id);
    }
    /// Specials only, no words.
    static Blocklist specials_only(const Vocabulary& vocab);
};

Vocabulary load_vocab(const std::filesystem::path& path);
void save_vocab(const Vocabulary& vocab, const std::filesystem::path& path);

/// Lowercase ASCII; other bytes pass through unchanged.
std::string to_lower(std::string_view text);

/// Splits lowercased text into words on whitespace, then splits each
/// whitespace chunk into alphanumeric runs and single punctuation chars.
std::vector<std::string> split_words(std::string_view text);

/// Greedy longest-match over non-special vocabulary strings. When nothing
/// matches at the current offset, the rest of that word becomes one unk.
TokenSequence tokenize(std::string_view text, const Vocabulary& vocab);

/// Token strings joined with single spaces; the four specials are omitted.
std::string detokenize(const TokenSequence& seq, const Vocabulary& vocab);

Blocklist build_blocklist(const std::vector<std::string>& words, const Vocabulary& vocab);

/// One word per line; blank lines and lines starting with '#' are skipped.
std::vector<std::string> load_word_list(const std::filesystem::path& path);

}  // namespace promptsteer
