// Word-level tokenizer: lowercased, whitespace collapsed, punctuation split
// into standalone tokens. Deterministic and reversible on in-vocab text.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tinyembed {

struct Token {
    std::string text;   // canonical (lowercased) form
    int begin = 0;      // byte offsets into the raw input
    int end = 0;
};

struct Vocabulary {
    std::map<std::string, int> token_to_id;
    std::vector<std::string> id_to_token;
    int pad_id = 0;
    int unk_id = 1;
    int eos_id = 2;

    int size() const { return static_cast<int>(id_to_token.size()); }
    int lookup(const std::string& token) const;  // unk_id when missing
};

inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kUnkToken = "<unk>";
inline constexpr const char* kEosToken = "<eos>";

// Splits raw text into lowercased word and punctuation tokens with byte
// offsets into the input. Words are maximal runs of non-space, non-punctuation
// bytes; each ASCII punctuation byte is its own token.
std::vector<Token> tokenize(const std::string& text);

// Lowercase, collapse whitespace, put single spaces around punctuation.
// Idempotent; decode(encode(t)) == canonical_normalize(t) for in-vocab t.
std::string canonical_normalize(const std::string& text);

Vocabulary build_vocab(std::span<const std::string> corpus, int max_size);

struct TokenSequence {
    std::vector<int> ids;
    std::vector<Token> tokens;  // parallel to ids; offsets refer to the encoded text
};

TokenSequence encode(const std::string& text, const Vocabulary& vocab);

std::string decode(std::span<const int> ids, const Vocabulary& vocab);

void save_vocab(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocab(const std::string& path);

}  // namespace tinyembed
