#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "redteam/error.hpp"

namespace redteam {

// Whitespace-delimited words with punctuation left attached.
struct TokenSequence {
    std::vector<std::string> tokens;
    std::string source_text;

    std::size_t size() const noexcept { return tokens.size(); }
    bool empty() const noexcept { return tokens.empty(); }

    friend bool operator==(const TokenSequence& a, const TokenSequence& b) {
        return a.tokens == b.tokens;
    }
};

struct PartitionPair {
    TokenSequence even_stream;  // positions 0, 2, 4, ...
    TokenSequence odd_stream;   // positions 1, 3, 5, ...
    std::size_t original_length = 0;
};

constexpr bool is_ascii_space(char c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\v' || c == '\f' || c == '\r';
}

// Splits on ASCII whitespace; never yields empty tokens. Unlike tokenize()
// this accepts empty input and returns an empty list.
inline std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_ascii_space(text[i])) ++i;
        std::size_t start = i;
        while (i < text.size() && !is_ascii_space(text[i])) ++i;
        if (i > start) words.emplace_back(text.substr(start, i - start));
    }
    return words;
}

inline std::string join_words(const std::vector<std::string>& words) {
    std::size_t total = words.empty() ? 0 : words.size() - 1;
    for (const auto& w : words) total += w.size();
    std::string out;
    out.reserve(total);
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) out.push_back(' ');
        out += words[i];
    }
    return out;
}

inline TokenSequence tokenize(std::string_view input) {
    TokenSequence seq{split_words(input), std::string(input)};
    if (seq.tokens.empty()) fail(ErrorKind::EmptyPrompt, "prompt contains no tokens");
    return seq;
}

inline std::string detokenize(const TokenSequence& seq) { return join_words(seq.tokens); }

// Collapses whitespace runs to single spaces and trims the ends.
inline std::string normalize_spacing(std::string_view text) { return join_words(split_words(text)); }

inline PartitionPair partition(const TokenSequence& seq) {
    if (seq.empty()) fail(ErrorKind::EmptyPrompt, "cannot partition an empty sequence");
    PartitionPair pair;
    pair.original_length = seq.size();
    pair.even_stream.tokens.reserve((seq.size() + 1) / 2);
    pair.odd_stream.tokens.reserve(seq.size() / 2);
    for (std::size_t i = 0; i < seq.size(); ++i) {
        (i % 2 == 0 ? pair.even_stream : pair.odd_stream).tokens.push_back(seq.tokens[i]);
    }
    pair.even_stream.source_text = join_words(pair.even_stream.tokens);
    pair.odd_stream.source_text = join_words(pair.odd_stream.tokens);
    return pair;
}

inline TokenSequence reconstruct(const PartitionPair& pair) {
    const auto& even = pair.even_stream.tokens;
    const auto& odd = pair.odd_stream.tokens;
    if (even.size() < odd.size() || even.size() - odd.size() > 1) {
        fail(ErrorKind::MalformedPartition,
             "stream lengths " + std::to_string(even.size()) + "/" + std::to_string(odd.size()) +
                 " cannot interleave");
    }
    if (even.empty()) fail(ErrorKind::EmptyPrompt, "cannot reconstruct from empty streams");
    TokenSequence out;
    out.tokens.reserve(even.size() + odd.size());
    for (std::size_t i = 0; i < even.size(); ++i) {
        out.tokens.push_back(even[i]);
        if (i < odd.size()) out.tokens.push_back(odd[i]);
    }
    out.source_text = join_words(out.tokens);
    return out;
}

}  // namespace redteam
