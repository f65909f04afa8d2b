#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "redteam/error.hpp"

namespace redteam {

enum class CipherKind { Rot13, Vigenere };
enum class Direction { Encrypt, Decrypt };

constexpr std::string_view to_string(CipherKind kind) {
    return kind == CipherKind::Rot13 ? "ROT13" : "VIGENERE";
}

constexpr bool is_ascii_upper(char c) noexcept { return c >= 'A' && c <= 'Z'; }
constexpr bool is_ascii_lower(char c) noexcept { return c >= 'a' && c <= 'z'; }
constexpr bool is_ascii_letter(char c) noexcept { return is_ascii_upper(c) || is_ascii_lower(c); }

// Keyword is stored upper-cased; ROT13 keys carry no keyword.
class CipherKey {
public:
    static CipherKey rot13() { return CipherKey(CipherKind::Rot13, {}); }

    static CipherKey vigenere(std::string_view keyword) {
        if (keyword.empty()) fail(ErrorKind::InvalidKey, "Vigenere keyword is empty");
        std::string folded;
        folded.reserve(keyword.size());
        for (char c : keyword) {
            if (!is_ascii_letter(c)) {
                fail(ErrorKind::InvalidKey, "Vigenere keyword must be letters A-Z, got '" +
                                                std::string(keyword) + "'");
            }
            folded.push_back(is_ascii_lower(c) ? static_cast<char>(c - 'a' + 'A') : c);
        }
        return CipherKey(CipherKind::Vigenere, std::move(folded));
    }

    CipherKind kind() const noexcept { return kind_; }
    const std::string& keyword() const noexcept { return keyword_; }

    friend bool operator==(const CipherKey&, const CipherKey&) = default;

private:
    CipherKey(CipherKind kind, std::string keyword) : kind_(kind), keyword_(std::move(keyword)) {}

    CipherKind kind_;
    std::string keyword_;
};

namespace detail {

constexpr char shift_letter(char c, int shift) noexcept {
    const char base = is_ascii_upper(c) ? 'A' : 'a';
    return static_cast<char>(base + ((c - base + shift) % 26 + 26) % 26);
}

}  // namespace detail

inline std::string rot13(std::string_view text) {
    std::string out(text);
    for (char& c : out) {
        if (is_ascii_letter(c)) c = detail::shift_letter(c, 13);
    }
    return out;
}

// The key index advances only on letters, so punctuation and spacing are fixed
// points and never desynchronize the keystream.
inline std::string vigenere(std::string_view text, const CipherKey& key, Direction direction) {
    if (key.kind() != CipherKind::Vigenere || key.keyword().empty()) {
        fail(ErrorKind::InvalidKey, "vigenere() requires a Vigenere key");
    }
    const std::string& kw = key.keyword();
    const int sign = direction == Direction::Encrypt ? 1 : -1;
    std::string out(text);
    std::size_t k = 0;
    for (char& c : out) {
        if (!is_ascii_letter(c)) continue;
        c = detail::shift_letter(c, sign * (kw[k] - 'A'));
        k = (k + 1 == kw.size()) ? 0 : k + 1;
    }
    return out;
}

inline std::string apply_cipher(std::string_view text, const CipherKey& key, Direction direction) {
    return key.kind() == CipherKind::Rot13 ? rot13(text) : vigenere(text, key, direction);
}

}  // namespace redteam
