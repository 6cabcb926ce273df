#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ragqa {

/// Shared word tokenizer used by BM25, corpus word counts and token F1.
///
/// Segmentation follows Unicode word boundaries. Segments that contain no
/// letter or digit (spaces, punctuation, symbols) are dropped, the rest are
/// lowercased with root-locale rules. No stemming, no stopword removal.
std::vector<std::string> tokenize(std::string_view text);

/// Number of tokens tokenize() would return.
std::size_t word_count(std::string_view text);

bool is_valid_utf8(std::string_view text);

/// Byte offset of every code point boundary: result[i] is the byte offset of
/// code point i, and result.back() == text.size(). Requires valid UTF-8.
std::vector<std::size_t> codepoint_offsets(std::string_view text);

std::size_t codepoint_length(std::string_view text);

std::string sha256_hex(std::string_view data);

/// FNV-1a followed by a splitmix64 finalizer. Stable across platforms and
/// processes, unlike std::hash.
std::uint64_t stable_hash(std::string_view data, std::uint64_t seed = 0);

/// Uniform integer in [0, bound) from a full-range 64-bit engine such as
/// std::mt19937_64. Unlike std::uniform_int_distribution the result sequence
/// is identical on every standard library.
template <typename Engine>
std::uint64_t uniform_below(Engine& engine, std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    while (true) {
        const std::uint64_t r = engine();
        if (r >= threshold) return r % bound;
    }
}

std::string trim(std::string_view s);

/// Splits on a single character, keeping empty fields.
std::vector<std::string> split(std::string_view s, char sep);

}  // namespace ragqa
