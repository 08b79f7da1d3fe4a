#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace esgkb::text {

std::string to_lower(std::string_view s);
std::string_view trim(std::string_view s);

// Split on a single character; empty fields are kept.
std::vector<std::string> split(std::string_view s, char sep);

// Split on runs of ASCII whitespace; empty fields are dropped.
std::vector<std::string> split_ws(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Lowercase, trim, collapse internal whitespace to single spaces.
std::string normalize_phrase(std::string_view s);

// Case-insensitive key used for topic-name lookup.
std::string fold_key(std::string_view s);

// 64-bit FNV-1a, stable across platforms; used for cache keys.
std::uint64_t fnv1a(std::string_view s);
std::string hex64(std::uint64_t v);

// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

}  // namespace esgkb::text
