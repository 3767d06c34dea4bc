#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace tlvd::text {

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0);
std::string hex64(std::uint64_t value);

/// Lowercase alphanumeric tokens; everything else separates.
std::vector<std::string> tokenize(std::string_view text);
/// tokenize() minus a short English stopword list.
std::vector<std::string> content_tokens(std::string_view text);
bool is_stopword(std::string_view token);

/// Lowercase, trim, strip punctuation, collapse whitespace.
std::string normalize_name(std::string_view name);

std::string trim(std::string_view s);

/// Signed feature hashing of content tokens into `dim` buckets.
std::vector<double> hash_embedding(std::string_view text, std::size_t dim, std::uint64_t seed);

std::string url_encode(std::string_view s);

}  // namespace tlvd::text
