#include "tlvd/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>

namespace tlvd::text {

namespace {

constexpr std::array<std::string_view, 33> kStopwords = {
    "a",   "an",  "and", "are", "as",   "at",  "be",  "by",   "cause", "causes", "does",
    "for", "from", "has", "in",  "is",   "it",  "its", "of",   "on",    "or",     "that",
    "the", "their", "this", "to", "was", "were", "with", "do", "not",  "any",    "can"};

bool is_word_char(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

}  // namespace

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ (seed * 0x9e3779b97f4a7c15ULL);
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (is_word_char(c)) {
            cur.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

bool is_stopword(std::string_view token) {
    return std::find(kStopwords.begin(), kStopwords.end(), token) != kStopwords.end();
}

std::vector<std::string> content_tokens(std::string_view text) {
    auto toks = tokenize(text);
    std::erase_if(toks, [](const std::string& t) { return is_stopword(t); });
    return toks;
}

std::string normalize_name(std::string_view name) {
    std::string out;
    for (const auto& tok : tokenize(name)) {
        if (!out.empty()) out.push_back(' ');
        out += tok;
    }
    return out;
}

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<double> hash_embedding(std::string_view text, std::size_t dim, std::uint64_t seed) {
    std::vector<double> v(dim, 0.0);
    if (dim == 0) return v;
    for (const auto& tok : content_tokens(text)) {
        const auto h = fnv1a64(tok, seed);
        const auto bucket = static_cast<std::size_t>(h % dim);
        v[bucket] += ((h >> 63) != 0U) ? -1.0 : 1.0;
    }
    return v;
}

std::string url_encode(std::string_view s) {
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out.push_back(static_cast<char>(c));
        } else {
            char buf[4];
            std::snprintf(buf, sizeof buf, "%%%02X", c);
            out += buf;
        }
    }
    return out;
}

}  // namespace tlvd::text
