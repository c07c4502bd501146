#include "almanac/knowledge/embed.hpp"

#include "almanac/common/error.hpp"
#include "almanac/common/hash.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>

namespace almanac::knowledge {

namespace {

constexpr std::array<std::string_view, 40> kStopwords = {
    "a",    "an",   "and",  "are",  "as",   "at",   "be",   "by",   "can",  "do",
    "does", "for",  "from", "has",  "have", "how",  "i",    "in",   "is",   "it",
    "its",  "me",   "of",   "on",   "or",   "that", "the",  "their", "them", "there",
    "this", "to",   "was",  "what", "when", "which", "who", "with", "you",  "your",
};

bool is_stopword(std::string_view token) {
    return std::binary_search(kStopwords.begin(), kStopwords.end(), token);
}

void normalize(std::vector<float>& values, bool& zero) {
    double sum = 0;
    for (float v : values) sum += static_cast<double>(v) * v;
    zero = sum == 0;
    if (zero) return;
    const double inv = 1.0 / std::sqrt(sum);
    for (float& v : values) v = static_cast<float>(v * inv);
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    auto flush = [&] {
        if (!current.empty() && !is_stopword(current)) out.push_back(current);
        current.clear();
    };
    for (char c : text) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u)) {
            current += static_cast<char>(std::tolower(u));
        } else {
            flush();
        }
    }
    flush();
    return out;
}

EmbeddingVector truncate(const EmbeddingVector& v, std::size_t d) {
    if (d < 1 || d > v.dimension()) {
        throw Error(Errc::InvalidArgument, "prefix length " + std::to_string(d) + " outside [1, " +
                                               std::to_string(v.dimension()) + "]");
    }
    EmbeddingVector out;
    out.model_id = v.model_id;
    out.values.assign(v.values.begin(), v.values.begin() + static_cast<std::ptrdiff_t>(d));
    normalize(out.values, out.zero);
    return out;
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b, std::size_t d) {
    d = std::min({d, a.dimension(), b.dimension()});
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < d; ++i) {
        dot += static_cast<double>(a.values[i]) * b.values[i];
        na += static_cast<double>(a.values[i]) * a.values[i];
        nb += static_cast<double>(b.values[i]) * b.values[i];
    }
    if (na == 0 || nb == 0) return 0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    return cosine(a, b, std::max(a.dimension(), b.dimension()));
}

HashingEmbedder::HashingEmbedder(std::size_t dimension) : dimension_(dimension) {
    if (dimension < 1) throw Error(Errc::InvalidArgument, "embedding dimension must be positive");
    std::size_t end = std::min<std::size_t>(8, dimension);
    ends_.push_back(end);
    while (end < dimension) {
        end = std::min(end * 2, dimension);
        ends_.push_back(end);
    }
}

std::string HashingEmbedder::model_id() const {
    return "almanac-hash-" + std::to_string(dimension_);
}

EmbeddingVector HashingEmbedder::embed(std::string_view text) const {
    EmbeddingVector out;
    out.model_id = model_id();
    out.values.assign(dimension_, 0.0f);
    for (const auto& token : tokenize(text)) {
        std::size_t begin = 0;
        for (std::size_t b = 0; b < ends_.size(); ++b) {
            const std::size_t width = ends_[b] - begin;
            const std::uint64_t h = fnv1a64(std::to_string(b) + ":" + token);
            const std::size_t slot = begin + static_cast<std::size_t>(h % width);
            out.values[slot] += (h >> 63) ? -1.0f : 1.0f;
            begin = ends_[b];
        }
    }
    normalize(out.values, out.zero);
    return out;
}

}  // namespace almanac::knowledge
