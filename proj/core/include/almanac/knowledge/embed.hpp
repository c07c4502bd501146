#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace almanac::knowledge {

inline constexpr std::size_t kDefaultDimension = 768;

struct EmbeddingVector {
    std::vector<float> values;
    std::string model_id;
    /// True when the text had no tokens; `values` is then all zeros.
    bool zero = false;

    std::size_t dimension() const noexcept { return values.size(); }
};

/// Lowercased alphanumeric runs with a small English stopword list removed.
std::vector<std::string> tokenize(std::string_view text);

/// First `d` entries renormalized to unit length. A zero prefix stays zero.
/// Throws InvalidArgument unless 1 <= d <= dimension().
EmbeddingVector truncate(const EmbeddingVector& v, std::size_t d);

/// Cosine of the first `d` entries of each vector (0 when either prefix is zero).
double cosine(const EmbeddingVector& a, const EmbeddingVector& b, std::size_t d);
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual EmbeddingVector embed(std::string_view text) const = 0;
    virtual std::size_t dimension() const noexcept = 0;
    virtual std::string model_id() const = 0;
};

/**
 * @brief Deterministic feature-hashing embedder with nested granularity.
 *
 * Dimensions are split into blocks [0,8), [8,16), [16,32), ... doubling up to
 * D. Every token is hashed once into each block with a hashed sign, so any
 * block-aligned prefix is itself a coarser hashing embedding of the same text.
 */
class HashingEmbedder final : public Embedder {
public:
    explicit HashingEmbedder(std::size_t dimension = kDefaultDimension);

    EmbeddingVector embed(std::string_view text) const override;
    std::size_t dimension() const noexcept override { return dimension_; }
    std::string model_id() const override;

    /// Block boundaries, ending with D.
    const std::vector<std::size_t>& block_ends() const noexcept { return ends_; }

private:
    std::size_t dimension_;
    std::vector<std::size_t> ends_;
};

}  // namespace almanac::knowledge
