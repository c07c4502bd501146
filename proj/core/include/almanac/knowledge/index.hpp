#pragma once

#include "almanac/knowledge/embed.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

namespace almanac::knowledge {

enum class Source { Literature, Calculator };

std::string_view to_string(Source source) noexcept;

struct Document {
    std::string doc_id;
    std::string title;
    std::string body;  ///< markdown
    Source source = Source::Literature;
    std::map<std::string, int, std::less<>> terms;  ///< derived from title and body
};

/// Builds a document and derives its term frequencies with tokenize().
Document make_document(std::string doc_id, std::string title, std::string body, Source source = Source::Literature);

struct Hit {
    std::string doc_id;
    double score = 0;

    bool operator==(const Hit&) const = default;
};

inline constexpr double kBm25K1 = 1.2;
inline constexpr double kBm25B = 0.75;
inline constexpr double kRrfConstant = 60;

/**
 * @brief Linear-scan document collection with dense, sparse and fused ranking.
 *
 * Searches take a shared lock; add() takes the exclusive lock. Every ranking
 * breaks score ties by ascending doc_id.
 */
class Collection {
public:
    explicit Collection(std::shared_ptr<const Embedder> embedder);

    /// Throws DuplicateId.
    void add(Document doc);
    std::size_t size() const;
    std::optional<Document> document(std::string_view doc_id) const;
    std::vector<std::string> doc_ids() const;
    const Embedder& embedder() const noexcept { return *embedder_; }
    std::size_t dimension() const noexcept { return embedder_->dimension(); }

    /// Top-k by cosine over the first d entries. Throws EmptyIndex, InvalidArgument.
    std::vector<Hit> dense_search(const EmbeddingVector& query, std::size_t d, std::size_t k) const;
    /// Top-k by BM25; documents sharing no term with the query are left out.
    std::vector<Hit> sparse_search(std::string_view query, std::size_t k) const;
    /// Reciprocal rank fusion of the full dense and sparse rankings.
    std::vector<Hit> hybrid_search(std::string_view query, std::size_t d, std::size_t k) const;

private:
    struct Entry {
        Document doc;
        EmbeddingVector vector;
        int length = 0;
    };

    void check_args(std::size_t d, std::size_t k) const;
    std::vector<Hit> dense_unlocked(const EmbeddingVector& query, std::size_t d, std::size_t k) const;
    std::vector<Hit> sparse_unlocked(std::string_view query, std::size_t k) const;

    std::shared_ptr<const Embedder> embedder_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, Entry, std::less<>> entries_;
    std::map<std::string, int, std::less<>> document_frequency_;
    long total_length_ = 0;
};

/// Sorts by descending score then ascending doc_id and keeps the first k.
void rank(std::vector<Hit>& hits, std::size_t k);

/// Reads every `*.md` file in `dir` (sorted by name). The doc_id is the file
/// stem and the title is the first `# ` heading, else the stem.
std::vector<Document> load_markdown_dir(const std::filesystem::path& dir, Source source = Source::Literature);

}  // namespace almanac::knowledge
