#include "almanac/knowledge/index.hpp"

#include "almanac/common/error.hpp"
#include "almanac/common/text.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <set>

namespace almanac::knowledge {

std::string_view to_string(Source source) noexcept {
    return source == Source::Calculator ? "calculator" : "literature";
}

Document make_document(std::string doc_id, std::string title, std::string body, Source source) {
    Document doc{std::move(doc_id), std::move(title), std::move(body), source, {}};
    for (auto& t : tokenize(doc.title + "\n" + doc.body)) ++doc.terms[t];
    return doc;
}

void rank(std::vector<Hit>& hits, std::size_t k) {
    std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    });
    if (hits.size() > k) hits.resize(k);
}

Collection::Collection(std::shared_ptr<const Embedder> embedder) : embedder_(std::move(embedder)) {
    if (!embedder_) throw Error(Errc::InvalidArgument, "collection needs an embedder");
}

void Collection::add(Document doc) {
    // Terms are always re-derived so they cannot drift from the body.
    doc = make_document(std::move(doc.doc_id), std::move(doc.title), std::move(doc.body), doc.source);
    Entry entry;
    entry.vector = embedder_->embed(doc.title + "\n" + doc.body);
    for (const auto& [term, n] : doc.terms) entry.length += n;

    std::unique_lock lock(mutex_);
    if (entries_.count(doc.doc_id)) throw Error(Errc::DuplicateId, "document " + doc.doc_id);
    for (const auto& [term, n] : doc.terms) ++document_frequency_[term];
    total_length_ += entry.length;
    std::string id = doc.doc_id;
    entry.doc = std::move(doc);
    entries_.emplace(std::move(id), std::move(entry));
}

std::size_t Collection::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

std::optional<Document> Collection::document(std::string_view doc_id) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(doc_id);
    if (it == entries_.end()) return std::nullopt;
    return it->second.doc;
}

std::vector<std::string> Collection::doc_ids() const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, e] : entries_) out.push_back(id);
    return out;
}

void Collection::check_args(std::size_t d, std::size_t k) const {
    if (entries_.empty()) throw Error(Errc::EmptyIndex, "collection has no documents");
    if (d < 1 || d > dimension()) {
        throw Error(Errc::InvalidArgument, "d=" + std::to_string(d) + " outside [1, " + std::to_string(dimension()) + "]");
    }
    if (k < 1) throw Error(Errc::InvalidArgument, "k must be at least 1");
}

std::vector<Hit> Collection::dense_unlocked(const EmbeddingVector& query, std::size_t d, std::size_t k) const {
    std::vector<Hit> hits;
    hits.reserve(entries_.size());
    for (const auto& [id, e] : entries_) hits.push_back({id, cosine(query, e.vector, d)});
    rank(hits, k);
    return hits;
}

std::vector<Hit> Collection::sparse_unlocked(std::string_view query, std::size_t k) const {
    const double n = static_cast<double>(entries_.size());
    const double avg = total_length_ > 0 ? static_cast<double>(total_length_) / n : 1.0;
    std::set<std::string> terms;
    for (auto& t : tokenize(query)) terms.insert(std::move(t));

    std::vector<Hit> hits;
    for (const auto& [id, e] : entries_) {
        double score = 0;
        bool matched = false;
        for (const auto& t : terms) {
            auto tf_it = e.doc.terms.find(t);
            if (tf_it == e.doc.terms.end()) continue;
            matched = true;
            const double df = document_frequency_.find(t)->second;
            const double idf = std::log(1 + (n - df + 0.5) / (df + 0.5));
            const double tf = tf_it->second;
            score += idf * tf * (kBm25K1 + 1) / (tf + kBm25K1 * (1 - kBm25B + kBm25B * e.length / avg));
        }
        if (matched) hits.push_back({id, score});
    }
    rank(hits, k);
    return hits;
}

std::vector<Hit> Collection::dense_search(const EmbeddingVector& query, std::size_t d, std::size_t k) const {
    std::shared_lock lock(mutex_);
    check_args(d, k);
    if (query.dimension() != dimension()) {
        throw Error(Errc::InvalidArgument, "query has " + std::to_string(query.dimension()) + " dimensions, index has " +
                                               std::to_string(dimension()));
    }
    return dense_unlocked(query, d, k);
}

std::vector<Hit> Collection::sparse_search(std::string_view query, std::size_t k) const {
    std::shared_lock lock(mutex_);
    check_args(dimension(), k);
    return sparse_unlocked(query, k);
}

std::vector<Hit> Collection::hybrid_search(std::string_view query, std::size_t d, std::size_t k) const {
    const auto vec = embedder_->embed(query);
    std::shared_lock lock(mutex_);
    check_args(d, k);
    const auto dense = dense_unlocked(vec, d, entries_.size());
    const auto sparse = sparse_unlocked(query, entries_.size());
    std::map<std::string, double> fused;
    for (std::size_t i = 0; i < dense.size(); ++i) fused[dense[i].doc_id] += 1.0 / (kRrfConstant + double(i + 1));
    for (std::size_t i = 0; i < sparse.size(); ++i) fused[sparse[i].doc_id] += 1.0 / (kRrfConstant + double(i + 1));
    std::vector<Hit> hits;
    hits.reserve(fused.size());
    for (auto& [id, score] : fused) hits.push_back({id, score});
    rank(hits, k);
    return hits;
}

std::vector<Document> load_markdown_dir(const std::filesystem::path& dir, Source source) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw Error(Errc::IoError, dir.string() + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".md") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<Document> out;
    for (const auto& file : files) {
        const std::string body = read_file(file);
        std::string title = file.stem().string();
        for (const auto& line : split(body, '\n')) {
            if (starts_with(line, "# ")) {
                title = std::string(trim(std::string_view(line).substr(2)));
                break;
            }
        }
        out.push_back(make_document(file.stem().string(), title, body, source));
    }
    return out;
}

}  // namespace almanac::knowledge
