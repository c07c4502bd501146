#include "almanac/knowledge/literature.hpp"

#include "almanac/common/error.hpp"
#include "almanac/common/text.hpp"

#include <algorithm>
#include <set>

namespace almanac::knowledge {

std::vector<std::string> paragraphs(std::string_view body) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos < body.size()) {
        std::size_t end = body.find("\n\n", pos);
        if (end == std::string_view::npos) end = body.size();
        const auto block = trim(body.substr(pos, end - pos));
        const bool heading = !block.empty() && block[0] == '#' && block.find('\n') == std::string_view::npos;
        if (!block.empty() && !heading) out.emplace_back(block);
        pos = end + 2;
    }
    return out;
}

LiteratureTool::LiteratureTool(std::shared_ptr<const Collection> corpus, Synthesizer synthesizer, std::size_t top_k)
    : corpus_(std::move(corpus)), synthesizer_(std::move(synthesizer)), top_k_(std::max<std::size_t>(top_k, 1)) {
    if (!corpus_) throw Error(Errc::InvalidArgument, "literature tool needs a corpus");
}

LiteratureAnswer LiteratureTool::answer(std::string_view query) const {
    const auto hits = corpus_->hybrid_search(query, corpus_->dimension(), top_k_);
    std::set<std::string> wanted;
    for (auto& t : tokenize(query)) wanted.insert(std::move(t));

    LiteratureAnswer out;
    for (const auto& hit : hits) {
        const auto doc = corpus_->document(hit.doc_id);
        auto paras = paragraphs(doc->body);
        if (paras.empty()) paras.push_back(doc->title);
        std::size_t best = 0;
        long best_overlap = -1;
        for (std::size_t i = 0; i < paras.size(); ++i) {
            long overlap = 0;
            for (const auto& t : tokenize(paras[i])) overlap += static_cast<long>(wanted.count(t));
            if (overlap > best_overlap) {
                best_overlap = overlap;
                best = i;
            }
        }
        out.passages.push_back({hit.doc_id, paras[best], hit.score});
    }

    if (!synthesizer_) {
        out.answer = out.passages.front().text;
        out.citations = {out.passages.front().doc_id};
        return out;
    }

    std::string prompt = "Answer the clinical question using only the sources below. Cite sources as [doc_id].\n\n";
    for (const auto& p : out.passages) prompt += "[" + p.doc_id + "]\n" + p.text + "\n\n";
    prompt += "Question: " + std::string(query) + "\n";
    out.answer = synthesizer_(prompt);
    out.extractive = false;
    for (const auto& p : out.passages) {
        if (out.answer.find("[" + p.doc_id + "]") != std::string::npos) out.citations.push_back(p.doc_id);
    }
    if (out.citations.empty()) {
        for (const auto& p : out.passages) out.citations.push_back(p.doc_id);
    }
    return out;
}

std::string LiteratureTool::render(const LiteratureAnswer& answer) {
    std::string out = answer.answer + "\n\nSources:";
    for (const auto& c : answer.citations) out += " [" + c + "]";
    return out;
}

}  // namespace almanac::knowledge
