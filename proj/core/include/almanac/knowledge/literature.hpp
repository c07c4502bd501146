#pragma once

#include "almanac/knowledge/index.hpp"

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace almanac::knowledge {

struct Passage {
    std::string doc_id;
    std::string text;  ///< verbatim paragraph of the document body
    double score = 0;
};

struct LiteratureAnswer {
    std::string answer;
    std::vector<std::string> citations;  ///< always a subset of the passages' doc ids
    std::vector<Passage> passages;
    bool extractive = true;
};

/// Optional answer writer: receives a prompt built from the query and passages.
using Synthesizer = std::function<std::string(const std::string& prompt)>;

/**
 * @brief Answers clinical questions from an offline corpus.
 *
 * Without a synthesizer the answer is the best matching paragraph of the top
 * document. With one, the synthesizer's text is returned and citations are the
 * retrieved documents it mentions as `[doc_id]` (all retrieved ones if none).
 */
class LiteratureTool {
public:
    LiteratureTool(std::shared_ptr<const Collection> corpus, Synthesizer synthesizer = {},
                   std::size_t top_k = 3);

    /// Throws EmptyIndex.
    LiteratureAnswer answer(std::string_view query) const;

    /// Flattened text for the search_medical_literature tool.
    static std::string render(const LiteratureAnswer& answer);

private:
    std::shared_ptr<const Collection> corpus_;
    Synthesizer synthesizer_;
    std::size_t top_k_;
};

/// Paragraphs (blank-line separated, trimmed, non-empty) excluding headings-only blocks.
std::vector<std::string> paragraphs(std::string_view body);

}  // namespace almanac::knowledge
