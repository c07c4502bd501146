#include "almanac/knowledge/toolkit.hpp"

#include "almanac/knowledge/embed.hpp"

namespace almanac::knowledge {

Toolkit load_toolkit(const std::filesystem::path& data_dir, Synthesizer synthesizer) {
    return load_toolkit(data_dir / "corpus", data_dir / "calculators", std::move(synthesizer));
}

Toolkit load_toolkit(const std::filesystem::path& corpus_dir, const std::filesystem::path& calculators_dir,
                     Synthesizer synthesizer) {
    auto calculators = std::make_shared<CalculatorLibrary>();
    if (!calculators_dir.empty()) calculators->load_dir(calculators_dir);
    auto corpus = std::make_shared<Collection>(std::make_shared<HashingEmbedder>());
    if (!corpus_dir.empty()) {
        for (auto& doc : load_markdown_dir(corpus_dir)) corpus->add(std::move(doc));
    }
    for (auto& doc : calculators->documents()) corpus->add(std::move(doc));
    auto literature = std::make_shared<LiteratureTool>(corpus, std::move(synthesizer));
    return {corpus, literature, calculators};
}

}  // namespace almanac::knowledge
