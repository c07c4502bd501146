#pragma once

#include "almanac/knowledge/calculator.hpp"
#include "almanac/knowledge/literature.hpp"

#include <filesystem>
#include <memory>

namespace almanac::knowledge {

struct Toolkit {
    std::shared_ptr<const Collection> corpus;
    std::shared_ptr<const LiteratureTool> literature;
    std::shared_ptr<const CalculatorLibrary> calculators;
};

/// Loads `<data_dir>/corpus/*.md` and `<data_dir>/calculators/*.md`. Calculator
/// pages are indexed alongside the literature.
Toolkit load_toolkit(const std::filesystem::path& data_dir, Synthesizer synthesizer = {});

/// Same, from explicit directories. An empty path contributes nothing.
Toolkit load_toolkit(const std::filesystem::path& corpus_dir, const std::filesystem::path& calculators_dir,
                     Synthesizer synthesizer = {});

}  // namespace almanac::knowledge
