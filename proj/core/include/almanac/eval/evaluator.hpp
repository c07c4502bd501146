#pragma once

#include "almanac/ehrqa/item.hpp"
#include "almanac/exec/executor.hpp"
#include "almanac/knowledge/toolkit.hpp"
#include "almanac/script/script.hpp"
#include "almanac/store/store.hpp"
#include "almanac/tools/registry.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace almanac::eval {

using nlohmann::json;

namespace failure_code {
inline constexpr const char* kUnparseable = "UNPARSEABLE";
inline constexpr const char* kFunctionMismatch = "FUNCTION_MISMATCH";
inline constexpr const char* kParamMismatch = "PARAM_MISMATCH";
}  // namespace failure_code

struct ScoreCard {
    std::string item_id;
    std::string template_id;  ///< empty for negatives
    bool negative = false;
    bool functions_ok = false;
    bool params_ok = false;
    bool validity_ok = false;
    int score = 0;
    std::vector<std::string> failure_codes;  ///< in detection order, no duplicates

    json to_json() const;
    static ScoreCard from_json(const json& j);
    bool operator==(const ScoreCard&) const = default;
};

/// True when `response` satisfies `gold` under `match`. `resource_ref`
/// compares ids with any `Type/` prefix removed.
bool value_matches(ehrqa::Matcher match, const json& gold, const json& response, bool resource_ref = false);

/**
 * @brief Three-criterion sequential scorer.
 *
 * Functions (multiset of names), then parameters (gold constraints and call
 * validation), then validity (static typecheck and a dry run against the
 * store). A criterion only counts when every earlier one passed.
 */
class Evaluator {
public:
    Evaluator(store::Store& store, const tools::Registry& registry, const knowledge::Toolkit& toolkit = {});

    ScoreCard score(const ehrqa::EhrqaItem& item, const script::Script& script) const;
    /// Extracts and parses the script first; unparseable text scores 0.
    ScoreCard score_text(const ehrqa::EhrqaItem& item, std::string_view response) const;

private:
    store::Store& store_;
    const tools::Registry& registry_;
    exec::ToolRuntime runtime_;
    exec::Executor executor_;
};

/// Summary numbers for one score distribution.
struct ScoreStats {
    std::size_t n = 0;
    std::array<std::size_t, 4> counts{};  ///< index = score
    double mean = 0;
    double sd = 0;  ///< sample standard deviation
    double ci_low = 0;
    double ci_high = 0;
    double success_rate = 0;  ///< share of perfect scores
};

/// Normal-approximation interval mean +/- 1.96 s / sqrt(n). Throws EmptyInput.
ScoreStats stats_from_counts(const std::array<std::size_t, 4>& counts);

/// Two-decimal rendering used in reports, e.g. `2.45`.
std::string present(double value);
/// `74%`.
std::string present_percent(double share);

struct AggregateReport {
    std::string label;
    ScoreStats stats;
    std::vector<ScoreCard> cards;  ///< sorted by item_id
    std::map<std::string, std::size_t> failure_histogram;

    json summary_json() const;
};

/// Throws EmptyInput. Independent of card order.
AggregateReport aggregate(std::vector<ScoreCard> cards, std::string label = "almanac");

/// Grid width of heatmap.csv.
inline constexpr std::size_t kHeatmapWidth = 20;

/// Writes scores.csv, summary.json, heatmap.csv and stacked_bars.csv. Throws IoError.
void emit_report(const AggregateReport& report, const std::filesystem::path& out_dir);

std::string scores_csv(const AggregateReport& report);
std::string heatmap_csv(const AggregateReport& report);
std::string stacked_bars_csv(const AggregateReport& report);

/// One planner reply for one item.
struct Response {
    std::string item_id;
    std::string text;
    bool operator==(const Response&) const = default;
};

/// JSON Lines `{"item_id":...,"response":...}`.
std::string responses_text(const std::vector<Response>& responses);
/// Throws MalformedRecord naming the line.
std::vector<Response> parse_responses(std::string_view text);

}  // namespace almanac::eval
