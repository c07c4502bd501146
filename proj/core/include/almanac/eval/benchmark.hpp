#pragma once

#include "almanac/ehrqa/item.hpp"
#include "almanac/eval/evaluator.hpp"
#include "almanac/planner/planner.hpp"

#include <functional>
#include <string>
#include <vector>

namespace almanac::eval {

/// Produces the raw reply for one item.
using Responder = std::function<std::string(const ehrqa::EhrqaItem& item)>;

/// Replies printed from the reference planner.
Responder oracle_responder(const std::vector<ehrqa::QuestionTemplate>& templates,
                           planner::OracleOptions options = {});

/**
 * Replies from a planner backend, one session per item. When every attempt
 * fails to parse the last completion is returned so it scores as unparseable.
 * BackendUnavailable propagates.
 */
Responder backend_responder(planner::PlannerBackend& backend, const store::Store& store,
                            const tools::Registry& registry, std::size_t context_budget, std::size_t retry_budget,
                            std::optional<std::filesystem::path> transcript_path = std::nullopt);

struct BenchmarkRun {
    std::vector<Response> responses;
    AggregateReport report;
};

BenchmarkRun run_benchmark(const ehrqa::Dataset& dataset, const Responder& responder, const Evaluator& evaluator,
                           std::string label = "almanac");

/// Scores recorded replies. Throws MalformedRecord when an item has no reply,
/// more than one, or a reply names an unknown item.
AggregateReport score_responses(const ehrqa::Dataset& dataset, const std::vector<Response>& responses,
                                const Evaluator& evaluator, std::string label = "almanac");

}  // namespace almanac::eval
