#include "almanac/eval/benchmark.hpp"

#include "almanac/common/error.hpp"

#include <map>

namespace almanac::eval {

Responder oracle_responder(const std::vector<ehrqa::QuestionTemplate>& templates, planner::OracleOptions options) {
    return [&templates, options](const ehrqa::EhrqaItem& item) {
        return script::print_script(planner::plan_oracle(item, templates, options));
    };
}

Responder backend_responder(planner::PlannerBackend& backend, const store::Store& store,
                            const tools::Registry& registry, std::size_t context_budget, std::size_t retry_budget,
                            std::optional<std::filesystem::path> transcript_path) {
    return [&backend, &store, &registry, context_budget, retry_budget,
            transcript_path](const ehrqa::EhrqaItem& item) -> std::string {
        const auto ctx = planner::make_context(item.question, fhir::ResourceId{fhir::ResourceType::Patient, item.patient_id},
                                               store, registry, context_budget);
        // Timestamps are pinned so transcripts are byte-identical across runs.
        planner::Transcript transcript(item.item_id, transcript_path, fixed_clock(fhir::DateTime::from_epoch_seconds(0)));
        try {
            return script::print_script(planner::plan(backend, ctx, retry_budget, &transcript));
        } catch (const Error& e) {
            if (e.code() != Errc::UnparseableOutput) throw;
            return transcript.records().back().completion;
        }
    };
}

BenchmarkRun run_benchmark(const ehrqa::Dataset& dataset, const Responder& responder, const Evaluator& evaluator,
                           std::string label) {
    BenchmarkRun run;
    std::vector<ScoreCard> cards;
    for (const auto& item : dataset.items) {
        run.responses.push_back({item.item_id, responder(item)});
        cards.push_back(evaluator.score_text(item, run.responses.back().text));
    }
    run.report = aggregate(std::move(cards), std::move(label));
    return run;
}

AggregateReport score_responses(const ehrqa::Dataset& dataset, const std::vector<Response>& responses,
                                const Evaluator& evaluator, std::string label) {
    std::map<std::string, const std::string*> by_item;
    for (const auto& r : responses) {
        if (!by_item.emplace(r.item_id, &r.text).second) {
            throw Error(Errc::MalformedRecord, "more than one response for " + r.item_id);
        }
    }
    std::vector<ScoreCard> cards;
    for (const auto& item : dataset.items) {
        auto it = by_item.find(item.item_id);
        if (it == by_item.end()) throw Error(Errc::MalformedRecord, "no response for " + item.item_id);
        cards.push_back(evaluator.score_text(item, *it->second));
        by_item.erase(it);
    }
    if (!by_item.empty()) throw Error(Errc::MalformedRecord, "response for unknown item " + by_item.begin()->first);
    return aggregate(std::move(cards), std::move(label));
}

}  // namespace almanac::eval
