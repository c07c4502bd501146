#include "almanac/ehrqa/generate.hpp"
#include "almanac/eval/benchmark.hpp"
#include "almanac/planner/planner.hpp"
#include "almanac/synth/fixture.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace almanac;

struct World {
    store::Store store{fixed_clock(*fhir::DateTime::parse("2160-06-01T08:00:00Z"))};
    std::vector<ehrqa::QuestionTemplate> templates;
    ehrqa::Dataset dataset;

    World() {
        store.ingest_bundle(synth::generate_fixture());
        templates = ehrqa::load_templates(std::filesystem::path(ALMANAC_TEMPLATES_DIR) / "ehrqa-templates.json");
        dataset = ehrqa::generate_dataset({}, store, templates);
    }
};

World& world() {
    static World w;
    return w;
}

void BM_GenerateDataset(benchmark::State& state) {
    auto& w = world();
    ehrqa::GeneratorConfig config;
    config.n_questions = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(ehrqa::generate_dataset(config, w.store, w.templates));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GenerateDataset)->Arg(100)->Arg(300);

void BM_PromptBuild(benchmark::State& state) {
    auto& w = world();
    const fhir::ResourceId patient{fhir::ResourceType::Patient, "10000001"};
    for (auto _ : state) {
        auto ctx = planner::make_context("Is Potassium value abnormal?", patient, w.store, tools::builtin_registry());
        benchmark::DoNotOptimize(planner::build_prompt(ctx));
    }
}
BENCHMARK(BM_PromptBuild);

void BM_ScoreOracle(benchmark::State& state) {
    auto& w = world();
    const eval::Evaluator evaluator(w.store, tools::builtin_registry());
    const auto responder = eval::oracle_responder(w.templates);
    for (auto _ : state) benchmark::DoNotOptimize(eval::run_benchmark(w.dataset, responder, evaluator));
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(w.dataset.items.size()));
}
BENCHMARK(BM_ScoreOracle)->Unit(benchmark::kMillisecond);

void BM_StubPlanner(benchmark::State& state) {
    auto& w = world();
    planner::TemplateStubBackend stub(w.templates);
    const auto& item = w.dataset.items.front();
    for (auto _ : state) benchmark::DoNotOptimize(stub.plan_query(item.question, item.patient_id));
}
BENCHMARK(BM_StubPlanner);

}  // namespace
