#include "almanac/store/history.hpp"
#include "almanac/store/store.hpp"
#include "almanac/synth/fixture.hpp"

#include <benchmark/benchmark.h>

#include <memory>

namespace {

using namespace almanac;

std::unique_ptr<store::Store> fixture(std::size_t patients) {
    auto s = std::make_unique<store::Store>(fixed_clock(*fhir::DateTime::parse("2160-06-01T08:00:00Z")));
    s->ingest_bundle(synth::generate_fixture({2150, patients}));
    return s;
}

void BM_Ingest(benchmark::State& state) {
    const auto bundle = synth::generate_fixture({2150, static_cast<std::size_t>(state.range(0))});
    for (auto _ : state) {
        store::Store s;
        benchmark::DoNotOptimize(s.ingest_bundle(bundle));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(bundle.size()));
}
BENCHMARK(BM_Ingest)->Arg(6)->Arg(24);

void BM_SearchByPatient(benchmark::State& state) {
    auto s = fixture(static_cast<std::size_t>(state.range(0)));
    store::SearchQuery q;
    q.type = fhir::ResourceType::Observation;
    q.filters = {{"patient", store::FilterOp::Eq, "10000003"}, {"code", store::FilterOp::Contains, "sodium"}};
    q.sort = store::SortKey{"date", true};
    for (auto _ : state) benchmark::DoNotOptimize(s->search(q));
}
BENCHMARK(BM_SearchByPatient)->Arg(6)->Arg(24);

void BM_HistoryDigest(benchmark::State& state) {
    auto s = fixture(6);
    const fhir::ResourceId id{fhir::ResourceType::Patient, "10000001"};
    const auto budget = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(store::render_history_digest(s->patient_history(id), budget));
}
BENCHMARK(BM_HistoryDigest)->Arg(1000)->Arg(4000);

void BM_SnapshotRoundTrip(benchmark::State& state) {
    auto s = fixture(6);
    for (auto _ : state) {
        store::Store copy;
        copy.restore_text(s->snapshot_text());
        benchmark::DoNotOptimize(copy.size());
    }
}
BENCHMARK(BM_SnapshotRoundTrip);

}  // namespace
