#include "almanac/knowledge/index.hpp"
#include "almanac/knowledge/toolkit.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace almanac::knowledge;

const Toolkit& toolkit() {
    static const Toolkit t = load_toolkit(std::filesystem::path(ALMANAC_DATA_DIR));
    return t;
}

constexpr const char* kQuery = "first line treatment for community acquired pneumonia in adults";

// Truncation dims; 0 stands for the full embedding.
void BM_Dense(benchmark::State& state) {
    const auto& c = *toolkit().corpus;
    const auto d = state.range(0) == 0 ? c.dimension() : static_cast<std::size_t>(state.range(0));
    const auto q = c.embedder().embed(kQuery);
    for (auto _ : state) benchmark::DoNotOptimize(c.dense_search(q, d, 5));
}
BENCHMARK(BM_Dense)->Arg(64)->Arg(256)->Arg(0);

void BM_Sparse(benchmark::State& state) {
    const auto& c = *toolkit().corpus;
    for (auto _ : state) benchmark::DoNotOptimize(c.sparse_search(kQuery, 5));
}
BENCHMARK(BM_Sparse);

void BM_Hybrid(benchmark::State& state) {
    const auto& c = *toolkit().corpus;
    for (auto _ : state) benchmark::DoNotOptimize(c.hybrid_search(kQuery, c.dimension(), 5));
}
BENCHMARK(BM_Hybrid);

void BM_Embed(benchmark::State& state) {
    const auto& c = *toolkit().corpus;
    for (auto _ : state) benchmark::DoNotOptimize(c.embedder().embed(kQuery));
}
BENCHMARK(BM_Embed);

}  // namespace
