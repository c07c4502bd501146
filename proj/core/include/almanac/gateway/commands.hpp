#pragma once

#include "almanac/ehrqa/item.hpp"
#include "almanac/eval/evaluator.hpp"
#include "almanac/store/store.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

/// Benchmark and data commands behind the `almanac` CLI.
namespace almanac::gateway {

/// Where records come from. A snapshot wins over a bundle; with neither the
/// built-in synthetic fixture is used.
struct StoreSource {
    std::filesystem::path snapshot;
    std::filesystem::path bundle;
};

/// Read-only store for benchmark work, on a fixed clock.
std::unique_ptr<store::Store> open_store(const StoreSource& source);

/// Adds a bundle to the snapshot at `snapshot` (created when missing). Returns resources added.
std::size_t ingest(const std::filesystem::path& bundle, const std::filesystem::path& snapshot);

/// Writes the synthetic fixture as a FHIR Bundle.
void write_fixture(const std::filesystem::path& out, std::uint64_t seed = 2150, std::size_t patients = 6);

struct GenerateOptions {
    std::size_t n = 300;
    double p = 0.1;
    std::uint64_t seed = 7;
    StoreSource source;
    std::filesystem::path templates;
    std::filesystem::path out;
};

ehrqa::Dataset generate(const GenerateOptions& options);

struct RunOptions {
    std::filesystem::path dataset;
    std::string backend = "oracle";  ///< oracle | oracle-corrupted | stub | replay | external
    StoreSource source;
    std::filesystem::path templates;
    std::filesystem::path schema;  ///< empty: built-in registry
    std::filesystem::path data_dir;  ///< corpus/ and calculators/
    std::filesystem::path out;
    std::filesystem::path replay;      ///< transcript for the replay backend
    std::filesystem::path transcript;  ///< where backend exchanges are logged; empty: <out>/transcript.jsonl
    std::string endpoint;
    std::string model = "default";
    std::string credentials_env;
    bool no_external = false;
    std::size_t context_budget = 4000;
    std::size_t retry_budget = 1;
    std::string label = "almanac";
};

/// Plans every item, scores the replies, writes responses.jsonl and the report to `out`.
eval::AggregateReport run(const RunOptions& options);

struct ScoreOptions {
    std::filesystem::path dataset;
    std::filesystem::path responses;
    StoreSource source;
    std::filesystem::path schema;
    std::filesystem::path data_dir;
    std::filesystem::path out;
    std::string label = "almanac";
};

eval::AggregateReport score(const ScoreOptions& options);

/// One line: mean, interval and success rate.
std::string summary_line(const eval::AggregateReport& report);

}  // namespace almanac::gateway
