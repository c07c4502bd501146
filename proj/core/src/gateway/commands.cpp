#include "almanac/gateway/commands.hpp"

#include "almanac/common/error.hpp"
#include "almanac/common/text.hpp"
#include "almanac/ehrqa/generate.hpp"
#include "almanac/eval/benchmark.hpp"
#include "almanac/fhir/bundle.hpp"
#include "almanac/gateway/gateway.hpp"
#include "almanac/knowledge/toolkit.hpp"
#include "almanac/synth/fixture.hpp"

namespace almanac::gateway {

namespace {

// Benchmark stores never write; a pinned clock keeps dry-run previews stable.
const char* kBenchmarkClock = "2160-06-01T08:00:00Z";

tools::Registry registry_from(const std::filesystem::path& schema) {
    return schema.empty() ? tools::builtin_registry() : tools::load_registry(schema);
}

knowledge::Toolkit toolkit_from(const std::filesystem::path& data_dir) {
    if (data_dir.empty()) return {};
    return knowledge::load_toolkit(data_dir);
}

}  // namespace

std::unique_ptr<store::Store> open_store(const StoreSource& source) {
    auto s = std::make_unique<store::Store>(fixed_clock(*fhir::DateTime::parse(kBenchmarkClock)));
    if (!source.snapshot.empty()) {
        s->restore(source.snapshot);
    } else if (!source.bundle.empty()) {
        s->ingest_bundle(fhir::parse_bundle(read_file(source.bundle)));
    } else {
        s->ingest_bundle(synth::generate_fixture());
    }
    return s;
}

std::size_t ingest(const std::filesystem::path& bundle, const std::filesystem::path& snapshot) {
    store::Store s;
    if (std::filesystem::exists(snapshot)) s.restore(snapshot);
    const auto added = s.ingest_bundle(fhir::parse_bundle(read_file(bundle)));
    s.snapshot(snapshot);
    return added;
}

void write_fixture(const std::filesystem::path& out, std::uint64_t seed, std::size_t patients) {
    write_file(out, fhir::bundle_to_json(synth::generate_fixture({seed, patients})).dump(2) + "\n");
}

ehrqa::Dataset generate(const GenerateOptions& options) {
    auto s = open_store(options.source);
    const auto templates = ehrqa::load_templates(options.templates);
    ehrqa::GeneratorConfig config;
    config.n_questions = options.n;
    config.p_negative = options.p;
    config.seed = options.seed;
    auto dataset = ehrqa::generate_dataset(config, *s, templates);
    if (!options.out.empty()) ehrqa::write_dataset(dataset, options.out);
    return dataset;
}

eval::AggregateReport run(const RunOptions& o) {
    const auto dataset = ehrqa::read_dataset(o.dataset);
    auto s = open_store(o.source);
    const auto registry = registry_from(o.schema);
    const auto toolkit = toolkit_from(o.data_dir);
    const auto templates = ehrqa::load_templates(o.templates, registry);
    const eval::Evaluator evaluator(*s, registry, toolkit);

    std::shared_ptr<planner::PlannerBackend> backend;
    eval::Responder responder;
    if (o.backend == "oracle" || o.backend == "oracle-corrupted") {
        responder = eval::oracle_responder(templates, {o.backend == "oracle-corrupted"});
    } else {
        BackendConfig config;
        config.kind = o.backend;
        config.endpoint = o.endpoint;
        config.model = o.model;
        config.credentials_env = o.credentials_env;
        config.replay_path = o.replay;
        if (config.kind == "replay" && config.replay_path.empty()) {
            throw Error(Errc::InvalidArgument, "the replay backend needs a transcript");
        }
        if (config.kind != "stub" && config.kind != "replay" && config.kind != "external") {
            throw Error(Errc::InvalidArgument, "unknown backend '" + o.backend + "'");
        }
        backend = make_backend(config, o.no_external, templates);
        auto transcript = o.transcript.empty() ? o.out / "transcript.jsonl" : o.transcript;
        std::filesystem::remove(transcript);
        responder = eval::backend_responder(*backend, *s, registry, o.context_budget, o.retry_budget, transcript);
    }

    auto result = eval::run_benchmark(dataset, responder, evaluator, o.label);
    write_file(o.out / "responses.jsonl", eval::responses_text(result.responses));
    eval::emit_report(result.report, o.out);
    return result.report;
}

eval::AggregateReport score(const ScoreOptions& o) {
    const auto dataset = ehrqa::read_dataset(o.dataset);
    const auto responses = eval::parse_responses(read_file(o.responses));
    auto s = open_store(o.source);
    const auto registry = registry_from(o.schema);
    const auto toolkit = toolkit_from(o.data_dir);
    const eval::Evaluator evaluator(*s, registry, toolkit);
    auto report = eval::score_responses(dataset, responses, evaluator, o.label);
    eval::emit_report(report, o.out);
    return report;
}

std::string summary_line(const eval::AggregateReport& report) {
    const auto& st = report.stats;
    return report.label + ": n=" + std::to_string(st.n) + " mean " + eval::present(st.mean) + " (95% CI " +
           eval::present(st.ci_low) + "-" + eval::present(st.ci_high) + "), success " +
           eval::present_percent(st.success_rate);
}

}  // namespace almanac::gateway
