#include "almanac/common/error.hpp"
#include "almanac/gateway/commands.hpp"
#include "almanac/gateway/gateway.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <iostream>

namespace {

using almanac::Errc;
namespace gw = almanac::gateway;

constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kBackend = 3;

gw::Gateway* g_serving = nullptr;

void on_signal(int) {
    if (g_serving) g_serving->stop();
}

void add_source(CLI::App* cmd, gw::StoreSource& source) {
    cmd->add_option("--snapshot", source.snapshot, "Store snapshot to read")->check(CLI::ExistingFile);
    cmd->add_option("--bundle", source.bundle, "FHIR bundle to read (default: built-in synthetic fixture)")
        ->check(CLI::ExistingFile);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Almanac copilot gateway and EHR-QA benchmark tools"};
    app.require_subcommand(1);

    // serve
    std::filesystem::path config_path;
    bool serve_no_external = false;
    std::optional<int> serve_port;
    auto* serve = app.add_subcommand("serve", "Run the HTTP gateway");
    serve->add_option("--config", config_path, "Key-value config file")->required()->check(CLI::ExistingFile);
    serve->add_flag("--no-external", serve_no_external, "Refuse external planner backends");
    serve->add_option("--port", serve_port, "Override the configured port");

    // ingest
    std::filesystem::path ingest_bundle, ingest_snapshot;
    auto* ingest = app.add_subcommand("ingest", "Add a FHIR bundle to a store snapshot");
    ingest->add_option("bundle", ingest_bundle, "Bundle or JSON array of resources")->required()->check(CLI::ExistingFile);
    ingest->add_option("--snapshot", ingest_snapshot, "Snapshot to update (created when missing)")->required();

    // synth
    std::filesystem::path synth_out;
    std::uint64_t synth_seed = 2150;
    std::size_t synth_patients = 6;
    auto* synth = app.add_subcommand("synth", "Write the synthetic patient fixture");
    synth->add_option("--out", synth_out, "Output bundle path")->required();
    synth->add_option("--seed", synth_seed, "Generator seed");
    synth->add_option("--patients", synth_patients, "Number of patients")->check(CLI::PositiveNumber);

    auto* ehrqa = app.add_subcommand("ehrqa", "EHR-QA benchmark");
    ehrqa->require_subcommand(1);

    gw::GenerateOptions gen;
    gen.templates = ALMANAC_DEFAULT_TEMPLATES;
    auto* generate = ehrqa->add_subcommand("generate", "Generate a benchmark dataset");
    generate->add_option("--n", gen.n, "Number of questions")->check(CLI::PositiveNumber);
    generate->add_option("--p", gen.p, "Probability of an unanswerable question")->check(CLI::Range(0.0, 1.0));
    generate->add_option("--seed", gen.seed, "Seed");
    generate->add_option("--out", gen.out, "Dataset file (JSON Lines)")->required();
    generate->add_option("--templates", gen.templates, "Template bank")->check(CLI::ExistingFile);
    add_source(generate, gen.source);

    gw::ScoreOptions sc;
    sc.data_dir = ALMANAC_DEFAULT_DATA;
    auto* score = ehrqa->add_subcommand("score", "Score recorded replies");
    score->add_option("--dataset", sc.dataset, "Dataset file")->required()->check(CLI::ExistingFile);
    score->add_option("--responses", sc.responses, "Replies (JSON Lines)")->required()->check(CLI::ExistingFile);
    score->add_option("--out", sc.out, "Report directory")->required();
    score->add_option("--schema", sc.schema, "Tool registry file")->check(CLI::ExistingFile);
    score->add_option("--data-dir", sc.data_dir, "Directory with corpus/ and calculators/");
    score->add_option("--label", sc.label, "Label in summary.json");
    add_source(score, sc.source);

    gw::RunOptions rn;
    rn.templates = ALMANAC_DEFAULT_TEMPLATES;
    rn.data_dir = ALMANAC_DEFAULT_DATA;
    auto* run = ehrqa->add_subcommand("run", "Plan and score every item");
    run->add_option("--dataset", rn.dataset, "Dataset file")->required()->check(CLI::ExistingFile);
    run->add_option("--backend", rn.backend, "Planner")
        ->check(CLI::IsMember({"oracle", "oracle-corrupted", "stub", "replay", "external"}));
    run->add_option("--out", rn.out, "Report directory")->required();
    run->add_option("--templates", rn.templates, "Template bank")->check(CLI::ExistingFile);
    run->add_option("--schema", rn.schema, "Tool registry file")->check(CLI::ExistingFile);
    run->add_option("--data-dir", rn.data_dir, "Directory with corpus/ and calculators/");
    run->add_option("--replay", rn.replay, "Transcript for the replay backend")->check(CLI::ExistingFile);
    run->add_option("--transcript", rn.transcript, "Where to log backend exchanges");
    run->add_option("--endpoint", rn.endpoint, "External backend URL (http only)");
    run->add_option("--model", rn.model, "External model name");
    run->add_option("--credentials-env", rn.credentials_env, "Environment variable holding the API token");
    run->add_flag("--no-external", rn.no_external, "Refuse the external backend");
    run->add_option("--context-budget", rn.context_budget, "History digest budget (characters)")
        ->check(CLI::PositiveNumber);
    run->add_option("--retry-budget", rn.retry_budget, "Re-prompts after unparseable output");
    run->add_option("--label", rn.label, "Label in summary.json");
    add_source(run, rn.source);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsage;
    }

    try {
        if (*serve) {
            auto config = gw::load_config(config_path);
            if (serve_no_external) config.no_external = true;
            if (serve_port) config.port = *serve_port;
            auto gateway = gw::Gateway::from_config(config);
            g_serving = gateway.get();
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << "listening on " << config.bind_address << ":" << config.port << "\n";
            gateway->listen(config.bind_address, config.port);
            g_serving = nullptr;
        } else if (*ingest) {
            std::cout << gw::ingest(ingest_bundle, ingest_snapshot) << " resources ingested\n";
        } else if (*synth) {
            gw::write_fixture(synth_out, synth_seed, synth_patients);
        } else if (*generate) {
            const auto dataset = gw::generate(gen);
            std::size_t negatives = 0;
            for (const auto& item : dataset.items) negatives += item.negative ? 1 : 0;
            std::cout << dataset.items.size() << " items, " << negatives << " unanswerable\n";
        } else if (*score) {
            std::cout << gw::summary_line(gw::score(sc)) << "\n";
        } else if (*run) {
            std::cout << gw::summary_line(gw::run(rn)) << "\n";
        }
    } catch (const almanac::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code() == Errc::BackendUnavailable ? kBackend : kData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kData;
    }
    return 0;
}
