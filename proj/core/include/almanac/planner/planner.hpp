#pragma once

#include "almanac/common/clock.hpp"
#include "almanac/ehrqa/item.hpp"
#include "almanac/script/script.hpp"
#include "almanac/store/store.hpp"
#include "almanac/tools/registry.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace almanac::planner {

struct PlanningContext {
    std::string query;
    std::optional<fhir::ResourceId> patient;
    std::string history_digest;
    std::string registry_rendering;
    std::size_t context_budget = 4000;  ///< characters allowed for history_digest
};

/// Renders the patient's digest within `budget` and the registry for the prompt.
PlanningContext make_context(std::string query, std::optional<fhir::ResourceId> patient,
                             const store::Store& store, const tools::Registry& registry, std::size_t budget = 4000);

/// Deterministic prompt. Throws ContextBudgetExceeded when the digest is over budget.
std::string build_prompt(const PlanningContext& ctx);

/// Prompt for another attempt after `error`.
std::string retry_prompt(const std::string& prompt, const std::string& error);

/// Text completion capability behind the planner.
class PlannerBackend {
public:
    virtual ~PlannerBackend() = default;
    /// Throws BackendUnavailable.
    virtual std::string complete(const std::string& prompt) = 0;
};

/// Returns its completions in order, repeating the last one.
class StubBackend final : public PlannerBackend {
public:
    explicit StubBackend(std::vector<std::string> completions);
    std::string complete(const std::string& prompt) override;
    std::size_t calls() const;

private:
    std::vector<std::string> completions_;
    mutable std::mutex mutex_;
    std::size_t next_ = 0;
};

/**
 * @brief Deterministic stub that reads the query back out of the prompt.
 *
 * The query is matched against the template texts; a match yields the
 * template's calls with the captured values, otherwise a literature search
 * for the query.
 */
class TemplateStubBackend final : public PlannerBackend {
public:
    explicit TemplateStubBackend(std::vector<ehrqa::QuestionTemplate> templates);
    std::string complete(const std::string& prompt) override;

    /// The script for a query; exposed for tests.
    script::Script plan_query(const std::string& query, const std::optional<std::string>& patient) const;

private:
    std::vector<ehrqa::QuestionTemplate> templates_;
};

struct TranscriptRecord {
    std::string session;
    std::uint64_t seq = 0;
    std::string prompt_hash;  ///< SHA-256 of the prompt
    std::string prompt;
    std::string completion;
    fhir::DateTime timestamp;

    nlohmann::json to_json() const;
    /// Throws MalformedRecord.
    static TranscriptRecord from_json(const nlohmann::json& j);
};

/// Append-only exchange log, optionally mirrored to a JSON Lines file.
class Transcript {
public:
    explicit Transcript(std::string session, std::optional<std::filesystem::path> path = std::nullopt,
                        Clock clock = system_clock());

    void append(const std::string& prompt, const std::string& completion);
    std::vector<TranscriptRecord> records() const;
    const std::string& session() const noexcept { return session_; }

private:
    std::string session_;
    std::optional<std::filesystem::path> path_;
    Clock clock_;
    mutable std::mutex mutex_;
    std::vector<TranscriptRecord> records_;
};

/// Throws MalformedRecord naming the line.
std::vector<TranscriptRecord> read_transcript(const std::filesystem::path& path);

/// Answers from recorded exchanges, keyed by prompt hash; repeated prompts
/// replay their completions in recorded order.
class ReplayBackend final : public PlannerBackend {
public:
    explicit ReplayBackend(const std::vector<TranscriptRecord>& records);
    /// Throws BackendUnavailable for a prompt that was never recorded.
    std::string complete(const std::string& prompt) override;

private:
    std::map<std::string, std::vector<std::string>> completions_;
    std::map<std::string, std::size_t> cursor_;
    std::mutex mutex_;
};

struct ExternalConfig {
    std::string endpoint;  ///< e.g. http://127.0.0.1:8000/v1/chat/completions
    std::string model = "default";
    std::string credentials_env;  ///< environment variable holding a bearer token; empty for none
    double timeout_seconds = 60;
};

/// OpenAI-compatible chat completions over plain HTTP.
class ExternalBackend final : public PlannerBackend {
public:
    explicit ExternalBackend(ExternalConfig config);
    std::string complete(const std::string& prompt) override;

private:
    ExternalConfig config_;
};

/// The JSON part of a completion: a fenced block, else first `{` to last `}`.
std::string extract_json(std::string_view completion);

/**
 * @brief Asks the backend for a script, re-prompting after parse failures.
 *
 * Makes at most retry_budget + 1 calls and logs each one. Throws
 * UnparseableOutput with the attempt count and last error, or
 * BackendUnavailable from the backend.
 */
script::Script plan(PlannerBackend& backend, const PlanningContext& ctx, std::size_t retry_budget,
                    Transcript* transcript = nullptr);

struct OracleOptions {
    /// Swap the function of every data-entry call for a literature search.
    bool corrupt_data_entry = false;
};

/// Reference script for a benchmark item. Throws UnknownTemplate.
script::Script plan_oracle(const ehrqa::EhrqaItem& item, const std::vector<ehrqa::QuestionTemplate>& templates,
                           const OracleOptions& options = {});

}  // namespace almanac::planner
