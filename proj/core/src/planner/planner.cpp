#include "almanac/planner/planner.hpp"

#include "almanac/common/error.hpp"
#include "almanac/common/hash.hpp"
#include "almanac/common/text.hpp"
#include "almanac/store/history.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <regex>

namespace almanac::planner {

using nlohmann::json;

namespace {

constexpr std::string_view kInstruction =
    "You are a clinical copilot working inside an electronic health record. Answer the clinician's query by "
    "planning calls to the functions listed below. Use only these functions and only values taken from the "
    "query or the patient history. Orders are reviewed by the clinician before anything is written.";

constexpr std::string_view kWireFormat =
    "Reply with a single JSON object and nothing else:\n"
    "{\"steps\":[{\"id\":\"step1\",\"function\":\"<name>\",\"args\":{\"<param>\":<value>}}]}\n"
    "Step ids are unique and steps run in order. Argument values are strings, numbers or booleans. "
    "A string \"$<step id>.result<path>\" refers to the result of an earlier step, for example "
    "\"$step1.result[0].valueQuantity.value\". A step may carry a condition "
    "\"when\":{\"lhs\":\"$step1.result[0].valueQuantity.value\",\"op\":\"lt\",\"rhs\":3.5} with op one of "
    "lt, le, gt, ge, eq, ne; the step is skipped when it is false. If no function fits, reply {\"steps\":[]}.";

std::string line_value(const std::string& prompt, std::string_view key) {
    std::string found;
    std::size_t pos = 0;
    while ((pos = prompt.find(key, pos)) != std::string::npos) {
        if (pos == 0 || prompt[pos - 1] == '\n') {
            const auto start = pos + key.size();
            const auto end = prompt.find('\n', start);
            found = prompt.substr(start, end == std::string::npos ? std::string::npos : end - start);
        }
        pos += key.size();
    }
    return found;
}

std::string escape_regex(std::string_view text) {
    static const std::string special = R"(\^$.|?*+()[]{})";
    std::string out;
    for (char c : text) {
        if (special.find(c) != std::string::npos) out += '\\';
        out += c;
    }
    return out;
}

struct CompiledTemplate {
    std::regex pattern;
    std::vector<std::string> captures;
    std::size_t literal_chars = 0;
};

CompiledTemplate compile(const ehrqa::QuestionTemplate& t) {
    static const std::regex slot_re("<([a-z_]+):([a-z_]+)>");
    CompiledTemplate c;
    std::string pattern;
    std::size_t last = 0;
    for (auto it = std::sregex_iterator(t.text.begin(), t.text.end(), slot_re); it != std::sregex_iterator(); ++it) {
        const auto literal = t.text.substr(last, it->position() - last);
        c.literal_chars += literal.size();
        pattern += escape_regex(literal);
        pattern += (*it)[2] == "patient" ? "patient (\\S+?)" : "(.+?)";
        c.captures.push_back((*it)[1]);
        last = it->position() + it->length();
    }
    c.literal_chars += t.text.size() - last;
    pattern += escape_regex(t.text.substr(last));
    // Template texts carry stray spaces; match any run of whitespace.
    pattern = std::regex_replace(pattern, std::regex(" +"), "\\s*");
    c.pattern = std::regex(pattern, std::regex::icase);
    return c;
}

script::Script literature_search(const std::string& query) {
    script::Script s;
    script::Step step;
    step.id = "step1";
    step.call.function = "search_medical_literature";
    step.call.args.emplace("query", tools::ArgValue{json(query)});
    s.steps.push_back(std::move(step));
    return s;
}

std::string url_host(const std::string& endpoint, std::string* path) {
    static const std::regex url_re(R"(^(https?)://([^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(endpoint, m, url_re)) throw Error(Errc::BackendUnavailable, "bad endpoint '" + endpoint + "'");
    if (m[1] == "https") throw Error(Errc::BackendUnavailable, "https endpoints are not supported; use a local http proxy");
    *path = m[3].matched ? m[3].str() : "/v1/chat/completions";
    return "http://" + m[2].str();
}

}  // namespace

PlanningContext make_context(std::string query, std::optional<fhir::ResourceId> patient, const store::Store& store,
                             const tools::Registry& registry, std::size_t budget) {
    PlanningContext ctx;
    ctx.query = std::move(query);
    ctx.context_budget = budget;
    if (patient) ctx.history_digest = store::render_history_digest(store.patient_history(*patient), budget);
    ctx.patient = std::move(patient);
    ctx.registry_rendering = tools::render_for_prompt(registry);
    return ctx;
}

std::string build_prompt(const PlanningContext& ctx) {
    if (ctx.history_digest.size() > ctx.context_budget) {
        throw Error(Errc::ContextBudgetExceeded, "history digest has " + std::to_string(ctx.history_digest.size()) +
                                                     " characters, budget is " + std::to_string(ctx.context_budget));
    }
    std::string p;
    p += kInstruction;
    p += "\n\n## Functions\n";
    p += ctx.registry_rendering;
    p += "\n\n## Patient history\n";
    p += ctx.history_digest.empty() ? "(none)" : ctx.history_digest;
    p += "\n\n## Output format\n";
    p += kWireFormat;
    p += "\n\n";
    if (ctx.patient) p += "Active patient: " + ctx.patient->id + "\n";
    std::string query = ctx.query;
    std::replace(query.begin(), query.end(), '\n', ' ');
    p += "Query: " + query + "\n";
    return p;
}

std::string retry_prompt(const std::string& prompt, const std::string& error) {
    return prompt + "\nYour previous reply could not be used: " + error +
           "\nReply again with only the JSON object.\n";
}

StubBackend::StubBackend(std::vector<std::string> completions) : completions_(std::move(completions)) {
    if (completions_.empty()) throw Error(Errc::InvalidArgument, "stub backend needs at least one completion");
}

std::string StubBackend::complete(const std::string&) {
    std::lock_guard lock(mutex_);
    const auto i = std::min(next_, completions_.size() - 1);
    ++next_;
    return completions_[i];
}

std::size_t StubBackend::calls() const {
    std::lock_guard lock(mutex_);
    return next_;
}

TemplateStubBackend::TemplateStubBackend(std::vector<ehrqa::QuestionTemplate> templates)
    : templates_(std::move(templates)) {}

script::Script TemplateStubBackend::plan_query(const std::string& query, const std::optional<std::string>& patient) const {
    const std::string text(trim(query));
    const ehrqa::QuestionTemplate* best = nullptr;
    ehrqa::Bindings best_bindings;
    std::size_t best_literal = 0;
    for (const auto& t : templates_) {
        const auto c = compile(t);
        std::smatch m;
        if (!std::regex_match(text, m, c.pattern)) continue;
        ehrqa::Bindings b;
        for (std::size_t i = 0; i < c.captures.size(); ++i) b[c.captures[i]] = std::string(trim(m[i + 1].str()));
        if (!b.count("patient")) {
            if (!patient) continue;
            b["patient"] = *patient;
        }
        if (!best || c.literal_chars > best_literal) {
            best = &t;
            best_bindings = std::move(b);
            best_literal = c.literal_chars;
        }
    }
    if (best) {
        try {
            return ehrqa::instantiate_calls(*best, best_bindings);
        } catch (const Error&) {
            // Captured text that does not fit the template, e.g. a non-numeric threshold.
        }
    }
    return literature_search(text);
}

std::string TemplateStubBackend::complete(const std::string& prompt) {
    const auto patient = line_value(prompt, "Active patient: ");
    const auto s = plan_query(line_value(prompt, "Query: "), patient.empty() ? std::nullopt : std::optional(patient));
    return script::print_script(s);
}

json TranscriptRecord::to_json() const {
    return {{"session", session},         {"seq", seq},           {"prompt_hash", prompt_hash},
            {"prompt", prompt},           {"completion", completion}, {"timestamp", timestamp.to_string()}};
}

TranscriptRecord TranscriptRecord::from_json(const json& j) {
    try {
        TranscriptRecord r;
        r.session = j.at("session").get<std::string>();
        r.seq = j.at("seq").get<std::uint64_t>();
        r.prompt_hash = j.at("prompt_hash").get<std::string>();
        r.prompt = j.at("prompt").get<std::string>();
        r.completion = j.at("completion").get<std::string>();
        auto ts = fhir::DateTime::parse(j.at("timestamp").get<std::string>());
        if (!ts) throw Error(Errc::MalformedRecord, "bad timestamp");
        r.timestamp = *ts;
        if (r.prompt_hash != sha256_hex(r.prompt)) throw Error(Errc::MalformedRecord, "prompt_hash does not match prompt");
        return r;
    } catch (const json::exception& e) {
        throw Error(Errc::MalformedRecord, e.what());
    }
}

Transcript::Transcript(std::string session, std::optional<std::filesystem::path> path, Clock clock)
    : session_(std::move(session)), path_(std::move(path)), clock_(std::move(clock)) {
    if (path_ && path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
}

void Transcript::append(const std::string& prompt, const std::string& completion) {
    std::lock_guard lock(mutex_);
    TranscriptRecord r{session_, records_.size() + 1, sha256_hex(prompt), prompt, completion, clock_()};
    if (path_) {
        std::ofstream out(*path_, std::ios::app | std::ios::binary);
        out << r.to_json().dump() << '\n';
        if (!out) throw Error(Errc::IoError, "cannot append to " + path_->string());
    }
    records_.push_back(std::move(r));
}

std::vector<TranscriptRecord> Transcript::records() const {
    std::lock_guard lock(mutex_);
    return records_;
}

std::vector<TranscriptRecord> read_transcript(const std::filesystem::path& path) {
    std::vector<TranscriptRecord> out;
    std::size_t n = 0;
    for (const auto& line : read_lines(path)) {
        ++n;
        if (trim(line).empty()) continue;
        try {
            out.push_back(TranscriptRecord::from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw Error(Errc::MalformedRecord, "line " + std::to_string(n) + ": " + e.what());
        } catch (const Error& e) {
            throw Error(Errc::MalformedRecord, "line " + std::to_string(n) + ": " + e.detail());
        }
    }
    return out;
}

ReplayBackend::ReplayBackend(const std::vector<TranscriptRecord>& records) {
    for (const auto& r : records) completions_[r.prompt_hash].push_back(r.completion);
}

std::string ReplayBackend::complete(const std::string& prompt) {
    const auto hash = sha256_hex(prompt);
    std::lock_guard lock(mutex_);
    auto it = completions_.find(hash);
    if (it == completions_.end()) throw Error(Errc::BackendUnavailable, "no recorded completion for prompt " + hash);
    auto& cursor = cursor_[hash];
    const auto& list = it->second;
    return list[std::min(cursor++, list.size() - 1)];
}

ExternalBackend::ExternalBackend(ExternalConfig config) : config_(std::move(config)) {}

std::string ExternalBackend::complete(const std::string& prompt) {
    std::string path;
    const auto host = url_host(config_.endpoint, &path);
    httplib::Client client(host);
    const auto secs = static_cast<time_t>(config_.timeout_seconds);
    client.set_read_timeout(secs, 0);
    client.set_connection_timeout(secs, 0);
    httplib::Headers headers;
    if (!config_.credentials_env.empty()) {
        const char* token = std::getenv(config_.credentials_env.c_str());
        if (!token) throw Error(Errc::BackendUnavailable, "environment variable " + config_.credentials_env + " is not set");
        headers.emplace("Authorization", std::string("Bearer ") + token);
    }
    const json body = {{"model", config_.model},
                       {"temperature", 0},
                       {"messages", json::array({{{"role", "user"}, {"content", prompt}}})}};
    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) throw Error(Errc::BackendUnavailable, "request to " + config_.endpoint + " failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw Error(Errc::BackendUnavailable, "backend answered HTTP " + std::to_string(res->status));
    try {
        return json::parse(res->body).at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw Error(Errc::BackendUnavailable, std::string("unexpected backend reply: ") + e.what());
    }
}

std::string extract_json(std::string_view completion) {
    if (auto fence = completion.find("```"); fence != std::string_view::npos) {
        auto start = completion.find('\n', fence);
        auto end = start == std::string_view::npos ? start : completion.find("```", start);
        if (end != std::string_view::npos) return std::string(trim(completion.substr(start + 1, end - start - 1)));
    }
    const auto open = completion.find('{');
    const auto close = completion.rfind('}');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
        return std::string(trim(completion));
    }
    return std::string(completion.substr(open, close - open + 1));
}

script::Script plan(PlannerBackend& backend, const PlanningContext& ctx, std::size_t retry_budget,
                    Transcript* transcript) {
    const std::string prompt = build_prompt(ctx);
    std::string error;
    for (std::size_t attempt = 0; attempt <= retry_budget; ++attempt) {
        const std::string p = attempt == 0 ? prompt : retry_prompt(prompt, error);
        const std::string completion = backend.complete(p);
        if (transcript) transcript->append(p, completion);
        try {
            return script::parse_script(extract_json(completion));
        } catch (const SyntaxError& e) {
            error = "line " + std::to_string(e.line()) + ", column " + std::to_string(e.column()) + ": expected " +
                    e.expected();
        } catch (const Error& e) {
            error = std::string(to_string(e.code())) + ": " + e.detail();
        }
    }
    throw Error(Errc::UnparseableOutput,
                std::to_string(retry_budget + 1) + " attempt(s), last error: " + error);
}

script::Script plan_oracle(const ehrqa::EhrqaItem& item, const std::vector<ehrqa::QuestionTemplate>& templates,
                           const OracleOptions& options) {
    if (item.negative) return literature_search(item.question);
    const ehrqa::QuestionTemplate* t = item.template_id ? ehrqa::find_template(templates, *item.template_id) : nullptr;
    if (!t) throw Error(Errc::UnknownTemplate, "item " + item.item_id + " names template '" + item.template_id.value_or("") + "'");
    auto s = ehrqa::instantiate_calls(*t, item.slots);
    if (options.corrupt_data_entry && t->category == ehrqa::Category::DataEntry) {
        for (auto& step : s.steps) {
            step.call.function = "search_medical_literature";
            step.call.args = {{"query", tools::ArgValue{json(item.question)}}};
            step.guard.reset();
        }
    }
    return s;
}

}  // namespace almanac::planner
