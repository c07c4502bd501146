#include "almanac/gateway/gateway.hpp"

#include "almanac/common/error.hpp"
#include "almanac/common/text.hpp"
#include "almanac/fhir/bundle.hpp"
#include "almanac/store/history.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdio>
#include <map>
#include <mutex>
#include <thread>

namespace almanac::gateway {

using nlohmann::json;

json Session::to_json() const {
    return {{"session_id", session_id},
            {"actor", actor},
            {"active_patient", active_patient ? json(active_patient->id) : json(nullptr)},
            {"created_at", created_at.to_string()}};
}

std::shared_ptr<planner::PlannerBackend> make_backend(const BackendConfig& config, bool no_external,
                                                      const std::vector<ehrqa::QuestionTemplate>& templates) {
    if (config.kind == "stub") return std::make_shared<planner::TemplateStubBackend>(templates);
    if (config.kind == "replay") {
        return std::make_shared<planner::ReplayBackend>(planner::read_transcript(config.replay_path));
    }
    if (config.kind == "external") {
        if (no_external) throw Error(Errc::BackendUnavailable, "external backends are disabled");
        planner::ExternalConfig ext;
        ext.endpoint = config.endpoint;
        ext.model = config.model;
        ext.credentials_env = config.credentials_env;
        return std::make_shared<planner::ExternalBackend>(ext);
    }
    throw Error(Errc::MalformedConfig, "unknown backend kind '" + config.kind + "'");
}

namespace {

struct HttpError {
    int status;
    json body;
};

HttpError http_error(int status, std::string_view code, const std::string& message) {
    return {status, {{"error", {{"code", code}, {"message", message}}}}};
}

int status_for(Errc code) {
    switch (code) {
        case Errc::NotFound:
        case Errc::UnknownResourceType:
        case Errc::UnknownTemplate:
            return 404;
        case Errc::WrongState:
            return 409;
        case Errc::UnparseableOutput:
        case Errc::ContextBudgetExceeded:
            return 422;
        case Errc::BackendUnavailable:
            return 502;
        case Errc::MalformedJson:
        case Errc::InvalidArgument:
        case Errc::InvalidQuery:
        case Errc::UnknownField:
        case Errc::InvalidScript:
        case Errc::SyntaxError:
        case Errc::InvariantViolation:
        case Errc::DanglingReference:
        case Errc::DuplicateId:
            return 400;
        default:
            return 500;
    }
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
        auto body = json::parse(req.body);
        if (!body.is_object()) throw HttpError(http_error(400, "MalformedJson", "request body must be a JSON object"));
        return body;
    } catch (const json::parse_error& e) {
        throw HttpError(http_error(400, "MalformedJson", e.what()));
    }
}

std::optional<std::string> string_member(const json& body, const char* key, bool required) {
    auto it = body.find(key);
    if (it == body.end() || it->is_null()) {
        if (required) throw HttpError(http_error(400, "InvalidArgument", std::string("missing '") + key + "'"));
        return std::nullopt;
    }
    if (!it->is_string()) throw HttpError(http_error(400, "InvalidArgument", std::string("'") + key + "' must be a string"));
    return it->get<std::string>();
}

json violations_json(const script::ScriptValidation& v) {
    json out = json::array();
    for (const auto& x : v.violations) {
        out.push_back({{"step_id", x.step_id}, {"code", x.code}, {"param", x.param}, {"message", x.message}});
    }
    return out;
}

bool read_only(const script::Script& s, const tools::Registry& registry) {
    return std::none_of(s.steps.begin(), s.steps.end(), [&](const script::Step& step) {
        const auto* schema = registry.find(step.call.function);
        return !schema || schema->mutating;
    });
}

/// Query parameters as search filters. Prefixes apply to date and number fields only.
store::SearchQuery search_query(fhir::ResourceType type, const httplib::Params& params) {
    store::SearchQuery q;
    q.type = type;
    for (const auto& [raw_key, raw_value] : params) {
        if (raw_key == "_count") {
            try {
                std::size_t used = 0;
                const long long n = std::stoll(raw_value, &used);
                if (used != raw_value.size() || n < 0) throw std::invalid_argument(raw_value);
                q.limit = static_cast<std::size_t>(n);
            } catch (const std::exception&) {
                throw Error(Errc::InvalidQuery, "_count must be a non-negative integer");
            }
            continue;
        }
        if (raw_key == "_sort") {
            store::SortKey key;
            key.descending = starts_with(raw_value, "-");
            key.field = key.descending ? raw_value.substr(1) : raw_value;
            q.sort = key;
            continue;
        }
        store::Filter f;
        f.field = raw_key;
        f.value = raw_value;
        if (auto colon = raw_key.find(':'); colon != std::string::npos) {
            f.field = raw_key.substr(0, colon);
            const auto modifier = raw_key.substr(colon + 1);
            if (modifier != "contains") throw Error(Errc::InvalidQuery, "unsupported modifier ':" + modifier + "'");
            f.op = store::FilterOp::Contains;
        } else if (const auto* field = store::find_search_field(type, f.field);
                   field && (field->kind == store::FieldKind::Date || field->kind == store::FieldKind::Number) &&
                   f.value.size() > 2) {
            const auto prefix = f.value.substr(0, 2);
            if (auto op = store::filter_op_from_string(prefix); op && op != store::FilterOp::Contains) {
                f.op = *op;
                f.value = f.value.substr(2);
            }
        }
        q.filters.push_back(std::move(f));
    }
    return q;
}

}  // namespace

struct Gateway::Impl {
    Services services;
    Options options;
    std::unique_ptr<exec::ToolRuntime> runtime;
    std::unique_ptr<exec::Executor> executor;
    httplib::Server server;
    std::thread thread;

    std::mutex sessions_mutex;
    std::map<std::string, Session> sessions;
    std::map<std::string, std::unique_ptr<planner::Transcript>> transcripts;
    std::uint64_t next_session = 1;

    std::mutex backend_mutex;
    std::mutex persist_mutex;

    Impl(Services s, Options o) : services(std::move(s)), options(std::move(o)) {
        if (!services.store) throw Error(Errc::InvalidArgument, "gateway needs a store");
        if (!services.backend) throw Error(Errc::InvalidArgument, "gateway needs a planner backend");
        if (options.token.empty()) throw Error(Errc::MalformedConfig, "ALMANAC_TOKEN must be set");
        if (options.context_budget == 0) throw Error(Errc::MalformedConfig, "context_budget must be positive");
        if (!options.transcript_dir.empty()) std::filesystem::create_directories(options.transcript_dir);
        runtime = std::make_unique<exec::ToolRuntime>(*services.store, services.registry, services.toolkit.literature,
                                                      services.toolkit.calculators);
        std::optional<std::filesystem::path> actions;
        if (!options.actions_path.empty()) actions = options.actions_path;
        executor = std::make_unique<exec::Executor>(*runtime, options.clock, actions);
        routes();
    }

    Session session(const std::string& id) {
        std::lock_guard lock(sessions_mutex);
        auto it = sessions.find(id);
        if (it == sessions.end()) throw Error(Errc::NotFound, "unknown session '" + id + "'");
        return it->second;
    }

    fhir::ResourceId patient_id(const std::string& id) const {
        fhir::ResourceId rid{fhir::ResourceType::Patient, id};
        if (auto ref = fhir::ResourceId::parse_reference(id)) rid = *ref;
        if (rid.type != fhir::ResourceType::Patient || !services.store->contains(rid)) {
            throw Error(Errc::NotFound, "unknown patient '" + id + "'");
        }
        return rid;
    }

    void persist_store() {
        if (options.store_snapshot_path.empty()) return;
        std::lock_guard lock(persist_mutex);
        services.store->snapshot(options.store_snapshot_path);
    }

    json create_session(const json& body) {
        auto actor = string_member(body, "actor", true);
        if (trim(*actor).empty()) throw HttpError(http_error(400, "InvalidArgument", "actor must be non-empty"));
        Session s;
        s.actor = *actor;
        if (auto p = string_member(body, "patient_id", false)) s.active_patient = patient_id(*p);
        s.created_at = options.clock();
        std::lock_guard lock(sessions_mutex);
        char buf[32];
        std::snprintf(buf, sizeof buf, "ses-%06llu", static_cast<unsigned long long>(next_session++));
        s.session_id = buf;
        std::optional<std::filesystem::path> path;
        if (!options.transcript_dir.empty()) path = options.transcript_dir / (s.session_id + ".jsonl");
        transcripts[s.session_id] = std::make_unique<planner::Transcript>(s.session_id, path, options.clock);
        sessions[s.session_id] = s;
        return s.to_json();
    }

    json set_patient(const std::string& id, const json& body) {
        auto p = string_member(body, "patient_id", false);
        std::optional<fhir::ResourceId> patient;
        if (p) patient = patient_id(*p);
        std::lock_guard lock(sessions_mutex);
        auto it = sessions.find(id);
        if (it == sessions.end()) throw Error(Errc::NotFound, "unknown session '" + id + "'");
        it->second.active_patient = patient;
        return it->second.to_json();
    }

    std::pair<int, json> query(const std::string& id, const json& body) {
        Session s = session(id);
        const auto text = string_member(body, "text", true);
        if (trim(*text).empty()) throw HttpError(http_error(400, "InvalidArgument", "text must be non-empty"));
        std::optional<fhir::ResourceId> patient = s.active_patient;
        if (auto p = string_member(body, "patient_id", false)) patient = patient_id(*p);

        planner::Transcript* transcript;
        {
            std::lock_guard lock(sessions_mutex);
            transcript = transcripts.at(id).get();
        }
        auto ctx = planner::make_context(*text, patient, *services.store, services.registry, options.context_budget);
        script::Script plan;
        {
            std::lock_guard lock(backend_mutex);
            plan = planner::plan(*services.backend, ctx, options.retry_budget, transcript);
        }

        const auto& store = *services.store;
        auto validation = script::resolve_and_typecheck(
            plan, services.registry, [&](const fhir::ResourceId& rid) { return store.contains(rid); });
        if (!validation.ok()) {
            const bool fabricated = validation.has(tools::to_string(tools::ViolationCode::FabricatedTool));
            std::string message;
            for (const auto& v : validation.violations) {
                if (!message.empty()) message += "; ";
                message += v.step_id + ": " + v.code + (v.param.empty() ? "" : " (" + v.param + ")");
            }
            auto err = http_error(fabricated ? 422 : 400, "InvalidScript", message);
            err.body["violations"] = violations_json(validation);
            err.body["script"] = script::script_to_json(plan);
            throw HttpError(err);
        }

        auto preview = executor->dry_run(plan);
        const auto action_id = executor->submit(s.session_id, plan);
        json out = {{"action_id", action_id},
                    {"script", script::script_to_json(plan)},
                    {"dry_run_preview", preview.to_json()}};
        if (options.auto_approve_readonly && read_only(plan, services.registry)) {
            out["results"] = executor->approve(action_id, s.actor).to_json();
        }
        out["status"] = exec::to_string(executor->get(action_id).status);
        return {200, out};
    }

    std::string actor_for(const exec::PendingAction& a) {
        std::lock_guard lock(sessions_mutex);
        auto it = sessions.find(a.session_id);
        return it == sessions.end() ? a.session_id : it->second.actor;
    }

    json approve(const std::string& id) {
        auto action = executor->get(id);
        auto result = executor->approve(id, actor_for(action));
        persist_store();
        return {{"action", executor->get(id).to_json()}, {"results", result.to_json()}};
    }

    json reject(const std::string& id) {
        auto action = executor->get(id);
        executor->reject(id, actor_for(action));
        return {{"action", executor->get(id).to_json()}};
    }

    json list_actions(const httplib::Request& req) {
        std::optional<exec::ActionStatus> status;
        std::optional<std::string> session_id;
        if (req.has_param("status")) {
            const auto text = req.get_param_value("status");
            status = exec::action_status_from_string(text);
            if (!status) throw Error(Errc::InvalidQuery, "unknown status '" + text + "'");
        }
        if (req.has_param("session_id")) session_id = req.get_param_value("session_id");
        auto actions = executor->list(session_id, status);
        std::sort(actions.begin(), actions.end(), [](const exec::PendingAction& a, const exec::PendingAction& b) {
            if (a.created_at != b.created_at) return a.created_at < b.created_at;
            return a.action_id < b.action_id;
        });
        json out = json::array();
        for (const auto& a : actions) out.push_back(a.to_json());
        return {{"actions", out}};
    }

    static fhir::ResourceType resource_type(const std::string& name) {
        auto type = fhir::resource_type_from_string(name);
        if (!type) throw Error(Errc::UnknownResourceType, "unknown resource type '" + name + "'");
        return *type;
    }

    json fhir_read(const std::string& type, const std::string& id) const {
        auto r = services.store->find({resource_type(type), id});
        if (!r) throw Error(Errc::NotFound, type + "/" + id + " not found");
        return fhir::to_json(*r);
    }

    json fhir_search(const std::string& type, const httplib::Params& params) const {
        auto results = services.store->search(search_query(resource_type(type), params));
        json entries = json::array();
        for (const auto& r : results) {
            entries.push_back({{"fullUrl", r.resource_id().reference()}, {"resource", fhir::to_json(r)}});
        }
        return {{"resourceType", "Bundle"}, {"type", "searchset"}, {"total", results.size()}, {"entry", entries}};
    }

    std::string digest(const std::string& id, const httplib::Request& req) const {
        std::size_t budget = options.context_budget;
        if (req.has_param("budget")) {
            const auto text = req.get_param_value("budget");
            try {
                std::size_t used = 0;
                const long long n = std::stoll(text, &used);
                if (used != text.size() || n <= 0) throw std::invalid_argument(text);
                budget = static_cast<std::size_t>(n);
            } catch (const std::exception&) {
                throw Error(Errc::InvalidQuery, "budget must be a positive integer");
            }
        }
        return store::render_history_digest(services.store->patient_history(patient_id(id)), budget);
    }

    using Handler = std::function<std::pair<int, json>(const httplib::Request&)>;

    static httplib::Server::Handler wrap(Handler h) {
        return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
            std::pair<int, json> out;
            try {
                out = h(req);
            } catch (const HttpError& e) {
                out = {e.status, e.body};
            } catch (const Error& e) {
                const auto err = http_error(status_for(e.code()), to_string(e.code()), e.detail());
                out = {err.status, err.body};
            } catch (const std::exception& e) {
                const auto err = http_error(500, "InternalError", e.what());
                out = {err.status, err.body};
            }
            res.status = out.first;
            res.set_content(out.second.dump(), "application/json");
        };
    }

    void routes() {
        server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
            if (req.path == "/health") return httplib::Server::HandlerResponse::Unhandled;
            if (req.get_header_value("Authorization") == "Bearer " + options.token) {
                return httplib::Server::HandlerResponse::Unhandled;
            }
            res.status = 401;
            res.set_header("WWW-Authenticate", "Bearer");
            res.set_content(http_error(401, "Unauthorized", "missing or wrong bearer token").body.dump(),
                            "application/json");
            return httplib::Server::HandlerResponse::Handled;
        });

        server.Get("/health", wrap([](const httplib::Request&) { return std::pair<int, json>{200, {{"status", "ok"}}}; }));
        server.Get("/tools", wrap([this](const httplib::Request&) {
            return std::pair<int, json>{200, tools::registry_to_json(services.registry)};
        }));

        server.Post("/sessions", wrap([this](const httplib::Request& req) {
            return std::pair<int, json>{201, create_session(parse_body(req))};
        }));
        server.Get(R"(/sessions/([^/]+))", wrap([this](const httplib::Request& req) {
            return std::pair<int, json>{200, session(req.matches[1]).to_json()};
        }));
        server.Post(R"(/sessions/([^/]+)/patient)", wrap([this](const httplib::Request& req) {
            return std::pair<int, json>{200, set_patient(req.matches[1], parse_body(req))};
        }));
        server.Post(R"(/sessions/([^/]+)/query)", wrap([this](const httplib::Request& req) {
            return query(req.matches[1], parse_body(req));
        }));

        server.Get("/actions", wrap([this](const httplib::Request& req) {
            return std::pair<int, json>{200, list_actions(req)};
        }));
        server.Get(R"(/actions/([^/]+))", wrap([this](const httplib::Request& req) {
            return std::pair<int, json>{200, executor->get(req.matches[1]).to_json()};
        }));
        server.Post(R"(/actions/([^/]+)/approve)", wrap([this](const httplib::Request& req) {
            return std::pair<int, json>{200, approve(req.matches[1])};
        }));
        server.Post(R"(/actions/([^/]+)/reject)", wrap([this](const httplib::Request& req) {
            return std::pair<int, json>{200, reject(req.matches[1])};
        }));

        server.Get(R"(/fhir/Patient/([^/]+)/\$history-digest)", [this](const httplib::Request& req,
                                                                       httplib::Response& res) {
            try {
                res.set_content(digest(req.matches[1], req), "text/plain; charset=utf-8");
            } catch (const Error& e) {
                res.status = status_for(e.code());
                res.set_content(http_error(res.status, to_string(e.code()), e.detail()).body.dump(), "application/json");
            }
        });
        server.Get(R"(/fhir/([A-Za-z]+)/([^/]+))", wrap([this](const httplib::Request& req) {
            return std::pair<int, json>{200, fhir_read(req.matches[1], req.matches[2])};
        }));
        server.Get(R"(/fhir/([A-Za-z]+))", wrap([this](const httplib::Request& req) {
            return std::pair<int, json>{200, fhir_search(req.matches[1], req.params)};
        }));
    }
};

Gateway::Gateway(Services services, Options options)
    : impl_(std::make_unique<Impl>(std::move(services), std::move(options))) {}

Gateway::~Gateway() { stop(); }

std::unique_ptr<Gateway> Gateway::from_config(const GatewayConfig& config) {
    validate(config);
    if (config.token.empty()) throw Error(Errc::MalformedConfig, "ALMANAC_TOKEN must be set");

    Services s;
    s.store = std::make_shared<store::Store>();
    if (!config.store_snapshot_path.empty() && std::filesystem::exists(config.store_snapshot_path)) {
        s.store->restore(config.store_snapshot_path);
    } else {
        s.store->ingest_bundle(fhir::parse_bundle(read_file(config.bundle_path)));
    }
    s.registry = config.schema_path.empty() ? tools::builtin_registry() : tools::load_registry(config.schema_path);
    s.templates = ehrqa::load_templates(config.template_path, s.registry);
    s.toolkit = knowledge::load_toolkit(config.corpus_dir, config.calculators_dir);
    s.backend = make_backend(config.backend, config.no_external, s.templates);

    Options o;
    o.token = config.token;
    o.auto_approve_readonly = config.auto_approve_readonly;
    o.context_budget = config.context_budget;
    o.retry_budget = config.retry_budget;
    o.transcript_dir = config.transcript_dir;
    o.store_snapshot_path = config.store_snapshot_path;
    o.actions_path = config.actions_path;
    if (o.actions_path.empty() && !config.store_snapshot_path.empty()) {
        o.actions_path = config.store_snapshot_path.string() + ".actions";
    }
    std::vector<exec::PendingAction> restored;
    if (!o.actions_path.empty() && std::filesystem::exists(o.actions_path)) {
        restored = exec::Executor::load_actions(o.actions_path);
    }
    auto gateway = std::make_unique<Gateway>(std::move(s), std::move(o));
    if (!restored.empty()) gateway->executor().restore_actions(restored);
    if (!config.store_snapshot_path.empty() && !std::filesystem::exists(config.store_snapshot_path)) {
        gateway->impl_->persist_store();
    }
    return gateway;
}

int Gateway::start(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
        bound = impl_->server.bind_to_any_port(host);
    } else if (!impl_->server.bind_to_port(host, port)) {
        bound = -1;
    }
    if (bound < 0) throw Error(Errc::IoError, "cannot bind " + host + ":" + std::to_string(port));
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

void Gateway::listen(const std::string& host, int port) {
    if (!impl_->server.listen(host, port)) throw Error(Errc::IoError, "cannot bind " + host + ":" + std::to_string(port));
}

void Gateway::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

store::Store& Gateway::store() { return *impl_->services.store; }
exec::Executor& Gateway::executor() { return *impl_->executor; }

}  // namespace almanac::gateway
