#include "almanac/common/error.hpp"
#include "almanac/common/text.hpp"
#include "almanac/fhir/bundle.hpp"
#include "almanac/gateway/gateway.hpp"
#include "almanac/store/history.hpp"
#include "almanac/synth/fixture.hpp"

#include "fixtures.hpp"

#include <doctest.h>
#include <httplib.h>

#include <algorithm>
#include <filesystem>
#include <thread>

using namespace almanac;
using namespace almanac::gateway;
using namespace almanac::testing;
using nlohmann::json;

namespace {

const char* kToken = "test-token";

const std::vector<ehrqa::QuestionTemplate>& bank() {
    static const auto b = ehrqa::load_templates(std::filesystem::path(ALMANAC_TEMPLATES_DIR) / "ehrqa-templates.json");
    return b;
}

const knowledge::Toolkit& toolkit() {
    static const auto t = knowledge::load_toolkit(std::filesystem::path(ALMANAC_DATA_DIR));
    return t;
}

std::shared_ptr<planner::PlannerBackend> stub() { return std::make_shared<planner::TemplateStubBackend>(bank()); }

struct Harness {
    std::shared_ptr<store::Store> store;
    std::unique_ptr<Gateway> gateway;
    std::unique_ptr<httplib::Client> client;

    explicit Harness(std::shared_ptr<planner::PlannerBackend> backend = stub(), Options options = {}) {
        store = std::shared_ptr<store::Store>(fixture_store());
        Services s{store, tools::builtin_registry(), bank(), toolkit(), std::move(backend)};
        if (options.token.empty()) options.token = kToken;
        options.clock = stepping_clock(at("2160-06-02T09:00:00Z"), 1);
        gateway = std::make_unique<Gateway>(std::move(s), std::move(options));
        const int port = gateway->start();
        client = std::make_unique<httplib::Client>("127.0.0.1", port);
        client->set_bearer_token_auth(kToken);
    }

    std::pair<int, json> post(const std::string& path, const json& body = json::object()) {
        auto res = client->Post(path.c_str(), body.dump(), "application/json");
        REQUIRE(res);
        return {res->status, json::parse(res->body)};
    }

    std::pair<int, json> get(const std::string& path) {
        auto res = client->Get(path.c_str());
        REQUIRE(res);
        return {res->status, json::parse(res->body)};
    }

    std::string session(const std::string& patient = "10000001") {
        auto [status, body] = post("/sessions", {{"actor", "dr-lee"}, {"patient_id", patient}});
        REQUIRE(status == 201);
        return body["session_id"];
    }
};

const std::string kOrder = "Can you place an order for lisinopril with 10 mg for daily?";

}  // namespace

TEST_CASE("sessions are created, read and retargeted") {
    Harness h;
    auto [status, body] = h.post("/sessions", {{"actor", "dr-lee"}});
    REQUIRE(status == 201);
    CHECK(body["actor"] == "dr-lee");
    CHECK(body["active_patient"].is_null());
    const std::string id = body["session_id"];
    CHECK(h.get("/sessions/" + id).second == body);

    auto [s2, b2] = h.post("/sessions/" + id + "/patient", {{"patient_id", "10000002"}});
    CHECK(s2 == 200);
    CHECK(b2["active_patient"] == "10000002");
    CHECK(h.post("/sessions/" + id + "/patient", {{"patient_id", "99999999"}}).first == 404);

    CHECK(h.post("/sessions", {{"actor", ""}}).first == 400);
    CHECK(h.post("/sessions", json::object()).first == 400);
    CHECK(h.get("/sessions/ses-999999").first == 404);
    auto other = h.post("/sessions", {{"actor", "dr-lee"}}).second;
    CHECK(other["session_id"] != id);
}

TEST_CASE("bearer token is required except for health") {
    Harness h;
    httplib::Client anon("127.0.0.1", h.client->port());
    auto health = anon.Get("/health");
    REQUIRE(health);
    CHECK(health->status == 200);
    for (const char* path : {"/tools", "/actions", "/fhir/Patient/10000001"}) {
        auto res = anon.Get(path);
        REQUIRE(res);
        CHECK(res->status == 401);
    }
    anon.set_bearer_token_auth("wrong");
    auto res = anon.Post("/sessions", R"({"actor":"x"})", "application/json");
    REQUIRE(res);
    CHECK(res->status == 401);
    CHECK(h.store->audit_log().size() == fixture_store()->audit_log().size());
}

TEST_CASE("stub query returns a pending action with a dry-run preview") {
    Harness h;
    const auto sid = h.session();
    const auto before = h.store->content_digest();
    auto [status, body] = h.post("/sessions/" + sid + "/query", {{"text", kOrder}});
    REQUIRE(status == 200);
    CHECK(body["status"] == "pending");
    CHECK(body["script"]["steps"].size() == 1);
    CHECK(body["script"]["steps"][0]["function"] == "create_medication_request_order");
    CHECK(body["script"]["steps"][0]["args"]["subject"] == "10000001");
    CHECK(body["dry_run_preview"]["steps"][0]["preview"] == true);
    CHECK(h.store->content_digest() == before);

    auto [s2, action] = h.get("/actions/" + body["action_id"].get<std::string>());
    CHECK(s2 == 200);
    CHECK(action["status"] == "pending");
    CHECK(action["session_id"] == sid);
}

TEST_CASE("identical queries give identical scripts and distinct actions") {
    Harness h;
    const auto sid = h.session();
    const json q = {{"text", "Did patient 10000001 ever have Potassium done? What was the value?"}};
    auto a = h.post("/sessions/" + sid + "/query", q).second;
    auto b = h.post("/sessions/" + sid + "/query", q).second;
    CHECK(a["script"] == b["script"]);
    CHECK(a["action_id"] != b["action_id"]);
}

TEST_CASE("query errors map to status codes") {
    SUBCASE("fabricated tool is 422 with its code") {
        Harness h(std::make_shared<planner::StubBackend>(std::vector<std::string>{
            R"({"steps":[{"id":"step1","function":"order_pizza","args":{"patient_id":"10000001"}}]})"}));
        const auto sid = h.session();
        auto [status, body] = h.post("/sessions/" + sid + "/query", {{"text", "anything"}});
        CHECK(status == 422);
        CHECK(body["error"]["code"] == "InvalidScript");
        CHECK(body["violations"][0]["code"] == "FABRICATED_TOOL");
        CHECK(body["error"]["message"].get<std::string>().find("FABRICATED_TOOL") != std::string::npos);
        CHECK(h.get("/actions").second["actions"].empty());
    }
    SUBCASE("other typecheck failures are 400") {
        Harness h(std::make_shared<planner::StubBackend>(std::vector<std::string>{
            R"({"steps":[{"id":"step1","function":"search_observation_database","args":{"patient_id":"2160-01-01","query":"Potassium"}}]})"}));
        auto [status, body] = h.post("/sessions/" + h.session() + "/query", {{"text", "anything"}});
        CHECK(status == 400);
        CHECK(body["violations"][0]["code"] == "ID_DATE_CONFOUND");
    }
    SUBCASE("unparseable output is 422") {
        Harness h(std::make_shared<planner::StubBackend>(std::vector<std::string>{"no json here"}));
        auto [status, body] = h.post("/sessions/" + h.session() + "/query", {{"text", "anything"}});
        CHECK(status == 422);
        CHECK(body["error"]["code"] == "UnparseableOutput");
    }
    SUBCASE("backend failure is 502") {
        Harness h(std::make_shared<planner::ReplayBackend>(std::vector<planner::TranscriptRecord>{}));
        CHECK(h.post("/sessions/" + h.session() + "/query", {{"text", "anything"}}).first == 502);
    }
    SUBCASE("unknown session, malformed body, unknown patient") {
        Harness h;
        CHECK(h.post("/sessions/ses-424242/query", {{"text", "x"}}).first == 404);
        auto res = h.client->Post(("/sessions/" + h.session() + "/query").c_str(), "{not json", "application/json");
        REQUIRE(res);
        CHECK(res->status == 400);
        CHECK(h.post("/sessions/" + h.session() + "/query", {{"text", 7}}).first == 400);
        CHECK(h.post("/sessions/" + h.session() + "/query", {{"text", "x"}, {"patient_id", "nobody"}}).first == 404);
    }
}

TEST_CASE("approve executes, reject blocks, decided actions conflict") {
    Harness h;
    const auto sid = h.session();
    const auto q = json{{"text", kOrder}};
    const std::string first = h.post("/sessions/" + sid + "/query", q).second["action_id"];
    const std::string second = h.post("/sessions/" + sid + "/query", q).second["action_id"];
    const auto before = h.store->size();

    auto [status, body] = h.post("/actions/" + first + "/approve");
    REQUIRE(status == 200);
    CHECK(body["action"]["status"] == "executed");
    CHECK(body["action"]["decision_by"] == "dr-lee");
    REQUIRE(body["results"]["steps"].size() == 1);
    CHECK(body["results"]["steps"][0]["status"] == "ok");
    CHECK(h.store->size() == before + 1);
    CHECK(h.post("/actions/" + first + "/approve").first == 409);
    CHECK(h.post("/actions/" + first + "/reject").first == 409);

    const auto after_approve = h.store->content_digest();
    CHECK(h.post("/actions/" + second + "/reject").first == 200);
    CHECK(h.post("/actions/" + second + "/approve").first == 409);
    CHECK(h.store->content_digest() == after_approve);
    CHECK(h.get("/actions/" + second).second["status"] == "rejected");

    CHECK(h.post("/actions/act-999999/approve").first == 404);
    CHECK(h.get("/actions/act-999999").first == 404);

    const auto& created = body["results"]["steps"][0]["value"];
    CHECK(created["resourceType"] == "MedicationRequest");
    CHECK(h.get("/fhir/MedicationRequest/" + created["id"].get<std::string>()).second == created);
}

TEST_CASE("pending list is sorted by creation time and filters by status") {
    Harness h;
    const auto sid = h.session();
    std::vector<std::string> ids;
    for (int i = 0; i < 5; ++i) {
        ids.push_back(h.post("/sessions/" + sid + "/query", {{"text", kOrder}}).second["action_id"]);
    }
    CHECK(h.post("/actions/" + ids[2] + "/reject").first == 200);
    auto pending = h.get("/actions?status=pending").second["actions"];
    REQUIRE(pending.size() == 4);
    for (std::size_t i = 1; i < pending.size(); ++i) {
        CHECK(pending[i - 1]["created_at"].get<std::string>() <= pending[i]["created_at"].get<std::string>());
    }
    CHECK(pending[0]["action_id"] == ids[0]);
    CHECK(pending[3]["action_id"] == ids[4]);
    CHECK(h.get("/actions?status=rejected").second["actions"].size() == 1);
    CHECK(h.get("/actions").second["actions"].size() == 5);
    CHECK(h.get("/actions?status=bogus").first == 400);
}

TEST_CASE("read-only scripts auto-approve when configured") {
    Options o;
    o.auto_approve_readonly = true;
    Harness h(stub(), o);
    const auto sid = h.session();
    auto read = h.post("/sessions/" + sid + "/query", {{"text", "Is Potassium value abnormal?"}}).second;
    CHECK(read["status"] == "executed");
    CHECK(read.contains("results"));
    auto write = h.post("/sessions/" + sid + "/query", {{"text", kOrder}}).second;
    CHECK(write["status"] == "pending");
    CHECK_FALSE(write.contains("results"));
}

TEST_CASE("FHIR search mirrors the store") {
    Harness h;
    auto s = fixture_store();
    struct Case {
        std::string url;
        store::SearchQuery query;
    };
    using store::Filter;
    using store::FilterOp;
    const auto MR = fhir::ResourceType::MedicationRequest;
    const auto OBS = fhir::ResourceType::Observation;
    std::vector<Case> cases;
    for (const auto& p : {"10000001", "10000003", "10000006"}) {
        cases.push_back({std::string("/fhir/MedicationRequest?patient=") + p, {MR, {{"patient", FilterOp::Eq, p}}}});
        cases.push_back({std::string("/fhir/Observation?subject=Patient/") + p + "&_sort=-date&_count=3",
                         {OBS, {{"subject", FilterOp::Eq, std::string("Patient/") + p}}, store::SortKey{"date", true}, 3}});
    }
    // A date that exists for a patient, read from the store.
    auto mrs = s->search({MR, {{"patient", FilterOp::Eq, "10000002"}}});
    REQUIRE_FALSE(mrs.empty());
    const auto day = fhir::to_json(mrs.front())["authoredOn"].get<std::string>().substr(0, 10);
    cases.push_back({"/fhir/MedicationRequest?patient=10000002&date=" + day,
                     {MR, {{"patient", FilterOp::Eq, "10000002"}, {"date", FilterOp::Eq, day}}}});
    cases.push_back({"/fhir/Observation?date=ge2160-01-01&date=le2160-12-31",
                     {OBS, {{"date", FilterOp::Ge, "2160-01-01"}, {"date", FilterOp::Le, "2160-12-31"}}}});
    cases.push_back({"/fhir/Observation?code:contains=sod", {OBS, {{"code", FilterOp::Contains, "sod"}}}});

    for (const auto& c : cases) {
        CAPTURE(c.url);
        auto [status, body] = h.get(c.url);
        if (status != 200) {
            // Field names differ per type; the store must reject the same query.
            CHECK_THROWS_AS(s->search(c.query), Error);
            continue;
        }
        const auto expected = s->search(c.query);
        CHECK(body["resourceType"] == "Bundle");
        CHECK(body["type"] == "searchset");
        REQUIRE(body["entry"].size() == expected.size());
        for (std::size_t i = 0; i < expected.size(); ++i) {
            CHECK(body["entry"][i]["resource"] == fhir::to_json(expected[i]));
        }
    }
}

TEST_CASE("FHIR read, errors and the history digest") {
    Harness h;
    auto [status, patient] = h.get("/fhir/Patient/10000001");
    CHECK(status == 200);
    CHECK(patient == fhir::to_json(h.store->get(patient_ref("10000001"))));
    CHECK(h.get("/fhir/Patient/nobody").first == 404);
    CHECK(h.get("/fhir/Spaceship/1").first == 404);
    CHECK(h.get("/fhir/Spaceship?x=1").first == 404);
    auto [bad_status, bad] = h.get("/fhir/Observation?flavour=sweet");
    CHECK(bad_status == 400);
    CHECK(bad["error"]["code"] == "UnknownField");
    CHECK(h.get("/fhir/Observation?_count=lots").first == 400);

    for (std::size_t budget : {200u, 1000u, 4000u}) {
        auto res = h.client->Get(("/fhir/Patient/10000001/$history-digest?budget=" + std::to_string(budget)).c_str());
        REQUIRE(res);
        CHECK(res->status == 200);
        CHECK(res->body ==
              store::render_history_digest(h.store->patient_history(patient_ref("10000001")), budget));
    }
    auto res = h.client->Get("/fhir/Patient/nobody/$history-digest");
    REQUIRE(res);
    CHECK(res->status == 404);
}

TEST_CASE("GET endpoints never change the store") {
    Harness h;
    const auto sid = h.session();
    h.post("/sessions/" + sid + "/query", {{"text", kOrder}});
    const auto digest = h.store->content_digest();
    const auto audit = h.store->audit_log().size();
    for (const char* path : {"/health", "/tools", "/actions", "/actions?status=pending", "/actions/act-000001",
                             "/fhir/Patient/10000001", "/fhir/Observation?patient=10000001",
                             "/fhir/Patient/10000001/$history-digest", "/fhir/MedicationRequest"}) {
        auto res = h.client->Get(path);
        REQUIRE(res);
        CHECK(res->status == 200);
    }
    CHECK(h.get("/sessions/" + sid).first == 200);
    CHECK(h.store->content_digest() == digest);
    CHECK(h.store->audit_log().size() == audit);
    CHECK(h.get("/actions/act-000001").second["status"] == "pending");
}

TEST_CASE("tools endpoint serves the registry") {
    Harness h;
    auto [status, body] = h.get("/tools");
    CHECK(status == 200);
    CHECK(tools::registry_from_json(body) == tools::builtin_registry());
}

TEST_CASE("config parsing, overrides and validation") {
    const auto env = [](std::map<std::string, std::string> vars) -> EnvLookup {
        return [vars](const std::string& k) -> std::optional<std::string> {
            auto it = vars.find(k);
            return it == vars.end() ? std::nullopt : std::optional<std::string>(it->second);
        };
    };
    const std::string text =
        "# sandbox\n"
        "bundle_path = fixtures/patients.json\n"
        "template_path = /abs/templates.json\n"
        "backend.kind = stub\n"
        "auto_approve_readonly = true\n"
        "context_budget = 2000   # characters\n";
    auto c = parse_config(text, env({{"ALMANAC_BACKEND_KIND", "replay"}, {"ALMANAC_TOKEN", "t"},
                                     {"ALMANAC_CONTEXT_BUDGET", "1500"}}),
                          "/srv/almanac");
    CHECK(c.bundle_path == std::filesystem::path("/srv/almanac/fixtures/patients.json"));
    CHECK(c.template_path == std::filesystem::path("/abs/templates.json"));
    CHECK(c.backend.kind == "replay");
    CHECK(c.auto_approve_readonly);
    CHECK(c.context_budget == 1500);
    CHECK(c.token == "t");

    auto code = [](const std::function<void()>& fn) {
        try {
            fn();
        } catch (const Error& e) {
            return e.code();
        }
        return Errc::IoError;
    };
    CHECK(code([&] { parse_config("colour = blue\n", env({})); }) == Errc::MalformedConfig);
    CHECK(code([&] { parse_config("port\n", env({})); }) == Errc::MalformedConfig);
    CHECK(code([&] { parse_config("context_budget = many\n", env({})); }) == Errc::MalformedConfig);
    CHECK(code([&] { parse_config("no_external = maybe\n", env({})); }) == Errc::MalformedConfig);

    GatewayConfig ok;
    ok.bundle_path = std::filesystem::path(ALMANAC_DATA_DIR) / "fixtures" / "patients.json";
    ok.template_path = std::filesystem::path(ALMANAC_TEMPLATES_DIR) / "ehrqa-templates.json";
    ok.token = "t";
    CHECK_NOTHROW(validate(ok));
    auto broken = ok;
    broken.context_budget = 0;
    CHECK(code([&] { validate(broken); }) == Errc::MalformedConfig);
    broken = ok;
    broken.corpus_dir = "/definitely/not/here";
    CHECK(code([&] { validate(broken); }) == Errc::MalformedConfig);
    broken = ok;
    broken.backend.kind = "external";
    broken.backend.endpoint = "http://127.0.0.1:1/v1/chat/completions";
    broken.no_external = true;
    CHECK(code([&] { validate(broken); }) == Errc::MalformedConfig);
    broken = ok;
    broken.token.clear();
    CHECK(code([&] { Gateway::from_config(broken); }) == Errc::MalformedConfig);
}

TEST_CASE("from_config persists approvals and restores them on restart") {
    const auto dir = std::filesystem::temp_directory_path() / "almanac-gateway-restart";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    const auto bundle = dir / "patients.json";
    write_file(bundle, fhir::bundle_to_json(synth::generate_fixture()).dump());

    GatewayConfig c;
    c.bundle_path = bundle;
    c.store_snapshot_path = dir / "store.snapshot";
    c.template_path = std::filesystem::path(ALMANAC_TEMPLATES_DIR) / "ehrqa-templates.json";
    c.corpus_dir = std::filesystem::path(ALMANAC_DATA_DIR) / "corpus";
    c.calculators_dir = std::filesystem::path(ALMANAC_DATA_DIR) / "calculators";
    c.transcript_dir = dir / "transcripts";
    c.token = kToken;

    std::string executed, pending, digest;
    {
        auto g = Gateway::from_config(c);
        httplib::Client client("127.0.0.1", g->start());
        client.set_bearer_token_auth(kToken);
        auto s = json::parse(client.Post("/sessions", R"({"actor":"dr-lee","patient_id":"10000001"})",
                                         "application/json")->body)["session_id"].get<std::string>();
        const auto q = json{{"text", kOrder}}.dump();
        auto first = client.Post(("/sessions/" + s + "/query").c_str(), q, "application/json");
        REQUIRE(first);
        INFO(first->body);
        REQUIRE(first->status == 200);
        executed = json::parse(first->body)["action_id"];
        pending = json::parse(client.Post(("/sessions/" + s + "/query").c_str(), q, "application/json")->body)["action_id"];
        REQUIRE(client.Post(("/actions/" + executed + "/approve").c_str(), "", "application/json")->status == 200);
        digest = g->store().content_digest();
        CHECK(std::filesystem::exists(dir / "transcripts" / (s + ".jsonl")));
        CHECK(planner::read_transcript(dir / "transcripts" / (s + ".jsonl")).size() == 2);
    }
    auto g = Gateway::from_config(c);
    CHECK(g->store().content_digest() == digest);
    CHECK(g->executor().get(executed).status == exec::ActionStatus::Executed);
    CHECK(g->executor().get(pending).status == exec::ActionStatus::Pending);
    std::filesystem::remove_all(dir);
}

TEST_CASE("concurrent approvals: distinct actions all run, a raced action runs once") {
    Harness h;
    const auto sid = h.session();
    std::vector<std::string> ids;
    for (int i = 0; i < 8; ++i) ids.push_back(h.post("/sessions/" + sid + "/query", {{"text", kOrder}}).second["action_id"]);
    const auto before = h.store->size();
    const int port = h.client->port();

    std::vector<int> distinct(ids.size() - 1, 0);
    std::vector<int> raced(6, 0);
    std::vector<std::thread> workers;
    for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
        workers.emplace_back([&, i] {
            httplib::Client c("127.0.0.1", port);
            c.set_bearer_token_auth(kToken);
            auto res = c.Post(("/actions/" + ids[i] + "/approve").c_str(), "", "application/json");
            distinct[i] = res ? res->status : -1;
        });
    }
    for (std::size_t i = 0; i < raced.size(); ++i) {
        workers.emplace_back([&, i] {
            httplib::Client c("127.0.0.1", port);
            c.set_bearer_token_auth(kToken);
            const char* verb = i % 2 ? "/reject" : "/approve";
            auto res = c.Post(("/actions/" + ids.back() + verb).c_str(), "", "application/json");
            raced[i] = res ? res->status : -1;
        });
    }
    for (auto& w : workers) w.join();

    for (int status : distinct) CHECK(status == 200);
    CHECK(std::count(raced.begin(), raced.end(), 200) == 1);
    CHECK(std::count(raced.begin(), raced.end(), 409) == 5);
    const bool last_ran = h.get("/actions/" + ids.back()).second["status"] == "executed";
    CHECK(h.store->size() == before + distinct.size() + (last_ran ? 1 : 0));
}
