#include "almanac/common/error.hpp"
#include "almanac/common/text.hpp"
#include "almanac/exec/executor.hpp"
#include "almanac/knowledge/calculator.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <set>
#include <thread>

using namespace almanac;
using namespace almanac::exec;
using namespace almanac::testing;
using script::parse_script;
using script::Script;

namespace {

const char* kPatient = "00000001";
const char* kOther = "00000002";
const char* kEncounter = "00000101";

std::vector<FhirResource> world() {
    return {make_patient(kPatient), make_patient(kOther, "Ben Ortiz"),
            make_encounter(kEncounter, kPatient, "2160-02-01T08:00:00Z"),
            make_observation("00000201", kPatient, "2160-02-01T09:00:00Z", "Potassium", 4.1),
            make_observation("00000202", kPatient, "2160-02-02T09:00:00Z", "Sodium", 139),
            make_medication("00000301", kPatient, "2160-02-01T10:00:00Z")};
}

struct Rig {
    store::Store store{stepping_clock(at("2160-03-01T00:00:00Z"), 1)};
    std::shared_ptr<knowledge::CalculatorLibrary> calculators = std::make_shared<knowledge::CalculatorLibrary>();
    ToolRuntime runtime;
    Executor executor;

    explicit Rig(std::optional<std::filesystem::path> actions = std::nullopt)
        : runtime(store, tools::builtin_registry(), nullptr, calculators),
          executor(runtime, stepping_clock(at("2160-03-01T00:00:00Z"), 5), std::move(actions)) {
        calculators->load_dir(std::filesystem::path(ALMANAC_DATA_DIR) / "calculators");
        store.ingest_bundle(world());
    }
};

const char* kCreateOrder =
    R"({"steps":[{"id":"step1","function":"create_medication_request_order","args":{
        "status":"active","intent":"order","name":"potassium chloride","dosage":"20 mEq",
        "frequency":"once","subject":"00000001"}}]})";

const char* kSearchOnly =
    R"({"steps":[{"id":"step1","function":"search_observation_database","args":{
        "patient_id":"00000001","query":"potassium"}},
      {"id":"step2","function":"search_encounter_database","args":{"patient_id":"00000001"}}]})";

Errc code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return Errc::IoError;
}

}  // namespace

TEST_CASE("submit queues the action and leaves the store alone") {
    Rig rig;
    const auto digest = rig.store.content_digest();
    const auto id = rig.executor.submit("s1", parse_script(kCreateOrder));
    CHECK(id == "act-000001");
    const auto a = rig.executor.get(id);
    CHECK(a.status == ActionStatus::Pending);
    CHECK(a.session_id == "s1");
    CHECK_FALSE(a.results);
    CHECK(rig.store.content_digest() == digest);
}

TEST_CASE("a search-only script is queued like any other") {
    Rig rig;
    const auto audit = rig.store.audit_log().size();
    const auto id = rig.executor.submit("s1", parse_script(kSearchOnly));
    CHECK(rig.executor.get(id).status == ActionStatus::Pending);
    CHECK(rig.executor.list(std::nullopt, ActionStatus::Pending).size() == 1);
    CHECK(rig.store.audit_log().size() == audit);
}

TEST_CASE("submit rejects scripts that fail typechecking") {
    Rig rig;
    const char* bad = R"({"steps":[{"id":"step1","function":"order_potassium","args":{}}]})";
    CHECK(code_of([&] { rig.executor.submit("s1", parse_script(bad)); }) == Errc::InvalidScript);
    const char* dangling = R"({"steps":[{"id":"step1","function":"search_encounter_database",
        "args":{"patient_id":"99999999"}}]})";
    CHECK(code_of([&] { rig.executor.submit("s1", parse_script(dangling)); }) == Errc::InvalidScript);
    CHECK(rig.executor.list().empty());
}

TEST_CASE("approving a one-step order creates the resource with audit attribution") {
    Rig rig;
    const auto before = rig.store.count(ResourceType::MedicationRequest);
    const auto id = rig.executor.submit("s1", parse_script(kCreateOrder));
    const auto result = rig.executor.approve(id, "dr.lee");
    REQUIRE(result.ok());
    REQUIRE(result.steps.size() == 1);
    CHECK(result.steps[0].status == StepOutcome::Status::Ok);
    CHECK_FALSE(result.steps[0].preview);

    const auto created_id = result.steps[0].value->at("id").get<std::string>();
    const auto stored = rig.store.get({ResourceType::MedicationRequest, created_id});
    const auto& mr = std::get<MedicationRequest>(stored.value());
    CHECK(mr.medication_name == "potassium chloride");
    CHECK(mr.subject == patient_ref(kPatient));
    CHECK(rig.store.count(ResourceType::MedicationRequest) == before + 1);

    const auto log = rig.store.audit_log();
    CHECK(log.back().actor == "dr.lee");
    CHECK(log.back().action_id == id);
    CHECK(log.back().step_id == "step1");

    const auto a = rig.executor.get(id);
    CHECK(a.status == ActionStatus::Executed);
    CHECK(a.decision_by == "dr.lee");
    CHECK(a.results == result);
    CHECK(a.created_at <= *a.decided_at);
    CHECK(*a.decided_at <= *a.finished_at);
}

TEST_CASE("a false guard skips the step") {
    Rig rig;
    const char* text = R"({"steps":[
      {"id":"k","function":"search_observation_database","args":{"patient_id":"00000001","query":"potassium"}},
      {"id":"replace","function":"create_medication_request_order","args":{"status":"active","intent":"order",
        "name":"potassium chloride","dosage":"20 mEq","frequency":"once","subject":"$k.result[0].subject.reference"},
       "when":{"lhs":"$k.result[0].valueQuantity.value","op":"lt","rhs":3.5}}]})";
    const auto count = rig.store.count(ResourceType::MedicationRequest);
    const auto result = rig.executor.approve(rig.executor.submit("s1", parse_script(text)), "dr.lee");
    REQUIRE(result.steps.size() == 2);
    CHECK(result.ok());
    CHECK(result.steps[1].status == StepOutcome::Status::SkippedGuard);
    CHECK_FALSE(result.steps[1].value);
    CHECK(rig.store.count(ResourceType::MedicationRequest) == count);
}

TEST_CASE("a true guard runs the step and the reference resolves to the patient") {
    Rig rig;
    const char* text = R"({"steps":[
      {"id":"k","function":"search_observation_database","args":{"patient_id":"00000001","query":"potassium"}},
      {"id":"replace","function":"create_medication_request_order","args":{"status":"active","intent":"order",
        "name":"potassium chloride","dosage":"20 mEq","frequency":"once","subject":"$k.result[0].subject.reference"},
       "when":{"lhs":"$k.result[0].valueQuantity.value","op":"ge","rhs":3.5}}]})";
    const auto result = rig.executor.approve(rig.executor.submit("s1", parse_script(text)), "dr.lee");
    REQUIRE(result.ok());
    CHECK(result.steps[1].status == StepOutcome::Status::Ok);
    CHECK(result.steps[1].value->at("subject").at("reference") == "Patient/00000001");
}

TEST_CASE("an empty search followed by an indexed reference aborts at the second step") {
    Rig rig;
    const char* text = R"({"steps":[
      {"id":"step1","function":"search_observation_database","args":{"patient_id":"00000001","query":"troponin"}},
      {"id":"step2","function":"create_nursing_communication","args":{"subject":"$step1.result[0].subject.reference",
        "message":"recheck"}},
      {"id":"step3","function":"search_encounter_database","args":{"patient_id":"00000001"}}]})";
    const auto digest = rig.store.content_digest();
    const auto id = rig.executor.submit("s1", parse_script(text));
    const auto result = rig.executor.approve(id, "dr.lee");
    CHECK(result.aborted_at == "step2");
    REQUIRE(result.steps.size() == 2);
    CHECK(result.steps[0].value->empty());
    CHECK(result.steps[1].status == StepOutcome::Status::Error);
    CHECK(result.steps[1].error->code == runtime_code::kIndexOutOfRange);
    CHECK(rig.store.content_digest() == digest);
    CHECK(rig.executor.get(id).status == ActionStatus::Failed);
}

TEST_CASE("runtime reference errors carry distinct codes") {
    std::vector<StepOutcome> outcomes(2);
    outcomes[0].step_id = "a";
    outcomes[0].value = json{{"id", "x"}, {"list", json::array({1})}};
    outcomes[1].step_id = "b";
    outcomes[1].status = StepOutcome::Status::SkippedGuard;
    auto code = [&](const char* text) {
        try {
            resolve_ref(*script::parse_ref(text), outcomes);
        } catch (const StepFailure& f) {
            return f.code();
        }
        return std::string("none");
    };
    CHECK(code("$a.result.id") == "none");
    CHECK(code("$a.result.missing") == runtime_code::kMissingField);
    CHECK(code("$a.result.list[1]") == runtime_code::kIndexOutOfRange);
    CHECK(code("$a.result[0]") == runtime_code::kKindMismatch);
    CHECK(code("$a.result.id.more") == runtime_code::kKindMismatch);
    CHECK(code("$b.result") == runtime_code::kSkippedReference);
}

TEST_CASE("guards compare numbers numerically and strings lexicographically") {
    using script::CompareOp;
    CHECK(guard_holds(json(3.1), CompareOp::Lt, json(3.5)));
    CHECK(guard_holds(json(10), CompareOp::Gt, json(9.5)));
    CHECK(guard_holds(json("2160-01-02"), CompareOp::Gt, json("2160-01-01")));
    CHECK(guard_holds(json("final"), CompareOp::Eq, json("final")));
    CHECK(guard_holds(json("a"), CompareOp::Ne, json("b")));
    CHECK_FALSE(guard_holds(json(4), CompareOp::Le, json(3)));
    CHECK_THROWS_AS(guard_holds(json("3"), CompareOp::Lt, json(4)), StepFailure);
    CHECK_THROWS_AS(guard_holds(json(true), CompareOp::Eq, json(1)), StepFailure);
}

TEST_CASE("decisions are final") {
    Rig rig;
    const auto a = rig.executor.submit("s1", parse_script(kCreateOrder));
    const auto digest = rig.store.content_digest();
    rig.executor.reject(a, "dr.lee");
    CHECK(rig.store.content_digest() == digest);
    CHECK(rig.executor.get(a).status == ActionStatus::Rejected);
    CHECK(code_of([&] { rig.executor.approve(a, "dr.lee"); }) == Errc::WrongState);
    CHECK(code_of([&] { rig.executor.reject(a, "dr.lee"); }) == Errc::WrongState);

    const auto b = rig.executor.submit("s1", parse_script(kCreateOrder));
    rig.executor.approve(b, "dr.lee");
    CHECK(code_of([&] { rig.executor.approve(b, "dr.lee"); }) == Errc::WrongState);
    CHECK(code_of([&] { rig.executor.reject(b, "dr.lee"); }) == Errc::WrongState);
    CHECK(code_of([&] { rig.executor.approve("act-999999", "dr.lee"); }) == Errc::NotFound);
    CHECK(code_of([&] { rig.executor.get("nope"); }) == Errc::NotFound);
}

TEST_CASE("concurrent approve and reject have exactly one winner") {
    Rig rig;
    for (int round = 0; round < 40; ++round) {
        const auto id = rig.executor.submit("s1", parse_script(kCreateOrder));
        std::atomic<int> wins{0};
        std::vector<std::thread> threads;
        for (int t = 0; t < 6; ++t) {
            threads.emplace_back([&, t] {
                try {
                    if (t % 2) {
                        rig.executor.approve(id, "dr." + std::to_string(t));
                    } else {
                        rig.executor.reject(id, "dr." + std::to_string(t));
                    }
                    ++wins;
                } catch (const Error& e) {
                    CHECK(e.code() == Errc::WrongState);
                }
            });
        }
        for (auto& th : threads) th.join();
        CHECK(wins.load() == 1);
        const auto status = rig.executor.get(id).status;
        CHECK((status == ActionStatus::Executed || status == ActionStatus::Rejected));
    }
    std::size_t executed = rig.executor.list(std::nullopt, ActionStatus::Executed).size();
    CHECK(rig.store.count(ResourceType::MedicationRequest) == 1 + executed);
}

TEST_CASE("dry run previews mutations without writing") {
    Rig rig;
    const auto digest = rig.store.content_digest();
    const auto audit = rig.store.audit_log().size();
    const auto result = rig.executor.dry_run(parse_script(kCreateOrder));
    REQUIRE(result.ok());
    CHECK(result.steps[0].preview);
    CHECK(result.steps[0].value->at("id") == "preview-step1");
    CHECK(result.steps[0].value->at("resourceType") == "MedicationRequest");
    CHECK(rig.store.content_digest() == digest);
    CHECK(rig.store.audit_log().size() == audit);
    CHECK(rig.executor.list().empty());
}

TEST_CASE("dry run of a search-only script matches approval") {
    Rig rig;
    const auto script = parse_script(kSearchOnly);
    const auto preview = rig.executor.dry_run(script);
    const auto approved = rig.executor.approve(rig.executor.submit("s1", script), "dr.lee");
    CHECK(preview == approved);
    CHECK(preview.steps[0].value->size() == 1);
}

TEST_CASE("approving the same script on the same snapshot is deterministic") {
    const char* text = R"({"steps":[
      {"id":"e","function":"search_encounter_database","args":{"patient_id":"00000001"}},
      {"id":"lab","function":"create_service_request_order","args":{"subject":"00000001","category":"laboratory",
        "code":"basic metabolic panel","encounter_id":"$e.result[0].id"}},
      {"id":"bmi","function":"run_clinical_calculator","args":{"calculator_id":"bmi","inputs":"weight=70, height=1.75"}}]})";
    Rig a;
    Rig b;
    CHECK(a.store.content_digest() == b.store.content_digest());
    const auto ra = a.executor.approve(a.executor.submit("s1", parse_script(text)), "dr.lee");
    const auto rb = b.executor.approve(b.executor.submit("s1", parse_script(text)), "dr.lee");
    REQUIRE(ra.ok());
    CHECK(ra == rb);
    CHECK(ra.to_json().dump() == rb.to_json().dump());
    CHECK(a.store.content_digest() == b.store.content_digest());
    CHECK(ra.steps[1].value->at("encounter").at("reference") == "Encounter/00000101");
    CHECK(ra.steps[2].value->get<double>() == doctest::Approx(70.0 / (1.75 * 1.75)));
}

TEST_CASE("action records persist as JSON lines and restore") {
    const auto dir = std::filesystem::temp_directory_path() / "almanac_exec_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    const auto path = dir / "store.json.actions";
    std::string approved, rejected;
    {
        Rig rig(path);
        approved = rig.executor.submit("s1", parse_script(kCreateOrder));
        rig.executor.approve(approved, "dr.lee");
        rejected = rig.executor.submit("s2", parse_script(kSearchOnly));
        rig.executor.reject(rejected, "dr.kim");
    }
    CHECK(read_lines(path).size() == 5);  // submit, approve, execute, submit, reject
    const auto loaded = Executor::load_actions(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].action_id == approved);
    CHECK(loaded[0].status == ActionStatus::Executed);
    CHECK(loaded[0].script == parse_script(kCreateOrder));
    CHECK(loaded[0].results->ok());
    CHECK(loaded[1].status == ActionStatus::Rejected);
    CHECK(loaded[1].decision_by == "dr.kim");

    Rig again;
    again.executor.restore_actions(loaded);
    CHECK(again.executor.list().size() == 2);
    CHECK(again.executor.submit("s3", parse_script(kCreateOrder)) == "act-000003");

    write_file(dir / "bad.actions", "{\"action_id\":1}\n");
    CHECK(code_of([&] { Executor::load_actions(dir / "bad.actions"); }) == Errc::MalformedRecord);
    std::filesystem::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Properties
// ---------------------------------------------------------------------------

namespace {

const std::vector<const char*> kTemplates = {
    kCreateOrder,
    kSearchOnly,
    R"({"steps":[{"id":"e","function":"search_encounter_database","args":{"patient_id":"00000002"}},
      {"id":"note","function":"create_nursing_communication","args":{"subject":"00000002","message":"ambulate"}}]})",
    R"({"steps":[{"id":"m","function":"search_medication_request_database","args":{"patient_id":"00000001",
        "query":"lisinopril"}},
      {"id":"hold","function":"create_service_request_order","args":{"subject":"$m.result[0].subject.reference",
        "category":"vitals","code":"blood pressure check","frequency":"q4h"}}]})",
    R"({"steps":[{"id":"x","function":"search_observation_database","args":{"patient_id":"00000001","query":"lactate"}},
      {"id":"y","function":"create_nursing_communication","args":{"subject":"$x.result[0].subject.reference",
        "message":"draw lactate"}}]})",
};

}  // namespace

TEST_CASE("property: only approved actions change the store and the audit log replays it") {
    for (std::uint64_t seed = 1; seed <= 25; ++seed) {
        Rng rng(seed * 7919);
        Rig rig;
        std::vector<std::string> pending;
        std::map<std::string, Script> scripts;
        for (int op = 0; op < 40; ++op) {
            const auto digest = rig.store.content_digest();
            const auto choice = uniform_index(rng, 3);
            if (choice == 0 || pending.empty()) {
                auto s = parse_script(kTemplates[uniform_index(rng, kTemplates.size())]);
                const auto id = rig.executor.submit("s" + std::to_string(seed), s);
                scripts.emplace(id, s);
                pending.push_back(id);
                CHECK(rig.store.content_digest() == digest);
                continue;
            }
            const auto at_index = uniform_index(rng, pending.size());
            const auto id = pending[at_index];
            pending.erase(pending.begin() + static_cast<std::ptrdiff_t>(at_index));
            if (choice == 1) {
                rig.executor.reject(id, "dr.lee");
                CHECK(rig.store.content_digest() == digest);
            } else {
                rig.executor.approve(id, "dr.lee");
            }
        }

        std::set<std::pair<std::string, std::string>> seen;
        std::vector<store::AuditRecord> log = rig.store.audit_log();
        for (const auto& rec : log) {
            if (rec.operation == "ingest") continue;
            REQUIRE(rec.action_id);
            REQUIRE(rec.step_id);
            const auto a = rig.executor.get(*rec.action_id);
            CHECK((a.status == ActionStatus::Executed || a.status == ActionStatus::Failed));
            const auto* step = a.script.find(*rec.step_id);
            REQUIRE(step);
            CHECK(tools::builtin_registry().find(step->call.function)->mutating);
            CHECK(seen.emplace(*rec.action_id, *rec.step_id).second);
        }
        for (const auto& a : rig.executor.list(std::nullopt, ActionStatus::Rejected)) {
            for (const auto& [action, step] : seen) CHECK(action != a.action_id);
        }

        store::Store rebuilt;
        rebuilt.replay(log);
        CHECK(rebuilt.content_digest() == rig.store.content_digest());
    }
}

namespace {

std::string choose(Rng& rng, const std::vector<std::string>& items) {
    return items[uniform_index(rng, items.size())];
}

const std::vector<std::string> kPaths = {
    "",
    ".id",
    "[0]",
    "[0].id",
    "[1].id",
    ".subject.reference",
    "[0].subject.reference",
    "[1].subject.reference",
    "[0].patient.reference",
    "[0].encounter.reference",
    ".encounter.reference",
    "[0].status",
    ".status",
    "[0].valueQuantity.value",
    "[0].valueQuantity.unit",
    "[0].code.text",
    "[0].effectiveDateTime",
    "[0].authoredOn",
    ".authoredOn",
    "[0].period.start",
    "[0].intent",
    ".medicationCodeableConcept.text",
    "[0].dosageInstruction[0].text",
    "[0].category[0].coding[0].code",
};

const std::vector<std::string> kGuardPaths = {
    "", "[0].valueQuantity.value", "[0].status", ".status", "[0].effectiveDateTime", ".authoredOn", "[0].period.start",
};

json literal_for(Rng& rng, const tools::ParamSpec& p) {
    switch (p.kind) {
        case tools::ParamKind::Number: return 3.5;
        case tools::ParamKind::Boolean: return bernoulli(rng, 0.5);
        case tools::ParamKind::Date: return choose(rng, std::vector<std::string>{"2160-02-01", "2160-02-02T09:00:00Z"});
        case tools::ParamKind::Enum: return choose(rng, p.values);
        case tools::ParamKind::ResourceRef:
            if (p.resource_type == ResourceType::Encounter) return kEncounter;
            return choose(rng, std::vector<std::string>{kPatient, kOther, std::string("Patient/") + kPatient});
        default: break;
    }
    if (p.name == "calculator_id") return "shock-index";
    if (p.name == "inputs") return "hr=110, sbp=100";
    return choose(rng, std::vector<std::string>{"potassium", "lisinopril", "20 mEq", "daily", "sodium"});
}

Script random_typed_script(Rng& rng) {
    const auto& registry = tools::builtin_registry();
    Script s;
    const auto n = 1 + uniform_index(rng, 4);
    for (std::size_t i = 0; i < n; ++i) {
        script::Step step;
        step.id = "s" + std::to_string(i);
        const auto& schema = registry.schemas()[uniform_index(rng, registry.size())];
        step.call.function = schema.name;
        for (const auto& p : schema.params) {
            if (!p.required && !bernoulli(rng, 0.4)) continue;
            if (i > 0 && bernoulli(rng, 0.25)) {
                const auto target = "s" + std::to_string(uniform_index(rng, i));
                step.call.args.emplace(p.name, tools::ArgValue{*script::parse_ref("$" + target + ".result" + choose(rng, kPaths))});
            } else {
                step.call.args.emplace(p.name, tools::ArgValue{literal_for(rng, p)});
            }
        }
        if (i > 0 && bernoulli(rng, 0.5)) {
            script::Guard g;
            g.lhs = *script::parse_ref("$s" + std::to_string(uniform_index(rng, i)) + ".result" + choose(rng, kGuardPaths));
            g.op = static_cast<script::CompareOp>(uniform_index(rng, 6));
            g.rhs = bernoulli(rng, 0.5) ? json(3.5) : json("2160-02-01");
            step.guard = std::move(g);
        }
        s.steps.push_back(std::move(step));
    }
    return s;
}

}  // namespace

TEST_CASE("property: accepted scripts never hit a kind mismatch at run time") {
    Rig rig;
    Rng rng(4242);
    std::size_t accepted = 0, with_refs = 0, with_guards = 0;
    std::map<std::string, std::size_t> codes;
    for (int trial = 0; trial < 20000; ++trial) {
        const Script s = random_typed_script(rng);
        auto check = script::resolve_and_typecheck(s, tools::builtin_registry(),
                                                   [&](const ResourceId& id) { return rig.store.contains(id); });
        if (!check.ok()) continue;
        ++accepted;
        if (!script::reference_edges(s).empty()) ++with_refs;
        const auto result = rig.executor.approve(rig.executor.submit("prop", s), "dr.prop");
        for (const auto& step : result.steps) {
            if (s.find(step.step_id)->guard && step.status != StepOutcome::Status::Error) ++with_guards;
            if (!step.error) continue;
            ++codes[step.error->code];
            INFO(script::print_script(s));
            INFO(step.error->message);
            CHECK(step.error->code != runtime_code::kKindMismatch);
            CHECK(step.error->code != runtime_code::kGuardKindMismatch);
        }
    }
    MESSAGE("accepted " << accepted << ", with references " << with_refs << ", guarded steps run " << with_guards);
    CHECK(accepted >= 500);
    CHECK(with_refs >= 100);
    CHECK(with_guards >= 20);
}
