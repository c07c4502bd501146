#include "almanac/common/error.hpp"
#include "almanac/common/text.hpp"
#include "almanac/ehrqa/generate.hpp"
#include "almanac/exec/executor.hpp"
#include "almanac/knowledge/toolkit.hpp"
#include "almanac/store/history.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

using namespace almanac;
using namespace almanac::ehrqa;
using namespace almanac::testing;

namespace {

std::filesystem::path bank_path() { return std::filesystem::path(ALMANAC_TEMPLATES_DIR) / "ehrqa-templates.json"; }

const std::vector<QuestionTemplate>& bank() {
    static const auto b = load_templates(bank_path());
    return b;
}

Errc code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return Errc::IoError;
}

std::size_t template_error_line(std::string_view text) {
    try {
        parse_templates(text);
    } catch (const TemplateError& e) {
        return e.line();
    }
    return 0;
}

const char* kMinimal = R"([
  {"id": "t1", "category": "information_retrieval",
   "text": "Is <test:test> abnormal?",
   "slots": {"test": {"source": "lab", "field": "name"}},
   "calls": [{"function": "search_observation_database",
              "args": {"patient_id": {"slot": "patient"}, "query": {"slot": "test", "match": "contains"}}}]}
])";

}  // namespace

TEST_CASE("the bank holds 40 templates split 29 / 11") {
    const auto& b = bank();
    REQUIRE(b.size() == 40);
    const auto de = std::count_if(b.begin(), b.end(), [](const auto& t) { return t.category == Category::DataEntry; });
    CHECK(de == 11);
    CHECK(b.size() - de == 29);
    std::set<std::string> ids;
    for (const auto& t : b) ids.insert(t.id);
    CHECK(ids.size() == 40);
}

TEST_CASE("template bank rejects malformed entries with a line number") {
    CHECK(parse_templates(kMinimal).size() == 1);

    SUBCASE("undeclared slot") {
        std::string text = kMinimal;
        text.replace(text.find("Is <test:test> abnormal?"), 24, "Is <test:test> abnormal on <date:date>?");
        CHECK(code_of([&] { parse_templates(text); }) == Errc::MalformedTemplate);
        CHECK(template_error_line(text) == 3);
    }
    SUBCASE("declared but unused slot") {
        std::string text = kMinimal;
        text.replace(text.find("\"slots\": {"), 10, "\"slots\": {\"date\": {\"source\": \"lab\", \"field\": \"date\"}, ");
        CHECK(code_of([&] { parse_templates(text); }) == Errc::MalformedTemplate);
    }
    SUBCASE("unknown function") {
        std::string text = kMinimal;
        text.replace(text.find("search_observation_database"), 27, "search_everything");
        CHECK(code_of([&] { parse_templates(text); }) == Errc::MalformedTemplate);
        CHECK(template_error_line(text) == 5);
    }
    SUBCASE("unknown parameter") {
        std::string text = kMinimal;
        text.replace(text.find("\"query\""), 7, "\"needle\"");
        CHECK(code_of([&] { parse_templates(text); }) == Errc::MalformedTemplate);
    }
    SUBCASE("missing required parameter") {
        std::string text = kMinimal;
        text.replace(text.find("\"patient_id\": {\"slot\": \"patient\"}, "), 35, "");
        CHECK(code_of([&] { parse_templates(text); }) == Errc::MalformedTemplate);
    }
    SUBCASE("unknown source field") {
        std::string text = kMinimal;
        text.replace(text.find("\"field\": \"name\""), 15, "\"field\": \"colour\"");
        CHECK(code_of([&] { parse_templates(text); }) == Errc::MalformedTemplate);
    }
    SUBCASE("bad matcher") {
        std::string text = kMinimal;
        text.replace(text.find("\"contains\""), 10, "\"roughly\"");
        CHECK(code_of([&] { parse_templates(text); }) == Errc::MalformedTemplate);
    }
    SUBCASE("invalid JSON") {
        CHECK(code_of([] { parse_templates("[{\"id\": }]"); }) == Errc::MalformedTemplate);
    }
    SUBCASE("partial bank through load_templates") {
        const auto dir = std::filesystem::temp_directory_path() / "almanac-ehrqa-partial";
        std::filesystem::create_directories(dir);
        write_file(dir / "bank.json", kMinimal);
        CHECK(code_of([&] { load_templates(dir / "bank.json"); }) == Errc::MalformedTemplate);
        CHECK(load_templates(dir / "bank.json", tools::builtin_registry(), false).size() == 1);
    }
}

TEST_CASE("render_question substitutes every placeholder") {
    const auto* t = find_template(bank(), "ir05");
    REQUIRE(t);
    CHECK(render_question(*t, {{"patient", "10000001"}, {"test", "Sodium"}}) ==
          "Did patient 10000001 ever have Sodium done? What was the value?");
}

TEST_CASE("instantiate_calls resolves the guard of the conditional order") {
    const auto* t = find_template(bank(), "de06");
    REQUIRE(t);
    const Bindings b = {{"patient", "10000001"}, {"test", "Potassium"}, {"direction", "below"}, {"value", "3.5"},
                        {"medication", "potassium chloride"}, {"dosage", "20 mEq"}, {"frequency", "once"}};
    const auto s = instantiate_calls(*t, b);
    REQUIRE(s.steps.size() == 2);
    REQUIRE(s.steps[1].guard);
    CHECK(s.steps[1].guard->op == script::CompareOp::Lt);
    CHECK(s.steps[1].guard->rhs == 3.5);
    CHECK(s.steps[1].guard->lhs.ref()->step_id == "step1");
    CHECK(resolve_and_typecheck(s, tools::builtin_registry()).ok());

    auto above = b;
    above["direction"] = "above";
    CHECK(instantiate_calls(*t, above).steps[1].guard->op == script::CompareOp::Gt);
}

TEST_CASE("build_gold records matchers and leaves unconstrained arguments open") {
    const auto* t = find_template(bank(), "de03");
    REQUIRE(t);
    const Bindings b = {{"patient", "10000001"}, {"medication", "metformin"}, {"dosage", "500 mg"}, {"frequency", "twice daily"}};
    const auto g = build_gold(*t, b);
    REQUIRE(g.expected_functions == std::vector<std::string>{"create_medication_request_order"});
    const auto& c = g.param_constraints.at(0);
    CHECK(c.at("dosage").match == Matcher::Exact);
    CHECK(c.at("dosage").value == "500 mg");
    CHECK(c.at("name").match == Matcher::CaseInsensitive);
    CHECK(c.at("subject").value == "10000001");
    CHECK_FALSE(g.allow_refusal);

    const auto* lit = find_template(bank(), "ir04");
    const auto lg = build_gold(*lit, {{"patient", "10000001"}, {"test", "TSH"}});
    CHECK(lg.param_constraints.at(0).at("query").match == Matcher::Contains);
    CHECK(lg.param_constraints.at(0).at("query").value == "TSH");
}

TEST_CASE("history rows pair fields from one resource") {
    auto s = fixture_store();
    const auto h = s->patient_history({fhir::ResourceType::Patient, "10000001"});
    const auto rows = history_rows(h);
    REQUIRE(rows.count("lab"));
    for (const auto& row : rows.at("lab")) {
        // Oracle: some lab observation carries exactly this name, day and value.
        const bool found = std::any_of(h.events.begin(), h.events.end(), [&](const auto& e) {
            const auto* o = e.resource.template get_if<fhir::Observation>();
            const auto* q = o ? std::get_if<fhir::Quantity>(&o->value) : nullptr;
            return q && o->code.text == row.at("name") && o->effective.day() == row.at("date") &&
                   format_number(q->value) == row.at("value");
        });
        CHECK(found);
    }
    CHECK(rows.at("patient").size() == 1);
    CHECK(rows.at("patient")[0].at("id") == "10000001");
}

TEST_CASE("property: every bound value is grounded in the patient's history") {
    auto s = fixture_store();
    std::vector<store::PatientHistory> histories;
    for (const auto& r : s->all()) {
        if (r.type() == fhir::ResourceType::Patient) histories.push_back(s->patient_history(r.resource_id()));
    }
    std::size_t grounded = 0;
    for (std::uint64_t seed = 0; seed < 400; ++seed) {
        Rng rng = derive_rng(99, seed);
        const auto& h = histories[uniform_index(rng, histories.size())];
        const auto& t = bank()[uniform_index(rng, bank().size())];
        auto result = ground_question(t, h, rng);
        const auto* g = std::get_if<Grounded>(&result);
        if (!g) continue;
        ++grounded;
        std::string history_text;
        history_text += serialize_resource(FhirResource(h.patient));
        for (const auto& e : h.events) history_text += serialize_resource(e.resource);
        for (const auto& slot : t.slots) {
            const auto& value = g->slots.at(slot.name);
            if (slot.is_choice()) {
                CHECK(std::find(slot.choices.begin(), slot.choices.end(), value) != slot.choices.end());
            } else {
                INFO(t.id << " slot " << slot.name << " = " << value);
                CHECK(history_text.find(value) != std::string::npos);
            }
            CHECK(g->question.find(value) != std::string::npos);
        }
        CHECK(g->slots.at("patient") == h.patient.id);
    }
    CHECK(grounded > 300);
}

TEST_CASE("templates needing absent data are unfillable") {
    store::Store s(fixed_clock(at("2160-01-01")));
    s.ingest_bundle({make_patient("00000001"), make_medication("00000301", "00000001", "2160-01-01T10:00:00Z")});
    const auto h = s.patient_history({fhir::ResourceType::Patient, "00000001"});
    Rng rng(1);
    CHECK(std::holds_alternative<Unfillable>(ground_question(*find_template(bank(), "ir06"), h, rng)));
    CHECK(std::holds_alternative<Unfillable>(ground_question(*find_template(bank(), "ir26"), h, rng)));

    SUBCASE("a patient with one medication order binds that order") {
        auto r = ground_question(*find_template(bank(), "ir17"), h, rng);
        const auto* g = std::get_if<Grounded>(&r);
        REQUIRE(g);
        CHECK(g->question == "What dosage of lisinopril is patient 00000001 taking?");
        CHECK(g->gold.expected_functions == std::vector<std::string>{"search_medication_request_database"});
        CHECK(g->gold.param_constraints[0].at("query").value == "lisinopril");
        CHECK(g->gold.param_constraints[0].at("patient_id").value == "00000001");
    }
}

TEST_CASE("a rephrasing that drops a bound value falls back to the template text") {
    store::Store s(fixed_clock(at("2160-01-01")));
    s.ingest_bundle({make_patient("00000001"), make_medication("00000301", "00000001", "2160-01-01T10:00:00Z")});
    const auto h = s.patient_history({fhir::ResourceType::Patient, "00000001"});
    const auto& t = *find_template(bank(), "ir17");

    std::string seen_prompt;
    Rng rng(3);
    auto lossy = ground_question(t, h, rng, [&](const std::string& p) {
        seen_prompt = p;
        return std::string("How much of the blood pressure pill is the patient on?");
    });
    CHECK(std::get<Grounded>(lossy).question == "What dosage of lisinopril is patient 00000001 taking?");
    CHECK(starts_with(seen_prompt, "Given the following template question (T): What dosage of <medication:medication>"));
    CHECK(seen_prompt.find("Only use information present within H.") != std::string::npos);

    Rng rng2(3);
    auto faithful = ground_question(t, h, rng2, [](const std::string&) {
        return std::string("  For patient 00000001, what lisinopril dose is on file?  ");
    });
    CHECK(std::get<Grounded>(faithful).question == "For patient 00000001, what lisinopril dose is on file?");
}

TEST_CASE("negative questions avoid every entity in the history") {
    auto s = fixture_store();
    for (const auto& r : s->all()) {
        if (r.type() != fhir::ResourceType::Patient) continue;
        const auto h = s->patient_history(r.resource_id());
        std::vector<std::string> names;
        for (const auto& e : h.events) {
            if (const auto* c = e.resource.get_if<fhir::Condition>()) names.push_back(c->code.text);
            if (const auto* m = e.resource.get_if<fhir::MedicationRequest>()) names.push_back(m->medication_name);
            if (const auto* o = e.resource.get_if<fhir::Observation>()) names.push_back(o->code.text);
        }
        for (std::uint64_t k = 0; k < 20; ++k) {
            Rng rng = derive_rng(5, k);
            const auto q = negative_question(h, rng);
            for (const auto& n : names) CHECK_FALSE(icontains(q, n));
        }
        Rng rng(1);
        REQUIRE_FALSE(names.empty());
        const std::string overlapping = "Is " + names.front() + " worth discussing?";
        const auto q = negative_question(h, rng, [&](const std::string&) { return overlapping; });
        CHECK(q != overlapping);
    }
    CHECK(negative_gold().allow_refusal);
    CHECK(negative_prompt("H").find("generate a random medical question unrelated to (H).") != std::string::npos);
}

TEST_CASE("generation is deterministic for a seed") {
    auto s = fixture_store();
    GeneratorConfig cfg;
    cfg.n_questions = 60;
    cfg.p_negative = 0.0;
    const auto a = generate_dataset(cfg, *s, bank());
    const auto b = generate_dataset(cfg, *s, bank());
    CHECK(dataset_text(a) == dataset_text(b));
    CHECK(std::none_of(a.items.begin(), a.items.end(), [](const auto& i) { return i.negative; }));
    CHECK(a.items.front().item_id == "q0001");
    cfg.seed = 8;
    CHECK(dataset_text(generate_dataset(cfg, *s, bank())) != dataset_text(a));
}

TEST_CASE("negative fraction tracks p_negative") {
    auto s = fixture_store();
    GeneratorConfig cfg;
    cfg.n_questions = 3000;
    cfg.p_negative = 0.1;
    const auto d = generate_dataset(cfg, *s, bank());
    const auto negatives = std::count_if(d.items.begin(), d.items.end(), [](const auto& i) { return i.negative; });
    const double fraction = static_cast<double>(negatives) / 3000.0;
    // Three binomial standard deviations around 0.1 at n = 3000.
    CHECK(fraction >= 0.083);
    CHECK(fraction <= 0.117);
    for (const auto& item : d.items) {
        if (item.negative) {
            CHECK_FALSE(item.template_id);
        } else {
            REQUIRE(item.template_id);
            CHECK(find_template(bank(), *item.template_id));
        }
    }
}

TEST_CASE("every template gets used and every grounded oracle script dry-runs cleanly") {
    auto s = fixture_store();
    const auto kit = knowledge::load_toolkit(ALMANAC_DATA_DIR);
    exec::ToolRuntime runtime(*s, tools::builtin_registry(), kit.literature, kit.calculators);
    exec::Executor executor(runtime, fixed_clock(at("2160-06-01")));

    GeneratorConfig cfg;
    cfg.n_questions = 600;
    cfg.p_negative = 0.0;
    const auto d = generate_dataset(cfg, *s, bank());
    std::set<std::string> used;
    for (const auto& item : d.items) {
        const auto& t = *find_template(bank(), *item.template_id);
        used.insert(t.id);
        const auto script = instantiate_calls(t, item.slots);
        const auto check = resolve_and_typecheck(script, tools::builtin_registry(),
                                                 [&](const fhir::ResourceId& id) { return s->contains(id); });
        INFO(item.question);
        CHECK(check.ok());
        const auto run = executor.dry_run(script);
        CHECK(run.ok());
    }
    CHECK(used.size() == 40);
}

TEST_CASE("dataset files round-trip and reject damaged records") {
    auto s = fixture_store();
    GeneratorConfig cfg;
    cfg.n_questions = 25;
    cfg.p_negative = 0.3;
    const auto d = generate_dataset(cfg, *s, bank());
    const auto text = dataset_text(d);
    const auto back = parse_dataset(text);
    CHECK(back.header == d.header);
    CHECK(back.items == d.items);

    auto lines = split(text, '\n');
    auto broken = nlohmann::json::parse(lines[3]);
    broken.erase("gold");
    lines[3] = broken.dump();
    std::string damaged;
    for (const auto& l : lines) damaged += l + "\n";
    try {
        parse_dataset(damaged);
        FAIL("expected MalformedRecord");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::MalformedRecord);
        CHECK(starts_with(e.detail(), "line 4:"));
    }

    CHECK(code_of([] { parse_dataset(""); }) == Errc::MalformedRecord);
    CHECK(code_of([&] { parse_dataset(lines[0] + "\n"); }) == Errc::MalformedRecord);
}

TEST_CASE("generator configuration errors") {
    auto s = fixture_store();
    GeneratorConfig cfg;
    cfg.p_negative = 1.5;
    CHECK(code_of([&] { generate_dataset(cfg, *s, bank()); }) == Errc::InvalidArgument);
    store::Store empty(fixed_clock(at("2160-01-01")));
    CHECK(code_of([&] { generate_dataset(GeneratorConfig{}, empty, bank()); }) == Errc::EmptyInput);

    store::Store bare(fixed_clock(at("2160-01-01")));
    bare.ingest_bundle({make_patient("00000001")});
    std::vector<QuestionTemplate> imaging_only = {*find_template(bank(), "ir06")};
    cfg = GeneratorConfig{};
    cfg.n_questions = 1;
    cfg.p_negative = 0.0;
    CHECK(code_of([&] { generate_dataset(cfg, bare, imaging_only); }) == Errc::ExhaustedRetries);
}
