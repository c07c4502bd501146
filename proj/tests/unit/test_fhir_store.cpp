#include "almanac/common/error.hpp"
#include "almanac/common/text.hpp"
#include "almanac/store/history.hpp"
#include "almanac/store/store.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <thread>

using namespace almanac;
using namespace almanac::fhir;
using namespace almanac::store;
using namespace almanac::testing;

namespace {

Clock test_clock() {
    return stepping_clock(at("2160-01-01T00:00:00Z"), 1);
}

Errc code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return Errc::IoError;
}

}  // namespace

TEST_CASE("ingest") {
    Store s(test_clock());
    SUBCASE("empty bundle inserts nothing") {
        CHECK(s.ingest_bundle({}) == 0);
        CHECK(s.size() == 0);
    }
    SUBCASE("patient plus three observations") {
        std::vector<FhirResource> b{make_patient("p1"), make_observation("o1", "p1", "2154-01-01T10:00:00Z"),
                                    make_observation("o2", "p1", "2154-01-02T10:00:00Z"),
                                    make_observation("o3", "p1", "2154-01-03T10:00:00Z")};
        CHECK(s.ingest_bundle(b) == 4);
        auto hits = s.search({ResourceType::Observation, {{"patient", FilterOp::Eq, "p1"}}, {}, 100});
        CHECK(ids_of(hits) == std::vector<std::string>{"o1", "o2", "o3"});
        CHECK(s.audit_log().size() == 4);
        CHECK(s.audit_log()[0].actor == "ingest");
    }
    SUBCASE("dangling reference aborts the whole bundle") {
        s.ingest_bundle({make_patient("p1")});
        auto before = s.snapshot_text();
        std::vector<FhirResource> b{make_observation("o1", "p1", "2154-01-01T10:00:00Z"),
                                    make_observation("o2", "p2", "2154-01-01T10:00:00Z")};
        CHECK(code_of([&] { s.ingest_bundle(b); }) == Errc::DanglingReference);
        CHECK(s.snapshot_text() == before);
        CHECK(s.audit_log().size() == 1);
    }
    SUBCASE("duplicate ids are rejected within and across bundles") {
        s.ingest_bundle({make_patient("p1")});
        CHECK(code_of([&] { s.ingest_bundle({make_patient("p1")}); }) == Errc::DuplicateId);
        CHECK(code_of([&] { s.ingest_bundle({make_patient("p2"), make_patient("p2")}); }) == Errc::DuplicateId);
        CHECK(s.size() == 1);
    }
    SUBCASE("references may point forward within a bundle") {
        auto o = make_observation("o1", "p1", "2154-01-01T10:00:00Z");
        o.encounter = encounter_ref("e1");
        CHECK(s.ingest_bundle({o, make_encounter("e1", "p1", "2154-01-01T09:00:00Z"), make_patient("p1")}) == 3);
    }
    SUBCASE("invalid resources are rejected") {
        CHECK(code_of([&] { s.ingest_bundle({make_patient("2154-10-03")}); }) == Errc::InvariantViolation);
    }
}

TEST_CASE("get and create") {
    Store s(test_clock());
    s.ingest_bundle({make_patient("p1"), make_encounter("e1", "p1", "2154-03-01T08:00:00Z")});

    CHECK(code_of([&] { s.get({ResourceType::Patient, "nobody"}); }) == Errc::NotFound);

    auto m = make_medication("", "p1", "2154-03-01T09:00:00Z");
    auto id = s.create(m, {"dr-lee", "act-1", "s1"});
    CHECK(id.id == "mr-1");
    auto back = s.get(id);
    CHECK(back.get_if<MedicationRequest>()->medication_name == "lisinopril");
    CHECK(s.audit_log().size() == 3);
    CHECK(s.audit_log().back().action_id == std::optional<std::string>("act-1"));
    CHECK(s.audit_log().back().operation == "create");

    CHECK(s.create(make_medication("", "p1", "2154-03-02T09:00:00Z")).id == "mr-2");
    CHECK(s.create(make_medication("mr-4", "p1", "2154-03-02T09:00:00Z")).id == "mr-4");
    CHECK(s.next_id(ResourceType::MedicationRequest) == "mr-5");
    CHECK(s.create(make_medication("", "p1", "2154-03-02T09:00:00Z")).id == "mr-5");

    SUBCASE("subject naming an encounter id does not resolve") {
        auto bad = make_medication("", "e1", "2154-03-01T09:00:00Z");
        CHECK(code_of([&] { s.create(bad); }) == Errc::DanglingReference);
    }
    SUBCASE("subject typed as an Encounter violates the model") {
        auto bad = make_medication("", "p1", "2154-03-01T09:00:00Z");
        bad.subject = encounter_ref("e1");
        CHECK(code_of([&] { s.create(bad); }) == Errc::InvariantViolation);
    }
    SUBCASE("duplicate explicit id") {
        CHECK(code_of([&] { s.create(make_medication("mr-1", "p1", "2154-03-01T09:00:00Z")); }) == Errc::DuplicateId);
    }
}

TEST_CASE("medication search by encounter and date") {
    Store s(test_clock());
    std::vector<FhirResource> b{make_patient("p1"), make_encounter("e1", "p1", "2154-05-01T08:00:00Z"),
                                make_encounter("e2", "p1", "2154-05-03T08:00:00Z")};
    const char* times[] = {"2154-05-01T09:00:00Z", "2154-05-01T23:59:59Z", "2154-05-02T00:00:00Z",
                           "2154-05-03T09:00:00Z", "2154-05-01T12:00:00Z"};
    const char* encs[] = {"e1", "e1", "e1", "e2", "e2"};
    for (int i = 0; i < 5; ++i) {
        auto m = make_medication("mr" + std::to_string(i + 1), "p1", times[i]);
        m.encounter = encounter_ref(encs[i]);
        b.push_back(m);
    }
    s.ingest_bundle(b);
    SearchQuery q{ResourceType::MedicationRequest,
                  {{"encounter", FilterOp::Eq, "e1"}, {"date", FilterOp::Eq, "2154-05-01"}},
                  {},
                  100};
    CHECK(ids_of(s.search(q)) == std::vector<std::string>{"mr1", "mr2"});
    CHECK(ids_of(s.search(q)) == oracle_search(s.all(), q));

    q.filters[1].value = "2154-06-01";
    CHECK(s.search(q).empty());

    SearchQuery sorted{ResourceType::MedicationRequest, {}, SortKey{"date", true}, 2};
    CHECK(ids_of(s.search(sorted)) == std::vector<std::string>{"mr4", "mr3"});
}

TEST_CASE("query errors") {
    Store s(test_clock());
    CHECK(code_of([&] { s.search({ResourceType::Observation, {{"colour", FilterOp::Eq, "x"}}, {}, 10}); }) ==
          Errc::UnknownField);
    CHECK(code_of([&] { s.search({ResourceType::Observation, {}, SortKey{"colour", false}, 10}); }) ==
          Errc::UnknownField);
    CHECK(code_of([&] { s.search({ResourceType::Observation, {}, {}, 0}); }) == Errc::InvalidQuery);
    CHECK(code_of([&] { s.search({ResourceType::Observation, {{"date", FilterOp::Eq, "10000032"}}, {}, 5}); }) ==
          Errc::InvalidQuery);
    CHECK(code_of([&] { s.search({ResourceType::Observation, {{"value", FilterOp::Ge, "high"}}, {}, 5}); }) ==
          Errc::InvalidQuery);
    CHECK(code_of([&] { s.search({ResourceType::Observation, {{"status", FilterOp::Contains, "f"}}, {}, 5}); }) ==
          Errc::InvalidQuery);
}

TEST_CASE("property: search equals a linear scan") {
    Rng rng(2024);
    auto bundle = random_bundle(rng, 6, 194);
    Store s(test_clock());
    REQUIRE(s.ingest_bundle(bundle) == 200);
    auto all = s.all();
    std::size_t nonempty = 0;
    for (int i = 0; i < 1000; ++i) {
        auto type = static_cast<ResourceType>(uniform_index(rng, kResourceTypeCount));
        SearchQuery q{type, {}, {}, 1 + uniform_index(rng, 60)};
        std::size_t nf = uniform_index(rng, 3);
        for (std::size_t k = 0; k < nf; ++k) q.filters.push_back(random_filter(rng, type, all));
        if (bernoulli(rng, 0.5)) {
            const auto& fields = search_fields(type);
            q.sort = SortKey{fields[uniform_index(rng, fields.size())].name, bernoulli(rng, 0.5)};
        }
        auto got = ids_of(s.search(q));
        if (!got.empty()) ++nonempty;
        std::string desc = std::string(to_string(type));
        for (const auto& f : q.filters) desc += " " + f.field + ":" + std::string(to_string(f.op)) + ":" + f.value;
        if (q.sort) desc += " sort " + q.sort->field + (q.sort->descending ? " desc" : "");
        INFO(desc);
        CHECK(got == oracle_search(all, q));
    }
    CHECK(nonempty > 300);
}

TEST_CASE("patient history") {
    Store s(test_clock());
    std::vector<FhirResource> b{make_patient("p1"), make_patient("p2")};
    const char* starts[] = {"2154-01-10T08:00:00Z", "2154-03-10T08:00:00Z", "2154-02-10T08:00:00Z"};
    for (int i = 0; i < 3; ++i) {
        std::string e = "e" + std::to_string(i + 1);
        b.push_back(make_encounter(e, "p1", starts[i]));
        auto o = make_observation("o" + std::to_string(i + 1), "p1", starts[i]);
        o.effective = o.effective.plus_seconds(3600);
        o.encounter = encounter_ref(e);
        b.push_back(o);
    }
    b.push_back(make_medication("m1", "p1", "2154-02-20"));
    s.ingest_bundle(b);

    CHECK(s.patient_history(patient_ref("p2")).events.empty());
    CHECK(code_of([&] { s.patient_history(patient_ref("p9")); }) == Errc::NotFound);

    auto h = s.patient_history(patient_ref("p1"));
    REQUIRE(h.events.size() == 7);
    std::vector<std::string> order;
    for (const auto& ev : h.events) order.push_back(ev.resource.id());
    CHECK(order == std::vector<std::string>{"e1", "o1", "e3", "o3", "m1", "e2", "o2"});
    for (std::size_t i = 1; i < h.events.size(); ++i) CHECK(h.events[i - 1].timestamp <= h.events[i].timestamp);

    auto digest = render_history_digest(h, 10000);
    CHECK(digest == render_history_digest(s.patient_history(patient_ref("p1")), 10000));
    // Newest encounter block first, unlinked events last.
    auto p2 = digest.find("[Encounter e2");
    auto p3 = digest.find("[Encounter e3");
    auto p1 = digest.find("[Encounter e1");
    auto pn = digest.find("[No encounter]");
    CHECK(p2 < p3);
    CHECK(p3 < p1);
    CHECK(p1 < pn);
    CHECK(pn != std::string::npos);

    SUBCASE("budget drops the oldest events first") {
        auto full = digest.size();
        auto cut = render_history_digest(h, full - 10);
        CHECK(cut.size() <= full - 10);
        CHECK(cut.find("older events omitted") != std::string::npos);
        CHECK(cut.find("Observation o1") == std::string::npos);
        CHECK(cut.find("Observation o2") != std::string::npos);
        for (std::size_t budget = 0; budget < full + 5; budget += 7) {
            CHECK(render_history_digest(h, budget).size() <= budget);
        }
    }
}

TEST_CASE("snapshot and restore") {
    auto dir = std::filesystem::temp_directory_path() / "almanac-store-test";
    std::filesystem::create_directories(dir);

    SUBCASE("empty store") {
        Store s(test_clock());
        s.snapshot(dir / "empty.ndjson");
        Store t(test_clock());
        t.restore(dir / "empty.ndjson");
        CHECK(t.size() == 0);
    }
    SUBCASE("property: restore reproduces search results") {
        Rng rng(99);
        for (int round = 0; round < 10; ++round) {
            Store s(test_clock());
            s.ingest_bundle(random_bundle(rng, 3, 60));
            s.create(make_medication("", "p1", "2155-01-01"), {"dr", "a1", "s1"});
            auto path = dir / ("s" + std::to_string(round) + ".ndjson");
            s.snapshot(path);
            Store t(test_clock());
            t.restore(path);
            CHECK(t.snapshot_text() == s.snapshot_text());
            CHECK(t.audit_log().size() == s.audit_log().size());
            auto all = s.all();
            for (int i = 0; i < 30; ++i) {
                auto type = static_cast<ResourceType>(uniform_index(rng, kResourceTypeCount));
                SearchQuery q{type, {random_filter(rng, type, all)}, {}, 50};
                CHECK(ids_of(s.search(q)) == ids_of(t.search(q)));
            }
        }
    }
    SUBCASE("truncated or damaged files are corrupt") {
        Store s(test_clock());
        Rng rng(5);
        s.ingest_bundle(random_bundle(rng, 2, 10));
        auto text = s.snapshot_text();
        Store t(test_clock());
        CHECK(code_of([&] { t.restore_text(text.substr(0, text.size() / 2)); }) == Errc::CorruptSnapshot);
        CHECK(code_of([&] { t.restore_text(text.substr(0, text.size() - 1)); }) == Errc::CorruptSnapshot);
        CHECK(code_of([&] { t.restore_text("{\"format\":\"other\"}\n"); }) == Errc::CorruptSnapshot);
        CHECK(code_of([&] { t.restore_text(""); }) == Errc::CorruptSnapshot);
        CHECK(code_of([&] { t.restore(dir / "missing.ndjson"); }) == Errc::CorruptSnapshot);
        CHECK(t.size() == 0);
    }
}

TEST_CASE("audit replay reproduces the store") {
    Rng rng(17);
    Store s(test_clock());
    s.ingest_bundle(random_bundle(rng, 4, 80));
    s.create(make_medication("", "p2", "2155-02-02"), {"dr", "a9", "s2"});
    auto log = s.audit_log();
    for (std::size_t i = 0; i < log.size(); ++i) CHECK(log[i].seq == i + 1);

    Store r(test_clock());
    r.replay(log);
    CHECK(r.snapshot_text() == s.snapshot_text());

    // The log also survives its JSON form.
    std::vector<AuditRecord> parsed;
    for (const auto& rec : log) parsed.push_back(AuditRecord::from_json(json::parse(rec.to_json().dump())));
    Store r2(test_clock());
    r2.replay(parsed);
    CHECK(r2.content_digest() == s.content_digest());
}

TEST_CASE("concurrent readers observe consistent results during writes") {
    Store s(test_clock());
    s.ingest_bundle({make_patient("p1")});
    std::atomic<bool> stop{false};
    std::atomic<int> bad{0};
    std::vector<std::thread> readers;
    for (int t = 0; t < 4; ++t) {
        readers.emplace_back([&] {
            std::size_t last = 0;
            while (!stop) {
                auto n = s.search({ResourceType::MedicationRequest, {{"patient", FilterOp::Eq, "p1"}}, {}, 100000}).size();
                if (n < last) ++bad;
                last = n;
            }
        });
    }
    for (int i = 0; i < 300; ++i) s.create(make_medication("", "p1", "2155-02-02"));
    stop = true;
    for (auto& t : readers) t.join();
    CHECK(bad == 0);
    CHECK(s.count(ResourceType::MedicationRequest) == 300);
}
