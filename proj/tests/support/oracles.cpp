#include "oracles.hpp"

#include "almanac/common/text.hpp"
#include "almanac/fhir/datetime.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

namespace almanac::testing {

using namespace almanac::fhir;
using namespace almanac::knowledge;
using namespace almanac::store;
using nlohmann::json;

namespace {

struct OracleField {
    const char* pointer;
    char kind;  // t text, k token, r reference, d date, n number
};

std::map<std::string, OracleField> oracle_fields(ResourceType type) {
    std::map<std::string, OracleField> m{{"_id", {"/id", 'k'}}};
    auto common = [&](const char* date, bool status, bool encounter) {
        m["patient"] = {type == ResourceType::AllergyIntolerance ? "/patient/reference" : "/subject/reference", 'r'};
        if (encounter) m["encounter"] = {"/encounter/reference", 'r'};
        m["date"] = {date, 'd'};
        if (status) m["status"] = {"/status", 'k'};
    };
    switch (type) {
        case ResourceType::Patient:
            m["name"] = {"/name/0/text", 't'};
            m["gender"] = {"/gender", 'k'};
            m["birthdate"] = {"/birthDate", 'd'};
            break;
        case ResourceType::Encounter:
            common("/period/start", true, false);
            m["encounter"] = {"/id", 'k'};  // an Encounter is its own encounter
            m["class"] = {"/class/code", 'k'};
            m["service_type"] = {"/serviceType/text", 't'};
            m["reason"] = {"/reasonCode/0/text", 't'};
            m["location"] = {"/location/0/location/display", 't'};
            m["discharge"] = {"/hospitalization/dischargeDisposition/text", 't'};
            break;
        case ResourceType::MedicationRequest:
            common("/authoredOn", true, true);
            m["intent"] = {"/intent", 'k'};
            m["category"] = {"/category/0/coding/0/code", 'k'};
            m["medication"] = {"/medicationCodeableConcept/text", 't'};
            m["dosage"] = {"/dosageInstruction/0/text", 't'};
            m["frequency"] = {"/dosageInstruction/0/timing/code/text", 't'};
            m["reason"] = {"/reasonCode/0/text", 't'};
            break;
        case ResourceType::Observation:
            common("/effectiveDateTime", true, true);
            m["category"] = {"/category/0/coding/0/code", 'k'};
            m["code"] = {"/code/text", 't'};
            m["value"] = {"/valueQuantity/value", 'n'};
            m["value_string"] = {"/valueString", 't'};
            break;
        case ResourceType::ServiceRequest:
            common("/authoredOn", true, true);
            m["intent"] = {"/intent", 'k'};
            m["category"] = {"/category/0/coding/0/code", 'k'};
            m["code"] = {"/code/text", 't'};
            m["reason"] = {"/reasonCode/0/text", 't'};
            break;
        case ResourceType::Condition:
            common("/recordedDate", false, true);
            m["clinical_status"] = {"/clinicalStatus/coding/0/code", 'k'};
            m["category"] = {"/category/0/coding/0/code", 'k'};
            m["code"] = {"/code/text", 't'};
            break;
        case ResourceType::AllergyIntolerance:
            common("/recordedDate", false, false);
            m["clinical_status"] = {"/clinicalStatus/coding/0/code", 'k'};
            m["type"] = {"/type", 'k'};
            m["code"] = {"/code/text", 't'};
            m["reaction"] = {"/reaction/0/manifestation/0/text", 't'};
            break;
        case ResourceType::Procedure:
            common("/performedDateTime", true, true);
            m["category"] = {"/category/text", 't'};
            m["code"] = {"/code/text", 't'};
            m["reason"] = {"/reasonCode/0/text", 't'};
            break;
        case ResourceType::CommunicationRequest:
            common("/authoredOn", true, true);
            m["priority"] = {"/priority", 'k'};
            m["category"] = {"/category/0/text", 't'};
            m["message"] = {"/payload/0/contentString", 't'};
            break;
    }
    return m;
}

}  // namespace

std::optional<json> oracle_value(const FhirResource& r, const std::string& field) {
    auto fields = oracle_fields(r.type());
    json j = to_json(r);
    json::json_pointer ptr(fields.at(field).pointer);
    if (!j.contains(ptr)) return std::nullopt;
    json v = j.at(ptr);
    if (fields.at(field).kind == 'r') {
        auto s = v.get<std::string>();
        return json(s.substr(s.find('/') + 1));
    }
    return v;
}

bool oracle_match(const FhirResource& r, const Filter& f) {
    auto v = oracle_value(r, f.field);
    if (!v) return false;
    char kind = oracle_fields(r.type()).at(f.field).kind;
    switch (kind) {
        case 't': {
            auto a = to_lower(v->get<std::string>());
            auto b = to_lower(f.value);
            if (f.op == FilterOp::Eq) return a == b;
            if (f.op == FilterOp::Contains) return a.find(b) != std::string::npos;
            return f.op == FilterOp::Ge ? v->get<std::string>() >= f.value : v->get<std::string>() <= f.value;
        }
        case 'k':
            if (f.op == FilterOp::Eq) return *v == f.value;
            return f.op == FilterOp::Ge ? v->get<std::string>() >= f.value : v->get<std::string>() <= f.value;
        case 'r': return *v == f.value.substr(f.value.find('/') + 1);
        case 'n': {
            double x = v->get<double>();
            double y = std::stod(f.value);
            return f.op == FilterOp::Eq ? x == y : f.op == FilterOp::Ge ? x >= y : x <= y;
        }
        case 'd': {
            auto t = *DateTime::parse(v->get<std::string>());
            auto b = *DateTime::parse(f.value);
            std::string day = v->get<std::string>().substr(0, 10);
            std::string bday = f.value.substr(0, 10);
            if (f.op == FilterOp::Eq) return day == bday;
            if (b.date_only()) return f.op == FilterOp::Ge ? day >= bday : day <= bday;
            return f.op == FilterOp::Ge ? t >= b : t <= b;
        }
    }
    return false;
}

std::vector<std::string> oracle_search(const std::vector<FhirResource>& all, const SearchQuery& q) {
    std::vector<FhirResource> hits;
    for (const auto& r : all) {
        if (r.type() != q.type) continue;
        bool ok = true;
        for (const auto& f : q.filters) ok = ok && oracle_match(r, f);
        if (ok) hits.push_back(r);
    }
    auto key_less = [&](const FhirResource& a, const FhirResource& b) {
        if (q.sort) {
            auto va = oracle_value(a, q.sort->field);
            auto vb = oracle_value(b, q.sort->field);
            char kind = oracle_fields(q.type).at(q.sort->field).kind;
            auto less = [&](const std::optional<json>& x, const std::optional<json>& y) {
                if (!x || !y) return !x && y;
                if (kind == 'd') return *DateTime::parse(x->get<std::string>()) < *DateTime::parse(y->get<std::string>());
                return *x < *y;
            };
            bool ab = less(va, vb);
            bool ba = less(vb, va);
            if (ab || ba) return q.sort->descending ? ba : ab;
        }
        return a.id() < b.id();
    };
    std::sort(hits.begin(), hits.end(), key_less);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < hits.size() && i < q.limit; ++i) ids.push_back(hits[i].id());
    return ids;
}

std::vector<std::string> ids_of(const std::vector<FhirResource>& rs) {
    std::vector<std::string> out;
    for (const auto& r : rs) out.push_back(r.id());
    return out;
}

Filter random_filter(Rng& rng, ResourceType type, const std::vector<FhirResource>& pool) {
    const auto& fields = search_fields(type);
    const auto& f = fields[uniform_index(rng, fields.size())];
    Filter out{f.name, FilterOp::Eq, ""};
    // Seed the value from an existing resource most of the time so filters hit.
    std::optional<json> seed;
    for (int tries = 0; tries < 4 && !seed; ++tries) {
        const auto& r = pool[uniform_index(rng, pool.size())];
        if (r.type() == type) seed = oracle_value(r, f.name);
    }
    switch (f.kind) {
        case FieldKind::Text: {
            const FilterOp ops[] = {FilterOp::Eq, FilterOp::Contains, FilterOp::Ge, FilterOp::Le};
            out.op = ops[uniform_index(rng, 4)];
            std::string v = seed ? seed->get<std::string>() : "cough";
            if (out.op == FilterOp::Contains && v.size() > 3) v = v.substr(1, 3);
            if (bernoulli(rng, 0.3)) v = to_lower(v);
            out.value = v;
            break;
        }
        case FieldKind::Token: {
            const FilterOp ops[] = {FilterOp::Eq, FilterOp::Ge, FilterOp::Le};
            out.op = ops[uniform_index(rng, 3)];
            out.value = seed ? seed->get<std::string>() : "active";
            break;
        }
        case FieldKind::Reference:
            out.value = seed ? seed->get<std::string>() : "p1";
            if (bernoulli(rng, 0.3)) out.value = "Patient/" + out.value;
            if (out.value.rfind("Patient/", 0) == 0 && f.name == "encounter") out.value = out.value.substr(8);
            break;
        case FieldKind::Date: {
            const FilterOp ops[] = {FilterOp::Eq, FilterOp::Ge, FilterOp::Le};
            out.op = ops[uniform_index(rng, 3)];
            out.value = seed ? seed->get<std::string>() : "2155-06-01";
            if (bernoulli(rng, 0.5)) out.value = out.value.substr(0, 10);
            break;
        }
        case FieldKind::Number: {
            const FilterOp ops[] = {FilterOp::Eq, FilterOp::Ge, FilterOp::Le};
            out.op = ops[uniform_index(rng, 3)];
            out.value = seed ? format_number(seed->get<double>()) : "40";
            break;
        }
    }
    return out;
}

const std::vector<std::string>& vocabulary() {
    static const std::vector<std::string> words = [] {
        std::vector<std::string> w;
        const char* base[] = {"potassium", "sodium",   "renal",    "cardiac",  "sepsis",   "insulin",
                              "warfarin",  "lactate",  "fever",    "cough",    "rash",     "oxygen",
                              "heparin",   "dose",     "infusion", "culture",  "imaging",  "stroke",
                              "asthma",    "steroid",  "glucose",  "acidosis", "pressure", "pulse",
                              "nausea",    "biopsy",   "antibody", "platelet", "anemia",   "ferritin"};
        for (const char* b : base) w.emplace_back(b);
        for (int i = 0; i < 30; ++i) w.push_back("term" + std::to_string(i));
        return w;
    }();
    return words;
}

std::string random_text(Rng& rng, std::size_t min_words, std::size_t max_words) {
    const auto n = min_words + uniform_index(rng, max_words - min_words + 1);
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) out += ' ';
        out += vocabulary()[uniform_index(rng, vocabulary().size())];
    }
    return out;
}

Corpus random_corpus(Rng& rng, std::size_t n) {
    Corpus c;
    for (std::size_t i = 0; i < n; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "d%03zu", i);
        c.docs.emplace_back(id, random_text(rng, 5, 40));
        c.collection->add(make_document(id, "", c.docs.back().second));
    }
    return c;
}

// ---- independent oracles ----------------------------------------------------

/// Accumulates in index order in double so that exact ties stay exact; the
/// fused ranking is sensitive to the order of tied dense scores.
double oracle_cosine(const std::vector<float>& a, const std::vector<float>& b, std::size_t d) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < d; ++i) {
        const double x = a[i], y = b[i];
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if (na == 0 || nb == 0) return 0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

std::vector<Hit> oracle_sort(std::vector<Hit> hits, std::size_t k) {
    std::stable_sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
        return a.score > b.score || (a.score == b.score && a.doc_id < b.doc_id);
    });
    if (hits.size() > k) hits.resize(k);
    return hits;
}

}  // namespace

std::vector<Hit> oracle_dense(const Corpus& c, const EmbeddingVector& q, std::size_t d, std::size_t k) {
    std::vector<Hit> hits;
    for (const auto& [id, body] : c.docs) {
        hits.push_back({id, oracle_cosine(q.values, c.embedder->embed("\n" + body).values, d)});
    }
    return oracle_sort(hits, k);
}

/// Okapi BM25 with k1=1.2, b=0.75 computed from whitespace tokens.
std::vector<Hit> oracle_sparse(const Corpus& c, const std::string& query, std::size_t k) {
    std::vector<std::vector<std::string>> toks;
    for (const auto& [id, body] : c.docs) toks.push_back(split(body, ' '));
    double avg = 0;
    for (const auto& t : toks) avg += static_cast<double>(t.size());
    avg /= static_cast<double>(toks.size());
    const auto qwords = split(query, ' ');
    std::set<std::string> qset(qwords.begin(), qwords.end());
    std::vector<Hit> hits;
    for (std::size_t i = 0; i < toks.size(); ++i) {
        double score = 0;
        bool any = false;
        for (const auto& w : qset) {
            const double tf = static_cast<double>(std::count(toks[i].begin(), toks[i].end(), w));
            if (tf == 0) continue;
            any = true;
            double df = 0;
            for (const auto& t : toks) df += std::count(t.begin(), t.end(), w) > 0 ? 1 : 0;
            const double N = static_cast<double>(toks.size());
            const double idf = std::log((N - df + 0.5) / (df + 0.5) + 1);
            const double len = static_cast<double>(toks[i].size());
            score += idf * (tf * 2.2) / (tf + 1.2 * (0.25 + 0.75 * len / avg));
        }
        if (any) hits.push_back({c.docs[i].first, score});
    }
    return oracle_sort(hits, k);
}

std::vector<Hit> oracle_hybrid(const Corpus& c, const std::string& query, std::size_t d, std::size_t k) {
    const auto dense = oracle_dense(c, c.embedder->embed(query), d, c.docs.size());
    const auto sparse = oracle_sparse(c, query, c.docs.size());
    std::map<std::string, double> fused;
    for (std::size_t i = 0; i < dense.size(); ++i) fused[dense[i].doc_id] += 1.0 / (60.0 + static_cast<double>(i) + 1);
    for (std::size_t i = 0; i < sparse.size(); ++i) fused[sparse[i].doc_id] += 1.0 / (60.0 + static_cast<double>(i) + 1);
    std::vector<Hit> hits;
    for (const auto& [id, s] : fused) hits.push_back({id, s});
    return oracle_sort(hits, k);
}

std::string ranking_mismatch(const std::vector<Hit>& actual, const std::vector<Hit>& expected) {
    constexpr double eps = 1e-9;
    auto close = [](double a, double b) { return std::fabs(a - b) < eps * (1 + std::max(std::fabs(a), std::fabs(b))); };
    if (actual.size() != expected.size()) {
        return "size " + std::to_string(actual.size()) + " vs " + std::to_string(expected.size());
    }
    for (std::size_t i = 0; i < actual.size(); ++i) {
        const auto at = "rank " + std::to_string(i) + ": ";
        if (!close(actual[i].score, expected[i].score)) return at + "score differs";
        if (actual[i].doc_id == expected[i].doc_id) continue;
        auto it = std::find_if(expected.begin(), expected.end(), [&](const Hit& h) { return h.doc_id == actual[i].doc_id; });
        if (it == expected.end()) return at + actual[i].doc_id + " is not expected";
        if (std::fabs(it->score - expected[i].score) >= eps) return at + actual[i].doc_id + " is out of order";
    }
    return {};
}

}  // namespace almanac::testing
