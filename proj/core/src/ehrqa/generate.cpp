#include "almanac/ehrqa/generate.hpp"

#include "almanac/common/text.hpp"
#include "almanac/store/history.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

namespace almanac::ehrqa {

namespace {

using fhir::FhirResource;

std::string concept_text(const fhir::CodeableConcept& c) {
    if (!c.text.empty()) return c.text;
    return c.coding ? c.coding->display : std::string();
}

void put(Row& row, const char* field, const std::optional<std::string>& value) {
    if (value && !value->empty()) row[field] = *value;
}

void put(Row& row, const char* field, const std::string& value) {
    if (!value.empty()) row[field] = value;
}

class RowCollector {
public:
    void add(const std::string& source, Row row) {
        if (row.empty()) return;
        auto& rows = rows_[source];
        if (std::find(rows.begin(), rows.end(), row) == rows.end()) rows.push_back(std::move(row));
    }

    std::map<std::string, std::vector<Row>> take() { return std::move(rows_); }

private:
    std::map<std::string, std::vector<Row>> rows_;
};

void collect(RowCollector& out, const FhirResource& r) {
    using fhir::ObservationCategory;
    if (const auto* o = r.get_if<fhir::Observation>()) {
        Row row;
        put(row, "name", concept_text(o->code));
        put(row, "date", o->effective.day());
        if (o->category == ObservationCategory::Laboratory) {
            if (const auto* q = std::get_if<fhir::Quantity>(&o->value)) {
                Row lab = row;
                lab["value"] = format_number(q->value);
                put(lab, "unit", q->unit);
                out.add("lab", std::move(lab));
            }
            if (o->status == fhir::ObservationStatus::Preliminary) out.add("pending_lab", row);
        } else if (o->category == ObservationCategory::Imaging) {
            out.add("imaging", row);
        } else if (o->category == ObservationCategory::SocialHistory) {
            out.add("social", Row{{"name", row["name"]}});
        }
    } else if (const auto* m = r.get_if<fhir::MedicationRequest>()) {
        Row row;
        put(row, "name", m->medication_name);
        put(row, "dosage", m->dosage);
        put(row, "frequency", m->frequency);
        if (m->category == fhir::MedicationRequestCategory::Discharge) out.add("discharge_medication", row);
        put(row, "date", m->authored_on.day());
        put(row, "reason", m->reason);
        out.add("medication", std::move(row));
    } else if (const auto* c = r.get_if<fhir::Condition>()) {
        Row row;
        put(row, "name", concept_text(c->code));
        put(row, "date", c->recorded_date.day());
        out.add("condition", std::move(row));
    } else if (const auto* a = r.get_if<fhir::AllergyIntolerance>()) {
        Row row;
        put(row, "name", concept_text(a->code));
        put(row, "reaction", a->reaction);
        out.add("allergy", std::move(row));
    } else if (const auto* p = r.get_if<fhir::Procedure>()) {
        Row row;
        put(row, "name", concept_text(p->code));
        put(row, "date", p->performed.day());
        out.add("procedure", std::move(row));
    } else if (const auto* e = r.get_if<fhir::Encounter>()) {
        Row row;
        put(row, "specialty", e->service_type);
        put(row, "date", e->period_start.day());
        put(row, "reason", e->reason);
        put(row, "location", e->location);
        put(row, "discharge", e->discharge_summary);
        out.add("encounter", std::move(row));
    } else if (const auto* cr = r.get_if<fhir::CommunicationRequest>()) {
        Row row;
        put(row, "message", cr->message);
        out.add("communication", std::move(row));
    }
}

std::string serialized(const store::PatientHistory& history) {
    std::string out = serialize_resource(FhirResource(history.patient));
    for (const auto& e : history.events) {
        out += '\n';
        out += serialize_resource(e.resource);
    }
    return out;
}

std::vector<std::string> entity_names(const store::PatientHistory& history) {
    std::set<std::string> names;
    for (const auto& [source, rows] : history_rows(history)) {
        if (source == "patient" || source == "encounter" || source == "communication") continue;
        for (const auto& row : rows) {
            if (auto it = row.find("name"); it != row.end() && it->second.size() > 2) names.insert(it->second);
        }
    }
    return {names.begin(), names.end()};
}

bool names_any(const std::string& question, const std::vector<std::string>& names) {
    return std::any_of(names.begin(), names.end(), [&](const auto& n) { return icontains(question, n); });
}

}  // namespace

std::map<std::string, std::vector<Row>> history_rows(const store::PatientHistory& history) {
    RowCollector out;
    out.add("patient", Row{{"id", history.patient.id}, {"name", history.patient.name}});
    for (const auto& event : history.events) collect(out, event.resource);
    return out.take();
}

std::string positive_prompt(const std::string& question_template, const std::string& patient_history) {
    return "Given the following template question (T): " + question_template +
           ", and the following patient history (H): " + patient_history +
           " generate a question based on T and H. Only use information present within H.";
}

std::string negative_prompt(const std::string& patient_history) {
    return "Given the following patient history (H): " + patient_history +
           " generate a random medical question unrelated to (H).";
}

bool grounded_in(const store::PatientHistory& history, const std::string& value) {
    return !value.empty() && serialized(history).find(value) != std::string::npos;
}

std::variant<Grounded, Unfillable> ground_question(const QuestionTemplate& t, const store::PatientHistory& history,
                                                   Rng& rng, const Rephraser& rephraser, std::size_t history_budget) {
    const auto rows = history_rows(history);

    // Fields each source must provide: every slot field plus declared requirements.
    std::map<std::string, std::set<std::string>> needed;
    std::vector<std::string> source_order;
    auto need = [&](const std::string& source, const std::string& field) {
        if (!needed.count(source)) source_order.push_back(source);
        needed[source].insert(field);
    };
    for (const auto& s : t.slots) {
        if (!s.is_choice()) need(s.source, s.field);
    }
    for (const auto& r : t.required_fields) {
        const auto dot = r.find('.');
        need(r.substr(0, dot), r.substr(dot + 1));
    }

    std::map<std::string, Row> chosen;
    for (const auto& source : source_order) {
        std::vector<const Row*> usable;
        if (auto it = rows.find(source); it != rows.end()) {
            for (const auto& row : it->second) {
                const auto& fields = needed[source];
                if (std::all_of(fields.begin(), fields.end(), [&](const auto& f) { return row.count(f) > 0; })) {
                    usable.push_back(&row);
                }
            }
        }
        if (usable.empty()) return Unfillable{"no " + source + " entry with the needed fields"};
        chosen[source] = *usable[uniform_index(rng, usable.size())];
    }

    Grounded g;
    g.slots["patient"] = history.patient.id;
    for (const auto& s : t.slots) {
        g.slots[s.name] = s.is_choice() ? s.choices[uniform_index(rng, s.choices.size())] : chosen[s.source].at(s.field);
    }

    g.question = render_question(t, g.slots);
    if (rephraser) {
        const std::string reply(trim(rephraser(positive_prompt(t.text, store::render_history_digest(history, history_budget)))));
        const auto placeholders = text_slots(t.text);
        const bool keeps_values = std::all_of(placeholders.begin(), placeholders.end(), [&](const auto& p) {
            return reply.find(g.slots.at(p.first)) != std::string::npos;
        });
        if (!reply.empty() && keeps_values) g.question = reply;
    }
    g.gold = build_gold(t, g.slots);
    return g;
}

const std::vector<std::string>& negative_bank() {
    static const std::vector<std::string> bank = {
        "What is the recommended first-line treatment for uncomplicated malaria?",
        "How is Lyme disease usually diagnosed?",
        "What are the common symptoms of measles in children?",
        "Which vaccines are recommended before travel to sub-Saharan Africa?",
        "What is the typical incubation period for varicella?",
        "How should acute mountain sickness be prevented?",
        "What are the diagnostic criteria for Kawasaki disease?",
        "How is scabies treated in adults?",
        "What causes sickle cell crises?",
        "What is the mechanism of action of ivermectin?",
        "How long should a person with influenza stay home from work?",
        "What are the warning signs of heat stroke?",
        "How is carpal tunnel syndrome managed conservatively?",
        "What is the difference between Crohn disease and ulcerative colitis?",
        "Which foods are high in vitamin B12?",
        "What are the stages of Parkinson disease?",
        "How is gout diagnosed in the emergency setting?",
        "What is the recommended screening age for cervical cancer?",
        "How does the rabies vaccine schedule work after an animal bite?",
        "What are common side effects of isotretinoin?",
        "How is plantar fasciitis treated?",
        "What is the prognosis of Bell palsy?",
        "What are the risk factors for osteoporosis in men?",
        "How is head lice treated in school-aged children?",
        "What is the role of zinc in treating the common cold?",
        "What are the symptoms of celiac disease?",
        "How is tinnitus evaluated?",
        "What are the complications of untreated strep throat?",
        "How should motion sickness be managed on long trips?",
        "What is the Epley maneuver used for?",
    };
    return bank;
}

std::string negative_question(const store::PatientHistory& history, Rng& rng, const Rephraser& rephraser,
                              std::size_t history_budget) {
    const auto names = entity_names(history);
    std::vector<const std::string*> usable;
    for (const auto& q : negative_bank()) {
        if (!names_any(q, names)) usable.push_back(&q);
    }
    if (usable.empty()) throw Error(Errc::ExhaustedRetries, "every generic question overlaps the history");
    std::string question = *usable[uniform_index(rng, usable.size())];
    if (rephraser) {
        const std::string reply(trim(rephraser(negative_prompt(store::render_history_digest(history, history_budget)))));
        if (!reply.empty() && !names_any(reply, names)) question = reply;
    }
    return question;
}

Dataset generate_dataset(const GeneratorConfig& config, const store::Store& store,
                         const std::vector<QuestionTemplate>& templates) {
    if (!(config.p_negative >= 0.0 && config.p_negative <= 1.0)) {
        throw Error(Errc::InvalidArgument, "p_negative must lie in [0, 1]");
    }
    if (templates.empty() && config.p_negative < 1.0) throw Error(Errc::InvalidArgument, "no templates");

    std::vector<store::PatientHistory> histories;
    for (const auto& r : store.all()) {
        if (r.type() == fhir::ResourceType::Patient) histories.push_back(store.patient_history(r.resource_id()));
    }
    if (histories.empty()) throw Error(Errc::EmptyInput, "the store holds no patients");

    constexpr int kMaxAttempts = 200;
    Dataset d;
    d.header = {config.n_questions, config.p_negative, config.seed};
    for (std::size_t round = 0; round < config.n_questions; ++round) {
        Rng rng = derive_rng(config.seed, round);
        EhrqaItem item;
        char id[32];
        std::snprintf(id, sizeof id, "q%04zu", round + 1);
        item.item_id = id;
        item.seed = config.seed;
        item.round = round;
        item.negative = bernoulli(rng, config.p_negative);
        if (item.negative) {
            const auto& h = histories[uniform_index(rng, histories.size())];
            item.patient_id = h.patient.id;
            item.question = negative_question(h, rng, config.rephraser, config.history_budget);
            item.gold = negative_gold();
            item.slots = {{"patient", h.patient.id}};
        } else {
            bool filled = false;
            for (int attempt = 0; attempt < kMaxAttempts && !filled; ++attempt) {
                const auto& h = histories[uniform_index(rng, histories.size())];
                const auto& t = templates[uniform_index(rng, templates.size())];
                auto result = ground_question(t, h, rng, config.rephraser, config.history_budget);
                if (auto* g = std::get_if<Grounded>(&result)) {
                    item.patient_id = h.patient.id;
                    item.template_id = t.id;
                    item.question = std::move(g->question);
                    item.gold = std::move(g->gold);
                    item.slots = std::move(g->slots);
                    filled = true;
                }
            }
            if (!filled) {
                throw Error(Errc::ExhaustedRetries,
                            "round " + std::to_string(round) + ": no template could be grounded in " +
                                std::to_string(kMaxAttempts) + " attempts");
            }
        }
        d.items.push_back(std::move(item));
    }
    return d;
}

}  // namespace almanac::ehrqa
