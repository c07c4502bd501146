#include "fixtures.hpp"

#include "almanac/synth/fixture.hpp"

#include <array>

namespace almanac::testing {

namespace {

const std::array<std::string_view, 6> kTests = {"Potassium", "Sodium", "Hemoglobin", "Creatinine",
                                                "Glucose", "Chest X-ray"};
const std::array<std::string_view, 5> kDrugs = {"lisinopril", "metformin", "apixaban", "atorvastatin",
                                                "furosemide"};
const std::array<std::string_view, 4> kWords = {"fever", "cough", "dyspnea", "follow-up"};

template <typename E>
E random_enum(Rng& rng) {
    return static_cast<E>(uniform_index(rng, EnumTraits<E>::names.size()));
}

std::string pick_sv(Rng& rng, auto const& arr) {
    return std::string(arr[uniform_index(rng, arr.size())]);
}

DateTime random_time(Rng& rng) {
    // 2150-01-01 .. ~2160, whole seconds; a quarter are date-only.
    std::int64_t base = days_from_civil(2150, 1, 1) * 86400;
    std::int64_t offset = static_cast<std::int64_t>(uniform_index(rng, 3650)) * 86400;
    if (bernoulli(rng, 0.25)) {
        auto dt = DateTime::from_epoch_seconds(base + offset);
        return *DateTime::parse(dt.day());
    }
    return DateTime::from_epoch_seconds(base + offset + static_cast<std::int64_t>(uniform_index(rng, 86400)));
}

std::optional<ResourceId> maybe_encounter(Rng& rng, const std::vector<std::string>& encounters) {
    if (encounters.empty() || bernoulli(rng, 0.3)) return std::nullopt;
    return ResourceId{ResourceType::Encounter, encounters[uniform_index(rng, encounters.size())]};
}

std::optional<std::string> maybe_text(Rng& rng) {
    if (bernoulli(rng, 0.5)) return std::nullopt;
    return pick_sv(rng, kWords);
}

}  // namespace

FhirResource random_resource(Rng& rng, const std::string& id, const std::vector<std::string>& patients,
                             const std::vector<std::string>& encounters, bool allow_encounter) {
    ResourceId subject = patient_ref(patients[uniform_index(rng, patients.size())]);
    std::size_t kind = uniform_index(rng, allow_encounter ? 8 : 7);
    switch (kind) {
        case 0: {
            MedicationRequest m;
            m.id = id;
            m.status = random_enum<MedicationRequestStatus>(rng);
            m.intent = random_enum<MedicationRequestIntent>(rng);
            if (bernoulli(rng, 0.5)) m.category = random_enum<MedicationRequestCategory>(rng);
            m.medication_name = pick_sv(rng, kDrugs);
            m.dosage = std::to_string(5 * (1 + uniform_index(rng, 8))) + " mg";
            m.frequency = bernoulli(rng, 0.5) ? "daily" : "twice daily";
            m.subject = subject;
            m.encounter = maybe_encounter(rng, encounters);
            m.authored_on = random_time(rng);
            m.reason = maybe_text(rng);
            return m;
        }
        case 1: {
            Observation o;
            o.id = id;
            o.status = random_enum<ObservationStatus>(rng);
            o.category = random_enum<ObservationCategory>(rng);
            o.code.text = pick_sv(rng, kTests);
            if (bernoulli(rng, 0.5)) o.code.coding = Coding{"http://loinc.org", "2823-3", o.code.text};
            std::size_t v = uniform_index(rng, 3);
            if (v == 1) o.value = Quantity{static_cast<double>(uniform_index(rng, 2000)) / 16.0, "mmol/L"};
            if (v == 2) o.value = std::string("no acute findings");
            if (bernoulli(rng, 0.5)) o.reference_range = ReferenceRange{1.5, 1.5 + uniform_index(rng, 10), "mmol/L"};
            o.effective = random_time(rng);
            o.subject = subject;
            o.encounter = maybe_encounter(rng, encounters);
            return o;
        }
        case 2: {
            ServiceRequest s;
            s.id = id;
            s.status = random_enum<RequestStatus>(rng);
            s.intent = random_enum<ServiceRequestIntent>(rng);
            s.category = random_enum<OrderCategory>(rng);
            s.code.text = pick_sv(rng, kTests);
            s.subject = subject;
            s.encounter = maybe_encounter(rng, encounters);
            s.authored_on = random_time(rng);
            s.reason = maybe_text(rng);
            if (bernoulli(rng, 0.3)) s.frequency = "every 4 hours";
            return s;
        }
        case 3: {
            Condition c;
            c.id = id;
            c.clinical_status = random_enum<ConditionClinicalStatus>(rng);
            c.category = random_enum<ConditionCategory>(rng);
            c.code.text = pick_sv(rng, kWords);
            c.subject = subject;
            c.encounter = maybe_encounter(rng, encounters);
            c.recorded_date = random_time(rng);
            return c;
        }
        case 4: {
            AllergyIntolerance a;
            a.id = id;
            a.clinical_status = random_enum<AllergyClinicalStatus>(rng);
            a.allergy_type = random_enum<AllergyType>(rng);
            a.code.text = pick_sv(rng, kDrugs);
            a.reaction = maybe_text(rng);
            a.subject = subject;
            a.recorded_date = random_time(rng);
            return a;
        }
        case 5: {
            Procedure p;
            p.id = id;
            p.status = random_enum<ProcedureStatus>(rng);
            if (bernoulli(rng, 0.5)) p.category = "screening";
            p.code.text = "colonoscopy";
            p.subject = subject;
            p.encounter = maybe_encounter(rng, encounters);
            p.performed = random_time(rng);
            p.reason = maybe_text(rng);
            return p;
        }
        case 6: {
            CommunicationRequest c;
            c.id = id;
            c.status = random_enum<RequestStatus>(rng);
            c.priority = random_enum<CommunicationPriority>(rng);
            c.message = "please recheck " + pick_sv(rng, kTests);
            c.subject = subject;
            c.encounter = maybe_encounter(rng, encounters);
            c.authored_on = random_time(rng);
            return c;
        }
        default: {
            Encounter e;
            e.id = id;
            e.status = random_enum<EncounterStatus>(rng);
            e.encounter_class = random_enum<EncounterClass>(rng);
            e.subject = subject;
            e.period_start = random_time(rng);
            if (bernoulli(rng, 0.5)) e.period_end = e.period_start.plus_seconds(3600);
            e.service_type = bernoulli(rng, 0.5) ? "Cardiology" : "Nephrology";
            e.reason = maybe_text(rng);
            if (bernoulli(rng, 0.5)) e.location = "Ward 4";
            if (bernoulli(rng, 0.3)) e.discharge_summary = "discharged home";
            return e;
        }
    }
}

std::vector<FhirResource> random_bundle(Rng& rng, std::size_t patients, std::size_t n) {
    std::vector<FhirResource> out;
    std::vector<std::string> patient_ids;
    std::vector<std::string> encounter_ids;
    for (std::size_t i = 0; i < patients; ++i) {
        patient_ids.push_back("p" + std::to_string(i + 1));
        out.push_back(make_patient(patient_ids.back(), "Patient " + std::to_string(i + 1)));
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto r = random_resource(rng, "r" + std::to_string(i + 1), patient_ids, encounter_ids);
        if (r.type() == ResourceType::Encounter) encounter_ids.push_back(r.id());
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace almanac::testing

namespace almanac::testing {

std::unique_ptr<store::Store> fixture_store() {
    auto s = std::make_unique<store::Store>(stepping_clock(at("2160-06-01T08:00:00Z"), 1));
    s->ingest_bundle(synth::generate_fixture());
    return s;
}

}  // namespace almanac::testing
