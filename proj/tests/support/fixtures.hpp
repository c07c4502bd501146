#pragma once

#include "almanac/common/rng.hpp"
#include "almanac/fhir/model.hpp"

#include <string>
#include <vector>

namespace almanac::testing {

using namespace almanac::fhir;

inline DateTime at(const char* text) {
    return *DateTime::parse(text);
}

inline ResourceId patient_ref(const std::string& id) {
    return {ResourceType::Patient, id};
}

inline ResourceId encounter_ref(const std::string& id) {
    return {ResourceType::Encounter, id};
}

inline Patient make_patient(const std::string& id, const std::string& name = "Ada Park") {
    Patient p;
    p.id = id;
    p.name = name;
    p.gender = Gender::Female;
    p.birth_date = at("2101-04-12");
    return p;
}

inline Encounter make_encounter(const std::string& id, const std::string& patient, const char* start) {
    Encounter e;
    e.id = id;
    e.subject = patient_ref(patient);
    e.period_start = at(start);
    e.service_type = "Cardiology";
    return e;
}

inline Observation make_observation(const std::string& id, const std::string& patient, const char* when,
                                    const std::string& test = "Potassium", double value = 4.1) {
    Observation o;
    o.id = id;
    o.subject = patient_ref(patient);
    o.code.text = test;
    o.value = Quantity{value, "mmol/L"};
    o.reference_range = ReferenceRange{3.5, 5.1, "mmol/L"};
    o.effective = at(when);
    return o;
}

inline MedicationRequest make_medication(const std::string& id, const std::string& patient,
                                         const char* when, const std::string& name = "lisinopril") {
    MedicationRequest m;
    m.id = id;
    m.medication_name = name;
    m.dosage = "10 mg";
    m.frequency = "daily";
    m.subject = patient_ref(patient);
    m.authored_on = at(when);
    return m;
}

/// Random valid resource of a random type referencing one of `patients` / `encounters`.
/// Encounters are only produced when `allow_encounter` is set.
FhirResource random_resource(Rng& rng, const std::string& id, const std::vector<std::string>& patients,
                             const std::vector<std::string>& encounters, bool allow_encounter = true);

/// Random store content: `patients` Patients then `n` other resources.
std::vector<FhirResource> random_bundle(Rng& rng, std::size_t patients, std::size_t n);

}  // namespace almanac::testing

#include "almanac/store/store.hpp"

#include <memory>

namespace almanac::testing {

/// Store holding the default synthetic fixture, with a fixed clock.
std::unique_ptr<store::Store> fixture_store();

}  // namespace almanac::testing
