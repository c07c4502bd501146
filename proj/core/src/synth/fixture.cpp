#include "almanac/synth/fixture.hpp"

#include "almanac/common/rng.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <string>

namespace almanac::synth {

using namespace fhir;

namespace {

struct LabSpec {
    const char* name;
    const char* unit;
    double low;
    double high;
    double precision;  // rounding step
};

constexpr std::array kLabs = {
    LabSpec{"Potassium", "mmol/L", 3.5, 5.1, 0.1},    LabSpec{"Sodium", "mmol/L", 135, 145, 1},
    LabSpec{"Creatinine", "mg/dL", 0.6, 1.3, 0.1},   LabSpec{"Hemoglobin", "g/dL", 12, 16, 0.1},
    LabSpec{"Glucose", "mg/dL", 70, 99, 1},          LabSpec{"Lactate", "mmol/L", 0.5, 2.2, 0.1},
    LabSpec{"Troponin I", "ng/mL", 0, 0.04, 0.01},   LabSpec{"TSH", "mIU/L", 0.4, 4.0, 0.1},
    LabSpec{"HbA1c", "%", 4.0, 5.6, 0.1},            LabSpec{"Magnesium", "mg/dL", 1.7, 2.2, 0.1},
};

struct Problem {
    const char* condition;
    const char* medication;
    const char* dosage;
    const char* frequency;
    const char* specialty;
};

constexpr std::array kProblems = {
    Problem{"Hypertension", "lisinopril", "10 mg", "daily", "Cardiology"},
    Problem{"Type 2 diabetes mellitus", "metformin", "500 mg", "twice daily", "Endocrinology"},
    Problem{"Atrial fibrillation", "apixaban", "5 mg", "twice daily", "Cardiology"},
    Problem{"Community-acquired pneumonia", "ceftriaxone", "1 g", "every 24 hours", "Pulmonology"},
    Problem{"Hyperlipidemia", "atorvastatin", "40 mg", "nightly", "Internal Medicine"},
    Problem{"Asthma", "albuterol", "2 puffs", "every 4 hours as needed", "Pulmonology"},
    Problem{"Hypothyroidism", "levothyroxine", "75 mcg", "daily", "Endocrinology"},
    Problem{"Chronic kidney disease", "furosemide", "40 mg", "daily", "Nephrology"},
    Problem{"Major depressive disorder", "sertraline", "50 mg", "daily", "Psychiatry"},
};

struct Imaging {
    const char* name;
    const char* finding;
};

constexpr std::array kImaging = {
    Imaging{"Chest X-ray", "No acute cardiopulmonary process"},
    Imaging{"CT head", "No intracranial hemorrhage"},
    Imaging{"Abdominal ultrasound", "Mild hepatic steatosis"},
    Imaging{"Echocardiogram", "Ejection fraction 55 percent"},
    Imaging{"MRI lumbar spine", "Degenerative disc disease at L4-L5"},
};

struct AllergySpec {
    const char* substance;
    const char* reaction;
};

constexpr std::array kAllergies = {
    AllergySpec{"Penicillin", "hives"},      AllergySpec{"Sulfonamide antibiotics", "rash"},
    AllergySpec{"Latex", "contact dermatitis"}, AllergySpec{"Shellfish", "anaphylaxis"},
    AllergySpec{"lisinopril", "angioedema"},
};

struct ProcedureSpec {
    const char* name;
    const char* category;
};

constexpr std::array kProcedures = {
    ProcedureSpec{"Colonoscopy", "screening"},       ProcedureSpec{"Appendectomy", "surgical"},
    ProcedureSpec{"Cardiac catheterization", "diagnostic"}, ProcedureSpec{"Knee arthroscopy", "surgical"},
    ProcedureSpec{"Mammogram", "screening"},         ProcedureSpec{"Cataract surgery", "surgical"},
};

constexpr std::array kNames = {"Ada Park",    "Ben Ortiz",    "Chloe Nakamura", "Dev Raman",
                               "Elena Brooks", "Farid Haddad", "Grace Okafor",   "Hugo Lindqvist"};

constexpr std::array kLocations = {"Medical Ward 4B", "Cardiac Care Unit", "Emergency Department",
                                   "Intensive Care Unit", "Outpatient Clinic 2"};

constexpr std::array kMessages = {"patient is on fall precautions", "check blood glucose before meals",
                                  "encourage incentive spirometry hourly", "record strict intake and output",
                                  "ambulate three times daily"};

template <typename T, std::size_t N>
const T& any_of(Rng& rng, const std::array<T, N>& items) {
    return items[uniform_index(rng, N)];
}

double rounded(double v, double step) {
    return std::round(v / step) * step;
}

/// Sequential eight-digit ids with a type digit in front.
class Ids {
public:
    std::string next(int type_digit) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%d%07d", type_digit, ++counters_[static_cast<std::size_t>(type_digit)]);
        return buf;
    }

private:
    std::array<int, 10> counters_{};
};

}  // namespace

std::vector<FhirResource> generate_fixture(const FixtureConfig& config) {
    Rng rng(config.seed);
    Ids ids;
    std::vector<FhirResource> out;
    std::vector<FhirResource> per_patient;

    const std::int64_t first_day = days_from_civil(2150, 1, 1);
    const std::int64_t span_days = days_from_civil(2160, 1, 1) - first_day;

    std::vector<Patient> patients;
    for (std::size_t p = 0; p < config.patients; ++p) {
        Patient pt;
        pt.id = ids.next(1);
        pt.name = kNames[p % kNames.size()];
        pt.gender = uniform_index(rng, 2) ? Gender::Female : Gender::Male;
        pt.birth_date = DateTime::from_date(static_cast<int>(2080 + uniform_index(rng, 50)),
                                            static_cast<int>(1 + uniform_index(rng, 12)),
                                            static_cast<int>(1 + uniform_index(rng, 28)));
        out.push_back(pt);
        patients.push_back(pt);
    }

    for (const auto& pt : patients) {
        const ResourceId subject{ResourceType::Patient, pt.id};
        // Two or three chronic problems drive conditions, medications and specialties.
        std::vector<std::size_t> problems;
        while (problems.size() < 2 + uniform_index(rng, 2)) {
            const auto k = uniform_index(rng, kProblems.size());
            if (std::find(problems.begin(), problems.end(), k) == problems.end()) problems.push_back(k);
        }
        const std::size_t encounters = 2 + uniform_index(rng, 3);
        std::int64_t day = first_day + static_cast<std::int64_t>(uniform_index(rng, static_cast<std::size_t>(span_days / 2)));

        for (std::size_t e = 0; e < encounters; ++e) {
            const Problem& problem = kProblems[problems[e % problems.size()]];
            const bool inpatient = uniform_index(rng, 3) == 0;
            const DateTime start = DateTime::from_epoch_seconds(day * 86400 + 8 * 3600 + static_cast<std::int64_t>(uniform_index(rng, 8)) * 3600);

            Encounter enc;
            enc.id = ids.next(2);
            enc.encounter_class = inpatient ? EncounterClass::Inpatient : EncounterClass::Ambulatory;
            enc.subject = subject;
            enc.period_start = start;
            enc.period_end = start.plus_seconds(inpatient ? 3 * 86400 : 2 * 3600);
            enc.service_type = problem.specialty;
            enc.reason = problem.condition;
            enc.location = inpatient ? any_of(rng, kLocations) : "Outpatient Clinic 2";
            if (inpatient) {
                enc.discharge_summary = std::string("Admitted for ") + problem.condition + ". Treated with " +
                                        problem.medication + ". Discharged home in stable condition.";
            }
            out.push_back(enc);
            const ResourceId encounter{ResourceType::Encounter, enc.id};

            auto at = [&](std::int64_t minutes) { return start.plus_seconds(minutes * 60); };

            // Labs: a panel of distinct tests drawn per encounter.
            std::vector<std::size_t> panel;
            const std::size_t n_labs = 4 + uniform_index(rng, 4);
            while (panel.size() < n_labs) {
                const auto k = uniform_index(rng, kLabs.size());
                if (std::find(panel.begin(), panel.end(), k) == panel.end()) panel.push_back(k);
            }
            for (std::size_t i = 0; i < panel.size(); ++i) {
                const LabSpec& lab = kLabs[panel[i]];
                const double width = lab.high - lab.low;
                const double v = rounded(lab.low - 0.3 * width + uniform_unit(rng) * 1.6 * width, lab.precision);
                Observation o;
                o.id = ids.next(3);
                o.status = (e + 1 == encounters && i == 0) ? ObservationStatus::Preliminary : ObservationStatus::Final;
                o.category = ObservationCategory::Laboratory;
                o.code.text = lab.name;
                o.value = Quantity{std::max(0.0, v), lab.unit};
                o.reference_range = ReferenceRange{lab.low, lab.high, lab.unit};
                o.effective = at(30 + static_cast<std::int64_t>(i) * 5);
                o.subject = subject;
                o.encounter = encounter;
                out.push_back(o);
            }

            for (const auto& [name, unit, low, high] :
                 {std::tuple{"Heart rate", "/min", 60.0, 100.0}, std::tuple{"Systolic blood pressure", "mmHg", 90.0, 140.0}}) {
                Observation o;
                o.id = ids.next(3);
                o.category = ObservationCategory::VitalSigns;
                o.code.text = name;
                o.value = Quantity{std::round(low - 10 + uniform_unit(rng) * (high - low + 30)), unit};
                o.reference_range = ReferenceRange{low, high, unit};
                o.effective = at(10);
                o.subject = subject;
                o.encounter = encounter;
                out.push_back(o);
            }

            if (uniform_index(rng, 2) == 0) {
                const Imaging& img = any_of(rng, kImaging);
                Observation o;
                o.id = ids.next(3);
                o.category = ObservationCategory::Imaging;
                o.code.text = img.name;
                o.value = std::string(img.finding);
                o.effective = at(90);
                o.subject = subject;
                o.encounter = encounter;
                out.push_back(o);
            }

            MedicationRequest mr;
            mr.id = ids.next(4);
            mr.status = e + 1 == encounters ? MedicationRequestStatus::Active : MedicationRequestStatus::Completed;
            mr.category = inpatient ? MedicationRequestCategory::Inpatient : MedicationRequestCategory::Outpatient;
            mr.medication_name = problem.medication;
            mr.dosage = problem.dosage;
            mr.frequency = problem.frequency;
            mr.subject = subject;
            mr.encounter = encounter;
            mr.authored_on = at(120);
            mr.reason = problem.condition;
            out.push_back(mr);

            if (inpatient) {
                MedicationRequest dc = mr;
                dc.id = ids.next(4);
                dc.category = MedicationRequestCategory::Discharge;
                dc.authored_on = enc.period_end->plus_seconds(-3600);
                out.push_back(dc);
            }

            if (e < problems.size()) {
                Condition c;
                c.id = ids.next(5);
                c.category = ConditionCategory::EncounterDiagnosis;
                c.code.text = problem.condition;
                c.subject = subject;
                c.encounter = encounter;
                c.recorded_date = at(60);
                out.push_back(c);
            }

            if (uniform_index(rng, 2) == 0) {
                CommunicationRequest cr;
                cr.id = ids.next(9);
                cr.message = any_of(rng, kMessages);
                cr.subject = subject;
                cr.encounter = encounter;
                cr.authored_on = at(150);
                out.push_back(cr);
            }

            day += 30 + static_cast<std::int64_t>(uniform_index(rng, 300));
        }

        for (std::size_t a = 0, n = uniform_index(rng, 3); a < n; ++a) {
            const AllergySpec& spec = kAllergies[(a + uniform_index(rng, kAllergies.size())) % kAllergies.size()];
            AllergyIntolerance al;
            al.id = ids.next(6);
            al.code.text = spec.substance;
            al.reaction = spec.reaction;
            al.subject = subject;
            al.recorded_date = DateTime::from_epoch_seconds(first_day * 86400 + static_cast<std::int64_t>(a) * 86400);
            bool duplicate = false;
            for (const auto& r : out) {
                if (const auto* other = r.get_if<AllergyIntolerance>()) {
                    duplicate = duplicate || (other->subject == subject && other->code.text == spec.substance);
                }
            }
            if (!duplicate) out.push_back(al);
        }

        for (std::size_t k = 0, n = 1 + uniform_index(rng, 2); k < n; ++k) {
            const ProcedureSpec& spec = kProcedures[(k * 3 + uniform_index(rng, kProcedures.size())) % kProcedures.size()];
            Procedure pr;
            pr.id = ids.next(7);
            pr.category = spec.category;
            pr.code.text = spec.name;
            pr.subject = subject;
            pr.performed = DateTime::from_epoch_seconds((day + 10 + static_cast<std::int64_t>(k) * 20) * 86400 + 10 * 3600);
            out.push_back(pr);
        }

        const std::int64_t social_day = first_day + 3;
        for (const auto& [name, value] :
             {std::pair{"Tobacco use", bernoulli(rng, 0.5) ? "Former smoker" : "Never smoker"},
              std::pair{"Alcohol use", bernoulli(rng, 0.5) ? "Social drinker" : "Denies alcohol use"}}) {
            Observation o;
            o.id = ids.next(3);
            o.category = ObservationCategory::SocialHistory;
            o.code.text = name;
            o.value = std::string(value);
            o.effective = DateTime::from_epoch_seconds(social_day * 86400 + 9 * 3600);
            o.subject = subject;
            out.push_back(o);
        }

        // Problem-list entries for chronic problems not yet diagnosed at an encounter.
        for (std::size_t k = encounters; k < problems.size(); ++k) {
            Condition c;
            c.id = ids.next(5);
            c.code.text = kProblems[problems[k]].condition;
            c.subject = subject;
            c.recorded_date = DateTime::from_epoch_seconds((first_day + 5) * 86400);
            out.push_back(c);
        }
    }
    for (const auto& r : out) ensure_valid(r);
    return out;
}

}  // namespace almanac::synth
