#pragma once

#include "almanac/fhir/datetime.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace almanac::fhir {

using nlohmann::json;

// =============================================================================
// Closed code sets
// =============================================================================

enum class ResourceType {
    Patient,
    Encounter,
    MedicationRequest,
    Observation,
    ServiceRequest,
    Condition,
    AllergyIntolerance,
    Procedure,
    CommunicationRequest,
};

enum class Gender { Male, Female, Other, Unknown };

enum class EncounterStatus {
    Planned, Arrived, Triaged, InProgress, OnLeave, Finished, Cancelled, EnteredInError, Unknown
};

/// v3 ActCode subset used for Encounter.class.
enum class EncounterClass { Ambulatory, Emergency, Inpatient, Observation, Virtual };

enum class MedicationRequestStatus {
    Active, OnHold, Cancelled, Completed, EnteredInError, Stopped, Draft, Unknown
};

enum class MedicationRequestIntent {
    Proposal, Plan, Order, OriginalOrder, InstanceOrder, Option
};

enum class MedicationRequestCategory { Inpatient, Outpatient, Community, Discharge };

enum class ObservationStatus {
    Registered, Preliminary, Final, Amended, Cancelled, EnteredInError, Unknown
};

enum class ObservationCategory {
    SocialHistory, VitalSigns, Imaging, Laboratory, Procedure, Survey, Exam, Therapy, Activity
};

/// FHIR request-status, shared by ServiceRequest and CommunicationRequest.
enum class RequestStatus { Draft, Active, OnHold, Revoked, Completed, EnteredInError, Unknown };

enum class ServiceRequestIntent {
    Proposal, Plan, Directive, Order, OriginalOrder, ReflexOrder, FillerOrder, InstanceOrder, Option
};

/// Internal order categories. Orders without a dedicated FHIR resource
/// (discharge, transfer, NPO, consent) are ServiceRequests in this code system.
enum class OrderCategory { Laboratory, Imaging, Consult, Vitals, Discharge, Transfer, Npo, Consent };

enum class ConditionClinicalStatus { Active, Recurrence, Relapse, Inactive, Remission, Resolved };

enum class ConditionCategory { ProblemListItem, EncounterDiagnosis };

enum class AllergyClinicalStatus { Active, Inactive, Resolved };

enum class AllergyType { Allergy, Intolerance };

enum class ProcedureStatus {
    Preparation, InProgress, NotDone, OnHold, Stopped, Completed, EnteredInError, Unknown
};

enum class CommunicationPriority { Routine, Urgent, Asap, Stat };

template <typename E>
struct EnumTraits;

#define ALMANAC_ENUM_NAMES(E, ...)                                          \
    template <>                                                             \
    struct EnumTraits<E> {                                                  \
        static constexpr auto names = std::to_array<std::string_view>({__VA_ARGS__}); \
    }

ALMANAC_ENUM_NAMES(ResourceType, "Patient", "Encounter", "MedicationRequest", "Observation",
                   "ServiceRequest", "Condition", "AllergyIntolerance", "Procedure",
                   "CommunicationRequest");
ALMANAC_ENUM_NAMES(Gender, "male", "female", "other", "unknown");
ALMANAC_ENUM_NAMES(EncounterStatus, "planned", "arrived", "triaged", "in-progress", "onleave",
                   "finished", "cancelled", "entered-in-error", "unknown");
ALMANAC_ENUM_NAMES(EncounterClass, "AMB", "EMER", "IMP", "OBSENC", "VR");
ALMANAC_ENUM_NAMES(MedicationRequestStatus, "active", "on-hold", "cancelled", "completed",
                   "entered-in-error", "stopped", "draft", "unknown");
ALMANAC_ENUM_NAMES(MedicationRequestIntent, "proposal", "plan", "order", "original-order",
                   "instance-order", "option");
ALMANAC_ENUM_NAMES(MedicationRequestCategory, "inpatient", "outpatient", "community", "discharge");
ALMANAC_ENUM_NAMES(ObservationStatus, "registered", "preliminary", "final", "amended", "cancelled",
                   "entered-in-error", "unknown");
ALMANAC_ENUM_NAMES(ObservationCategory, "social-history", "vital-signs", "imaging", "laboratory",
                   "procedure", "survey", "exam", "therapy", "activity");
ALMANAC_ENUM_NAMES(RequestStatus, "draft", "active", "on-hold", "revoked", "completed",
                   "entered-in-error", "unknown");
ALMANAC_ENUM_NAMES(ServiceRequestIntent, "proposal", "plan", "directive", "order", "original-order",
                   "reflex-order", "filler-order", "instance-order", "option");
ALMANAC_ENUM_NAMES(OrderCategory, "laboratory", "imaging", "consult", "vitals", "discharge",
                   "transfer", "npo", "consent");
ALMANAC_ENUM_NAMES(ConditionClinicalStatus, "active", "recurrence", "relapse", "inactive",
                   "remission", "resolved");
ALMANAC_ENUM_NAMES(ConditionCategory, "problem-list-item", "encounter-diagnosis");
ALMANAC_ENUM_NAMES(AllergyClinicalStatus, "active", "inactive", "resolved");
ALMANAC_ENUM_NAMES(AllergyType, "allergy", "intolerance");
ALMANAC_ENUM_NAMES(ProcedureStatus, "preparation", "in-progress", "not-done", "on-hold", "stopped",
                   "completed", "entered-in-error", "unknown");
ALMANAC_ENUM_NAMES(CommunicationPriority, "routine", "urgent", "asap", "stat");

#undef ALMANAC_ENUM_NAMES

template <typename E>
constexpr std::string_view to_string(E value) noexcept {
    return EnumTraits<E>::names[static_cast<std::size_t>(value)];
}

template <typename E>
constexpr std::optional<E> enum_from_string(std::string_view text) noexcept {
    const auto& names = EnumTraits<E>::names;
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == text) return static_cast<E>(i);
    }
    return std::nullopt;
}

template <typename E>
std::vector<std::string> enum_names() {
    return {EnumTraits<E>::names.begin(), EnumTraits<E>::names.end()};
}

inline constexpr std::size_t kResourceTypeCount = EnumTraits<ResourceType>::names.size();

// =============================================================================
// Identifiers
// =============================================================================

/// FHIR id grammar `[A-Za-z0-9\-\.]{1,64}` minus anything readable as an ISO date.
bool is_valid_id(std::string_view id) noexcept;

/// Why `id` is rejected, or empty when valid.
std::string id_violation(std::string_view id);

struct ResourceId {
    ResourceType type = ResourceType::Patient;
    std::string id;

    /// `Type/id`, the FHIR relative reference form.
    std::string reference() const;
    static std::optional<ResourceId> parse_reference(std::string_view text);

    auto operator<=>(const ResourceId&) const = default;
};

// =============================================================================
// Data types
// =============================================================================

struct Coding {
    std::string system;
    std::string code;
    std::string display;
    bool operator==(const Coding&) const = default;
};

struct CodeableConcept {
    std::optional<Coding> coding;
    std::string text;
    bool operator==(const CodeableConcept&) const = default;
};

struct Quantity {
    double value = 0.0;
    std::string unit;
    bool operator==(const Quantity&) const = default;
};

struct ReferenceRange {
    double low = 0.0;
    double high = 0.0;
    std::string unit;
    bool operator==(const ReferenceRange&) const = default;
};

// =============================================================================
// Resources. Each keeps unrecognized top-level members in `extra`.
// =============================================================================

struct Patient {
    std::string id;
    std::string name;
    Gender gender = Gender::Unknown;
    DateTime birth_date;
    json extra = json::object();
    bool operator==(const Patient&) const = default;
};

struct Encounter {
    std::string id;
    EncounterStatus status = EncounterStatus::Finished;
    EncounterClass encounter_class = EncounterClass::Ambulatory;
    ResourceId subject;
    DateTime period_start;
    std::optional<DateTime> period_end;
    std::string service_type;                  ///< specialty that saw the patient
    std::optional<std::string> reason;
    std::optional<std::string> location;       ///< department
    std::optional<std::string> discharge_summary;
    json extra = json::object();
    bool operator==(const Encounter&) const = default;
};

struct MedicationRequest {
    std::string id;
    MedicationRequestStatus status = MedicationRequestStatus::Active;
    MedicationRequestIntent intent = MedicationRequestIntent::Order;
    std::optional<MedicationRequestCategory> category;
    std::string medication_name;
    std::string dosage;
    std::string frequency;
    ResourceId subject;
    std::optional<ResourceId> encounter;
    DateTime authored_on;
    std::optional<std::string> reason;
    json extra = json::object();
    bool operator==(const MedicationRequest&) const = default;
};

struct Observation {
    std::string id;
    ObservationStatus status = ObservationStatus::Final;
    ObservationCategory category = ObservationCategory::Laboratory;
    CodeableConcept code;
    std::variant<std::monostate, Quantity, std::string> value;
    std::optional<ReferenceRange> reference_range;
    DateTime effective;
    ResourceId subject;
    std::optional<ResourceId> encounter;
    json extra = json::object();
    bool operator==(const Observation&) const = default;
};

struct ServiceRequest {
    std::string id;
    RequestStatus status = RequestStatus::Active;
    ServiceRequestIntent intent = ServiceRequestIntent::Order;
    OrderCategory category = OrderCategory::Laboratory;
    CodeableConcept code;
    ResourceId subject;
    std::optional<ResourceId> encounter;
    DateTime authored_on;
    std::optional<std::string> reason;
    std::optional<std::string> frequency;
    json extra = json::object();
    bool operator==(const ServiceRequest&) const = default;
};

struct Condition {
    std::string id;
    ConditionClinicalStatus clinical_status = ConditionClinicalStatus::Active;
    ConditionCategory category = ConditionCategory::ProblemListItem;
    CodeableConcept code;
    ResourceId subject;
    std::optional<ResourceId> encounter;
    DateTime recorded_date;
    json extra = json::object();
    bool operator==(const Condition&) const = default;
};

struct AllergyIntolerance {
    std::string id;
    AllergyClinicalStatus clinical_status = AllergyClinicalStatus::Active;
    AllergyType allergy_type = AllergyType::Allergy;
    CodeableConcept code;                      ///< substance
    std::optional<std::string> reaction;       ///< manifestation text
    ResourceId subject;
    DateTime recorded_date;
    json extra = json::object();
    bool operator==(const AllergyIntolerance&) const = default;
};

struct Procedure {
    std::string id;
    ProcedureStatus status = ProcedureStatus::Completed;
    std::optional<std::string> category;      ///< free text, e.g. "screening"
    CodeableConcept code;
    ResourceId subject;
    std::optional<ResourceId> encounter;
    DateTime performed;
    std::optional<std::string> reason;
    json extra = json::object();
    bool operator==(const Procedure&) const = default;
};

struct CommunicationRequest {
    std::string id;
    RequestStatus status = RequestStatus::Active;
    std::string category = "nursing";
    CommunicationPriority priority = CommunicationPriority::Routine;
    std::string message;
    ResourceId subject;
    std::optional<ResourceId> encounter;
    DateTime authored_on;
    json extra = json::object();
    bool operator==(const CommunicationRequest&) const = default;
};

/// Alternatives are in ResourceType order.
using ResourceVariant = std::variant<Patient, Encounter, MedicationRequest, Observation,
                                     ServiceRequest, Condition, AllergyIntolerance, Procedure,
                                     CommunicationRequest>;

/**
 * @brief Tagged union over the supported FHIR R4 resources.
 *
 * Immutable value: every accessor is const and the wrapped resource can only
 * be replaced wholesale.
 */
class FhirResource {
public:
    template <typename T>
        requires std::is_constructible_v<ResourceVariant, T>
    FhirResource(T resource) : value_(std::move(resource)) {}  // NOLINT(google-explicit-constructor)

    ResourceType type() const noexcept { return static_cast<ResourceType>(value_.index()); }
    const std::string& id() const noexcept;
    ResourceId resource_id() const { return {type(), id()}; }

    /// Patient the resource is about; a Patient is its own subject.
    std::optional<ResourceId> subject() const;
    std::optional<ResourceId> encounter() const;
    /// Timestamp used for chronological ordering; Patients have none.
    std::optional<DateTime> primary_time() const;

    const ResourceVariant& value() const noexcept { return value_; }

    template <typename T>
    const T* get_if() const noexcept {
        return std::get_if<T>(&value_);
    }

    /// Copy with a different id.
    FhirResource with_id(std::string id) const;

    bool operator==(const FhirResource&) const = default;

private:
    ResourceVariant value_;
};

// =============================================================================
// Validation and serialization
// =============================================================================

struct Violation {
    std::string field;
    std::string rule;
    bool operator==(const Violation&) const = default;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const noexcept { return violations.empty(); }
};

ValidationReport validate_resource(const FhirResource& resource);

/// Throws InvariantViolation on the first failing invariant.
void ensure_valid(const FhirResource& resource);

json to_json(const FhirResource& resource);
/// Throws UnknownResourceType or InvariantViolation.
FhirResource from_json(const json& document);

/// Canonical JSON: sorted keys, no insignificant whitespace, ISO-8601 times.
std::string serialize_resource(const FhirResource& resource);
/// Throws MalformedJson, UnknownResourceType or InvariantViolation.
FhirResource parse_resource(std::string_view json_text);

std::optional<ResourceType> resource_type_from_string(std::string_view name) noexcept;

}  // namespace almanac::fhir
