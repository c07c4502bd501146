#include "almanac/fhir/shape.hpp"

#include "almanac/common/text.hpp"

#include <array>
#include <mutex>

namespace almanac::fhir {

namespace {

using MutableShape = Shape;

const std::vector<std::string_view>& paths_for(ResourceType type) {
    static const std::array<std::vector<std::string_view>, kResourceTypeCount> table = {{
        // Patient
        {"name[].text:string", "gender:string", "birthDate:date"},
        // Encounter
        {"status:string", "class.system:string", "class.code:string", "subject.reference:string",
         "period.start:date", "period.end:date", "serviceType.text:string", "reasonCode[].text:string",
         "location[].location.display:string", "hospitalization.dischargeDisposition.text:string"},
        // MedicationRequest
        {"status:string", "intent:string", "category[].coding[].system:string",
         "category[].coding[].code:string", "medicationCodeableConcept.text:string",
         "dosageInstruction[].text:string", "dosageInstruction[].timing.code.text:string",
         "subject.reference:string", "encounter.reference:string", "authoredOn:date",
         "reasonCode[].text:string"},
        // Observation
        {"status:string", "category[].coding[].system:string", "category[].coding[].code:string",
         "code.text:string", "code.coding[].system:string", "code.coding[].code:string",
         "code.coding[].display:string", "valueQuantity.value:number", "valueQuantity.unit:string",
         "valueString:string", "referenceRange[].low.value:number", "referenceRange[].low.unit:string",
         "referenceRange[].high.value:number", "referenceRange[].high.unit:string",
         "effectiveDateTime:date", "subject.reference:string", "encounter.reference:string"},
        // ServiceRequest
        {"status:string", "intent:string", "category[].coding[].system:string",
         "category[].coding[].code:string", "code.text:string", "code.coding[].system:string",
         "code.coding[].code:string", "code.coding[].display:string", "subject.reference:string",
         "encounter.reference:string", "authoredOn:date", "reasonCode[].text:string",
         "occurrenceTiming.code.text:string"},
        // Condition
        {"clinicalStatus.coding[].system:string", "clinicalStatus.coding[].code:string",
         "category[].coding[].system:string", "category[].coding[].code:string", "code.text:string",
         "code.coding[].system:string", "code.coding[].code:string", "code.coding[].display:string",
         "subject.reference:string", "encounter.reference:string", "recordedDate:date"},
        // AllergyIntolerance
        {"clinicalStatus.coding[].system:string", "clinicalStatus.coding[].code:string", "type:string",
         "code.text:string", "code.coding[].system:string", "code.coding[].code:string",
         "code.coding[].display:string", "reaction[].manifestation[].text:string",
         "patient.reference:string", "recordedDate:date"},
        // Procedure
        {"status:string", "category.text:string", "code.text:string", "code.coding[].system:string",
         "code.coding[].code:string", "code.coding[].display:string", "subject.reference:string",
         "encounter.reference:string", "performedDateTime:date", "reasonCode[].text:string"},
        // CommunicationRequest
        {"status:string", "category[].text:string", "priority:string", "payload[].contentString:string",
         "subject.reference:string", "encounter.reference:string", "authoredOn:date"},
    }};
    return table[static_cast<std::size_t>(type)];
}

Shape::Kind leaf_kind(std::string_view name) {
    if (name == "string") return Shape::Kind::String;
    if (name == "number") return Shape::Kind::Number;
    if (name == "boolean") return Shape::Kind::Boolean;
    return Shape::Kind::Date;
}

/// Inserts `a.b[].c:kind` below `root`.
void insert_path(MutableShape& root, std::string_view spec) {
    auto colon = spec.rfind(':');
    auto kind = leaf_kind(spec.substr(colon + 1));
    auto segments = split(spec.substr(0, colon), '.');
    MutableShape* node = &root;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        std::string name = segments[i];
        bool array = name.size() > 2 && name.ends_with("[]");
        if (array) name.resize(name.size() - 2);
        bool last = i + 1 == segments.size();

        auto& slot = node->fields[name];
        if (!slot) {
            auto fresh = std::make_shared<MutableShape>();
            if (array) {
                fresh->kind = Shape::Kind::Array;
                auto element = std::make_shared<MutableShape>();
                element->kind = last ? kind : Shape::Kind::Object;
                fresh->element = element;
            } else {
                fresh->kind = last ? kind : Shape::Kind::Object;
            }
            slot = fresh;
        }
        auto* next = const_cast<MutableShape*>(slot.get());
        if (array) next = const_cast<MutableShape*>(next->element.get());
        node = next;
    }
}

std::shared_ptr<const Shape> build(ResourceType type) {
    auto root = std::make_shared<MutableShape>();
    insert_path(*root, "resourceType:string");
    insert_path(*root, "id:string");
    for (auto spec : paths_for(type)) insert_path(*root, spec);
    return root;
}

/// Keeps only the structure on which `a` and `b` agree.
std::shared_ptr<const Shape> intersect(const Shape& a, const Shape& b) {
    if (a.kind != b.kind) return nullptr;
    auto out = std::make_shared<MutableShape>();
    out->kind = a.kind;
    if (a.kind == Shape::Kind::Array) {
        out->element = intersect(*a.element, *b.element);
        if (!out->element) return nullptr;
    }
    if (a.kind == Shape::Kind::Object) {
        for (const auto& [name, child] : a.fields) {
            const Shape* other = b.field(name);
            if (!other) continue;
            if (auto merged = intersect(*child, *other)) out->fields.emplace(name, merged);
        }
    }
    return out;
}

}  // namespace

const Shape* Shape::field(std::string_view name) const {
    auto it = fields.find(name);
    return it == fields.end() ? nullptr : it->second.get();
}

std::string_view to_string(Shape::Kind kind) noexcept {
    switch (kind) {
        case Shape::Kind::String: return "string";
        case Shape::Kind::Number: return "number";
        case Shape::Kind::Boolean: return "boolean";
        case Shape::Kind::Date: return "date";
        case Shape::Kind::Object: return "object";
        case Shape::Kind::Array: return "array";
    }
    return "unknown";
}

std::shared_ptr<const Shape> resource_shape(ResourceType type) {
    static std::once_flag once;
    static std::array<std::shared_ptr<const Shape>, kResourceTypeCount> cache;
    std::call_once(once, [] {
        for (std::size_t i = 0; i < kResourceTypeCount; ++i) cache[i] = build(static_cast<ResourceType>(i));
    });
    return cache[static_cast<std::size_t>(type)];
}

std::shared_ptr<const Shape> union_shape(const std::vector<ResourceType>& types) {
    if (types.empty()) return nullptr;
    auto acc = resource_shape(types.front());
    for (std::size_t i = 1; i < types.size() && acc; ++i) acc = intersect(*acc, *resource_shape(types[i]));
    return acc;
}

}  // namespace almanac::fhir
