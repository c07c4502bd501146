#include "almanac/store/history.hpp"

#include "almanac/common/text.hpp"

#include <algorithm>
#include <cstdint>
#include <map>

namespace almanac::store {

using namespace almanac::fhir;

namespace {

std::string concept_text(const CodeableConcept& cc) {
    return cc.text;
}

std::string describe(const Patient& p) {
    return p.name + ", " + std::string(to_string(p.gender)) + ", born " + p.birth_date.to_string();
}

std::string describe(const Encounter& e) {
    std::string out = e.service_type + " (" + std::string(to_string(e.encounter_class)) + ", " +
                      std::string(to_string(e.status)) + ")";
    if (e.reason) out += " for " + *e.reason;
    if (e.location) out += " at " + *e.location;
    if (e.discharge_summary) out += "; discharge: " + *e.discharge_summary;
    return out;
}

std::string describe(const MedicationRequest& m) {
    return m.medication_name + " " + m.dosage + " " + m.frequency + " (" + std::string(to_string(m.status)) + ")" +
           (m.reason ? " for " + *m.reason : "");
}

std::string describe(const Observation& o) {
    std::string out = concept_text(o.code);
    if (const auto* q = std::get_if<Quantity>(&o.value)) {
        out += " " + format_number(q->value) + (q->unit.empty() ? "" : " " + q->unit);
    } else if (const auto* s = std::get_if<std::string>(&o.value)) {
        out += ": " + *s;
    }
    if (o.reference_range) {
        out += " (ref " + format_number(o.reference_range->low) + "-" + format_number(o.reference_range->high) + ")";
    }
    out += " [" + std::string(to_string(o.category)) + ", " + std::string(to_string(o.status)) + "]";
    return out;
}

std::string describe(const ServiceRequest& s) {
    return std::string(to_string(s.category)) + " order " + concept_text(s.code) + " (" +
           std::string(to_string(s.status)) + ")" + (s.reason ? " for " + *s.reason : "");
}

std::string describe(const Condition& c) {
    return concept_text(c.code) + " (" + std::string(to_string(c.clinical_status)) + ")";
}

std::string describe(const AllergyIntolerance& a) {
    return std::string(to_string(a.allergy_type)) + " to " + concept_text(a.code) +
           (a.reaction ? ", reaction " + *a.reaction : "");
}

std::string describe(const Procedure& p) {
    return concept_text(p.code) + " (" + std::string(to_string(p.status)) + ")" +
           (p.category ? " [" + *p.category + "]" : "");
}

std::string describe(const CommunicationRequest& c) {
    return "nursing message (" + std::string(to_string(c.priority)) + "): " + c.message;
}

struct Block {
    std::string heading;
    std::vector<std::string> lines;   ///< newest first
    std::vector<std::int64_t> times;  ///< parallel to lines
    std::int64_t newest = INT64_MIN;  ///< encounter start, else newest event
    bool has_start = false;
};

}  // namespace

std::string summarize(const FhirResource& resource) {
    std::string body = std::visit([](const auto& r) { return describe(r); }, resource.value());
    return std::string(to_string(resource.type())) + " " + resource.id() + ": " + body;
}

std::string render_history_digest(const PatientHistory& history, std::size_t budget) {
    std::string head = "Patient " + history.patient.id + ": " + describe(history.patient) + "\n";
    if (head.size() > budget) return head.substr(0, budget);

    // Group events by encounter; the encounter resource itself heads its block.
    std::map<std::string, Block> grouped;
    Block unlinked;
    unlinked.heading = "[No encounter]";
    for (const auto& ev : history.events) {
        std::string line = "  " + ev.timestamp.to_string() + " " + summarize(ev.resource);
        auto enc = ev.resource.encounter();
        Block* block = &unlinked;
        if (enc) {
            block = &grouped[enc->id];
            if (ev.resource.type() == ResourceType::Encounter) {
                block->heading = "[Encounter " + enc->id + " " + ev.timestamp.to_string() + "] " +
                                 describe(*ev.resource.get_if<Encounter>());
                block->newest = ev.timestamp.epoch_seconds();
                block->has_start = true;
                continue;
            }
        }
        if (!block->has_start) block->newest = std::max(block->newest, ev.timestamp.epoch_seconds());
        block->lines.insert(block->lines.begin(), line);
        block->times.insert(block->times.begin(), ev.timestamp.epoch_seconds());
    }
    std::vector<Block> blocks;
    for (auto& [id, b] : grouped) {
        if (b.heading.empty()) b.heading = "[Encounter " + id + "]";
        blocks.push_back(std::move(b));
    }
    // Newest encounter first; events without one go last.
    std::stable_sort(blocks.begin(), blocks.end(), [](const Block& a, const Block& b) { return a.newest > b.newest; });
    if (!unlinked.lines.empty()) blocks.push_back(std::move(unlinked));

    auto render = [&](std::size_t omitted) {
        std::string out = head;
        for (const auto& b : blocks) {
            if (b.lines.empty() && b.heading.rfind("[No encounter]", 0) == 0) continue;
            out += b.heading + "\n";
            for (const auto& l : b.lines) out += l + "\n";
        }
        if (omitted) out += "(" + std::to_string(omitted) + " older events omitted)\n";
        return out;
    };

    std::size_t total = 0;
    for (const auto& b : blocks) total += b.lines.size();
    std::size_t omitted = 0;
    std::string text = render(0);
    while (text.size() > budget && total > 0) {
        // Drop the oldest remaining event line across all blocks.
        Block* victim = nullptr;
        for (auto& b : blocks) {
            if (b.lines.empty()) continue;
            if (!victim || b.times.back() < victim->times.back()) victim = &b;
        }
        victim->lines.pop_back();
        victim->times.pop_back();
        --total;
        ++omitted;
        text = render(omitted);
    }
    while (text.size() > budget && !blocks.empty()) {
        blocks.pop_back();
        text = render(std::max<std::size_t>(omitted, 1));
    }
    if (text.size() > budget) text = head;
    return text;
}

}  // namespace almanac::store
