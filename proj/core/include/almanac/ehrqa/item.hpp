#pragma once

#include "almanac/ehrqa/template.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace almanac::ehrqa {

struct ParamConstraint {
    Matcher match = Matcher::Exact;
    json value;  ///< null for Any

    bool operator==(const ParamConstraint&) const = default;
};

/// Expected calls in template order; matched against responses as a multiset.
struct GoldAnnotation {
    std::vector<std::string> expected_functions;
    std::vector<std::map<std::string, ParamConstraint>> param_constraints;  ///< one per expected function
    bool allow_refusal = false;

    json to_json() const;
    static GoldAnnotation from_json(const json& j);
    bool operator==(const GoldAnnotation&) const = default;
};

struct EhrqaItem {
    std::string item_id;
    std::string patient_id;
    std::optional<std::string> template_id;  ///< absent for negatives
    std::string question;
    bool negative = false;
    GoldAnnotation gold;
    Bindings slots;
    std::uint64_t seed = 0;
    std::uint64_t round = 0;

    json to_json() const;
    /// Throws MalformedRecord.
    static EhrqaItem from_json(const json& j);
    bool operator==(const EhrqaItem&) const = default;
};

struct DatasetHeader {
    std::size_t n_questions = 0;
    double p_negative = 0;
    std::uint64_t seed = 0;

    bool operator==(const DatasetHeader&) const = default;
};

struct Dataset {
    DatasetHeader header;
    std::vector<EhrqaItem> items;
};

/// Gold constraints for a template under `bindings`.
GoldAnnotation build_gold(const QuestionTemplate& t, const Bindings& bindings);
/// Literature search or refusal.
GoldAnnotation negative_gold();

/// JSON Lines: a `{"format":"ehrqa","version":1,"config":{...}}` header then one item per line.
std::string dataset_text(const Dataset& dataset);
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
/// Throws MalformedRecord naming the 1-based line.
Dataset parse_dataset(std::string_view text);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace almanac::ehrqa
