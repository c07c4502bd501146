#pragma once

#include <nlohmann/json.hpp>

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace almanac {

/**
 * @brief JSON value annotated with its 1-based source position.
 *
 * Objects keep members in source order (`keys[i]` names `children[i]`);
 * arrays use `children` only. Duplicate object keys are a syntax error.
 */
struct JsonNode {
    enum class Type { Null, Boolean, Number, String, Array, Object };

    Type type = Type::Null;
    nlohmann::json scalar;
    std::vector<std::string> keys;
    std::vector<JsonNode> children;
    std::size_t line = 1;
    std::size_t column = 1;

    bool is_object() const noexcept { return type == Type::Object; }
    bool is_array() const noexcept { return type == Type::Array; }
    bool is_string() const noexcept { return type == Type::String; }
    bool is_number() const noexcept { return type == Type::Number; }

    /// Member lookup; nullptr when absent or when this is not an object.
    const JsonNode* find(std::string_view key) const noexcept;

    nlohmann::json to_json() const;
};

/// Parses one JSON document. Throws SyntaxError with the failing position.
JsonNode read_json(std::string_view text);

std::string_view type_name(JsonNode::Type type) noexcept;

}  // namespace almanac
