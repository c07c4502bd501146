#pragma once

#include "almanac/fhir/model.hpp"

#include <map>
#include <memory>
#include <string>
#include <string_view>

namespace almanac::fhir {

/// Static structure of a resource's JSON form, used to type script paths.
struct Shape {
    enum class Kind { String, Number, Boolean, Date, Object, Array };

    Kind kind = Kind::Object;
    std::map<std::string, std::shared_ptr<const Shape>, std::less<>> fields;
    std::shared_ptr<const Shape> element;  ///< set when kind == Array

    const Shape* field(std::string_view name) const;
};

std::string_view to_string(Shape::Kind kind) noexcept;

/// Shape of `to_json(r)` for any resource of `type`, excluding preserved unknown members.
std::shared_ptr<const Shape> resource_shape(ResourceType type);

/// Shape shared by all of `types`: a path is typed only when every member agrees.
std::shared_ptr<const Shape> union_shape(const std::vector<ResourceType>& types);

}  // namespace almanac::fhir
