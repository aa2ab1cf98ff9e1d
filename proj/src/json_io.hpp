#pragma once

// nlohmann/json conversions shared by the file readers and writers.

#include <json.hpp>
#include <string>

#include "secla/dataset.hpp"

namespace secla::detail {

using ordered_json = nlohmann::ordered_json;

ordered_json link_to_json(const Link& link);
// Throws ValidationError with `where` as context.
Link link_from_json(const nlohmann::json& j, const std::string& where);

Vector vector_from_json(const nlohmann::json& j, const std::string& where);
ordered_json vector_to_json(const Vector& v);

}  // namespace secla::detail
