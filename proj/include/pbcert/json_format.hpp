#pragma once

#include <string>

#include <json.hpp>

namespace pbcert {

using Json = nlohmann::ordered_json;

/// Serialises `value` with every floating-point number written as %.17g, so
/// that parsing the text back recovers the same doubles bit for bit.
/// Non-finite numbers become null. indent < 0 gives a single line.
std::string dump_json(const Json& value, int indent = 2);

}  // namespace pbcert
