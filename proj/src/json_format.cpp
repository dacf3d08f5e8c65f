#include "pbcert/json_format.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace pbcert {

namespace {

void newline(std::string& out, int indent, int depth) {
    if (indent < 0) return;
    out += '\n';
    out.append(static_cast<std::size_t>(indent * depth), ' ');
}

void write(const Json& v, std::string& out, int indent, int depth) {
    switch (v.type()) {
        case Json::value_t::object: {
            if (v.empty()) {
                out += "{}";
                return;
            }
            out += '{';
            bool first = true;
            for (const auto& [key, item] : v.items()) {
                if (!first) out += ',';
                first = false;
                newline(out, indent, depth + 1);
                out += Json(key).dump();
                out += indent < 0 ? ":" : ": ";
                write(item, out, indent, depth + 1);
            }
            newline(out, indent, depth);
            out += '}';
            return;
        }
        case Json::value_t::array: {
            if (v.empty()) {
                out += "[]";
                return;
            }
            // Arrays of scalars stay on one line.
            const bool flat = std::none_of(v.begin(), v.end(),
                                           [](const Json& e) { return e.is_structured(); });
            out += '[';
            bool first = true;
            for (const auto& item : v) {
                if (!first) out += flat ? ", " : ",";
                first = false;
                if (!flat) newline(out, indent, depth + 1);
                write(item, out, indent, depth + 1);
            }
            if (!flat) newline(out, indent, depth);
            out += ']';
            return;
        }
        case Json::value_t::number_float: {
            const double x = v.get<double>();
            if (!std::isfinite(x)) {
                out += "null";
                return;
            }
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.17g", x);
            out += buf;
            return;
        }
        default:
            out += v.dump();
            return;
    }
}

}  // namespace

std::string dump_json(const Json& value, int indent) {
    std::string out;
    write(value, out, indent, 0);
    return out;
}

}  // namespace pbcert
