#pragma once

// JSON helpers shared by the report writers. Internal to the library.

#include <cmath>

#include "json.hpp"
#include "semdtm/array.hpp"
#include "semdtm/constraints.hpp"

namespace semdtm::detail {

using nlohmann::ordered_json;

// Non-finite numbers have no JSON form; they are written as strings.
inline ordered_json number_json(double v) {
    if (std::isfinite(v)) return v;
    return format_number(v);
}

inline ordered_json index_json(const std::optional<MultiIndex>& index) {
    if (!index) return "global";
    return ordered_json(*index);
}

inline ordered_json violation_json(const Violation& v) {
    ordered_json j;
    j["predicate"] = v.predicate;
    j["phase"] = std::string(phase_name(v.phase));
    j["slot"] = v.slot;
    j["location"] = index_json(v.location);
    j["observed"] = v.observed ? number_json(*v.observed) : ordered_json(v.detail);
    j["expectation"] = v.expectation;
    return j;
}

}  // namespace semdtm::detail
