#include "semdtm/dtm.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "semdtm/error.hpp"
#include "semdtm/transforms.hpp"

namespace semdtm {

namespace {

const NdArray& input(const ArrayMap& inputs, const std::string& slot) {
    auto it = inputs.find(slot);
    if (it == inputs.end()) throw BindingError("missing input slot '" + slot + "'");
    return it->second;
}

long window_param(const ParamMap& params) {
    double w = scalar_param(params, "window");
    if (!std::isfinite(w) || w != std::floor(w)) {
        throw ShapeError("focal_mean window must be an odd integer >= 1, got " + format_number(w));
    }
    return static_cast<long>(w);
}

TransformInfo unary(std::string name, std::string family, std::vector<std::string> params, TransformFn fn) {
    return {std::move(name), std::move(family), {"in"}, {"out"}, std::move(params), std::move(fn)};
}

const std::vector<TransformInfo>& registry() {
    static const std::vector<TransformInfo> transforms = [] {
        auto focal = [](auto kernel) {
            return [kernel](const ParamMap& p, const ArrayMap& in) {
                return ArrayMap{{"out", kernel(input(in, "in"), window_param(p))}};
            };
        };
        auto wsum = [](auto kernel) {
            return [kernel](const ParamMap& p, const ArrayMap& in) {
                const NdArray& w = array_param(p, "weights");
                return ArrayMap{{"out", kernel(input(in, "layers"), w.data())}};
            };
        };
        std::vector<TransformInfo> r;
        r.push_back(unary("rescale_minmax", "rescale_minmax", {}, [](const ParamMap&, const ArrayMap& in) {
            return ArrayMap{{"out", kernels::rescale_minmax(input(in, "in"))}};
        }));
        r.push_back(unary("focal_mean", "focal_mean", {"window"}, focal(kernels::focal_mean_sliding)));
        r.push_back(unary("focal_mean/sliding_window", "focal_mean", {"window"}, focal(kernels::focal_mean_sliding)));
        r.push_back(unary("focal_mean/summed_area_table", "focal_mean", {"window"},
                          focal(kernels::focal_mean_summed_area)));
        r.push_back({"weighted_sum", "weighted_sum", {"layers"}, {"out"}, {"weights"},
                     wsum(kernels::weighted_sum_sequential)});
        r.push_back({"weighted_sum/sequential_sum", "weighted_sum", {"layers"}, {"out"}, {"weights"},
                     wsum(kernels::weighted_sum_sequential)});
        r.push_back({"weighted_sum/compensated_sum", "weighted_sum", {"layers"}, {"out"}, {"weights"},
                     wsum(kernels::weighted_sum_compensated)});
        r.push_back(unary("reclassify", "reclassify", {"breaks", "classes"}, [](const ParamMap& p, const ArrayMap& in) {
            return ArrayMap{{"out", kernels::reclassify(input(in, "in"), array_param(p, "breaks").data(),
                                                        array_param(p, "classes").data())}};
        }));
        r.push_back(unary("threshold_mask", "threshold_mask", {"t"}, [](const ParamMap& p, const ArrayMap& in) {
            return ArrayMap{{"out", kernels::threshold_mask(input(in, "in"), scalar_param(p, "t"))}};
        }));
        std::sort(r.begin(), r.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
        return r;
    }();
    return transforms;
}

std::vector<std::string> names_of(const std::vector<SlotContract>& slots) {
    std::vector<std::string> out;
    for (const auto& s : slots) out.push_back(s.slot);
    return out;
}

ArrayMap merged(std::initializer_list<const ArrayMap*> maps) {
    ArrayMap out;
    for (const ArrayMap* m : maps) out.insert(m->begin(), m->end());
    return out;
}

void append(std::vector<Violation>& into, std::vector<Violation> from) {
    into.insert(into.end(), std::make_move_iterator(from.begin()), std::make_move_iterator(from.end()));
}

}  // namespace

std::vector<std::string> DtmModule::input_names() const { return names_of(input_slots); }
std::vector<std::string> DtmModule::output_names() const { return names_of(output_slots); }

const TransformInfo* find_transform(std::string_view impl_ref) {
    const auto& reg = registry();
    auto it = std::lower_bound(reg.begin(), reg.end(), impl_ref,
                               [](const TransformInfo& t, std::string_view n) { return t.name < n; });
    return (it != reg.end() && it->name == impl_ref) ? &*it : nullptr;
}

std::vector<const TransformInfo*> list_transforms() {
    std::vector<const TransformInfo*> out;
    for (const auto& t : registry()) out.push_back(&t);
    return out;
}

double scalar_param(const ParamMap& params, const std::string& name) {
    const NdArray& a = array_param(params, name);
    if (a.size() != 1) throw ShapeError("parameter '" + name + "' must be a scalar, got shape " + format_shape(a.shape()));
    return a[0];
}

const NdArray& array_param(const ParamMap& params, const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw BindingError("missing parameter '" + name + "'");
    return it->second;
}

void validate_module(const DtmModule& m) {
    const TransformInfo* t = find_transform(m.impl_ref);
    if (!t) throw BindingError("module '" + m.id + "': unknown transform '" + m.impl_ref + "'");
    std::set<std::string> seen;
    for (const auto& group : {&m.input_slots, &m.output_slots}) {
        for (const auto& s : *group) {
            if (!seen.insert(s.slot).second) {
                throw BindingError("module '" + m.id + "': duplicate slot name '" + s.slot + "'");
            }
        }
    }
    for (const auto& [name, value] : m.params) {
        if (seen.count(name)) throw BindingError("module '" + m.id + "': parameter '" + name + "' shadows a slot");
        if (std::find(t->params.begin(), t->params.end(), name) == t->params.end()) {
            throw BindingError("module '" + m.id + "': transform '" + t->name + "' has no parameter '" + name + "'");
        }
    }
    if (m.input_names() != t->inputs || m.output_names() != t->outputs) {
        throw BindingError("module '" + m.id + "': slots do not match the signature of transform '" + t->name + "'");
    }
    for (const auto& pc : m.param_contracts) {
        if (std::find(t->params.begin(), t->params.end(), pc.slot) == t->params.end()) {
            throw BindingError("module '" + m.id + "': contract on unknown parameter '" + pc.slot + "'");
        }
    }
}

std::vector<std::string> contract_texts(const DtmModule& m) {
    std::vector<std::string> out;
    for (const auto& s : m.input_slots) {
        if (s.expr) out.push_back("pre " + s.slot + ": " + render_constraints(*s.expr));
    }
    for (const auto& s : m.param_contracts) {
        if (s.expr) out.push_back("pre " + s.slot + ": " + render_constraints(*s.expr));
    }
    for (const auto& s : m.output_slots) {
        if (s.expr) out.push_back("post " + s.slot + ": " + render_constraints(*s.expr));
    }
    if (m.invariant) out.push_back("invariant: " + render_constraints(*m.invariant));
    return out;
}

ParamMap effective_params(const DtmModule& m) {
    ParamMap params = m.params;
    for (const auto& p : m.perturbations) p->apply_to_params(params);
    return params;
}

ArrayMap run_raw(const DtmModule& m, const ArrayMap& inputs) {
    validate_module(m);
    const TransformInfo* t = find_transform(m.impl_ref);
    ArrayMap bound;
    for (const auto& slot : m.input_names()) bound.emplace(slot, input(inputs, slot));
    ArrayMap outputs = t->fn(effective_params(m), bound);
    for (const auto& p : m.perturbations) p->apply_to_outputs(outputs);
    for (const auto& slot : m.output_names()) {
        if (!outputs.count(slot)) throw BindingError("transform '" + t->name + "' produced no output '" + slot + "'");
    }
    return outputs;
}

std::string_view mode_name(Mode mode) { return mode == Mode::Enforce ? "enforce" : "observe"; }

std::optional<Mode> parse_mode(std::string_view text) {
    if (text == "enforce") return Mode::Enforce;
    if (text == "observe") return Mode::Observe;
    return std::nullopt;
}

std::string_view status_name(Status status) {
    switch (status) {
        case Status::Pass: return "pass";
        case Status::PreFailed: return "pre_failed";
        case Status::PostFailed: return "post_failed";
        case Status::InvariantFailed: return "invariant_failed";
    }
    return "?";
}

CheckOutcome run_checked(const DtmModule& m, const ArrayMap& inputs, Mode mode) {
    validate_module(m);
    CheckOutcome outcome;
    outcome.mode = mode;

    ArrayMap bound;
    for (const auto& slot : m.input_names()) bound.emplace(slot, input(inputs, slot));
    const ParamMap params = effective_params(m);
    const ArrayMap pre_context = merged({&bound, &params});

    std::vector<Violation> pre;
    for (const auto& s : m.input_slots) {
        if (s.expr) append(pre, check(*s.expr, bound.at(s.slot), s.slot, pre_context, Phase::Pre));
    }
    for (const auto& s : m.param_contracts) {
        if (s.expr) append(pre, check(*s.expr, array_param(params, s.slot), s.slot, pre_context, Phase::Pre));
    }
    bool pre_failed = !pre.empty();
    append(outcome.violations, std::move(pre));
    if (pre_failed && mode == Mode::Enforce) {
        outcome.status = Status::PreFailed;
        return outcome;
    }

    ArrayMap outputs = run_raw(m, bound);
    const ArrayMap full = merged({&bound, &params, &outputs});

    std::vector<Violation> post;
    for (const auto& s : m.output_slots) {
        if (s.expr) append(post, check(*s.expr, outputs.at(s.slot), s.slot, full, Phase::Post));
    }
    bool post_failed = !post.empty();
    append(outcome.violations, std::move(post));

    std::vector<Violation> inv;
    if (m.invariant) {
        append(inv, check_subject_free(*m.invariant, full, Phase::Invariant));
        for (const auto& group : {&m.input_slots, &m.output_slots}) {
            for (const auto& s : *group) {
                append(inv, check_subject_bound(*m.invariant, full.at(s.slot), s.slot, full, Phase::Invariant));
            }
        }
    }
    bool inv_failed = !inv.empty();
    append(outcome.violations, std::move(inv));

    outcome.status = pre_failed    ? Status::PreFailed
                     : post_failed ? Status::PostFailed
                     : inv_failed  ? Status::InvariantFailed
                                   : Status::Pass;
    if (outcome.status == Status::Pass || mode == Mode::Observe) outcome.outputs = std::move(outputs);
    return outcome;
}

CanonicalContracts canonical_contracts(std::string_view family) {
    if (family == "rescale_minmax") return {{{"in", "finite, nonempty"}}, {{"out", "in_range(0, 1)"}}, ""};
    if (family == "focal_mean") {
        return {{{"in", "finite"}, {"window", "integer_valued, positive"}}, {{"out", "finite"}}, "same_shape(in, out)"};
    }
    if (family == "weighted_sum") {
        return {{{"layers", "finite"}, {"weights", "nonnegative, sums_to(1, axis=0, tol=1e-09)"}},
                {{"out", "min_ge_slot(layers), max_le_slot(layers)"}},
                ""};
    }
    if (family == "reclassify") {
        return {{{"breaks", "sorted_ascending(axis=0)"}, {"classes", "integer_valued"}}, {{"out", "integer_valued"}}, ""};
    }
    if (family == "threshold_mask") return {{}, {{"out", "binary"}}, ""};
    throw BindingError("no shipped contracts for transform family '" + std::string(family) + "'");
}

DtmModule canonical_module(std::string_view impl_ref, ParamMap params, std::string id) {
    const TransformInfo* t = find_transform(impl_ref);
    if (!t) throw BindingError("unknown transform '" + std::string(impl_ref) + "'");
    CanonicalContracts c = canonical_contracts(t->family);
    auto lookup = [](const std::vector<std::pair<std::string, std::string>>& table,
                     const std::string& slot) -> std::optional<ConstraintExpr> {
        for (const auto& [name, text] : table) {
            if (name == slot) return parse_constraints(text);
        }
        return std::nullopt;
    };
    DtmModule m;
    m.id = id.empty() ? t->name : std::move(id);
    m.impl_ref = t->name;
    m.params = std::move(params);
    for (const auto& s : t->inputs) m.input_slots.push_back({s, lookup(c.pre, s)});
    for (const auto& s : t->outputs) m.output_slots.push_back({s, lookup(c.post, s)});
    for (const auto& p : t->params) {
        if (auto e = lookup(c.pre, p)) m.param_contracts.push_back({p, std::move(e)});
    }
    if (!c.invariant.empty()) m.invariant = parse_constraints(c.invariant);
    return m;
}

}  // namespace semdtm
