#include "semdtm/fault.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "semdtm/error.hpp"
#include "semdtm/rng.hpp"

namespace semdtm {

namespace {

struct KindName {
    FaultKind kind;
    std::string_view name;
};

constexpr KindName kKindNames[] = {
    {FaultKind::SignFlip, "sign_flip"},   {FaultKind::IndexShift, "index_shift"},
    {FaultKind::ParamPerturb, "param_perturb"}, {FaultKind::NanInject, "nan_inject"},
    {FaultKind::UnitScale, "unit_scale"}, {FaultKind::StuckValue, "stuck_value"},
    {FaultKind::None, "none"},
};

bool is_output_kind(FaultKind k) { return k != FaultKind::ParamPerturb && k != FaultKind::None; }

std::size_t pick(Rng& rng, const std::vector<std::size_t>& candidates) {
    return candidates[rng.below(candidates.size())];
}

NdArray rebuilt(const NdArray& a, std::vector<double> data, std::optional<std::vector<bool>> mask) {
    return NdArray(a.shape(), std::move(data), std::move(mask), a.name());
}

class FaultPerturbation : public Perturbation {
public:
    explicit FaultPerturbation(FaultSpec fault) : fault_(std::move(fault)) {}

    void apply_to_params(ParamMap& params) const override {
        if (fault_.kind != FaultKind::ParamPerturb) return;
        auto it = params.find(fault_.target.name);
        if (it == params.end()) throw BindingError("fault target parameter '" + fault_.target.name + "' is missing");
        const NdArray& p = it->second;
        Rng rng(fault_.seed);
        std::size_t cell = fault_.target.cell ? *fault_.target.cell : rng.below(p.size());
        check_cell(cell, p.size());
        std::vector<double> data(p.data().begin(), p.data().end());
        data[cell] *= 1.0 + fault_.magnitude;
        it->second = rebuilt(p, std::move(data), p.mask());
    }

    void apply_to_outputs(ArrayMap& outputs) const override {
        if (!is_output_kind(fault_.kind)) return;
        auto it = outputs.find(fault_.target.name);
        if (it == outputs.end()) throw BindingError("fault target slot '" + fault_.target.name + "' was not produced");
        it->second = corrupt(it->second);
    }

    std::string describe() const override {
        std::string out = "fault " + std::string(fault_kind_name(fault_.kind)) + " on '" + fault_.target.name + "'";
        if (fault_.target.cell) out += " cell=" + std::to_string(*fault_.target.cell);
        if (fault_.kind == FaultKind::IndexShift || fault_.kind == FaultKind::UnitScale ||
            fault_.kind == FaultKind::ParamPerturb) {
            out += " magnitude=" + format_number(fault_.magnitude);
        }
        return out + " seed=" + std::to_string(fault_.seed);
    }

private:
    static void check_cell(std::size_t cell, std::size_t size) {
        if (cell >= size) {
            throw BindingError("fault cell " + std::to_string(cell) + " out of range for size " + std::to_string(size));
        }
    }

    // Explicit cell, or a seed-chosen one among the eligible cells.
    std::optional<std::size_t> choose(const NdArray& a, Rng& rng, bool nonzero, std::size_t first) const {
        if (fault_.target.cell) {
            check_cell(*fault_.target.cell, a.size());
            if (a.masked(*fault_.target.cell)) return std::nullopt;
            return fault_.target.cell;
        }
        std::vector<std::size_t> eligible;
        for (std::size_t i = first; i < a.size(); ++i) {
            if (!a.masked(i) && (!nonzero || a[i] != 0.0)) eligible.push_back(i);
        }
        if (eligible.empty()) return std::nullopt;
        return pick(rng, eligible);
    }

    NdArray corrupt(const NdArray& a) const {
        Rng rng(fault_.seed);
        std::vector<double> data(a.data().begin(), a.data().end());
        auto mask = a.mask();
        switch (fault_.kind) {
            case FaultKind::SignFlip:
                // Zero stays +0.0 so a flip of a zero cell is a true no-op.
                if (auto c = choose(a, rng, true, 0); c && data[*c] != 0.0) data[*c] = -data[*c];
                break;
            case FaultKind::IndexShift: {
                const std::size_t n = data.size();
                const std::size_t s = static_cast<std::size_t>(fault_.magnitude) % n;
                std::rotate(data.rbegin(), data.rbegin() + s, data.rend());
                if (mask) std::rotate(mask->rbegin(), mask->rbegin() + s, mask->rend());
                break;
            }
            case FaultKind::NanInject:
                if (auto c = choose(a, rng, false, 0)) data[*c] = NAN;
                break;
            case FaultKind::UnitScale:
                for (std::size_t i = 0; i < data.size(); ++i) {
                    if (!a.masked(i)) data[i] *= fault_.magnitude;
                }
                break;
            case FaultKind::StuckValue:
                if (auto c = choose(a, rng, false, 1)) data[*c] = data[0];
                break;
            case FaultKind::ParamPerturb:
            case FaultKind::None:
                break;
        }
        return rebuilt(a, std::move(data), std::move(mask));
    }

    FaultSpec fault_;
};

}  // namespace

std::string_view fault_kind_name(FaultKind kind) {
    for (const auto& k : kKindNames) {
        if (k.kind == kind) return k.name;
    }
    return "?";
}

FaultKind parse_fault_kind(std::string_view name) {
    for (const auto& k : kKindNames) {
        if (k.name == name) return k.kind;
    }
    throw ParseError("unknown fault kind '" + std::string(name) + "'");
}

std::vector<FaultKind> all_fault_kinds() {
    return {FaultKind::SignFlip,  FaultKind::IndexShift, FaultKind::ParamPerturb,
            FaultKind::NanInject, FaultKind::UnitScale,  FaultKind::StuckValue};
}

void validate_fault(const FaultSpec& fault) {
    const double m = fault.magnitude;
    switch (fault.kind) {
        case FaultKind::IndexShift:
            if (!(m >= 1.0) || m != std::floor(m) || !std::isfinite(m)) {
                throw PreconditionError("index_shift magnitude must be an integer >= 1, got " + format_number(m));
            }
            break;
        case FaultKind::UnitScale:
            if (!(m > 0.0) || m == 1.0 || !std::isfinite(m)) {
                throw PreconditionError("unit_scale magnitude must be > 0 and != 1, got " + format_number(m));
            }
            break;
        case FaultKind::ParamPerturb:
            if (!(m > 0.0) || !std::isfinite(m)) {
                throw PreconditionError("param_perturb magnitude must be > 0, got " + format_number(m));
            }
            break;
        default:
            break;
    }
}

DtmModule inject(const DtmModule& m, const FaultSpec& fault) {
    validate_fault(fault);
    if (fault.kind == FaultKind::None) return m;
    const auto outputs = m.output_names();
    const bool is_output = std::find(outputs.begin(), outputs.end(), fault.target.name) != outputs.end();
    const bool is_param = m.params.count(fault.target.name) > 0;
    const auto inputs = m.input_names();
    const bool is_input = std::find(inputs.begin(), inputs.end(), fault.target.name) != inputs.end();
    const std::string kind(fault_kind_name(fault.kind));

    if (fault.kind == FaultKind::ParamPerturb) {
        if (is_output || is_input) {
            throw PreconditionError(kind + " targets parameters, '" + fault.target.name + "' is a slot");
        }
        if (!is_param) throw BindingError("module '" + m.id + "' has no parameter '" + fault.target.name + "'");
    } else {
        if (is_param || is_input) {
            throw PreconditionError(kind + " targets output slots, '" + fault.target.name + "' is not one");
        }
        if (!is_output) throw BindingError("module '" + m.id + "' has no output slot '" + fault.target.name + "'");
    }
    DtmModule wrapped = m;
    wrapped.perturbations.push_back(std::make_shared<FaultPerturbation>(fault));
    return wrapped;
}

ChainSpec inject(const ChainSpec& spec, const FaultSpec& fault) {
    ChainSpec out = spec;
    auto it = std::find_if(out.stages.begin(), out.stages.end(),
                           [&](const StageSpec& s) { return s.id == fault.target.stage; });
    if (it == out.stages.end()) throw BindingError("fault target stage '" + fault.target.stage + "' does not exist");
    it->module = inject(it->module, fault);
    return out;
}

std::string_view detection_name(Detection d) {
    switch (d) {
        case Detection::Pre: return "pre";
        case Detection::Post: return "post";
        case Detection::Invariant: return "invariant";
        case Detection::Ensemble: return "ensemble";
        case Detection::Error: return "error";
        case Detection::None: return "none";
    }
    return "?";
}

ComplementarityOutcome run_shift_scenario(const NdArray& grid, double window, std::size_t shift, double tol) {
    ParamMap params{{"window", NdArray::scalar(window)}};
    auto set = shipped_variant_set("focal_mean", params);

    FaultSpec fault;
    fault.kind = FaultKind::IndexShift;
    fault.target = {"", "out", std::nullopt};
    fault.magnitude = static_cast<double>(shift);
    DtmModule faulted = inject(set->variants.front(), fault);
    faulted.id += "+index_shift";

    ComplementarityOutcome outcome;
    outcome.faulted_id = faulted.id;
    ArrayMap inputs{{"in", grid}};
    outcome.checked = run_checked(faulted, inputs, Mode::Enforce);
    set->variants.push_back(faulted);
    outcome.ensemble = run_ensemble(*set, inputs, tol);
    return outcome;
}

}  // namespace semdtm
