#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "semdtm/array.hpp"
#include "semdtm/constraints.hpp"

namespace semdtm {

// Parameters (theta) are arrays too; scalars are shape [1].
using ParamMap = std::map<std::string, NdArray>;

/**
 * Hook applied around a transform by run_raw: parameters are passed through
 * apply_to_params before the transform runs, outputs through
 * apply_to_outputs after. Implementations must be deterministic.
 */
class Perturbation {
public:
    virtual ~Perturbation() = default;
    virtual void apply_to_params(ParamMap& params) const { (void)params; }
    virtual void apply_to_outputs(ArrayMap& outputs) const { (void)outputs; }
    virtual std::string describe() const = 0;
};

struct SlotContract {
    std::string slot;
    std::optional<ConstraintExpr> expr;
};

struct DtmModule {
    std::string id;
    std::string impl_ref;
    ParamMap params;
    std::vector<SlotContract> input_slots;      // pre-conditions on inputs
    std::vector<SlotContract> output_slots;     // post-conditions on outputs
    std::vector<SlotContract> param_contracts;  // pre-conditions on parameters
    std::optional<ConstraintExpr> invariant;    // over the union of input and output slots
    std::vector<std::shared_ptr<const Perturbation>> perturbations;

    std::vector<std::string> input_names() const;
    std::vector<std::string> output_names() const;
};

// Throws BindingError if impl_ref does not resolve, slot names collide, or
// the slot lists differ from the transform's signature.
void validate_module(const DtmModule& m);

// Contract text in canonical form, one entry per attached expression,
// e.g. "pre in: finite, nonempty".
std::vector<std::string> contract_texts(const DtmModule& m);

// Parameters after perturbations; what the transform actually sees.
ParamMap effective_params(const DtmModule& m);

ArrayMap run_raw(const DtmModule& m, const ArrayMap& inputs);

enum class Mode { Enforce, Observe };
std::string_view mode_name(Mode mode);
std::optional<Mode> parse_mode(std::string_view text);

enum class Status { Pass, PreFailed, PostFailed, InvariantFailed };
std::string_view status_name(Status status);

struct CheckOutcome {
    Status status = Status::Pass;
    std::optional<ArrayMap> outputs;
    std::vector<Violation> violations;
    Mode mode = Mode::Enforce;
};

/**
 * Checked execution: pre-conditions on inputs and parameters, then the
 * transform, then post-conditions on each output, then the invariant over
 * all slots. In enforce mode a pre failure skips execution and outputs are
 * delivered only on pass; in observe mode every phase runs and outputs are
 * always delivered.
 */
CheckOutcome run_checked(const DtmModule& m, const ArrayMap& inputs, Mode mode);

// ---------------------------------------------------------------------------
// Transform registry

using TransformFn = std::function<ArrayMap(const ParamMap&, const ArrayMap&)>;

struct TransformInfo {
    std::string name;    // impl_ref
    std::string family;  // abstract transform this implements
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::vector<std::string> params;
    TransformFn fn;
};

const TransformInfo* find_transform(std::string_view impl_ref);
// Sorted by name.
std::vector<const TransformInfo*> list_transforms();

// Module for a registered transform with the shipped contracts of its family.
DtmModule canonical_module(std::string_view impl_ref, ParamMap params, std::string id = {});

struct CanonicalContracts {
    std::vector<std::pair<std::string, std::string>> pre;
    std::vector<std::pair<std::string, std::string>> post;
    std::string invariant;
};
CanonicalContracts canonical_contracts(std::string_view family);

// Reads a scalar parameter, throwing BindingError when absent and
// ShapeError when it has more than one cell.
double scalar_param(const ParamMap& params, const std::string& name);
const NdArray& array_param(const ParamMap& params, const std::string& name);

}  // namespace semdtm
