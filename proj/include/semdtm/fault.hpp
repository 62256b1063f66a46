#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "semdtm/chain.hpp"
#include "semdtm/dtm.hpp"
#include "semdtm/ensemble.hpp"

namespace semdtm {

// None is the no-fault baseline; inject() treats it as the identity.
enum class FaultKind { SignFlip, IndexShift, ParamPerturb, NanInject, UnitScale, StuckValue, None };

std::string_view fault_kind_name(FaultKind kind);
// Throws ParseError for an unknown name.
FaultKind parse_fault_kind(std::string_view name);
// The six injecting kinds, in declaration order.
std::vector<FaultKind> all_fault_kinds();

struct FaultTarget {
    std::string stage;               // used by the chain overload of inject
    std::string name;                // output slot, or parameter for ParamPerturb
    std::optional<std::size_t> cell; // flat row-major index; seed-chosen when absent
};

struct FaultSpec {
    FaultKind kind = FaultKind::None;
    FaultTarget target;
    double magnitude = 0.0;
    std::uint64_t seed = 0;
};

// Throws PreconditionError when the magnitude is out of range for the kind.
void validate_fault(const FaultSpec& fault);

/**
 * Returns a copy of m with the fault appended to its perturbations.
 *
 * sign_flip      negates one cell (seed-chosen among unmasked nonzero cells)
 * index_shift    rotates the flattened data and mask right by magnitude
 * nan_inject     sets one unmasked cell to NaN
 * unit_scale     multiplies every cell by magnitude
 * stuck_value    overwrites one cell with the value of cell 0
 * param_perturb  multiplies one parameter entry by (1 + magnitude)
 *
 * Explicitly selected masked cells are left alone. Throws BindingError if
 * target.name is not an output slot (or parameter, for param_perturb) of m,
 * PreconditionError for a bad magnitude.
 */
DtmModule inject(const DtmModule& m, const FaultSpec& fault);

// Same, applied to the stage named by target.stage.
ChainSpec inject(const ChainSpec& spec, const FaultSpec& fault);

enum class Detection { Pre, Post, Invariant, Ensemble, Error, None };
std::string_view detection_name(Detection d);

struct CampaignConfig {
    std::vector<FaultKind> kinds;
    std::size_t trials_per_kind = 0;
    std::uint64_t master_seed = 0;
    // Cross-check the faulted stage against its shipped variant set when
    // no contract fired.
    bool use_ensemble = true;
    double ensemble_tol = 1e-9;
};

struct TrialRecord {
    FaultKind kind = FaultKind::None;
    std::size_t index = 0;
    std::uint64_t seed = 0;
    FaultTarget target;
    double magnitude = 0.0;
    Detection detection = Detection::None;
    std::string detecting_stage;     // empty when undetected
    std::size_t violations = 0;      // attributable violations (all violations for the baseline kind)
    std::size_t affected_cells = 0;  // cells differing from the clean run over all intermediates
};

struct KindCounts {
    FaultKind kind = FaultKind::None;
    std::size_t trials = 0;
    std::size_t detected_pre = 0;
    std::size_t detected_post = 0;
    std::size_t detected_invariant = 0;
    std::size_t detected_ensemble = 0;
    std::size_t detected_error = 0;
    std::size_t undetected = 0;

    std::size_t detected() const {
        return detected_pre + detected_post + detected_invariant + detected_ensemble + detected_error;
    }
    double detection_rate() const { return trials ? static_cast<double>(detected()) / trials : 0.0; }
    double silent_rate() const { return trials ? static_cast<double>(undetected) / trials : 0.0; }
};

struct CampaignReport {
    CampaignConfig config;
    std::size_t trials = 0;
    std::size_t baseline_violations = 0;  // violations of the clean observe-mode run
    std::vector<KindCounts> per_kind;     // in config.kinds order
    std::vector<TrialRecord> records;     // (kind, index) order
};

/**
 * Injects one seeded fault per trial and runs the chain in observe mode.
 *
 * A violation detects the fault if it occurs at the faulted stage or
 * downstream and is absent from the clean run. The first such event in
 * execution order wins; within a stage the order is pre, error, post,
 * invariant. Stage errors are recorded, never fatal.
 *
 * Throws PreconditionError for trials_per_kind == 0, ChainSpecError for an
 * invalid spec.
 */
CampaignReport run_campaign(const ChainSpec& spec, const ArrayMap& sources, const CampaignConfig& config);

// The fault a trial would inject; exposed for oracles.
FaultSpec draw_fault(const ChainSpec& spec, const ChainRun& clean, FaultKind kind, std::uint64_t seed);

std::string summarize(const CampaignReport& report);
std::string campaign_report_json(const CampaignReport& report);

struct ComplementarityOutcome {
    CheckOutcome checked;     // the faulted module through run_checked
    EnsembleReport ensemble;  // sliding_window, summed_area_table, faulted
    std::string faulted_id;
};

// index_shift(shift) on a focal_mean output whose contracts are value-range
// only, checked semantically and by a three-way ensemble at tol.
ComplementarityOutcome run_shift_scenario(const NdArray& grid, double window, std::size_t shift, double tol);

}  // namespace semdtm
