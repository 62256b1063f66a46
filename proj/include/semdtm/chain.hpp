#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "semdtm/array.hpp"
#include "semdtm/dtm.hpp"
#include "semdtm/error.hpp"

namespace semdtm {

// A slot binding: one reference, or several stacked along a new axis 0.
// References are either a source name or "<stage>.<slot>".
struct Binding {
    std::vector<std::string> refs;
    bool stacked = false;

    static Binding single(std::string ref) { return {{std::move(ref)}, false}; }
    static Binding stack_of(std::vector<std::string> refs) { return {std::move(refs), true}; }
};

struct StageSpec {
    std::string id;
    DtmModule module;
    std::map<std::string, Binding> bindings;  // module input slot -> binding
};

struct SourceSpec {
    std::string name;
    std::filesystem::path path;
    std::optional<NdArray> data;  // in-memory source; takes precedence over path
};

struct SinkRef {
    std::string stage;
    std::string slot;
    std::string key() const { return stage + "." + slot; }
};

struct ChainSpec {
    std::vector<SourceSpec> sources;
    std::vector<StageSpec> stages;
    std::vector<SinkRef> sinks;

    const StageSpec* find_stage(std::string_view id) const;
};

struct Diagnostic {
    std::string stage_id;
    std::string reason;
};

// Static checks only; never throws. Empty result means the chain is runnable.
std::vector<Diagnostic> validate_chain(const ChainSpec& spec);
std::string format_diagnostics(const std::vector<Diagnostic>& diagnostics);

class ChainSpecError : public Error {
public:
    explicit ChainSpecError(std::vector<Diagnostic> diagnostics);
    const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

private:
    std::vector<Diagnostic> diagnostics_;
};

// A transform raised while executing a stage.
class StageError : public Error {
public:
    StageError(std::string stage_id, const std::string& what);
    const std::string& stage_id() const { return stage_id_; }

private:
    std::string stage_id_;
};

// Pipeline spec JSON; relative source paths resolve against base_dir.
ChainSpec parse_chain_spec(std::string_view json_text, const std::filesystem::path& base_dir);
ChainSpec load_chain_spec(const std::filesystem::path& path);

enum class StageStatus { Pass, PreFailed, PostFailed, InvariantFailed, Skipped, Error };
std::string_view stage_status_name(StageStatus status);

struct ProvenanceRecord {
    std::string stage_id;
    std::string module_id;
    std::string impl_ref;
    std::string param_digest;
    std::map<std::string, std::string> input_digests;
    std::map<std::string, std::string> output_digests;
    std::vector<std::string> contract_text;
    std::vector<std::string> perturbations;
    StageStatus status = StageStatus::Skipped;
    std::size_t violation_count = 0;
    std::vector<Violation> violations;
    double wall_time = 0.0;  // seconds
    std::string error;       // status == Error only
};

struct ExecuteOptions {
    // Stage ids in execution order; empty means declaration order. Must be a
    // topological order of the binding graph.
    std::vector<std::string> order;
    // Called with each stage's delivered outputs before any later stage runs.
    std::function<void(const std::string& stage_id, const ArrayMap& outputs)> on_stage_outputs;
    // Record a throwing stage as StageStatus::Error (keeping its
    // pre-condition violations) and skip its dependents instead of throwing.
    bool tolerate_stage_errors = false;
};

struct ChainRun {
    ArrayMap sources;
    ArrayMap intermediates;                  // "<stage>.<slot>" for every delivered output
    ArrayMap sinks;                          // "<stage>.<slot>"
    std::map<std::string, ArrayMap> stage_inputs;  // bound inputs of every executed stage
    std::vector<ProvenanceRecord> provenance;
    std::optional<std::string> halted_at;    // enforce mode only
};

ArrayMap load_sources(const ChainSpec& spec);

// In-memory execution without persistence. Throws ChainSpecError when
// validate_chain reports anything and StageError when a transform throws.
ChainRun execute_chain(const ChainSpec& spec, const ArrayMap& sources, Mode mode, const ExecuteOptions& options = {});

struct ChainResult : ChainRun {
    std::vector<std::filesystem::path> persisted;
    std::filesystem::path provenance_file;
};

/**
 * Runs the chain and persists every delivered stage output to
 * `<out_dir>/<stage>.<slot>.grid` plus `<out_dir>/provenance.json`.
 * In enforce mode the first failing stage halts the chain and the remaining
 * stages are recorded as skipped; observe mode runs to completion.
 */
ChainResult run_chain(const ChainSpec& spec, Mode mode, const std::filesystem::path& out_dir,
                      const ExecuteOptions& options = {});

enum class ReportFormat { Text, Json };
std::string export_report(const std::vector<ProvenanceRecord>& provenance, ReportFormat format);

// SHA-256 of canonical_text, lowercase hex.
std::string sha256_hex(std::string_view bytes);
std::string array_digest(const NdArray& a);
std::string param_digest(const ParamMap& params);

// Grid text for a persisted layer; rank-1 arrays are written as one row.
std::string render_layer(const NdArray& a);

}  // namespace semdtm
