#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <set>
#include <tuple>

#include "json_util.hpp"
#include "semdtm/error.hpp"
#include "semdtm/fault.hpp"
#include "semdtm/rng.hpp"

namespace semdtm {

namespace {

constexpr double kUnitScales[] = {0.001, 0.01, 0.1, 10.0, 100.0, 1000.0};

using ViolationKey = std::tuple<std::string, Phase, std::string, std::string, std::string>;

ViolationKey key_of(const std::string& stage, const Violation& v) {
    return {stage, v.phase, v.slot, v.predicate, v.location_text()};
}

std::set<ViolationKey> violation_keys(const ChainRun& run) {
    std::set<ViolationKey> keys;
    for (const auto& rec : run.provenance) {
        for (const auto& v : rec.violations) keys.insert(key_of(rec.stage_id, v));
    }
    return keys;
}

// Stage ids at or downstream of `root` through the binding graph.
std::set<std::string> downstream_of(const ChainSpec& spec, const std::string& root) {
    std::set<std::string> reach{root};
    for (const auto& stage : spec.stages) {
        for (const auto& [slot, binding] : stage.bindings) {
            for (const auto& ref : binding.refs) {
                auto dot = ref.find('.');
                if (dot != std::string::npos && reach.count(ref.substr(0, dot))) reach.insert(stage.id);
            }
        }
    }
    return reach;
}

bool same_cell(const NdArray& a, const NdArray& b, std::size_t i) {
    if (a.masked(i) != b.masked(i)) return false;
    if (std::isnan(a[i]) && std::isnan(b[i])) return true;
    return std::bit_cast<std::uint64_t>(a[i]) == std::bit_cast<std::uint64_t>(b[i]);
}

std::size_t differing_cells(const ArrayMap& clean, const ArrayMap& faulted) {
    std::size_t count = 0;
    for (const auto& [key, a] : clean) {
        auto it = faulted.find(key);
        if (it == faulted.end() || it->second.shape() != a.shape()) {
            count += a.size();
            continue;
        }
        for (std::size_t i = 0; i < a.size(); ++i) count += !same_cell(a, it->second, i);
    }
    for (const auto& [key, b] : faulted) {
        auto it = clean.find(key);
        if (it == clean.end() || it->second.shape() != b.shape()) count += b.size();
    }
    return count;
}

ExecuteOptions tolerant() {
    ExecuteOptions opts;
    opts.tolerate_stage_errors = true;
    return opts;
}

std::size_t total_violations(const ChainRun& run) {
    std::size_t n = 0;
    for (const auto& rec : run.provenance) n += rec.violations.size();
    return n;
}

// First attributable event in execution order; counts every attributable violation.
void attribute(const ChainSpec& spec, const ChainRun& clean, const ChainRun& run, const std::string& faulted_stage,
               TrialRecord& trial) {
    const auto reach = downstream_of(spec, faulted_stage);
    const auto clean_keys = violation_keys(clean);
    std::map<std::string, StageStatus> clean_status;
    for (const auto& rec : clean.provenance) clean_status[rec.stage_id] = rec.status;

    for (const auto& rec : run.provenance) {
        if (!reach.count(rec.stage_id)) continue;
        bool fresh[3] = {false, false, false};
        for (const auto& v : rec.violations) {
            if (clean_keys.count(key_of(rec.stage_id, v))) continue;
            fresh[static_cast<int>(v.phase)] = true;
            ++trial.violations;
        }
        const bool new_error = rec.status == StageStatus::Error && clean_status[rec.stage_id] != StageStatus::Error;
        if (trial.detection != Detection::None) continue;
        if (fresh[static_cast<int>(Phase::Pre)]) {
            trial.detection = Detection::Pre;
        } else if (new_error) {
            trial.detection = Detection::Error;
        } else if (fresh[static_cast<int>(Phase::Post)]) {
            trial.detection = Detection::Post;
        } else if (fresh[static_cast<int>(Phase::Invariant)]) {
            trial.detection = Detection::Invariant;
        }
        if (trial.detection != Detection::None) trial.detecting_stage = rec.stage_id;
    }
}

bool ensemble_flags(const ChainSpec& spec, const ChainRun& run, const DtmModule& faulted, const std::string& stage_id,
                    double tol) {
    const StageSpec* clean_stage = spec.find_stage(stage_id);
    const TransformInfo* t = find_transform(clean_stage->module.impl_ref);
    auto inputs = run.stage_inputs.find(stage_id);
    if (!t || inputs == run.stage_inputs.end()) return false;
    auto set = shipped_variant_set(t->family, clean_stage->module.params);
    if (!set) return false;
    DtmModule suspect = faulted;
    suspect.id = stage_id + "+fault";
    set->variants.push_back(suspect);
    try {
        EnsembleReport report = run_ensemble(*set, inputs->second, tol);
        return std::any_of(report.dissenters.begin(), report.dissenters.end(),
                           [&](const Dissent& d) { return d.variant_id == suspect.id; });
    } catch (const Error&) {
        return false;
    }
}

void count(KindCounts& counts, Detection d) {
    ++counts.trials;
    switch (d) {
        case Detection::Pre: ++counts.detected_pre; break;
        case Detection::Post: ++counts.detected_post; break;
        case Detection::Invariant: ++counts.detected_invariant; break;
        case Detection::Ensemble: ++counts.detected_ensemble; break;
        case Detection::Error: ++counts.detected_error; break;
        case Detection::None: ++counts.undetected; break;
    }
}

}  // namespace

FaultSpec draw_fault(const ChainSpec& spec, const ChainRun& clean, FaultKind kind, std::uint64_t seed) {
    Rng rng(seed);
    FaultSpec fault;
    fault.kind = kind;
    fault.seed = seed;
    if (kind == FaultKind::None) return fault;

    if (kind == FaultKind::ParamPerturb) {
        std::vector<const StageSpec*> candidates;
        for (const auto& s : spec.stages) {
            if (!s.module.params.empty()) candidates.push_back(&s);
        }
        if (candidates.empty()) throw PreconditionError("param_perturb needs a stage with parameters");
        const StageSpec* stage = candidates[rng.below(candidates.size())];
        auto param = std::next(stage->module.params.begin(), rng.below(stage->module.params.size()));
        fault.target = {stage->id, param->first, rng.below(param->second.size())};
        fault.magnitude = rng.uniform(0.05, 0.5);
        return fault;
    }

    const StageSpec& stage = spec.stages[rng.below(spec.stages.size())];
    const auto slots = stage.module.output_names();
    const std::string& slot = slots[rng.below(slots.size())];
    fault.target = {stage.id, slot, std::nullopt};
    auto produced = clean.intermediates.find(stage.id + "." + slot);
    const std::size_t n = produced == clean.intermediates.end() ? 0 : produced->second.size();

    switch (kind) {
        case FaultKind::SignFlip:
        case FaultKind::NanInject:
        case FaultKind::StuckValue:
            if (n > 0) fault.target.cell = rng.below(n);
            break;
        case FaultKind::IndexShift:
            fault.magnitude = n > 1 ? static_cast<double>(rng.between(1, static_cast<std::int64_t>(n) - 1)) : 1.0;
            break;
        case FaultKind::UnitScale:
            fault.magnitude = kUnitScales[rng.below(std::size(kUnitScales))];
            break;
        default:
            break;
    }
    return fault;
}

CampaignReport run_campaign(const ChainSpec& spec, const ArrayMap& sources, const CampaignConfig& config) {
    if (config.trials_per_kind == 0) throw PreconditionError("trials_per_kind must be >= 1");
    if (!(config.ensemble_tol >= 0.0)) throw PreconditionError("ensemble tolerance must be >= 0");

    const ChainRun clean = execute_chain(spec, sources, Mode::Observe, tolerant());
    CampaignReport report;
    report.config = config;
    report.baseline_violations = total_violations(clean);

    for (FaultKind kind : config.kinds) {
        KindCounts counts;
        counts.kind = kind;
        const std::string kind_name(fault_kind_name(kind));
        for (std::size_t i = 0; i < config.trials_per_kind; ++i) {
            TrialRecord trial;
            trial.kind = kind;
            trial.index = i;
            trial.seed = derive_seed(config.master_seed, kind_name, i);
            FaultSpec fault = draw_fault(spec, clean, kind, trial.seed);
            trial.target = fault.target;
            trial.magnitude = fault.magnitude;

            if (kind == FaultKind::None) {
                ChainRun run = execute_chain(spec, sources, Mode::Observe, tolerant());
                trial.violations = total_violations(run);
                trial.affected_cells = differing_cells(clean.intermediates, run.intermediates);
            } else {
                ChainSpec faulted = inject(spec, fault);
                ChainRun run = execute_chain(faulted, sources, Mode::Observe, tolerant());
                attribute(spec, clean, run, fault.target.stage, trial);
                trial.affected_cells = differing_cells(clean.intermediates, run.intermediates);
                if (trial.detection == Detection::None && config.use_ensemble &&
                    ensemble_flags(spec, run, faulted.find_stage(fault.target.stage)->module, fault.target.stage,
                                   config.ensemble_tol)) {
                    trial.detection = Detection::Ensemble;
                    trial.detecting_stage = fault.target.stage;
                }
            }
            count(counts, trial.detection);
            report.records.push_back(std::move(trial));
        }
        report.trials += counts.trials;
        report.per_kind.push_back(counts);
    }
    return report;
}

std::string summarize(const CampaignReport& report) {
    char line[256];
    std::snprintf(line, sizeof line, "%-14s %7s %7s %7s %9s %8s %7s %10s %14s %11s\n", "kind", "trials", "pre", "post",
                  "invariant", "ensemble", "error", "undetected", "detection_rate", "silent_rate");
    std::string out = line;
    for (const auto& k : report.per_kind) {
        std::snprintf(line, sizeof line, "%-14s %7zu %7zu %7zu %9zu %8zu %7zu %10zu %14.4f %11.4f\n",
                      std::string(fault_kind_name(k.kind)).c_str(), k.trials, k.detected_pre, k.detected_post,
                      k.detected_invariant, k.detected_ensemble, k.detected_error, k.undetected, k.detection_rate(),
                      k.silent_rate());
        out += line;
    }
    return out;
}

std::string campaign_report_json(const CampaignReport& report) {
    using detail::ordered_json;
    ordered_json doc;
    doc["schema"] = "semdtm.campaign/1";
    ordered_json cfg;
    cfg["kinds"] = ordered_json::array();
    for (FaultKind k : report.config.kinds) cfg["kinds"].push_back(std::string(fault_kind_name(k)));
    cfg["trials_per_kind"] = report.config.trials_per_kind;
    cfg["master_seed"] = report.config.master_seed;
    cfg["use_ensemble"] = report.config.use_ensemble;
    cfg["ensemble_tol"] = report.config.ensemble_tol;
    doc["config"] = std::move(cfg);
    doc["trials"] = report.trials;
    doc["baseline_violations"] = report.baseline_violations;

    doc["per_kind"] = ordered_json::array();
    for (const auto& k : report.per_kind) {
        ordered_json j;
        j["kind"] = std::string(fault_kind_name(k.kind));
        j["trials"] = k.trials;
        j["detected_pre"] = k.detected_pre;
        j["detected_post"] = k.detected_post;
        j["detected_invariant"] = k.detected_invariant;
        j["detected_ensemble"] = k.detected_ensemble;
        j["detected_error"] = k.detected_error;
        j["undetected"] = k.undetected;
        j["detection_rate"] = k.detection_rate();
        j["silent_rate"] = k.silent_rate();
        doc["per_kind"].push_back(std::move(j));
    }

    doc["records"] = ordered_json::array();
    for (const auto& t : report.records) {
        ordered_json j;
        j["kind"] = std::string(fault_kind_name(t.kind));
        j["index"] = t.index;
        j["seed"] = t.seed;
        if (t.kind == FaultKind::None) {
            j["target"] = nullptr;
        } else {
            ordered_json target;
            target["stage"] = t.target.stage;
            target["name"] = t.target.name;
            target["cell"] = t.target.cell ? ordered_json(*t.target.cell) : ordered_json(nullptr);
            j["target"] = std::move(target);
        }
        j["magnitude"] = t.magnitude;
        j["detection"] = std::string(detection_name(t.detection));
        j["detecting_stage"] = t.detecting_stage.empty() ? ordered_json(nullptr) : ordered_json(t.detecting_stage);
        j["violations"] = t.violations;
        j["affected_cells"] = t.affected_cells;
        doc["records"].push_back(std::move(j));
    }
    return doc.dump(2) + "\n";
}

}  // namespace semdtm
