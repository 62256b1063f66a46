#include "semdtm/chain.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <set>

#include "json_util.hpp"

namespace semdtm {

namespace {

bool valid_id(std::string_view id) {
    return !id.empty() && std::all_of(id.begin(), id.end(), [](unsigned char c) {
        return std::isalnum(c) || c == '_' || c == '-';
    });
}

struct Ref {
    std::string stage;  // empty for a source
    std::string name;   // source name or output slot
};

Ref split_ref(const std::string& ref) {
    auto dot = ref.find('.');
    if (dot == std::string::npos) return {"", ref};
    return {ref.substr(0, dot), ref.substr(dot + 1)};
}

std::vector<std::string> dependencies(const StageSpec& stage) {
    std::vector<std::string> deps;
    for (const auto& [slot, binding] : stage.bindings) {
        for (const auto& ref : binding.refs) {
            Ref r = split_ref(ref);
            if (!r.stage.empty() && std::find(deps.begin(), deps.end(), r.stage) == deps.end()) deps.push_back(r.stage);
        }
    }
    return deps;
}

void check_contract_refs(const DtmModule& m, const std::string& stage_id, std::vector<Diagnostic>& out) {
    std::set<std::string> inputs;
    std::set<std::string> all;
    for (const auto& s : m.input_names()) inputs.insert(s), all.insert(s);
    for (const auto& [name, value] : m.params) inputs.insert(name), all.insert(name);
    for (const auto& s : m.output_names()) all.insert(s);
    auto scan = [&](const std::optional<ConstraintExpr>& expr, const std::set<std::string>& allowed,
                    std::string_view where) {
        if (!expr) return;
        for (const auto& slot : referenced_slots(*expr)) {
            if (!allowed.count(slot)) {
                out.push_back({stage_id, std::string(where) + " references unknown slot '" + slot + "'"});
            }
        }
    };
    for (const auto& s : m.input_slots) scan(s.expr, inputs, "pre-condition on '" + s.slot + "'");
    for (const auto& s : m.param_contracts) scan(s.expr, inputs, "pre-condition on '" + s.slot + "'");
    for (const auto& s : m.output_slots) scan(s.expr, all, "post-condition on '" + s.slot + "'");
    scan(m.invariant, all, "invariant");
}

std::vector<const StageSpec*> resolve_order(const ChainSpec& spec, const ExecuteOptions& options) {
    std::vector<const StageSpec*> order;
    if (options.order.empty()) {
        for (const auto& s : spec.stages) order.push_back(&s);
        return order;
    }
    if (options.order.size() != spec.stages.size()) {
        throw BindingError("execution order must list every stage exactly once");
    }
    std::set<std::string> done;
    for (const auto& id : options.order) {
        const StageSpec* s = spec.find_stage(id);
        if (!s || done.count(id)) throw BindingError("execution order must list every stage exactly once");
        for (const auto& dep : dependencies(*s)) {
            if (!done.count(dep)) {
                throw BindingError("execution order runs '" + id + "' before its dependency '" + dep + "'");
            }
        }
        done.insert(id);
        order.push_back(s);
    }
    return order;
}

StageStatus to_stage_status(Status s) {
    switch (s) {
        case Status::Pass: return StageStatus::Pass;
        case Status::PreFailed: return StageStatus::PreFailed;
        case Status::PostFailed: return StageStatus::PostFailed;
        case Status::InvariantFailed: return StageStatus::InvariantFailed;
    }
    return StageStatus::Skipped;
}

ProvenanceRecord base_record(const StageSpec& stage) {
    ProvenanceRecord rec;
    rec.stage_id = stage.id;
    rec.module_id = stage.module.id;
    rec.impl_ref = stage.module.impl_ref;
    rec.param_digest = param_digest(stage.module.params);
    rec.contract_text = contract_texts(stage.module);
    for (const auto& p : stage.module.perturbations) rec.perturbations.push_back(p->describe());
    return rec;
}

}  // namespace

const StageSpec* ChainSpec::find_stage(std::string_view id) const {
    for (const auto& s : stages) {
        if (s.id == id) return &s;
    }
    return nullptr;
}

ChainSpecError::ChainSpecError(std::vector<Diagnostic> diagnostics)
    : Error("invalid chain spec:\n" + format_diagnostics(diagnostics)), diagnostics_(std::move(diagnostics)) {}

StageError::StageError(std::string stage_id, const std::string& what)
    : Error("stage '" + stage_id + "': " + what), stage_id_(std::move(stage_id)) {}

std::string format_diagnostics(const std::vector<Diagnostic>& diagnostics) {
    std::string out;
    for (const auto& d : diagnostics) out += (d.stage_id.empty() ? "<chain>" : d.stage_id) + ": " + d.reason + "\n";
    return out;
}

std::vector<Diagnostic> validate_chain(const ChainSpec& spec) {
    std::vector<Diagnostic> diags;
    std::set<std::string> source_names;
    for (const auto& src : spec.sources) {
        if (!valid_id(src.name)) diags.push_back({"", "invalid source name '" + src.name + "'"});
        if (!source_names.insert(src.name).second) diags.push_back({"", "duplicate source '" + src.name + "'"});
    }

    std::map<std::string, std::size_t> first_index;
    for (std::size_t i = 0; i < spec.stages.size(); ++i) {
        const auto& id = spec.stages[i].id;
        if (!valid_id(id)) diags.push_back({id, "invalid stage id '" + id + "'"});
        if (first_index.count(id)) {
            diags.push_back({id, "duplicate stage id"});
        } else {
            first_index[id] = i;
        }
        if (source_names.count(id)) diags.push_back({id, "stage id collides with a source name"});
    }

    for (std::size_t i = 0; i < spec.stages.size(); ++i) {
        const StageSpec& stage = spec.stages[i];
        bool module_ok = true;
        try {
            validate_module(stage.module);
        } catch (const Error& e) {
            diags.push_back({stage.id, e.what()});
            module_ok = false;
        }
        if (module_ok) check_contract_refs(stage.module, stage.id, diags);

        const auto inputs = stage.module.input_names();
        for (const auto& slot : inputs) {
            if (!stage.bindings.count(slot)) diags.push_back({stage.id, "missing binding for slot '" + slot + "'"});
        }
        for (const auto& [slot, binding] : stage.bindings) {
            if (std::find(inputs.begin(), inputs.end(), slot) == inputs.end()) {
                diags.push_back({stage.id, "binding for unknown slot '" + slot + "'"});
            }
            if (binding.refs.empty()) diags.push_back({stage.id, "empty binding for slot '" + slot + "'"});
            if (binding.refs.size() > 1 && !binding.stacked) {
                diags.push_back({stage.id, "slot '" + slot + "' bound to several arrays without stacking"});
            }
            for (const auto& ref : binding.refs) {
                Ref r = split_ref(ref);
                if (r.stage.empty()) {
                    if (!source_names.count(r.name)) diags.push_back({stage.id, "unknown source '" + ref + "'"});
                    continue;
                }
                auto it = first_index.find(r.stage);
                if (it == first_index.end()) {
                    diags.push_back({stage.id, "unknown reference '" + ref + "'"});
                } else if (it->second == i) {
                    diags.push_back({stage.id, "self reference " + stage.id + "←" + r.stage});
                } else if (it->second > i) {
                    diags.push_back({stage.id, "forward reference " + stage.id + "←" + r.stage});
                } else {
                    auto outs = spec.stages[it->second].module.output_names();
                    if (std::find(outs.begin(), outs.end(), r.name) == outs.end()) {
                        diags.push_back({stage.id, "stage '" + r.stage + "' has no output '" + r.name + "'"});
                    }
                }
            }
        }
    }

    for (const auto& sink : spec.sinks) {
        const StageSpec* s = spec.find_stage(sink.stage);
        if (!s) {
            diags.push_back({sink.stage, "sink '" + sink.key() + "' names an unknown stage"});
            continue;
        }
        auto outs = s->module.output_names();
        if (std::find(outs.begin(), outs.end(), sink.slot) == outs.end()) {
            diags.push_back({sink.stage, "sink '" + sink.key() + "' names an unknown output slot"});
        }
    }
    return diags;
}

std::string_view stage_status_name(StageStatus status) {
    switch (status) {
        case StageStatus::Pass: return "pass";
        case StageStatus::PreFailed: return "pre_failed";
        case StageStatus::PostFailed: return "post_failed";
        case StageStatus::InvariantFailed: return "invariant_failed";
        case StageStatus::Skipped: return "skipped";
        case StageStatus::Error: return "error";
    }
    return "?";
}

ArrayMap load_sources(const ChainSpec& spec) {
    ArrayMap out;
    for (const auto& src : spec.sources) {
        NdArray a = src.data ? *src.data : load_array(src.path);
        out.insert_or_assign(src.name, a.with_name(src.name));
    }
    return out;
}

ChainRun execute_chain(const ChainSpec& spec, const ArrayMap& sources, Mode mode, const ExecuteOptions& options) {
    if (auto diags = validate_chain(spec); !diags.empty()) throw ChainSpecError(std::move(diags));
    const auto order = resolve_order(spec, options);

    ChainRun run;
    run.sources = sources;
    for (const auto& src : spec.sources) {
        if (!sources.count(src.name)) throw BindingError("source '" + src.name + "' was not loaded");
    }

    for (const StageSpec* stage : order) {
        ProvenanceRecord rec = base_record(*stage);
        if (run.halted_at) {
            run.provenance.push_back(std::move(rec));
            continue;
        }

        ArrayMap inputs;
        bool inputs_ready = true;
        for (const auto& [slot, binding] : stage->bindings) {
            std::vector<NdArray> arrays;
            for (const auto& ref : binding.refs) {
                const ArrayMap& pool = split_ref(ref).stage.empty() ? run.sources : run.intermediates;
                auto it = pool.find(ref);
                if (it == pool.end()) {
                    if (!options.tolerate_stage_errors) {
                        throw StageError(stage->id, "input '" + ref + "' is not available");
                    }
                    inputs_ready = false;
                    break;
                }
                arrays.push_back(it->second);
            }
            if (!inputs_ready) break;
            try {
                inputs.insert_or_assign(slot, binding.stacked ? stack(arrays) : arrays.front());
            } catch (const Error& e) {
                if (!options.tolerate_stage_errors) throw StageError(stage->id, "slot '" + slot + "': " + e.what());
                rec.status = StageStatus::Error;
                rec.error = "slot '" + slot + "': " + e.what();
                inputs_ready = false;
                break;
            }
        }
        if (!inputs_ready) {
            run.provenance.push_back(std::move(rec));
            continue;
        }
        for (const auto& [slot, a] : inputs) rec.input_digests[slot] = array_digest(a);

        auto start = std::chrono::steady_clock::now();
        std::optional<CheckOutcome> outcome;
        try {
            outcome = run_checked(stage->module, inputs, mode);
        } catch (const Error& e) {
            if (!options.tolerate_stage_errors) throw StageError(stage->id, e.what());
            rec.status = StageStatus::Error;
            rec.error = e.what();
            // Keep whatever the pre-conditions had to say; enforce mode stops before the transform.
            try {
                CheckOutcome pre = run_checked(stage->module, inputs, Mode::Enforce);
                if (pre.status == Status::PreFailed) rec.violations = std::move(pre.violations);
            } catch (const Error&) {
            }
            rec.violation_count = rec.violations.size();
        }
        rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        run.stage_inputs.emplace(stage->id, std::move(inputs));
        if (!outcome) {
            if (mode == Mode::Enforce) run.halted_at = stage->id;
            run.provenance.push_back(std::move(rec));
            continue;
        }
        rec.status = to_stage_status(outcome->status);
        rec.violation_count = outcome->violations.size();
        rec.violations = std::move(outcome->violations);

        if (outcome->outputs) {
            for (const auto& [slot, a] : *outcome->outputs) {
                rec.output_digests[slot] = array_digest(a);
                run.intermediates.insert_or_assign(stage->id + "." + slot, a.with_name(stage->id + "." + slot));
            }
            if (options.on_stage_outputs) options.on_stage_outputs(stage->id, *outcome->outputs);
        }
        if (mode == Mode::Enforce && outcome->status != Status::Pass) run.halted_at = stage->id;
        run.provenance.push_back(std::move(rec));
    }

    for (const auto& sink : spec.sinks) {
        auto it = run.intermediates.find(sink.key());
        if (it != run.intermediates.end()) run.sinks.insert_or_assign(sink.key(), it->second);
    }
    return run;
}

std::string render_layer(const NdArray& a) {
    if (a.rank() == 1) return render_grid(a.reshaped({1, a.size()}));
    return render_grid(a);
}

ChainResult run_chain(const ChainSpec& spec, Mode mode, const std::filesystem::path& out_dir,
                      const ExecuteOptions& options) {
    if (auto diags = validate_chain(spec); !diags.empty()) throw ChainSpecError(std::move(diags));
    ArrayMap sources = load_sources(spec);

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + out_dir.string() + "': " + ec.message());

    ChainResult result;
    ExecuteOptions opts = options;
    opts.on_stage_outputs = [&](const std::string& stage_id, const ArrayMap& outputs) {
        for (const auto& [slot, a] : outputs) {
            auto path = out_dir / (stage_id + "." + slot + ".grid");
            write_text_atomic(path, render_layer(a));
            result.persisted.push_back(path);
        }
        if (options.on_stage_outputs) options.on_stage_outputs(stage_id, outputs);
    };
    static_cast<ChainRun&>(result) = execute_chain(spec, sources, mode, opts);
    result.provenance_file = out_dir / "provenance.json";
    write_text_atomic(result.provenance_file, export_report(result.provenance, ReportFormat::Json));
    return result;
}

std::string export_report(const std::vector<ProvenanceRecord>& provenance, ReportFormat format) {
    if (format == ReportFormat::Text) {
        std::string out;
        for (const auto& r : provenance) {
            char wall[32];
            std::snprintf(wall, sizeof wall, "%.6f", r.wall_time);
            out += r.stage_id + " " + r.module_id + " " + r.impl_ref + " " + std::string(stage_status_name(r.status)) +
                   " violations=" + std::to_string(r.violation_count) + " wall_time=" + wall + "s\n";
        }
        return out;
    }
    using detail::ordered_json;
    ordered_json doc;
    doc["schema"] = "semdtm.provenance/1";
    doc["stages"] = ordered_json::array();
    for (const auto& r : provenance) {
        ordered_json j;
        j["stage_id"] = r.stage_id;
        j["module_id"] = r.module_id;
        j["impl_ref"] = r.impl_ref;
        j["param_digest"] = r.param_digest;
        j["input_digests"] = r.input_digests;
        j["output_digests"] = r.output_digests;
        j["contract_text"] = r.contract_text;
        j["perturbations"] = r.perturbations;
        j["status"] = std::string(stage_status_name(r.status));
        j["violation_count"] = r.violation_count;
        j["violations"] = ordered_json::array();
        for (const auto& v : r.violations) j["violations"].push_back(detail::violation_json(v));
        if (r.status == StageStatus::Error) j["error"] = r.error;
        j["wall_time"] = r.wall_time;
        doc["stages"].push_back(std::move(j));
    }
    return doc.dump(2) + "\n";
}

}  // namespace semdtm
