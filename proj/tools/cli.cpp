#include "cli.hpp"

#include <filesystem>
#include <cstdio>
#include <map>
#include <ostream>

#include "CLI11.hpp"
#include "semdtm/chain.hpp"
#include "semdtm/constraints.hpp"
#include "semdtm/ensemble.hpp"
#include "semdtm/fault.hpp"

namespace semdtm::cli {

namespace {

namespace fs = std::filesystem;

struct Globals {
    std::string mode = "enforce";
    std::string out = "./out";
    std::uint64_t seed = 0;
    double tol = 1e-9;
};

std::string settings_line(const Globals& g) {
    return "settings: mode=" + g.mode + " out=" + g.out + " seed=" + std::to_string(g.seed) +
           " tol=" + format_number(g.tol) + "\n";
}

// "name=path" or "name=v1,v2,..." pairs.
std::pair<std::string, std::string> split_pair(const std::string& text, const char* what) {
    auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0) throw ParseError(std::string(what) + " must look like name=value, got '" + text + "'");
    return {text.substr(0, eq), text.substr(eq + 1)};
}

NdArray parse_values(const std::string& text, const std::string& name) {
    std::vector<double> values;
    std::size_t start = 0;
    while (true) {
        auto comma = text.find(',', start);
        std::string token = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        auto v = parse_number(token);
        if (!v) throw ParseError("parameter '" + name + "': malformed number '" + token + "'");
        values.push_back(*v);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return NdArray::vector(std::move(values));
}

int cmd_check(const std::string& grid_path, const std::string& expr_text, const std::string& slot,
              const std::vector<std::string>& with, std::ostream& out) {
    ConstraintExpr expr = parse_constraints(expr_text);
    NdArray subject = load_array(grid_path);
    ArrayMap context;
    for (const auto& w : with) {
        auto [name, path] = split_pair(w, "--with");
        context.insert_or_assign(name, load_array(path));
    }
    context.insert_or_assign(slot, subject);
    auto violations = check(expr, subject, slot, context, Phase::Pre);
    for (const auto& v : violations) out << v.predicate << " " << v.location_text() << " " << v.observed_text() << "\n";
    return violations.empty() ? kOk : kViolation;
}

int cmd_run(const std::string& spec_path, const Globals& g, std::ostream& out, std::ostream& err) {
    ChainSpec spec = load_chain_spec(spec_path);
    if (auto diags = validate_chain(spec); !diags.empty()) {
        err << format_diagnostics(diags);
        return kSpecError;
    }
    ChainResult result = run_chain(spec, *parse_mode(g.mode), g.out);
    out << settings_line(g);
    out << export_report(result.provenance, ReportFormat::Text);
    out << "persisted " << result.persisted.size() << " layers to " << g.out << "\n";
    if (result.halted_at) {
        out << "halted at stage " << *result.halted_at << "\n";
        return kViolation;
    }
    return kOk;
}

std::vector<FaultKind> parse_kinds(const std::string& text) {
    std::vector<FaultKind> kinds;
    if (text.empty() || text == "all") return all_fault_kinds();
    std::size_t start = 0;
    while (true) {
        auto comma = text.find(',', start);
        kinds.push_back(parse_fault_kind(text.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return kinds;
}

int cmd_campaign(const std::string& spec_path, const std::string& kinds, std::size_t trials, bool no_ensemble,
                 const Globals& g, std::ostream& out, std::ostream& err) {
    CampaignConfig config;
    config.kinds = parse_kinds(kinds);
    config.trials_per_kind = trials;
    config.master_seed = g.seed;
    config.use_ensemble = !no_ensemble;
    config.ensemble_tol = g.tol;
    ChainSpec spec = load_chain_spec(spec_path);
    if (auto diags = validate_chain(spec); !diags.empty()) {
        err << format_diagnostics(diags);
        return kSpecError;
    }
    CampaignReport report = run_campaign(spec, load_sources(spec), config);
    fs::create_directories(g.out);
    write_text_atomic(fs::path(g.out) / "campaign.json", campaign_report_json(report));
    out << settings_line(g);
    out << summarize(report);
    return kOk;
}

FaultSpec parse_inject(const std::string& text, const DtmModule& m, std::uint64_t seed) {
    FaultSpec fault;
    auto colon = text.find(':');
    fault.kind = parse_fault_kind(text.substr(0, colon));
    if (fault.kind == FaultKind::None) throw ParseError("--inject needs a fault kind other than 'none'");
    if (colon != std::string::npos) {
        auto v = parse_number(text.substr(colon + 1));
        if (!v) throw ParseError("--inject: malformed magnitude '" + text.substr(colon + 1) + "'");
        fault.magnitude = *v;
    } else if (fault.kind == FaultKind::IndexShift) {
        fault.magnitude = 1;
    } else if (fault.kind == FaultKind::UnitScale) {
        fault.magnitude = 100;
    } else if (fault.kind == FaultKind::ParamPerturb) {
        fault.magnitude = 0.1;
    }
    fault.target.name = fault.kind == FaultKind::ParamPerturb ? m.params.begin()->first : m.output_names().front();
    fault.seed = seed;
    return fault;
}

ParamMap default_params(const std::string& set_id, std::size_t n_inputs) {
    if (set_id == "focal_mean") return {{"window", NdArray::scalar(3)}};
    return {{"weights", NdArray::vector(std::vector<double>(n_inputs, 1.0 / static_cast<double>(n_inputs)))}};
}

int cmd_ensemble(const std::string& set_id, const std::vector<std::string>& input_paths,
                 const std::vector<std::string>& param_args, const std::string& inject_text, const Globals& g,
                 std::ostream& out, std::ostream& err) {
    const auto ids = shipped_variant_set_ids();
    if (std::find(ids.begin(), ids.end(), set_id) == ids.end()) {
        err << "error: unknown variant set '" << set_id << "' (known:";
        for (const auto& id : ids) err << " " << id;
        err << ")\n";
        return kSpecError;
    }
    std::vector<NdArray> arrays;
    for (const auto& p : input_paths) arrays.push_back(load_array(p));

    ParamMap params = default_params(set_id, arrays.size());
    for (const auto& p : param_args) {
        auto [name, value] = split_pair(p, "--param");
        params.insert_or_assign(name, parse_values(value, name));
    }
    VariantSet set = *shipped_variant_set(set_id, params);
    const auto slots = set.variants.front().input_names();
    ArrayMap inputs;
    if (set_id == "focal_mean" && arrays.size() != 1) throw BindingError("focal_mean takes exactly one input grid");
    inputs.emplace(slots.front(), set_id == "focal_mean" ? arrays.front() : stack(arrays));

    if (!inject_text.empty()) {
        DtmModule& victim = set.variants.back();
        victim = inject(victim, parse_inject(inject_text, victim, g.seed));
        victim.id += "+" + inject_text.substr(0, inject_text.find(':'));
    }
    EnsembleReport report = run_ensemble(set, inputs, g.tol);
    fs::create_directories(g.out);
    write_text_atomic(fs::path(g.out) / "ensemble.json", ensemble_report_json(report));
    if (report.consensus) {
        for (const auto& [slot, a] : *report.consensus) {
            write_text_atomic(fs::path(g.out) / ("consensus." + slot + ".grid"), render_layer(a));
        }
    }
    out << settings_line(g);
    out << ensemble_report_text(report);
    return report.consensus ? kOk : kDisagreement;
}

void cmd_predicates(std::ostream& out) {
    for (const auto& p : list_predicates()) {
        std::string signature = p.name + "(";
        for (std::size_t i = 0; i < p.params.size(); ++i) signature += (i ? ", " : "") + p.params[i].name;
        signature += p.variadic ? ", ...)" : ")";
        char line[160];
        std::snprintf(line, sizeof line, "%-36s arity=%-3s %s\n", signature.c_str(), p.arity_text().c_str(),
                      p.description.c_str());
        out << line;
    }
}

void cmd_transforms(std::ostream& out) {
    for (const auto& t : list_transforms()) {
        out << t->name << "  family=" << t->family << " inputs=";
        for (std::size_t i = 0; i < t->inputs.size(); ++i) out << (i ? "," : "") << t->inputs[i];
        out << " outputs=";
        for (std::size_t i = 0; i < t->outputs.size(); ++i) out << (i ? "," : "") << t->outputs[i];
        out << " params=";
        for (std::size_t i = 0; i < t->params.size(); ++i) out << (i ? "," : "") << t->params[i];
        out << "\n";
    }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Semantic-contract checks for chained array transformations", "semdtm"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--mode", g.mode, "Contract mode for run")
        ->check(CLI::IsMember({"enforce", "observe"}))
        ->capture_default_str();
    app.add_option("--out", g.out, "Output directory")->capture_default_str();
    app.add_option("--seed", g.seed, "Master seed for campaigns and injected faults")->capture_default_str();
    app.add_option("--tol", g.tol, "Ensemble agreement tolerance")->check(CLI::NonNegativeNumber)->capture_default_str();

    std::string grid_path, expr_text, slot = "x";
    std::vector<std::string> with;
    auto* check_cmd = app.add_subcommand("check", "Check one array file against a constraint expression");
    check_cmd->add_option("grid", grid_path, "Grid or CSV file")->required();
    check_cmd->add_option("expr", expr_text, "Constraint expression")->required();
    check_cmd->add_option("--slot", slot, "Slot name of the checked array")->capture_default_str();
    check_cmd->add_option("--with", with, "Extra context array, name=path");

    std::string spec_path;
    auto* run_cmd = app.add_subcommand("run", "Run a pipeline spec, persisting every layer and provenance.json");
    run_cmd->add_option("spec", spec_path, "Pipeline spec JSON")->required();

    std::string kinds;
    std::size_t trials = 100;
    bool no_ensemble = false;
    auto* campaign_cmd = app.add_subcommand("campaign", "Run a seeded fault-injection campaign over a pipeline spec");
    campaign_cmd->add_option("spec", spec_path, "Pipeline spec JSON")->required();
    campaign_cmd->add_option("--kinds", kinds, "Comma-separated fault kinds, or all")->default_str("all");
    campaign_cmd->add_option("--trials", trials, "Trials per kind")->capture_default_str();
    campaign_cmd->add_flag("--no-ensemble", no_ensemble, "Skip the ensemble cross-check");

    std::string set_id, inject_text;
    std::vector<std::string> input_paths, param_args;
    auto* ensemble_cmd = app.add_subcommand("ensemble", "Run a shipped variant set and report agreement");
    ensemble_cmd->add_option("set", set_id, "Variant set id")->required();
    ensemble_cmd->add_option("inputs", input_paths, "Input grids (several are stacked)")->required();
    ensemble_cmd->add_option("--param", param_args, "Parameter, name=v1,v2,...");
    ensemble_cmd->add_option("--inject", inject_text, "Fault the last variant, kind[:magnitude]");

    auto* predicates_cmd = app.add_subcommand("predicates", "List constraint predicates");
    auto* transforms_cmd = app.add_subcommand("transforms", "List builtin transforms");

    std::vector<std::string> argv_store{"semdtm"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_store) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? kOk : kSpecError;
    }

    try {
        if (check_cmd->parsed()) return cmd_check(grid_path, expr_text, slot, with, out);
        if (run_cmd->parsed()) return cmd_run(spec_path, g, out, err);
        if (campaign_cmd->parsed()) return cmd_campaign(spec_path, kinds, trials, no_ensemble, g, out, err);
        if (ensemble_cmd->parsed()) return cmd_ensemble(set_id, input_paths, param_args, inject_text, g, out, err);
        if (predicates_cmd->parsed()) cmd_predicates(out);
        if (transforms_cmd->parsed()) cmd_transforms(out);
        return kOk;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kIoError;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kIoError;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kSpecError;
    }
}

}  // namespace semdtm::cli
