#include <filesystem>

#include "doctest.h"
#include "json.hpp"
#include "semdtm/chain.hpp"
#include "semdtm/error.hpp"

using namespace semdtm;
namespace fs = std::filesystem;

namespace {

ChainSpec two_stage(const NdArray& source) {
    ChainSpec spec;
    spec.sources.push_back({"src", "", source});
    spec.stages.push_back({"norm", canonical_module("rescale_minmax", {}), {{"in", Binding::single("src")}}});
    spec.stages.push_back({"thr", canonical_module("threshold_mask", {{"t", NdArray::scalar(0.5)}}),
                           {{"in", Binding::single("norm.out")}}});
    spec.sinks.push_back({"thr", "out"});
    return spec;
}

bool has_reason(const std::vector<Diagnostic>& diags, const std::string& stage, const std::string& text) {
    return std::any_of(diags.begin(), diags.end(), [&](const Diagnostic& d) {
        return d.stage_id == stage && d.reason.find(text) != std::string::npos;
    });
}

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("semdtm_chain_" + name);
    fs::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("validate_chain") {
    auto spec = two_stage(NdArray::vector({1, 2}));
    CHECK(validate_chain(spec).empty());

    auto forward = spec;
    forward.stages[0].bindings["in"] = Binding::single("thr.out");
    CHECK(has_reason(validate_chain(forward), "norm", "forward reference norm←thr"));

    auto self = spec;
    self.stages[1].bindings["in"] = Binding::single("thr.out");
    CHECK(has_reason(validate_chain(self), "thr", "self reference"));

    auto dup = spec;
    dup.stages[1].id = "norm";
    dup.stages[1].bindings["in"] = Binding::single("src");
    CHECK(has_reason(validate_chain(dup), "norm", "duplicate stage id"));

    auto missing = spec;
    missing.stages[1].bindings.clear();
    CHECK(has_reason(validate_chain(missing), "thr", "missing binding for slot 'in'"));

    auto bad_slot = spec;
    bad_slot.stages[1].bindings["in"] = Binding::single("norm.result");
    CHECK(has_reason(validate_chain(bad_slot), "thr", "has no output 'result'"));

    auto unstacked = spec;
    unstacked.stages[1].bindings["in"] = Binding{{"src", "norm.out"}, false};
    CHECK(has_reason(validate_chain(unstacked), "thr", "without stacking"));

    auto sink = spec;
    sink.sinks.push_back({"nope", "out"});
    CHECK(has_reason(validate_chain(sink), "nope", "unknown stage"));

    auto bad_contract = spec;
    bad_contract.stages[1].module.input_slots[0].expr = parse_constraints("max_le_slot(out)");
    CHECK(has_reason(validate_chain(bad_contract), "thr", "unknown slot 'out'"));

    CHECK_THROWS_AS(execute_chain(forward, load_sources(forward), Mode::Enforce), ChainSpecError);
}

TEST_CASE("two-stage chain matches hand composition") {
    auto spec = two_stage(NdArray::vector({2, 4, 6, 8}));
    auto run = execute_chain(spec, load_sources(spec), Mode::Enforce);
    auto mid = run.intermediates.at("norm.out");
    CHECK(mid[0] == 0.0);
    CHECK(mid[1] == doctest::Approx(1.0 / 3));
    CHECK(mid[2] == doctest::Approx(2.0 / 3));
    CHECK(mid[3] == 1.0);
    CHECK(run.sinks.at("thr.out") == NdArray::vector({0, 0, 1, 1}));

    auto first = run_checked(spec.stages[0].module, {{"in", NdArray::vector({2, 4, 6, 8})}}, Mode::Enforce);
    auto second = run_checked(spec.stages[1].module, {{"in", first.outputs->at("out")}}, Mode::Enforce);
    CHECK(run.sinks.at("thr.out") == second.outputs->at("out"));
    REQUIRE(run.provenance.size() == 2);
    CHECK(run.provenance[0].status == StageStatus::Pass);
    CHECK(run.provenance[1].input_digests.at("in") == array_digest(mid));
    CHECK(run.provenance[1].output_digests.at("out") == array_digest(second.outputs->at("out")));
}

TEST_CASE("enforce halts and skips downstream stages") {
    auto spec = two_stage(NdArray::vector({1, NAN}));
    auto run = execute_chain(spec, load_sources(spec), Mode::Enforce);
    CHECK(run.halted_at == "norm");
    CHECK(run.provenance[0].status == StageStatus::PreFailed);
    CHECK(run.provenance[1].status == StageStatus::Skipped);
    CHECK(run.sinks.empty());

    auto observed = execute_chain(spec, load_sources(spec), Mode::Observe);
    CHECK_FALSE(observed.halted_at);
    CHECK(observed.sinks.count("thr.out"));
}

TEST_CASE("stacked bindings and explicit order") {
    ChainSpec spec;
    spec.sources.push_back({"a", "", NdArray::vector({1, 2})});
    spec.sources.push_back({"b", "", NdArray::vector({3, 4})});
    spec.stages.push_back({"mix", canonical_module("weighted_sum", {{"weights", NdArray::vector({0.5, 0.5})}}),
                           {{"layers", Binding::stack_of({"a", "b"})}}});
    spec.stages.push_back({"left", canonical_module("rescale_minmax", {}), {{"in", Binding::single("a")}}});
    auto run = execute_chain(spec, load_sources(spec), Mode::Enforce);
    CHECK(run.intermediates.at("mix.out") == NdArray::vector({2, 3}));

    ExecuteOptions opts;
    opts.order = {"left", "mix"};
    CHECK(execute_chain(spec, load_sources(spec), Mode::Enforce, opts).provenance[0].stage_id == "left");

    spec.sources[1].data = NdArray::vector({3, 4, 5});
    CHECK_THROWS_WITH_AS(execute_chain(spec, load_sources(spec), Mode::Enforce),
                         doctest::Contains("shape mismatch among layers"), StageError);
    ExecuteOptions tolerant;
    tolerant.tolerate_stage_errors = true;
    auto partial = execute_chain(spec, load_sources(spec), Mode::Observe, tolerant);
    CHECK(partial.provenance[0].status == StageStatus::Error);
    CHECK(partial.provenance[1].status == StageStatus::Pass);
}

TEST_CASE("order overrides must be topological") {
    auto spec = two_stage(NdArray::vector({1, 2}));
    ExecuteOptions opts;
    opts.order = {"thr", "norm"};
    CHECK_THROWS_AS(execute_chain(spec, load_sources(spec), Mode::Enforce, opts), BindingError);
    opts.order = {"norm"};
    CHECK_THROWS_AS(execute_chain(spec, load_sources(spec), Mode::Enforce, opts), BindingError);
}

TEST_CASE("reports") {
    CHECK(export_report({}, ReportFormat::Text).empty());
    auto empty = nlohmann::json::parse(export_report({}, ReportFormat::Json));
    CHECK(empty["stages"].empty());

    auto spec = two_stage(NdArray::vector({2, 4, 6, 8}));
    auto run = execute_chain(spec, load_sources(spec), Mode::Enforce);
    auto text = export_report(run.provenance, ReportFormat::Text);
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);
    CHECK(text.find("norm rescale_minmax rescale_minmax pass violations=0") == 0);

    ChainSpec bad;
    bad.sources.push_back({"src", "", NdArray::vector({-1, 2, -3, -4})});
    auto m = canonical_module("threshold_mask", {{"t", NdArray::scalar(0)}});
    m.input_slots[0].expr = parse_constraints("nonnegative");
    bad.stages.push_back({"s", m, {{"in", Binding::single("src")}}});
    auto failed = execute_chain(bad, load_sources(bad), Mode::Enforce);
    CHECK(failed.provenance[0].violation_count == 3);
    CHECK(export_report(failed.provenance, ReportFormat::Text).find("violations=3") != std::string::npos);
    auto doc = nlohmann::json::parse(export_report(failed.provenance, ReportFormat::Json));
    CHECK(doc["stages"][0]["violation_count"] == 3);
    CHECK(doc["stages"][0]["violations"].size() == 3);
    CHECK(doc["stages"][0]["status"] == "pre_failed");
}

TEST_CASE("digests") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(array_digest(NdArray::vector({1})) == array_digest(NdArray::vector({1}).with_name("x")));
    CHECK(array_digest(NdArray::vector({1})) != array_digest(NdArray::vector({-1})));
    CHECK(param_digest({{"t", NdArray::scalar(1)}}) != param_digest({{"u", NdArray::scalar(1)}}));
}

TEST_CASE("pipeline spec parsing") {
    const char* text = R"json({
      "sources": {"src": "a.grid"},
      "stages": [
        {"id": "n", "module": "rescale_minmax", "bindings": {"in": "src"}},
        {"id": "w", "module": "weighted_sum", "params": {"weights": [0.5, 0.5]},
         "contracts": {"pre": {"weights": "sums_to(1, axis=0, tol=1e-9)"}, "post": {"out": "finite"}},
         "bindings": {"layers": ["n.out", "src"]}}
      ],
      "sinks": ["w.out"]
    })json";
    auto spec = parse_chain_spec(text, "/data");
    CHECK(spec.sources[0].path == fs::path("/data/a.grid"));
    CHECK(spec.stages[0].module.input_slots[0].expr.has_value());
    CHECK(spec.stages[1].module.param_contracts.size() == 1);
    CHECK(spec.stages[1].bindings.at("layers").stacked);
    CHECK(spec.sinks[0].key() == "w.out");
    CHECK(validate_chain(spec).empty());

    CHECK_THROWS_AS(parse_chain_spec("{", "."), ParseError);
    CHECK_THROWS_AS(parse_chain_spec(R"({"sources": {}, "stages": [], "extra": 1})", "."), ParseError);
    CHECK_THROWS_AS(parse_chain_spec(R"({"sources": {}, "stages": [{"id": "a", "module": "rescale_minmax",
        "contracts": {"post": {"out": "bogus"}}}]})", "."), ParseError);
    auto unknown = parse_chain_spec(R"({"sources": {}, "stages": [{"id": "a", "module": "nope"}]})", ".");
    CHECK(has_reason(validate_chain(unknown), "a", "unknown transform"));
}

TEST_CASE("run_chain persists every layer and provenance") {
    auto dir = scratch("persist");
    auto spec = two_stage(NdArray::vector({2, 4, 6, 8}));
    auto result = run_chain(spec, Mode::Enforce, dir);
    CHECK(result.persisted.size() == 2);
    CHECK(fs::exists(dir / "norm.out.grid"));
    CHECK(fs::exists(dir / "provenance.json"));
    auto back = parse_grid(read_text_file(dir / "thr.out.grid"));
    CHECK(back == result.sinks.at("thr.out").reshaped({1, 4}));
    fs::remove_all(dir);

    spec.sources[0].data.reset();
    spec.sources[0].path = dir / "missing.grid";
    CHECK_THROWS_AS(run_chain(spec, Mode::Enforce, dir), IoError);
}
