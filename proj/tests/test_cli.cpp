#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "json.hpp"
#include "semdtm/array.hpp"

using namespace semdtm;
namespace fs = std::filesystem;

namespace {

struct Invocation {
    int code;
    std::string out;
    std::string err;
};

Invocation invoke(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code = cli::run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("semdtm_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string write_file(const fs::path& path, const std::string& text) {
    std::ofstream(path) << text;
    return path.string();
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const std::string kDemo = SEMDTM_SOURCE_DIR "/data/demo/demo_chain.json";
const std::string kBadPre = SEMDTM_SOURCE_DIR "/data/demo/demo_chain_bad_pre.json";
const std::string kElevation = SEMDTM_SOURCE_DIR "/data/demo/elevation.grid";

}  // namespace

TEST_CASE("check") {
    auto dir = scratch("check");
    auto good = write_file(dir / "good.csv", "1,2\n3,4\n");
    auto bad = write_file(dir / "bad.csv", "1,2\n-1,3\n");

    CHECK(invoke({"check", good, "finite"}).code == cli::kOk);
    auto v = invoke({"check", bad, "nonnegative"});
    CHECK(v.code == cli::kViolation);
    CHECK(v.out == "nonnegative [1,0] -1\n");

    auto p = invoke({"check", good, "bogus()"});
    CHECK(p.code == cli::kSpecError);
    CHECK(p.err.find("offset 0") != std::string::npos);

    auto ctx = write_file(dir / "ref.csv", "0,0\n0,0\n");
    CHECK(invoke({"check", good, "min_ge_slot(ref)", "--with", "ref=" + ctx}).code == cli::kOk);
    CHECK(invoke({"check", good, "min_ge_slot(ref)"}).code == cli::kSpecError);
    CHECK(invoke({"check", (dir / "none.csv").string(), "finite"}).code == cli::kIoError);
    fs::remove_all(dir);
}

TEST_CASE("run") {
    auto dir = scratch("run");
    auto r = invoke({"--out", dir.string(), "run", kDemo});
    CHECK(r.code == cli::kOk);
    CHECK(r.out.rfind("settings: mode=enforce out=" + dir.string() + " seed=0 tol=1e-09\n", 0) == 0);
    CHECK(r.out.find("persisted 5 layers") != std::string::npos);
    std::size_t grids = 0;
    for (const auto& e : fs::directory_iterator(dir)) grids += e.path().extension() == ".grid";
    CHECK(grids == 5);
    auto prov = nlohmann::json::parse(slurp(dir / "provenance.json"));
    CHECK(prov["stages"].size() == 5);

    auto bad_dir = scratch("run_bad");
    auto halted = invoke({"--out", bad_dir.string(), "run", kBadPre});
    CHECK(halted.code == cli::kViolation);
    auto bad_prov = nlohmann::json::parse(slurp(bad_dir / "provenance.json"));
    CHECK(bad_prov["stages"][2]["status"] == "pre_failed");
    CHECK(bad_prov["stages"][3]["status"] == "skipped");

    // Observe mode runs through and still reports the failing stage.
    auto observed = invoke({"--mode", "observe", "--out", bad_dir.string(), "run", kBadPre});
    CHECK(observed.code == cli::kOk);
    CHECK(observed.out.find("pre_failed") != std::string::npos);

    auto spec_text = slurp(kDemo);
    auto missing_source = nlohmann::json::parse(spec_text);
    missing_source["sources"]["elevation"] = "no_such.grid";
    auto missing = write_file(dir / "missing.json", missing_source.dump());
    CHECK(invoke({"--out", dir.string(), "run", missing}).code == cli::kIoError);

    auto invalid = nlohmann::json::parse(spec_text);
    invalid["stages"][0]["bindings"]["in"] = "hazard.out";
    auto invalid_path = write_file(dir / "invalid.json", invalid.dump());
    auto inv = invoke({"--out", dir.string(), "run", invalid_path});
    CHECK(inv.code == cli::kSpecError);
    CHECK(inv.err.find("norm") != std::string::npos);

    CHECK(invoke({"--out", dir.string(), "run", write_file(dir / "broken.json", "{")}).code == cli::kSpecError);
    CHECK(invoke({"--out", dir.string(), "run", (dir / "absent.json").string()}).code == cli::kIoError);
    CHECK(invoke({"--mode", "loud", "run", kDemo}).code == cli::kSpecError);
    fs::remove_all(dir);
    fs::remove_all(bad_dir);
}

TEST_CASE("campaign") {
    auto a = scratch("campaign_a");
    auto b = scratch("campaign_b");
    auto first = invoke({"--seed", "42", "--out", a.string(), "campaign", kDemo, "--trials", "10"});
    auto second = invoke({"--seed", "42", "--out", b.string(), "campaign", kDemo, "--trials", "10"});
    CHECK(first.code == cli::kOk);
    CHECK(second.code == cli::kOk);
    CHECK(slurp(a / "campaign.json") == slurp(b / "campaign.json"));
    auto doc = nlohmann::json::parse(slurp(a / "campaign.json"));
    CHECK(doc["config"]["master_seed"] == 42);
    CHECK(doc["trials"] == 60);

    auto two = invoke({"--out", a.string(), "campaign", kDemo, "--kinds", "sign_flip,nan_inject", "--trials", "5",
                       "--no-ensemble"});
    CHECK(two.code == cli::kOk);
    // settings line, header, one row per kind
    CHECK(std::count(two.out.begin(), two.out.end(), '\n') == 4);
    CHECK(two.out.find("nan_inject") != std::string::npos);

    CHECK(invoke({"--out", a.string(), "campaign", kDemo, "--kinds", "bit_rot"}).code == cli::kSpecError);
    CHECK(invoke({"--out", a.string(), "campaign", kDemo, "--trials", "0"}).code == cli::kSpecError);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("ensemble") {
    auto dir = scratch("ensemble");
    auto ok = invoke({"--out", dir.string(), "ensemble", "focal_mean", kElevation});
    CHECK(ok.code == cli::kOk);
    CHECK(fs::exists(dir / "ensemble.json"));
    auto consensus = parse_grid(slurp(dir / "consensus.out.grid"));
    CHECK(consensus.shape() == Shape{8, 8});

    auto faulted = invoke({"--out", dir.string(), "ensemble", "focal_mean", kElevation, "--inject", "index_shift"});
    // Two variants left split one against one: no majority.
    CHECK(faulted.code == cli::kDisagreement);
    auto doc = nlohmann::json::parse(slurp(dir / "ensemble.json"));
    CHECK(doc["consensus"].is_null());
    CHECK(doc["variant_ids"][1] == "focal_mean/summed_area_table+index_shift");

    auto l1 = write_file(dir / "a.csv", "2\n");
    auto l2 = write_file(dir / "b.csv", "4\n");
    CHECK(invoke({"--out", dir.string(), "ensemble", "weighted_sum", l1, l2}).code == cli::kOk);
    CHECK(parse_grid(slurp(dir / "consensus.out.grid"))[0] == 3.0);
    auto split = invoke({"--out", dir.string(), "ensemble", "weighted_sum", l1, l2, "--inject", "unit_scale"});
    CHECK(split.code == cli::kDisagreement);
    CHECK(invoke({"--out", dir.string(), "ensemble", "weighted_sum", l1, l2, "--param", "weights=0.25,0.75"}).code ==
          cli::kOk);

    CHECK(invoke({"--out", dir.string(), "ensemble", "nope", kElevation}).code == cli::kSpecError);
    CHECK(invoke({"--out", dir.string(), "ensemble", "focal_mean", kElevation, kElevation}).code == cli::kSpecError);
    CHECK(invoke({"--out", dir.string(), "ensemble", "focal_mean", kElevation, "--inject", "none"}).code ==
          cli::kSpecError);
    CHECK(invoke({"--tol", "-1", "ensemble", "focal_mean", kElevation}).code == cli::kSpecError);
    fs::remove_all(dir);
}

TEST_CASE("listings and usage") {
    auto p = invoke({"predicates"});
    CHECK(p.code == cli::kOk);
    CHECK(std::count(p.out.begin(), p.out.end(), '\n') == 14);
    auto t = invoke({"transforms"});
    CHECK(std::count(t.out.begin(), t.out.end(), '\n') == 9);
    CHECK(invoke({"--help"}).code == cli::kOk);
    CHECK(invoke({}).code == cli::kSpecError);
    CHECK(invoke({"frobnicate"}).code == cli::kSpecError);
}
