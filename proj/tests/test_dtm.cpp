#include <cmath>
#include <memory>

#include "doctest.h"
#include "semdtm/dtm.hpp"
#include "semdtm/error.hpp"

using namespace semdtm;

namespace {

class AddToOutput : public Perturbation {
public:
    explicit AddToOutput(double delta) : delta_(delta) {}
    void apply_to_outputs(ArrayMap& outputs) const override {
        auto& a = outputs.at("out");
        std::vector<double> d(a.data().begin(), a.data().end());
        for (auto& v : d) v += delta_;
        a = NdArray(a.shape(), d, a.mask());
    }
    std::string describe() const override { return "add " + format_number(delta_); }

private:
    double delta_;
};

class ScaleParam : public Perturbation {
public:
    void apply_to_params(ParamMap& params) const override { params.at("t") = NdArray::scalar(10); }
    std::string describe() const override { return "t=10"; }
};

ArrayMap in(const NdArray& a) { return {{"in", a}}; }

}  // namespace

TEST_CASE("registry lists every transform with its family") {
    auto all = list_transforms();
    REQUIRE(all.size() == 9);
    CHECK(std::is_sorted(all.begin(), all.end(), [](auto* a, auto* b) { return a->name < b->name; }));
    REQUIRE(find_transform("focal_mean/summed_area_table"));
    CHECK(find_transform("focal_mean/summed_area_table")->family == "focal_mean");
    CHECK(find_transform("weighted_sum")->inputs == std::vector<std::string>{"layers"});
    CHECK(find_transform("nope") == nullptr);
}

TEST_CASE("validate_module") {
    auto m = canonical_module("threshold_mask", {{"t", NdArray::scalar(0.5)}}, "thr");
    CHECK_NOTHROW(validate_module(m));

    auto unknown = m;
    unknown.impl_ref = "nope";
    CHECK_THROWS_WITH_AS(validate_module(unknown), doctest::Contains("unknown transform"), BindingError);

    auto extra = m;
    extra.params.insert_or_assign("bogus", NdArray::scalar(1));
    CHECK_THROWS_AS(validate_module(extra), BindingError);

    auto shadow = m;
    shadow.params.insert_or_assign("in", NdArray::scalar(1));
    CHECK_THROWS_WITH_AS(validate_module(shadow), doctest::Contains("shadows"), BindingError);

    auto renamed = m;
    renamed.output_slots[0].slot = "result";
    CHECK_THROWS_AS(validate_module(renamed), BindingError);
}

TEST_CASE("contract texts are canonical") {
    auto m = canonical_module("weighted_sum", {{"weights", NdArray::vector({0.5, 0.5})}});
    CHECK(m.id == "weighted_sum");
    auto texts = contract_texts(m);
    CHECK(std::find(texts.begin(), texts.end(), "pre weights: nonnegative, sums_to(1, axis=0, tol=1e-09)") !=
          texts.end());
    CHECK(std::find(texts.begin(), texts.end(), "post out: min_ge_slot(layers), max_le_slot(layers)") != texts.end());
    auto fm = contract_texts(canonical_module("focal_mean", {{"window", NdArray::scalar(3)}}));
    CHECK(fm.back() == "invariant: same_shape(in, out)");
}

TEST_CASE("run_raw") {
    auto m = canonical_module("rescale_minmax", {});
    CHECK(run_raw(m, in(NdArray::vector({0, 5, 10}))).at("out") == NdArray::vector({0, 0.5, 1}));
    CHECK_THROWS_WITH_AS(run_raw(m, {}), doctest::Contains("missing input slot"), BindingError);

    auto fm = canonical_module("focal_mean", {{"window", NdArray::scalar(2.5)}});
    CHECK_THROWS_AS(run_raw(fm, in(NdArray::vector({1}))), ShapeError);
    auto no_param = canonical_module("focal_mean", {});
    CHECK_THROWS_AS(run_raw(no_param, in(NdArray::vector({1}))), BindingError);
}

TEST_CASE("perturbations apply around the transform and leave the module usable") {
    auto m = canonical_module("threshold_mask", {{"t", NdArray::scalar(0.5)}});
    auto input = in(NdArray::vector({0.2, 0.9}));
    auto clean = run_raw(m, input).at("out");

    auto p = m;
    p.perturbations.push_back(std::make_shared<ScaleParam>());
    CHECK(effective_params(p).at("t")[0] == 10.0);
    CHECK(effective_params(m).at("t")[0] == 0.5);
    CHECK(run_raw(p, input).at("out") == NdArray::vector({0, 0}));

    p.perturbations.push_back(std::make_shared<AddToOutput>(2));
    CHECK(run_raw(p, input).at("out") == NdArray::vector({2, 2}));
    CHECK(run_raw(m, input).at("out") == clean);
}

TEST_CASE("run_checked pass delivers exactly the run_raw outputs") {
    auto m = canonical_module("rescale_minmax", {});
    auto outcome = run_checked(m, in(NdArray::vector({1, 2, 3})), Mode::Enforce);
    CHECK(outcome.status == Status::Pass);
    CHECK(outcome.violations.empty());
    REQUIRE(outcome.outputs);
    CHECK(outcome.outputs->at("out") == NdArray::vector({0, 0.5, 1}));
}

TEST_CASE("pre failure withholds outputs in enforce mode") {
    auto m = canonical_module("weighted_sum", {{"weights", NdArray::vector({0.7, 0.6})}});
    std::vector<NdArray> layers{NdArray::vector({1}), NdArray::vector({1.5})};
    ArrayMap inputs{{"layers", stack(layers)}};
    auto enforce = run_checked(m, inputs, Mode::Enforce);
    CHECK(enforce.status == Status::PreFailed);
    CHECK(enforce.violations.size() == 1);
    CHECK(enforce.violations[0].slot == "weights");
    CHECK_FALSE(enforce.outputs);

    auto observe = run_checked(m, inputs, Mode::Observe);
    CHECK(observe.status == Status::PreFailed);
    REQUIRE(observe.outputs);
    CHECK(observe.outputs->at("out")[0] == doctest::Approx(1.6));
    // The output exceeds the layer maximum too; observe mode reports every phase.
    CHECK(observe.violations.size() == 2);
    CHECK(observe.violations[1].phase == Phase::Post);
}

TEST_CASE("post and invariant failures") {
    auto m = canonical_module("threshold_mask", {{"t", NdArray::scalar(0.5)}});
    m.perturbations.push_back(std::make_shared<AddToOutput>(0.5));
    auto post = run_checked(m, in(NdArray::vector({0.2, 0.9})), Mode::Enforce);
    CHECK(post.status == Status::PostFailed);
    CHECK(post.violations.size() == 2);
    CHECK_FALSE(post.outputs);

    auto inv = canonical_module("threshold_mask", {{"t", NdArray::scalar(0.5)}});
    inv.output_slots[0].expr.reset();
    inv.invariant = parse_constraints("same_shape(in, out), nonnegative");
    auto outcome = run_checked(inv, in(NdArray::vector({-1, 1})), Mode::Enforce);
    CHECK(outcome.status == Status::InvariantFailed);
    REQUIRE(outcome.violations.size() == 1);
    CHECK(outcome.violations[0].slot == "in");
    CHECK(outcome.violations[0].phase == Phase::Invariant);
}

TEST_CASE("pre on parameters sees the perturbed values") {
    auto m = canonical_module("focal_mean", {{"window", NdArray::scalar(3)}});
    class Fractional : public Perturbation {
    public:
        void apply_to_params(ParamMap& p) const override { p.at("window") = NdArray::scalar(3.3); }
        std::string describe() const override { return "window=3.3"; }
    };
    m.perturbations.push_back(std::make_shared<Fractional>());
    auto outcome = run_checked(m, in(NdArray::filled({3, 3}, 1)), Mode::Enforce);
    CHECK(outcome.status == Status::PreFailed);
    CHECK(outcome.violations[0].predicate == "integer_valued");
}

TEST_CASE("mode and status names") {
    CHECK(parse_mode("observe") == Mode::Observe);
    CHECK_FALSE(parse_mode("loud"));
    CHECK(status_name(Status::PreFailed) == "pre_failed");
    CHECK(status_name(Status::InvariantFailed) == "invariant_failed");
}
