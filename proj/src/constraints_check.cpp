#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "semdtm/constraints.hpp"
#include "semdtm/error.hpp"

namespace semdtm {

std::string PredicateInfo::arity_text() const {
    return variadic ? std::to_string(params.size()) + "+" : std::to_string(params.size());
}

const std::vector<PredicateInfo>& list_predicates() {
    static const std::vector<PredicateInfo> registry = [] {
        using T = ArgType;
        std::vector<PredicateInfo> r = {
            {"binary", {}, false, false, "every unmasked cell is exactly 0 or 1"},
            {"finite", {}, false, false, "every unmasked cell is neither NaN nor infinite"},
            {"in_range", {{"lo", T::Real}, {"hi", T::Real}}, false, false,
             "every unmasked cell lies in the closed interval [lo, hi]"},
            {"integer_valued", {}, false, false, "every unmasked cell is a finite integer"},
            {"max_le_slot", {{"slot", T::Slot}}, false, false,
             "every unmasked cell is <= the maximum unmasked value of slot"},
            {"min_ge_slot", {{"slot", T::Slot}}, false, false,
             "every unmasked cell is >= the minimum unmasked value of slot"},
            {"nodata_free", {}, false, false, "no cell is masked as nodata"},
            {"nonempty", {}, false, false, "at least one cell is unmasked"},
            {"nonnegative", {}, false, false, "every unmasked cell is >= 0"},
            {"positive", {}, false, false, "every unmasked cell is > 0"},
            {"same_shape", {{"a", T::Slot}, {"b", T::Slot}}, false, true, "slots a and b have identical shapes"},
            {"shape_is", {{"extent", T::Integer}}, true, false, "the array has exactly the listed extents"},
            {"sorted_ascending", {{"axis", T::Axis, true}}, false, false,
             "unmasked cells are non-decreasing along axis"},
            {"sums_to", {{"target", T::Real}, {"axis", T::Axis, true}, {"tol", T::Real, true}}, false, false,
             "the sum of unmasked cells along axis is within tol of target"},
        };
        std::sort(r.begin(), r.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
        return r;
    }();
    return registry;
}

const PredicateInfo* find_predicate(std::string_view name) {
    const auto& reg = list_predicates();
    auto it = std::lower_bound(reg.begin(), reg.end(), name,
                               [](const PredicateInfo& p, std::string_view n) { return p.name < n; });
    return (it != reg.end() && it->name == name) ? &*it : nullptr;
}

std::string_view phase_name(Phase phase) {
    switch (phase) {
        case Phase::Pre: return "pre";
        case Phase::Post: return "post";
        case Phase::Invariant: return "invariant";
    }
    return "?";
}

std::string Violation::location_text() const { return location ? format_index(*location) : "global"; }

std::string Violation::observed_text() const {
    if (observed) return format_number(*observed);
    return detail;
}

bool location_less(const std::optional<MultiIndex>& a, const std::optional<MultiIndex>& b) {
    if (!a) return b.has_value();
    if (!b) return false;
    return *a < *b;
}

namespace {

struct Eval {
    const PredicateAtom& atom;
    const NdArray& subject;
    std::string_view slot;
    const ArrayMap& context;
    Phase phase;
    std::vector<Violation>& out;

    void add(std::optional<MultiIndex> loc, std::optional<double> observed, std::string expectation,
             std::string detail = {}) const {
        out.push_back(Violation{atom.name, std::move(loc), observed, std::move(detail), std::move(expectation),
                                std::string(slot), phase});
    }

    const NdArray& resolve(const std::string& name) const {
        auto it = context.find(name);
        if (it == context.end()) {
            throw BindingError("predicate '" + atom.name + "' references unknown slot '" + name + "'");
        }
        return it->second;
    }

    std::size_t axis(std::size_t arg) const {
        long long a = atom.args[arg].integer;
        if (a < 0 || static_cast<std::size_t>(a) >= subject.rank()) {
            throw ShapeError("predicate '" + atom.name + "': axis " + std::to_string(a) + " out of range for rank-" +
                             std::to_string(subject.rank()) + " array");
        }
        return static_cast<std::size_t>(a);
    }

    void each_cell(const std::function<bool(double)>& ok, const std::string& expectation) const {
        for (std::size_t i = 0; i < subject.size(); ++i) {
            if (subject.masked(i)) continue;
            if (!ok(subject[i])) add(subject.unravel(i), subject[i], expectation);
        }
    }

    // Calls fn(reduced_flat, element flat indices along axis) for every line.
    template <typename Fn>
    void each_line(std::size_t ax, Fn&& fn) const {
        const Shape& shape = subject.shape();
        std::size_t outer = 1;
        std::size_t inner = 1;
        for (std::size_t d = 0; d < ax; ++d) outer *= shape[d];
        for (std::size_t d = ax + 1; d < shape.size(); ++d) inner *= shape[d];
        std::vector<std::size_t> line(shape[ax]);
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                for (std::size_t k = 0; k < shape[ax]; ++k) line[k] = (o * shape[ax] + k) * inner + in;
                fn(o * inner + in, line);
            }
        }
    }

    std::optional<MultiIndex> reduced_location(std::size_t ax, std::size_t reduced_flat) const {
        if (subject.rank() == 1) return std::nullopt;
        Shape reduced = subject.shape();
        reduced.erase(reduced.begin() + static_cast<std::ptrdiff_t>(ax));
        MultiIndex idx(reduced.size());
        for (std::size_t d = reduced.size(); d-- > 0;) {
            idx[d] = reduced_flat % reduced[d];
            reduced_flat /= reduced[d];
        }
        return idx;
    }

    static std::optional<double> extreme(const NdArray& a, bool want_max) {
        std::optional<double> best;
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (a.masked(i) || std::isnan(a[i])) continue;
            if (!best || (want_max ? a[i] > *best : a[i] < *best)) best = a[i];
        }
        return best;
    }

    void run() const {
        const std::string& n = atom.name;
        if (n == "finite") {
            each_cell([](double v) { return std::isfinite(v); }, "finite value");
        } else if (n == "nonnegative") {
            each_cell([](double v) { return v >= 0.0; }, ">= 0");
        } else if (n == "positive") {
            each_cell([](double v) { return v > 0.0; }, "> 0");
        } else if (n == "in_range") {
            double lo = atom.args[0].real;
            double hi = atom.args[1].real;
            each_cell([&](double v) { return v >= lo && v <= hi; },
                      "in [" + format_number(lo) + ", " + format_number(hi) + "]");
        } else if (n == "integer_valued") {
            each_cell([](double v) { return std::isfinite(v) && v == std::floor(v); }, "integer value");
        } else if (n == "binary") {
            each_cell([](double v) { return v == 0.0 || v == 1.0; }, "0 or 1");
        } else if (n == "nonempty") {
            if (subject.masked_count() == subject.size()) {
                add(std::nullopt, std::nullopt, "at least one unmasked cell", "all cells masked");
            }
        } else if (n == "nodata_free") {
            for (std::size_t i = 0; i < subject.size(); ++i) {
                if (subject.masked(i)) add(subject.unravel(i), std::nullopt, "no nodata", "nodata");
            }
        } else if (n == "sorted_ascending") {
            std::size_t ax = axis(0);
            each_line(ax, [&](std::size_t, const std::vector<std::size_t>& line) {
                std::optional<double> prev;
                for (std::size_t flat : line) {
                    if (subject.masked(flat)) continue;
                    double v = subject[flat];
                    if (std::isnan(v)) {
                        add(subject.unravel(flat), v, "comparable value along axis " + std::to_string(ax));
                        continue;
                    }
                    if (prev && v < *prev) {
                        add(subject.unravel(flat), v,
                            ">= previous value " + format_number(*prev) + " along axis " + std::to_string(ax));
                    }
                    prev = v;
                }
            });
        } else if (n == "sums_to") {
            double target = atom.args[0].real;
            std::size_t ax = axis(1);
            double tol = atom.args[2].real;
            each_line(ax, [&](std::size_t reduced, const std::vector<std::size_t>& line) {
                double sum = 0.0;
                for (std::size_t flat : line) {
                    if (!subject.masked(flat)) sum += subject[flat];
                }
                if (!(std::abs(sum - target) <= tol)) {
                    add(reduced_location(ax, reduced), sum,
                        "sum along axis " + std::to_string(ax) + " == " + format_number(target) + " +/- " +
                            format_number(tol));
                }
            });
        } else if (n == "same_shape") {
            const NdArray& a = resolve(atom.args[0].slot);
            const NdArray& b = resolve(atom.args[1].slot);
            if (a.shape() != b.shape()) {
                add(std::nullopt, std::nullopt, "shape of " + atom.args[0].slot + " == shape of " + atom.args[1].slot,
                    format_shape(a.shape()) + " vs " + format_shape(b.shape()));
            }
        } else if (n == "shape_is") {
            Shape expected;
            for (const auto& arg : atom.args) expected.push_back(static_cast<std::size_t>(std::max(0LL, arg.integer)));
            if (subject.shape() != expected) {
                add(std::nullopt, std::nullopt, "shape " + format_shape(expected), format_shape(subject.shape()));
            }
        } else if (n == "max_le_slot" || n == "min_ge_slot") {
            bool upper = n == "max_le_slot";
            const std::string& ref_name = atom.args[0].slot;
            auto bound = extreme(resolve(ref_name), upper);
            if (!bound) return;
            double b = *bound;
            if (upper) {
                each_cell([b](double v) { return v <= b; }, "<= max(" + ref_name + ") = " + format_number(b));
            } else {
                each_cell([b](double v) { return v >= b; }, ">= min(" + ref_name + ") = " + format_number(b));
            }
        } else {
            throw BindingError("unknown predicate '" + n + "'");
        }
    }
};

enum class Select { All, SubjectFree, SubjectBound };

std::vector<Violation> evaluate(const ConstraintExpr& expr, const NdArray& subject, std::string_view slot,
                                const ArrayMap& context, Phase phase, Select select) {
    std::vector<Violation> out;
    for (const auto& atom : expr.atoms) {
        const PredicateInfo* info = find_predicate(atom.name);
        if (!info) throw BindingError("unknown predicate '" + atom.name + "'");
        if (select == Select::SubjectFree && !info->subject_free) continue;
        if (select == Select::SubjectBound && info->subject_free) continue;
        Eval{atom, subject, slot, context, phase, out}.run();
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const Violation& a, const Violation& b) { return location_less(a.location, b.location); });
    return out;
}

}  // namespace

std::vector<Violation> check(const ConstraintExpr& expr, const NdArray& subject, std::string_view slot,
                             const ArrayMap& context, Phase phase) {
    return evaluate(expr, subject, slot, context, phase, Select::All);
}

std::vector<Violation> check_subject_free(const ConstraintExpr& expr, const ArrayMap& context, Phase phase) {
    static const NdArray placeholder = NdArray::scalar(0.0);
    return evaluate(expr, placeholder, "*", context, phase, Select::SubjectFree);
}

std::vector<Violation> check_subject_bound(const ConstraintExpr& expr, const NdArray& subject, std::string_view slot,
                                           const ArrayMap& context, Phase phase) {
    return evaluate(expr, subject, slot, context, phase, Select::SubjectBound);
}

}  // namespace semdtm
