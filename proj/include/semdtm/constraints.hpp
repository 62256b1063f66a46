#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "semdtm/array.hpp"

namespace semdtm {

enum class ArgType { Real, Integer, Axis, Slot };

struct Literal {
    ArgType type = ArgType::Real;
    double real = 0.0;
    long long integer = 0;
    std::string slot;

    static Literal make_real(double v) { return {ArgType::Real, v, 0, {}}; }
    static Literal make_integer(long long v, ArgType t = ArgType::Integer) { return {t, 0.0, v, {}}; }
    static Literal make_slot(std::string s) { return {ArgType::Slot, 0.0, 0, std::move(s)}; }

    friend bool operator==(const Literal&, const Literal&) = default;
};

struct SourceSpan {
    std::size_t offset = 0;
    std::size_t length = 0;
};

// Arguments are stored in registry signature order regardless of whether
// they were written positionally or as keywords.
struct PredicateAtom {
    std::string name;
    std::vector<Literal> args;
    SourceSpan span;

    friend bool operator==(const PredicateAtom& a, const PredicateAtom& b) {
        return a.name == b.name && a.args == b.args;
    }
};

struct ConstraintExpr {
    std::vector<PredicateAtom> atoms;
    std::string source_text;

    // Source text is not part of the identity; spans and spacing are free.
    friend bool operator==(const ConstraintExpr& a, const ConstraintExpr& b) { return a.atoms == b.atoms; }
};

ConstraintExpr parse_constraints(std::string_view text);

// Lowercase names, ", " between atoms and arguments, axis/tol as keywords.
std::string render_constraints(const ConstraintExpr& expr);
std::string render_atom(const PredicateAtom& atom);

// Slot names an expression refers to through relational predicates.
std::vector<std::string> referenced_slots(const ConstraintExpr& expr);

struct ParamSignature {
    std::string name;
    ArgType type;
    bool keyword_in_canonical = false;
};

struct PredicateInfo {
    std::string name;
    std::vector<ParamSignature> params;
    bool variadic = false;       // last parameter repeats, at least once
    bool subject_free = false;   // evaluated once, independent of the checked array
    std::string description;

    std::string arity_text() const;
};

// Alphabetical by name.
const std::vector<PredicateInfo>& list_predicates();
const PredicateInfo* find_predicate(std::string_view name);

enum class Phase { Pre, Post, Invariant };
std::string_view phase_name(Phase phase);

struct Violation {
    std::string predicate;
    std::optional<MultiIndex> location;  // nullopt means global
    std::optional<double> observed;
    std::string detail;                  // used when there is no single observed number
    std::string expectation;
    std::string slot;
    Phase phase = Phase::Pre;

    std::string location_text() const;
    std::string observed_text() const;

    friend bool operator==(const Violation&, const Violation&) = default;
};

// Global before any cell; cells in lexicographic order.
bool location_less(const std::optional<MultiIndex>& a, const std::optional<MultiIndex>& b);

/**
 * Evaluates every atom of `expr` against `subject` and returns all
 * violations, sorted by location (stable across atoms, so ties keep atom
 * order). Masked cells are skipped by value predicates; only nodata_free
 * looks at the mask.
 *
 * `context` resolves slot arguments of relational predicates. Throws
 * BindingError for an unresolved slot and ShapeError for an axis argument
 * outside the subject's rank.
 */
std::vector<Violation> check(const ConstraintExpr& expr, const NdArray& subject, std::string_view slot,
                             const ArrayMap& context, Phase phase);

// Only the subject_free atoms of expr, evaluated once.
std::vector<Violation> check_subject_free(const ConstraintExpr& expr, const ArrayMap& context, Phase phase);
// Only the subject-dependent atoms.
std::vector<Violation> check_subject_bound(const ConstraintExpr& expr, const NdArray& subject, std::string_view slot,
                                           const ArrayMap& context, Phase phase);

}  // namespace semdtm
