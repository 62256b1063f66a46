#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "semdtm/dtm.hpp"

namespace semdtm {

// Supposedly equivalent implementations of one abstract transform. Variant
// ids (DtmModule::id) must be unique within the set.
struct VariantSet {
    std::string abstract_id;
    std::vector<DtmModule> variants;
};

struct Dissent {
    std::string variant_id;
    std::string reason;
};

struct EnsembleReport {
    std::string abstract_id;
    std::vector<std::string> variant_ids;           // in set order
    std::vector<std::vector<double>> agreement;     // max_abs_diff, k x k
    std::vector<std::vector<double>> relative;      // max_rel_diff, informational only
    std::optional<ArrayMap> consensus;
    std::vector<std::string> consensus_members;     // sorted by id
    std::vector<Dissent> dissenters;                // sorted by id
    double tolerance = 0.0;
    bool unanimous = false;
};

/**
 * Runs every variant through run_raw and groups them by pairwise agreement.
 *
 * Two variants agree when every output slot has max_abs_diff <= tol with no
 * mask mismatch. The consensus group is the largest set of pairwise-agreeing
 * variants; among equally large groups the one whose sorted id list is
 * lexicographically smallest wins. It counts only with a strict majority
 * (size > k/2); its output is the cellwise median of its members. A variant
 * that throws is a dissenter carrying the error text.
 *
 * Throws BindingError on a signature mismatch or duplicate ids, and
 * PreconditionError for k < 2 or tol < 0.
 */
EnsembleReport run_ensemble(const VariantSet& set, const ArrayMap& inputs, double tol);

// Registered sets: "focal_mean" {sliding_window, summed_area_table} and
// "weighted_sum" {sequential_sum, compensated_sum}, with the shipped contracts.
std::vector<std::string> shipped_variant_set_ids();
std::optional<VariantSet> shipped_variant_set(std::string_view abstract_id, const ParamMap& params);

std::string ensemble_report_text(const EnsembleReport& report);
std::string ensemble_report_json(const EnsembleReport& report);

}  // namespace semdtm
