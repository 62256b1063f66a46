#include "semdtm/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "json_util.hpp"
#include "semdtm/error.hpp"

namespace semdtm {

namespace {

constexpr std::size_t kMaxVariants = 20;

std::vector<std::string> param_names(const DtmModule& m) {
    std::vector<std::string> out;
    for (const auto& [name, value] : m.params) out.push_back(name);
    return out;
}

void check_signatures(const VariantSet& set) {
    if (set.variants.size() < 2) throw PreconditionError("an ensemble needs at least 2 variants");
    if (set.variants.size() > kMaxVariants) {
        throw PreconditionError("an ensemble supports at most " + std::to_string(kMaxVariants) + " variants");
    }
    const DtmModule& first = set.variants.front();
    std::set<std::string> ids;
    for (const auto& v : set.variants) {
        if (!ids.insert(v.id).second) throw BindingError("duplicate variant id '" + v.id + "'");
        if (v.input_names() != first.input_names() || v.output_names() != first.output_names() ||
            param_names(v) != param_names(first)) {
            throw BindingError("signature mismatch: variant '" + v.id + "' differs from '" + first.id + "'");
        }
    }
}

// Largest over all slots; inf for shape or mask disagreement.
std::pair<double, double> distance(const ArrayMap& a, const ArrayMap& b) {
    double abs_diff = 0.0;
    double rel_diff = 0.0;
    for (const auto& [slot, x] : a) {
        auto it = b.find(slot);
        if (it == b.end() || it->second.shape() != x.shape()) return {HUGE_VAL, HUGE_VAL};
        Discrepancy d = compare(x, it->second);
        if (d.mask_mismatch_count > 0) return {HUGE_VAL, HUGE_VAL};
        abs_diff = std::max(abs_diff, d.max_abs_diff);
        rel_diff = std::max(rel_diff, d.max_rel_diff);
    }
    return {abs_diff, rel_diff};
}

NdArray cellwise_median(const std::vector<const NdArray*>& members) {
    const NdArray& first = *members.front();
    std::vector<double> data(first.size(), 0.0);
    std::vector<double> values;
    for (std::size_t i = 0; i < first.size(); ++i) {
        if (first.masked(i)) continue;
        values.clear();
        bool nan = false;
        for (const NdArray* m : members) {
            nan = nan || std::isnan((*m)[i]);
            values.push_back((*m)[i]);
        }
        if (nan) {
            data[i] = NAN;
            continue;
        }
        std::sort(values.begin(), values.end());
        std::size_t n = values.size();
        data[i] = n % 2 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2.0;
    }
    return NdArray(first.shape(), std::move(data), first.mask());
}

}  // namespace

EnsembleReport run_ensemble(const VariantSet& set, const ArrayMap& inputs, double tol) {
    if (!(tol >= 0.0)) throw PreconditionError("ensemble tolerance must be >= 0");
    check_signatures(set);
    const std::size_t k = set.variants.size();

    EnsembleReport report;
    report.abstract_id = set.abstract_id;
    report.tolerance = tol;
    std::vector<std::optional<ArrayMap>> outputs(k);
    std::vector<std::string> failures(k);
    for (std::size_t i = 0; i < k; ++i) {
        report.variant_ids.push_back(set.variants[i].id);
        try {
            outputs[i] = run_raw(set.variants[i], inputs);
        } catch (const Error& e) {
            failures[i] = e.what();
        }
    }

    report.agreement.assign(k, std::vector<double>(k, 0.0));
    report.relative.assign(k, std::vector<double>(k, 0.0));
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
            auto [abs_diff, rel_diff] = (outputs[i] && outputs[j]) ? distance(*outputs[i], *outputs[j])
                                                                   : std::pair<double, double>{HUGE_VAL, HUGE_VAL};
            report.agreement[i][j] = report.agreement[j][i] = abs_diff;
            report.relative[i][j] = report.relative[j][i] = rel_diff;
        }
    }

    // Exhaustive clique search; k is small.
    std::vector<std::string> best;
    std::uint32_t best_mask = 0;
    for (std::uint32_t mask = 1; mask < (1u << k); ++mask) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < k; ++i) {
            if (mask & (1u << i)) members.push_back(i);
        }
        if (members.size() < best.size()) continue;
        bool ok = true;
        for (std::size_t a = 0; a < members.size() && ok; ++a) {
            if (!outputs[members[a]]) ok = false;
            for (std::size_t b = a + 1; b < members.size() && ok; ++b) {
                ok = report.agreement[members[a]][members[b]] <= tol;
            }
        }
        if (!ok) continue;
        std::vector<std::string> ids;
        for (std::size_t i : members) ids.push_back(report.variant_ids[i]);
        std::sort(ids.begin(), ids.end());
        if (ids.size() > best.size() || ids < best) {
            best = std::move(ids);
            best_mask = mask;
        }
    }

    if (2 * best.size() > k) {
        report.consensus_members = best;
        std::vector<const ArrayMap*> member_outputs;
        for (std::size_t i = 0; i < k; ++i) {
            if (best_mask & (1u << i)) member_outputs.push_back(&*outputs[i]);
        }
        ArrayMap consensus;
        for (const auto& [slot, first] : *member_outputs.front()) {
            std::vector<const NdArray*> layers;
            for (const ArrayMap* m : member_outputs) layers.push_back(&m->at(slot));
            consensus.emplace(slot, cellwise_median(layers));
        }
        report.consensus = std::move(consensus);
    }

    for (std::size_t i = 0; i < k; ++i) {
        bool member = report.consensus && (best_mask & (1u << i));
        if (member) continue;
        std::string reason;
        if (!failures[i].empty()) {
            reason = "execution failed: " + failures[i];
        } else if (report.consensus) {
            reason = "outside consensus at tol " + format_number(tol);
        } else {
            reason = "no strict-majority consensus at tol " + format_number(tol);
        }
        report.dissenters.push_back({report.variant_ids[i], std::move(reason)});
    }
    std::sort(report.dissenters.begin(), report.dissenters.end(),
              [](const Dissent& a, const Dissent& b) { return a.variant_id < b.variant_id; });
    report.unanimous = report.consensus && report.consensus_members.size() == k;
    return report;
}

std::vector<std::string> shipped_variant_set_ids() { return {"focal_mean", "weighted_sum"}; }

std::optional<VariantSet> shipped_variant_set(std::string_view abstract_id, const ParamMap& params) {
    std::vector<std::string> impls;
    if (abstract_id == "focal_mean") {
        impls = {"focal_mean/sliding_window", "focal_mean/summed_area_table"};
    } else if (abstract_id == "weighted_sum") {
        impls = {"weighted_sum/sequential_sum", "weighted_sum/compensated_sum"};
    } else {
        return std::nullopt;
    }
    VariantSet set;
    set.abstract_id = std::string(abstract_id);
    for (const auto& impl : impls) set.variants.push_back(canonical_module(impl, params, impl));
    return set;
}

std::string ensemble_report_text(const EnsembleReport& report) {
    std::string out = "ensemble " + report.abstract_id + " k=" + std::to_string(report.variant_ids.size()) +
                      " tol=" + format_number(report.tolerance) + "\n";
    for (std::size_t i = 0; i < report.variant_ids.size(); ++i) {
        out += "  " + report.variant_ids[i] + ":";
        for (double d : report.agreement[i]) {
            char buf[32];
            std::snprintf(buf, sizeof buf, " %.3e", d);
            out += buf;
        }
        out += "\n";
    }
    out += "unanimous: " + std::string(report.unanimous ? "true" : "false") + "\n";
    out += "consensus: ";
    if (report.consensus) {
        for (std::size_t i = 0; i < report.consensus_members.size(); ++i) {
            out += (i ? ", " : "") + report.consensus_members[i];
        }
    } else {
        out += "none";
    }
    out += "\n";
    for (const auto& d : report.dissenters) out += "dissenter: " + d.variant_id + " (" + d.reason + ")\n";
    return out;
}

std::string ensemble_report_json(const EnsembleReport& report) {
    using detail::ordered_json;
    auto matrix = [](const std::vector<std::vector<double>>& m) {
        ordered_json rows = ordered_json::array();
        for (const auto& row : m) {
            ordered_json r = ordered_json::array();
            for (double v : row) r.push_back(detail::number_json(v));
            rows.push_back(std::move(r));
        }
        return rows;
    };
    ordered_json doc;
    doc["schema"] = "semdtm.ensemble/1";
    doc["abstract_id"] = report.abstract_id;
    doc["tolerance"] = report.tolerance;
    doc["variant_ids"] = report.variant_ids;
    doc["agreement"] = matrix(report.agreement);
    doc["relative"] = matrix(report.relative);
    doc["unanimous"] = report.unanimous;
    doc["consensus_members"] = report.consensus ? ordered_json(report.consensus_members) : ordered_json(nullptr);
    if (report.consensus) {
        ordered_json digests = ordered_json::object();
        for (const auto& [slot, a] : *report.consensus) digests[slot] = canonical_text(a);
        doc["consensus"] = std::move(digests);
    } else {
        doc["consensus"] = nullptr;
    }
    doc["dissenters"] = ordered_json::array();
    for (const auto& d : report.dissenters) {
        doc["dissenters"].push_back({{"variant_id", d.variant_id}, {"reason", d.reason}});
    }
    return doc.dump(2) + "\n";
}

}  // namespace semdtm
