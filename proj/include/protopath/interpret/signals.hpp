#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "protopath/core/error.hpp"
#include "protopath/curation/bipartite_graph.hpp"
#include "protopath/model/model.hpp"
#include "protopath/prototype/patch_bag.hpp"
#include "protopath/stats/statistics.hpp"

namespace protopath::interpret {

using ad::NdArray;
using curation::BipartiteGraph;
using prototype::PatchBag;

/// Everything the model exposes for one patient from a single inference pass.
/// Fields of a disabled branch stay empty.
struct SignalBundle {
    // WSI branch
    NdArray sims;  // N x K, before the temperature softmax
    NdArray alpha; // N x K
    std::vector<std::size_t> hard_assign;
    std::vector<double> wsi_gate; // K

    // Genomic branch; gene_pathway_attention aligns with memberships.
    std::vector<std::string> genes;
    std::vector<std::string> pathways;
    std::vector<std::pair<std::size_t, std::size_t>> memberships;
    std::vector<double> gene_pathway_attention;
    std::vector<double> pathway_gate; // P
    std::vector<double> gene_importance_sum;
    std::vector<double> gene_importance_avg;

    // Cross-attention fusion only
    NdArray cross_attention;         // K x P
    std::vector<double> fusion_gate; // K

    bool has_wsi() const { return !alpha.empty(); }
    bool has_genomic() const { return !pathway_gate.empty(); }
    bool has_cross_attention() const { return !cross_attention.empty(); }
    std::size_t num_prototypes() const { return has_wsi() ? alpha.cols() : fusion_gate.size(); }

    std::vector<double> prototype_profile(std::size_t k) const {
        if (!has_cross_attention()) throw ContractError("no cross-attention in this bundle");
        if (k >= cross_attention.rows()) throw IndexError("prototype " + std::to_string(k) + " out of range");
        auto row = cross_attention.row_span(k);
        return {row.begin(), row.end()};
    }

    /// Throws ContractError naming the first simplex that is off by more than tol.
    void validate(double tol = 1e-10) const;
};

namespace detail {

inline void check_sum(double s, double tol, const std::string& what) {
    if (std::abs(s - 1.0) > tol) throw ContractError(what + " sums to " + std::to_string(s) + ", expected 1");
}

inline std::vector<double> row_values(const ad::Var& v) {
    const auto& d = v.value().values();
    return {d.begin(), d.end()};
}

} // namespace detail

inline void SignalBundle::validate(double tol) const {
    for (std::size_t n = 0; n < alpha.rows(); ++n) {
        double s = 0.0;
        for (double v : alpha.row_span(n)) s += v;
        detail::check_sum(s, tol, "alpha row " + std::to_string(n));
    }
    if (!wsi_gate.empty()) detail::check_sum(std::accumulate(wsi_gate.begin(), wsi_gate.end(), 0.0), tol, "wsi gate");
    if (!pathway_gate.empty())
        detail::check_sum(std::accumulate(pathway_gate.begin(), pathway_gate.end(), 0.0), tol, "pathway gate");
    if (!fusion_gate.empty())
        detail::check_sum(std::accumulate(fusion_gate.begin(), fusion_gate.end(), 0.0), tol, "fusion gate");
    for (std::size_t k = 0; k < cross_attention.rows(); ++k) {
        double s = 0.0;
        for (double v : cross_attention.row_span(k)) s += v;
        detail::check_sum(s, tol, "cross-attention row " + std::to_string(k));
    }
    std::vector<double> into(pathways.size(), 0.0);
    for (std::size_t m = 0; m < memberships.size(); ++m) into[memberships[m].second] += gene_pathway_attention[m];
    for (std::size_t p = 0; p < into.size(); ++p) detail::check_sum(into[p], tol, "attention into pathway " + pathways[p]);
}

/// Sum and participation-normalized gene importance from sparse attention
/// and the pathway gate.
inline void compute_gene_importance(SignalBundle& b) {
    const std::size_t g = b.genes.size();
    b.gene_importance_sum.assign(g, 0.0);
    b.gene_importance_avg.assign(g, 0.0);
    std::vector<double> alpha_total(g, 0.0);
    std::vector<std::size_t> active(g, 0);
    for (std::size_t m = 0; m < b.memberships.size(); ++m) {
        const auto [gi, pi] = b.memberships[m];
        const double a = b.gene_pathway_attention[m];
        b.gene_importance_sum[gi] += a * b.pathway_gate[pi];
        alpha_total[gi] += a;
        active[gi] += a > 0.0;
    }
    for (std::size_t i = 0; i < g; ++i)
        if (active[i]) b.gene_importance_avg[i] = alpha_total[i] / double(active[i]);
}

inline SignalBundle extract_signals(const model::ModelForward& fw, const BipartiteGraph* graph, bool training) {
    if (training) throw ContractError("signals must come from an inference pass (dropout off)");
    SignalBundle b;
    if (fw.wsi) {
        b.sims = fw.wsi->sims.value();
        b.alpha = fw.wsi->alpha.value();
        b.hard_assign = fw.wsi->hard_assign;
        b.wsi_gate = detail::row_values(fw.wsi->gate_weights);
    }
    if (fw.genomic) {
        if (!graph) throw ContractError("genomic signals need the graph");
        b.genes = graph->genes();
        b.pathways = graph->pathways();
        b.memberships = graph->memberships();
        b.gene_pathway_attention = fw.genomic->gene_attention;
        b.pathway_gate = detail::row_values(fw.genomic->gate_weights);
        compute_gene_importance(b);
    }
    if (fw.fusion && fw.fusion->has_attention) {
        b.cross_attention = fw.fusion->attention.value();
        b.fusion_gate = detail::row_values(fw.fusion->gate_weights);
    }
    return b;
}

struct OverlayRecord {
    std::string slide_id;
    double x = 0.0;
    double y = 0.0;
    std::size_t prototype = 0;
    std::optional<std::string> pathway;
    std::optional<double> raw_value;
    std::optional<double> rank_value;
};

inline constexpr const char* kUnranked = "unranked";

/// Within-slide percentile ranks, (rank - 1) / (N - 1) with average ties.
inline std::vector<double> percentile_ranks(const std::vector<double>& raw) {
    if (raw.size() <= 1) return std::vector<double>(raw.size(), 0.0);
    auto r = stats::average_ranks(raw);
    for (double& v : r) v = (v - 1.0) / double(raw.size() - 1);
    return r;
}

namespace detail {

inline void require_wsi(const SignalBundle& b, const PatchBag& bag) {
    if (!b.has_wsi()) throw ContractError("overlay needs the WSI branch");
    if (bag.coords.size() != b.hard_assign.size())
        throw AlignmentError("bag has " + std::to_string(bag.coords.size()) + " patches but signals cover " +
                             std::to_string(b.hard_assign.size()));
}

inline std::vector<OverlayRecord> base_records(const SignalBundle& b, const PatchBag& bag) {
    require_wsi(b, bag);
    std::vector<OverlayRecord> out;
    for (std::size_t n = 0; n < b.hard_assign.size(); ++n)
        out.push_back({bag.slide_of(n), bag.coords[n].first, bag.coords[n].second, b.hard_assign[n], {}, {}, {}});
    return out;
}

/// Assigns raw values and ranks computed separately within each slide.
inline void attach_values(std::vector<OverlayRecord>& recs, const std::vector<double>& raw) {
    std::map<std::string, std::vector<std::size_t>> by_slide;
    for (std::size_t n = 0; n < recs.size(); ++n) by_slide[recs[n].slide_id].push_back(n);
    for (const auto& [slide, idx] : by_slide) {
        std::vector<double> v;
        for (std::size_t n : idx) v.push_back(raw[n]);
        const auto r = percentile_ranks(v);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            recs[idx[i]].raw_value = raw[idx[i]];
            recs[idx[i]].rank_value = r[i];
        }
    }
}

} // namespace detail

inline std::vector<OverlayRecord> prototype_overlay(const SignalBundle& b, const PatchBag& bag) {
    return detail::base_records(b, bag);
}

/// Mean rank difference (high - low) per pathway for each prototype row of
/// the cross-attention, from one fold's population analysis.
using PrototypeRankStats = std::map<std::size_t, std::map<std::string, double>>;

inline PrototypeRankStats rank_stats_from_tests(const std::map<std::size_t, std::vector<stats::FoldTestResult>>& per_prototype) {
    PrototypeRankStats out;
    for (const auto& [k, rows] : per_prototype)
        for (const auto& t : rows) out[k][t.entity] = t.mean_rank_diff;
    return out;
}

/// Pathway each prototype stands for, given the patient's risk group: the
/// largest rank difference for high risk, the most negative for low risk.
/// Ties resolve to the smallest pathway id.
inline std::string prototype_pathway(const PrototypeRankStats& stats, std::size_t k, bool high_risk) {
    auto it = stats.find(k);
    if (it == stats.end() || it->second.empty()) return kUnranked;
    const std::string* best = nullptr;
    double best_v = 0.0;
    for (const auto& [pathway, diff] : it->second) { // std::map iterates ids in order
        const double v = high_risk ? diff : -diff;
        if (!best || v > best_v) {
            best = &pathway;
            best_v = v;
        }
    }
    return *best;
}

inline std::vector<OverlayRecord> pathway_overlay(const SignalBundle& b, const PatchBag& bag,
                                                  const PrototypeRankStats& stats, bool high_risk) {
    auto recs = detail::base_records(b, bag);
    std::map<std::size_t, std::string> label;
    for (auto& r : recs) {
        auto it = label.find(r.prototype);
        if (it == label.end()) it = label.emplace(r.prototype, prototype_pathway(stats, r.prototype, high_risk)).first;
        r.pathway = it->second;
    }
    return recs;
}

inline std::vector<OverlayRecord> single_pathway_heatmap(const SignalBundle& b, const PatchBag& bag,
                                                         const std::string& pathway) {
    if (!b.has_cross_attention()) throw ContractError("pathway heatmap needs cross-attention fusion");
    auto pit = std::find(b.pathways.begin(), b.pathways.end(), pathway);
    if (pit == b.pathways.end()) throw IndexError("pathway " + pathway + " is not in the vocabulary");
    const std::size_t p = std::size_t(pit - b.pathways.begin());
    auto recs = detail::base_records(b, bag);
    std::vector<double> raw;
    for (const auto& r : recs) raw.push_back(b.cross_attention(r.prototype, p));
    detail::attach_values(recs, raw);
    for (auto& r : recs) r.pathway = pathway;
    return recs;
}

inline std::vector<OverlayRecord> single_gene_heatmap(const SignalBundle& b, const PatchBag& bag, const std::string& gene) {
    if (!b.has_cross_attention()) throw ContractError("gene heatmap needs cross-attention fusion");
    auto git = std::find(b.genes.begin(), b.genes.end(), gene);
    if (git == b.genes.end()) throw IndexError("gene " + gene + " is not in the vocabulary");
    const std::size_t g = std::size_t(git - b.genes.begin());
    // Per-prototype value: sum over the gene's pathways of A[k, p] * alpha_{g->p}.
    std::vector<double> per_proto(b.cross_attention.rows(), 0.0);
    for (std::size_t m = 0; m < b.memberships.size(); ++m) {
        if (b.memberships[m].first != g) continue;
        for (std::size_t k = 0; k < per_proto.size(); ++k)
            per_proto[k] += b.cross_attention(k, b.memberships[m].second) * b.gene_pathway_attention[m];
    }
    auto recs = detail::base_records(b, bag);
    std::vector<double> raw;
    for (const auto& r : recs) raw.push_back(per_proto[r.prototype]);
    detail::attach_values(recs, raw);
    return recs;
}

struct Exemplar {
    std::size_t patch = 0;
    std::string slide_id;
    double x = 0.0;
    double y = 0.0;
    double similarity = 0.0;
};

struct PrototypeExemplars {
    std::size_t prototype = 0;
    double gate_weight = 0.0;
    std::vector<Exemplar> patches;
};

/// Top-M patches per prototype by pre-softmax similarity; prototypes listed
/// by decreasing gate weight.
inline std::vector<PrototypeExemplars> extract_exemplars(const SignalBundle& b, const PatchBag& bag, std::size_t m = 8) {
    detail::require_wsi(b, bag);
    const std::size_t n = b.sims.rows(), k = b.sims.cols();
    std::vector<PrototypeExemplars> out;
    for (std::size_t j = 0; j < k; ++j) {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t c) { return b.sims(a, j) > b.sims(c, j); });
        idx.resize(std::min(m, n));
        PrototypeExemplars e;
        e.prototype = j;
        e.gate_weight = b.wsi_gate.empty() ? 0.0 : b.wsi_gate[j];
        for (std::size_t i : idx) e.patches.push_back({i, bag.slide_of(i), bag.coords[i].first, bag.coords[i].second, b.sims(i, j)});
        out.push_back(std::move(e));
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& c) { return a.gate_weight > c.gate_weight; });
    return out;
}

inline nlohmann::ordered_json matrix_json(const NdArray& a) {
    auto out = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto row = a.row_span(r);
        out.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return out;
}

/// One patient's signals; gene-to-pathway attention as sparse triplets.
inline nlohmann::ordered_json to_json(const SignalBundle& b) {
    nlohmann::ordered_json j;
    j["tie_rule"] = "smallest index";
    if (b.has_wsi()) {
        j["alpha"] = matrix_json(b.alpha);
        j["sims"] = matrix_json(b.sims);
        j["hard_assign"] = b.hard_assign;
        j["wsi_gate"] = b.wsi_gate;
    }
    if (b.has_genomic()) {
        auto trip = nlohmann::ordered_json::array();
        for (std::size_t m = 0; m < b.memberships.size(); ++m)
            trip.push_back({b.genes[b.memberships[m].first], b.pathways[b.memberships[m].second], b.gene_pathway_attention[m]});
        j["gene_pathway_attention"] = trip;
        j["pathways"] = b.pathways;
        j["pathway_gate"] = b.pathway_gate;
        j["genes"] = b.genes;
        j["gene_importance_sum"] = b.gene_importance_sum;
        j["gene_importance_avg"] = b.gene_importance_avg;
    }
    if (b.has_cross_attention()) {
        j["cross_attention"] = matrix_json(b.cross_attention);
        j["fusion_gate"] = b.fusion_gate;
    }
    return j;
}

} // namespace protopath::interpret
