#pragma once

#include <map>
#include <string>
#include <vector>

#include "protopath/interpret/signals.hpp"
#include "protopath/stats/statistics.hpp"
#include "protopath/train/harness.hpp"

namespace protopath::interpret {

/// One inference pass for a patient: risk, survival curve and all signals.
struct PatientSignals {
    std::string patient_id;
    double risk = 0.0;
    std::vector<double> survival;
    SignalBundle bundle;
};

inline std::vector<PatientSignals> collect_signals(const model::SurvivalModel& m, const train::Cohort& c,
                                                   const std::vector<std::string>& ids) {
    std::vector<PatientSignals> out;
    Rng unused(0);
    for (const auto& id : ids) {
        const std::size_t i = c.index_of(id);
        ad::Tape tape;
        ad::ParamBinding p(tape, m.params());
        auto fw = m.forward(tape, p, train::patient_input(m, c, i), unused, false);
        PatientSignals s;
        s.patient_id = id;
        s.survival = survival::survival_curve(fw.logits.value().values());
        s.risk = survival::risk_score(s.survival);
        s.bundle = extract_signals(fw, c.graph.get(), false);
        out.push_back(std::move(s));
    }
    return out;
}

/// Signals of one fold's validation patients.
struct FoldBundles {
    int fold = 0;
    std::vector<PatientSignals> patients;
};

/// Entity matrix for one analysis family. Kinds indexed by pathway or
/// prototype split into several families: within_pathway_genes has one per
/// pathway (its member genes), cross_attention_row one per prototype (its
/// row over pathways). `group` names the family; it is empty otherwise.
struct EntityFamily {
    std::string group;
    stats::FoldSignals signals;
};

inline std::string prototype_label(std::size_t k) { return "k" + std::to_string(k); }

inline std::vector<EntityFamily> entity_families(stats::EntityKind kind, const FoldBundles& fb) {
    using stats::EntityKind;
    std::vector<EntityFamily> out;
    if (fb.patients.empty()) return out;
    const SignalBundle& first = fb.patients.front().bundle;
    auto need = [&](bool ok, const char* what) {
        if (!ok) throw ContractError("entity kind '" + stats::to_string(kind) + "' needs " + what);
    };
    auto simple = [&](std::vector<std::string> entities, auto value_of) {
        EntityFamily f;
        f.signals.fold = fb.fold;
        f.signals.entities = std::move(entities);
        for (const auto& p : fb.patients) {
            f.signals.values.push_back(value_of(p.bundle));
            f.signals.risks.push_back(p.risk);
        }
        out.push_back(std::move(f));
    };
    auto prototype_ids = [](std::size_t k) {
        std::vector<std::string> ids;
        for (std::size_t j = 0; j < k; ++j) ids.push_back(prototype_label(j));
        return ids;
    };

    switch (kind) {
    case EntityKind::pathway_gate:
        need(first.has_genomic(), "the genomic branch");
        simple(first.pathways, [](const SignalBundle& b) { return b.pathway_gate; });
        break;
    case EntityKind::gene_importance:
        need(first.has_genomic(), "the genomic branch");
        simple(first.genes, [](const SignalBundle& b) { return b.gene_importance_sum; });
        break;
    case EntityKind::prototype_gate:
        need(first.has_wsi(), "the WSI branch");
        simple(prototype_ids(first.wsi_gate.size()), [](const SignalBundle& b) { return b.wsi_gate; });
        break;
    case EntityKind::fusion_gate:
        need(first.has_cross_attention(), "cross-attention fusion");
        simple(prototype_ids(first.fusion_gate.size()), [](const SignalBundle& b) { return b.fusion_gate; });
        break;
    case EntityKind::within_pathway_genes: {
        need(first.has_genomic(), "the genomic branch");
        std::map<std::size_t, std::vector<std::size_t>> members; // pathway -> membership slots
        for (std::size_t m = 0; m < first.memberships.size(); ++m) members[first.memberships[m].second].push_back(m);
        for (const auto& [p, slots] : members) {
            if (slots.size() < 2) continue; // a single gene has nothing to be ranked against
            EntityFamily f;
            f.group = first.pathways[p];
            f.signals.fold = fb.fold;
            for (std::size_t m : slots) f.signals.entities.push_back(first.genes[first.memberships[m].first]);
            for (const auto& pt : fb.patients) {
                std::vector<double> row;
                for (std::size_t m : slots) row.push_back(pt.bundle.gene_pathway_attention[m]);
                f.signals.values.push_back(std::move(row));
                f.signals.risks.push_back(pt.risk);
            }
            out.push_back(std::move(f));
        }
        break;
    }
    case EntityKind::cross_attention_row:
        need(first.has_cross_attention(), "cross-attention fusion");
        for (std::size_t k = 0; k < first.cross_attention.rows(); ++k) {
            EntityFamily f;
            f.group = prototype_label(k);
            f.signals.fold = fb.fold;
            f.signals.entities = first.pathways;
            for (const auto& pt : fb.patients) {
                f.signals.values.push_back(pt.bundle.prototype_profile(k));
                f.signals.risks.push_back(pt.risk);
            }
            out.push_back(std::move(f));
        }
        break;
    }
    return out;
}

struct FamilyResult {
    std::string group;
    stats::AnalysisResult result;
};

/// Fold-stratified analysis of every family. With several families, FDR
/// control runs once over all combined entities of the kind.
inline std::vector<FamilyResult> analyze_kind(stats::EntityKind kind, const std::vector<FoldBundles>& folds, bool combine,
                                              double alpha = 0.05) {
    if (combine && stats::is_prototype_indexed(kind))
        throw ContractError("cross-fold combination is not defined for prototype-indexed entity kind '" +
                            stats::to_string(kind) + "'");
    std::map<std::string, std::vector<stats::FoldSignals>> by_group;
    std::vector<std::string> order;
    for (const auto& fb : folds)
        for (auto& fam : entity_families(kind, fb)) {
            if (!by_group.count(fam.group)) order.push_back(fam.group);
            by_group[fam.group].push_back(std::move(fam.signals));
        }
    std::vector<FamilyResult> out;
    for (const auto& g : order) out.push_back({g, stats::fold_stratified_analysis(by_group[g], kind, combine, alpha)});
    if (combine && out.size() > 1) {
        std::vector<double> ps;
        std::vector<stats::MetaResult*> slots;
        for (auto& fr : out)
            for (auto& m : fr.result.meta)
                if (m.combinable) {
                    ps.push_back(m.p);
                    slots.push_back(&m);
                }
        const auto bh = stats::bh_fdr(ps, alpha);
        for (std::size_t i = 0; i < slots.size(); ++i) {
            slots[i]->q = bh.q[i];
            slots[i]->significant = bh.significant[i];
        }
    }
    return out;
}

/// Flattens families into one table; entity names become "group:entity".
inline stats::AnalysisResult flatten(const std::vector<FamilyResult>& families, stats::EntityKind kind) {
    stats::AnalysisResult all;
    all.kind = kind;
    std::set<int> excluded;
    for (const auto& fr : families) {
        const std::string prefix = fr.group.empty() ? "" : fr.group + ":";
        for (auto t : fr.result.per_fold) {
            t.entity = prefix + t.entity;
            all.per_fold.push_back(std::move(t));
        }
        for (auto m : fr.result.meta) {
            m.entity = prefix + m.entity;
            all.meta.push_back(std::move(m));
        }
        excluded.insert(fr.result.excluded_folds.begin(), fr.result.excluded_folds.end());
    }
    all.excluded_folds.assign(excluded.begin(), excluded.end());
    return all;
}

/// Per-prototype pathway rank differences of one fold, for pathway overlays.
inline PrototypeRankStats rank_stats_for_fold(const FoldBundles& fb) {
    std::map<std::size_t, std::vector<stats::FoldTestResult>> per_proto;
    auto res = analyze_kind(stats::EntityKind::cross_attention_row, {fb}, false);
    for (auto& fr : res) per_proto[std::stoul(fr.group.substr(1))] = std::move(fr.result.per_fold);
    return rank_stats_from_tests(per_proto);
}

} // namespace protopath::interpret
