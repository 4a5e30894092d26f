#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "protopath/core/error.hpp"
#include "protopath/core/rng.hpp"
#include "protopath/curation/bipartite_graph.hpp"
#include "protopath/prototype/patch_bag.hpp"
#include "protopath/survival/survival.hpp"

namespace protopath::train {

using ad::NdArray;
using curation::BipartiteGraph;
using prototype::PatchBag;
using survival::SurvivalRecord;

/// Patient-aligned data. bags and expression are either empty (branch
/// unavailable) or hold one entry per patient; expression columns follow
/// graph->genes().
struct Cohort {
    std::shared_ptr<const BipartiteGraph> graph;
    std::vector<std::string> patient_ids;
    std::vector<PatchBag> bags;
    std::vector<std::vector<double>> expression;
    std::vector<SurvivalRecord> records;

    std::size_t size() const { return patient_ids.size(); }
    bool has_patches() const { return !bags.empty(); }
    bool has_expression() const { return !expression.empty(); }
    std::size_t input_dim() const { return bags.empty() ? 0 : bags.front().dim(); }

    std::size_t index_of(const std::string& id) const {
        auto it = std::find(patient_ids.begin(), patient_ids.end(), id);
        if (it == patient_ids.end()) throw AlignmentError("unknown patient " + id);
        return std::size_t(it - patient_ids.begin());
    }

    void validate() const {
        const std::size_t n = patient_ids.size();
        if (records.size() != n) throw AlignmentError("survival records do not match patient list");
        if (std::set<std::string>(patient_ids.begin(), patient_ids.end()).size() != n)
            throw AlignmentError("duplicate patient id");
        for (std::size_t i = 0; i < n; ++i) {
            if (records[i].patient_id != patient_ids[i])
                throw AlignmentError("record " + records[i].patient_id + " out of order with patient " + patient_ids[i]);
            survival::validate(records[i]);
        }
        if (!bags.empty()) {
            if (bags.size() != n) throw AlignmentError("patch bags do not match patient list");
            for (std::size_t i = 0; i < n; ++i) {
                bags[i].validate();
                if (bags[i].dim() != input_dim()) throw DimensionError("patch feature dim differs across patients");
            }
        }
        if (!expression.empty()) {
            if (!graph) throw ContractError("expression without a gene-pathway graph");
            if (expression.size() != n) throw AlignmentError("expression rows do not match patient list");
            for (const auto& row : expression)
                if (row.size() != graph->num_genes())
                    throw AlignmentError("expression row has " + std::to_string(row.size()) + " genes, graph has " +
                                         std::to_string(graph->num_genes()));
        }
    }
};

struct FoldSplit {
    int fold = 0;
    std::vector<std::string> train;
    std::vector<std::string> validation;
};

/// Shuffled round-robin assignment to folds.
inline std::vector<FoldSplit> make_folds(const std::vector<std::string>& ids, std::size_t folds, std::uint64_t seed) {
    if (folds < 2 || folds > ids.size())
        throw ConfigError("cannot split " + std::to_string(ids.size()) + " patients into " + std::to_string(folds) + " folds");
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, 0xF01D));
    rng.shuffle(order);
    std::vector<std::size_t> fold_of(ids.size());
    for (std::size_t i = 0; i < order.size(); ++i) fold_of[order[i]] = i % folds;
    std::vector<FoldSplit> out(folds);
    for (std::size_t f = 0; f < folds; ++f) {
        out[f].fold = int(f);
        for (std::size_t i = 0; i < ids.size(); ++i) (fold_of[i] == f ? out[f].validation : out[f].train).push_back(ids[i]);
    }
    return out;
}

inline void validate_split(const FoldSplit& s, const Cohort& c) {
    std::set<std::string> seen;
    for (const auto& id : s.train) {
        c.index_of(id);
        if (!seen.insert(id).second) throw AlignmentError("patient " + id + " listed twice in fold " + std::to_string(s.fold));
    }
    for (const auto& id : s.validation) {
        c.index_of(id);
        if (!seen.insert(id).second) throw AlignmentError("patient " + id + " is in both training and validation");
    }
}

struct SyntheticCohortSpec {
    std::size_t n_patients = 60;
    std::size_t genes = 60;
    std::size_t pathways = 12;
    std::uint64_t graph_seed = 7;
    std::size_t clusters = 4;
    std::size_t planted_pathway = 0;
    std::size_t planted_size = 8;
    std::size_t max_pathway_size = 12;
    double signal = 1.0;
    double censoring = 0.3;
    std::size_t feature_dim = 16;
    std::size_t min_patches = 16;
    std::size_t max_patches = 48;
    std::uint64_t seed = 42;

    void validate() const {
        if (n_patients < 4) throw ConfigError("synthetic cohort needs at least 4 patients");
        if (pathways < 1 || genes < 3) throw ConfigError("synthetic graph needs >= 1 pathway and >= 3 genes");
        if (planted_pathway >= pathways)
            throw ConfigError("planted pathway " + std::to_string(planted_pathway) + " does not exist among " +
                              std::to_string(pathways) + " pathways");
        if (planted_size < 1 || planted_size > genes)
            throw ConfigError("planted pathway size " + std::to_string(planted_size) + " exceeds gene count " +
                              std::to_string(genes));
        if (max_pathway_size < 3 || max_pathway_size > genes) throw ConfigError("max_pathway_size must lie in [3, genes]");
        if (clusters < 1 || feature_dim < 1) throw ConfigError("need >= 1 cluster and feature dim >= 1");
        if (min_patches < 1 || max_patches < min_patches) throw ConfigError("invalid patch count range");
        if (!(signal >= 0.0)) throw ConfigError("signal strength must be >= 0");
        if (!(censoring >= 0.0 && censoring < 1.0)) throw ConfigError("censoring rate must lie in [0, 1)");
    }
};

struct SyntheticTruth {
    std::vector<double> risk;
    std::string planted_pathway;
    std::vector<std::string> planted_genes;
    std::vector<std::vector<std::size_t>> cluster_labels;
};

struct SyntheticCohort {
    Cohort cohort;
    SyntheticTruth truth;
};

inline std::string synthetic_pathway_id(std::size_t p) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "SYN-%03zu", p);
    return buf;
}

inline std::string synthetic_gene_id(std::size_t g) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "G%04zu", g);
    return buf;
}

/// Random bipartite graph, latent patient risk, planted-pathway expression,
/// risk-dependent morphology mixtures and exponential survival times.
inline SyntheticCohort generate_synthetic_cohort(const SyntheticCohortSpec& spec) {
    spec.validate();
    SyntheticCohort out;

    Rng grng(spec.graph_seed);
    std::vector<std::pair<std::string, std::string>> pairs;
    std::vector<bool> covered(spec.genes, false);
    auto pick = [&](std::size_t count) {
        std::vector<std::size_t> all(spec.genes);
        std::iota(all.begin(), all.end(), 0);
        grng.shuffle(all);
        all.resize(count);
        std::sort(all.begin(), all.end());
        return all;
    };
    for (std::size_t p = 0; p < spec.pathways; ++p) {
        const std::size_t size =
            p == spec.planted_pathway ? spec.planted_size : 3 + grng.index(spec.max_pathway_size - 3 + 1);
        for (std::size_t g : pick(size)) {
            pairs.emplace_back(synthetic_gene_id(g), synthetic_pathway_id(p));
            covered[g] = true;
            if (p == spec.planted_pathway) out.truth.planted_genes.push_back(synthetic_gene_id(g));
        }
    }
    for (std::size_t g = 0; g < spec.genes; ++g) {
        if (covered[g]) continue;
        std::size_t p = grng.index(spec.pathways);
        if (p == spec.planted_pathway && spec.pathways > 1) p = (p + 1) % spec.pathways;
        pairs.emplace_back(synthetic_gene_id(g), synthetic_pathway_id(p));
        if (p == spec.planted_pathway) out.truth.planted_genes.push_back(synthetic_gene_id(g));
    }
    auto graph = std::make_shared<BipartiteGraph>(BipartiteGraph::from_memberships(pairs));
    out.truth.planted_pathway = synthetic_pathway_id(spec.planted_pathway);
    std::sort(out.truth.planted_genes.begin(), out.truth.planted_genes.end());

    std::vector<bool> planted(graph->num_genes(), false);
    for (const auto& g : out.truth.planted_genes) planted[graph->gene_index(g)] = true;

    Rng rng(spec.seed);
    NdArray means({spec.clusters, spec.feature_dim});
    for (double& v : means.data()) v = 2.0 * rng.normal();
    std::vector<double> tilt(spec.clusters, 0.0);
    for (std::size_t k = 0; k < spec.clusters && spec.clusters > 1; ++k) tilt[k] = -1.5 + 3.0 * double(k) / double(spec.clusters - 1);

    Cohort& c = out.cohort;
    c.graph = graph;
    for (std::size_t i = 0; i < spec.n_patients; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "SYN-%04zu", i);
        c.patient_ids.push_back(id);
        const double z = rng.normal();
        out.truth.risk.push_back(z);

        std::vector<double> expr(graph->num_genes());
        for (std::size_t g = 0; g < expr.size(); ++g) expr[g] = rng.normal() + (planted[g] ? spec.signal * z : 0.0);
        c.expression.push_back(std::move(expr));

        std::vector<double> w(spec.clusters);
        double wsum = 0.0;
        for (std::size_t k = 0; k < spec.clusters; ++k) wsum += w[k] = std::exp(spec.signal * z * tilt[k]);
        const std::size_t n = spec.min_patches + rng.index(spec.max_patches - spec.min_patches + 1);
        PatchBag bag;
        bag.patient_id = id;
        bag.slide_id = std::string(id) + "-S1";
        bag.features = NdArray({n, spec.feature_dim});
        std::vector<std::size_t> labels;
        for (std::size_t m = 0; m < n; ++m) {
            double u = rng.uniform() * wsum;
            std::size_t k = 0;
            while (k + 1 < spec.clusters && (u -= w[k]) > 0.0) ++k;
            labels.push_back(k);
            for (std::size_t j = 0; j < spec.feature_dim; ++j) bag.features(m, j) = means(k, j) + 0.5 * rng.normal();
            bag.coords.emplace_back(double(224 * (m % 16)), double(224 * (m / 16)));
        }
        c.bags.push_back(std::move(bag));
        out.truth.cluster_labels.push_back(std::move(labels));

        const double t_event = -std::log(1.0 - rng.uniform()) / (0.1 * std::exp(spec.signal * z));
        const bool censored = rng.bernoulli(spec.censoring);
        const double t = censored ? t_event * std::max(rng.uniform(), 1e-3) : t_event;
        c.records.push_back({id, t, !censored});
    }
    c.validate();
    return out;
}

} // namespace protopath::train
