#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "protopath/core/error.hpp"
#include "protopath/curation/bipartite_graph.hpp"
#include "protopath/curation/gene_set.hpp"
#include "protopath/curation/hierarchy.hpp"

namespace protopath::curation {

/// Top-level Reactome categories removed by default.
inline const std::vector<std::string>& default_excluded_categories() {
    static const std::vector<std::string> names{
        "Drug ADME",
        "Disease",
        "Metabolism of proteins",
        "Gene expression (Transcription)",
        "Organelle biogenesis and maintenance",
        "Protein localization",
        "Transport of small molecules",
        "Vesicle-mediated transport",
        "DNA Replication",
        "Neuronal System",
        "Sensory Perception",
        "Muscle contraction",
        "Digestion and absorption",
        "Reproduction",
        "Circadian clock",
        "Metabolism",
        "Developmental Biology",
    };
    return names;
}

struct CurationConfig {
    std::size_t target_depth = 5;
    std::size_t min_genes = 3;
    std::size_t max_genes = 200;
    double jaccard_threshold = 1.0;
    std::vector<std::string> excluded_categories = default_excluded_categories();
    std::size_t min_coverage_genes = 2;
    /// Fraction of pathways kept by the optional activity-variance filter.
    double variance_keep_fraction = 1.0;
    std::string species_prefix = "R-HSA";

    void validate() const {
        if (min_genes < 1) throw ConfigError("min_genes must be >= 1");
        if (max_genes < min_genes) throw ConfigError("max_genes must be >= min_genes");
        if (!(jaccard_threshold > 0.0 && jaccard_threshold <= 1.0))
            throw ConfigError("jaccard_threshold must lie in (0, 1]");
        if (target_depth < 1) throw ConfigError("target_depth must be >= 1");
        if (!(variance_keep_fraction > 0.0 && variance_keep_fraction <= 1.0))
            throw ConfigError("variance_keep_fraction must lie in (0, 1]");
    }

    /// Parameter-encoded base name, e.g. pathways_base_d5_g3-200_j100.
    std::string base_filename() const {
        return "pathways_base_d" + std::to_string(target_depth) + "_g" + std::to_string(min_genes) + "-" +
               std::to_string(max_genes) + "_j" + std::to_string(static_cast<int>(jaccard_threshold * 100));
    }
};

// ---------------------------------------------------------------------------
// Stage 1 operations

/// Keep a node at exactly the target depth, or a leaf above it.
inline std::vector<GeneSet> select_by_depth(const HierarchyDag& dag, const std::vector<GeneSet>& sets,
                                            std::size_t target_depth) {
    std::vector<GeneSet> out;
    for (const auto& s : sets) {
        const std::size_t d = dag.depth(s.id);
        if (d == target_depth || (d < target_depth && dag.is_leaf(s.id))) out.push_back(s);
    }
    return out;
}

struct CategoryFilterResult {
    std::vector<GeneSet> kept;
    std::vector<std::string> warnings;
};

inline CategoryFilterResult exclude_categories(const std::vector<GeneSet>& sets, const HierarchyDag& dag,
                                               const std::vector<std::string>& excluded) {
    CategoryFilterResult r;
    const std::set<std::string> drop(excluded.begin(), excluded.end());
    const auto known = dag.root_category_names();
    for (const auto& name : drop)
        if (!known.count(name)) r.warnings.push_back("excluded category not found among roots: " + name);
    for (const auto& s : sets)
        if (!drop.count(dag.top_category(s.id))) r.kept.push_back(s);
    return r;
}

inline std::vector<GeneSet> filter_size(const std::vector<GeneSet>& sets, std::size_t min_genes,
                                        std::size_t max_genes) {
    std::vector<GeneSet> out;
    for (const auto& s : sets)
        if (s.size() >= min_genes && s.size() <= max_genes) out.push_back(s);
    return out;
}

struct MergeResult {
    std::vector<GeneSet> merged;
    std::vector<std::pair<std::string, std::string>> removed; // reactome id, hallmark id
};

/// Union of both collections minus Reactome sets identical to a Hallmark set.
inline MergeResult merge_hallmark(const std::vector<GeneSet>& reactome, const std::vector<GeneSet>& hallmark) {
    std::set<std::string> ids;
    for (const auto& s : reactome) ids.insert(s.id);
    for (const auto& h : hallmark)
        if (ids.count(h.id)) throw InputError("Hallmark id collides with Reactome id: " + h.id);
    MergeResult r;
    for (const auto& s : reactome) {
        auto dup = std::find_if(hallmark.begin(), hallmark.end(), [&](const GeneSet& h) { return h.genes == s.genes; });
        if (dup != hallmark.end())
            r.removed.emplace_back(s.id, dup->id);
        else
            r.merged.push_back(s);
    }
    for (const auto& h : hallmark) {
        GeneSet copy = h;
        copy.source = Source::Hallmark;
        r.merged.push_back(std::move(copy));
    }
    return r;
}

struct DedupResult {
    std::vector<GeneSet> kept;
    std::vector<std::pair<std::string, std::string>> removed; // removed id, representative id
};

/// Redundancy removal. Candidates are visited in priority order (leaf before
/// internal, deeper first, larger first, then id) and a set is kept unless it
/// reaches the threshold against an already kept set. Hallmark sets rank as
/// leaves at depth 0. Output is sorted by id, so the result does not depend
/// on input order.
inline DedupResult dedup_jaccard(const std::vector<GeneSet>& sets, const HierarchyDag& dag, double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0)) throw ParameterError("dedup_jaccard: threshold must lie in (0, 1]");
    struct Key {
        bool leaf;
        std::size_t depth;
        std::size_t size;
        const GeneSet* set;
    };
    std::vector<Key> keys;
    keys.reserve(sets.size());
    for (const auto& s : sets) {
        const bool hallmark = s.source == Source::Hallmark || !dag.contains(s.id);
        keys.push_back({hallmark ? true : dag.is_leaf(s.id), hallmark ? 0 : dag.depth(s.id), s.size(), &s});
    }
    std::sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
        if (a.leaf != b.leaf) return a.leaf;
        if (a.depth != b.depth) return a.depth > b.depth;
        if (a.size != b.size) return a.size > b.size;
        return a.set->id < b.set->id;
    });
    DedupResult r;
    std::vector<const GeneSet*> kept;
    for (const auto& k : keys) {
        const GeneSet* rep = nullptr;
        for (const GeneSet* other : kept)
            if (jaccard(*k.set, *other) >= threshold) {
                rep = other;
                break;
            }
        if (rep)
            r.removed.emplace_back(k.set->id, rep->id);
        else
            kept.push_back(k.set);
    }
    for (const GeneSet* s : kept) r.kept.push_back(*s);
    sort_by_id(r.kept);
    std::sort(r.removed.begin(), r.removed.end());
    return r;
}

// ---------------------------------------------------------------------------
// Stage 2 operations

struct CoverageResult {
    std::vector<GeneSet> kept;
    std::vector<std::string> dropped;
};

/// Intersects each pathway with the measured genes; drops pathways left with
/// fewer than `min_coverage_genes`.
inline CoverageResult coverage_filter(const std::vector<GeneSet>& sets, const std::vector<std::string>& measured_genes,
                                      std::size_t min_coverage_genes) {
    if (measured_genes.empty()) throw InputError("coverage_filter: measured gene list is empty");
    std::vector<std::string> measured = measured_genes;
    normalize_genes(measured);
    CoverageResult r;
    for (const auto& s : sets) {
        GeneSet c = s;
        c.genes.clear();
        std::set_intersection(s.genes.begin(), s.genes.end(), measured.begin(), measured.end(),
                              std::back_inserter(c.genes));
        if (c.genes.size() >= min_coverage_genes)
            r.kept.push_back(std::move(c));
        else
            r.dropped.push_back(s.id);
    }
    return r;
}

/// Optional activity-variance filter. Pathway activity per patient is the
/// mean of its genes' expression; the top `keep_fraction` of pathways by
/// activity variance survive (ties broken by id). keep_fraction = 1 keeps all.
/// `expression` is patients x genes aligned with `genes`.
inline std::vector<GeneSet> variance_filter(const std::vector<GeneSet>& sets, const std::vector<std::string>& genes,
                                            const std::vector<std::vector<double>>& expression, double keep_fraction) {
    if (keep_fraction >= 1.0) return sets;
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < genes.size(); ++i) col[genes[i]] = i;
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t s = 0; s < sets.size(); ++s) {
        std::vector<double> activity;
        for (const auto& row : expression) {
            double acc = 0.0;
            std::size_t n = 0;
            for (const auto& g : sets[s].genes) {
                auto it = col.find(g);
                if (it == col.end()) continue;
                acc += row[it->second];
                ++n;
            }
            activity.push_back(n ? acc / static_cast<double>(n) : 0.0);
        }
        const double mean = activity.empty() ? 0.0
                                              : std::accumulate(activity.begin(), activity.end(), 0.0) /
                                                    static_cast<double>(activity.size());
        double var = 0.0;
        for (double a : activity) var += (a - mean) * (a - mean);
        scored.emplace_back(activity.empty() ? 0.0 : var / static_cast<double>(activity.size()), s);
    }
    std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return sets[a.second].id < sets[b.second].id;
    });
    const auto keep = static_cast<std::size_t>(std::ceil(keep_fraction * static_cast<double>(sets.size())));
    std::vector<GeneSet> out;
    for (std::size_t i = 0; i < keep && i < scored.size(); ++i) out.push_back(sets[scored[i].second]);
    sort_by_id(out);
    return out;
}

inline BipartiteGraph build_bipartite(const std::vector<GeneSet>& sets) { return BipartiteGraph::from_gene_sets(sets); }

// ---------------------------------------------------------------------------
// Pipelines and manifests

/// Summary statistics of a pathway vocabulary.
inline nlohmann::ordered_json vocabulary_stats(const std::vector<GeneSet>& sets) {
    std::map<std::string, std::size_t> per_gene;
    std::vector<double> sizes;
    std::size_t reactome = 0, hallmark = 0;
    for (const auto& s : sets) {
        (s.source == Source::Reactome ? reactome : hallmark)++;
        sizes.push_back(static_cast<double>(s.size()));
        for (const auto& g : s.genes) ++per_gene[g];
    }
    std::sort(sizes.begin(), sizes.end());
    double median = 0.0;
    if (!sizes.empty())
        median = sizes.size() % 2 ? sizes[sizes.size() / 2]
                                  : 0.5 * (sizes[sizes.size() / 2 - 1] + sizes[sizes.size() / 2]);
    const double total_members = std::accumulate(sizes.begin(), sizes.end(), 0.0);
    std::size_t single = 0, ten_plus = 0;
    for (const auto& [g, n] : per_gene) {
        single += n == 1;
        ten_plus += n >= 10;
    }
    nlohmann::ordered_json j;
    j["total_pathways"] = sets.size();
    j["reactome_pathways"] = reactome;
    j["hallmark_pathways"] = hallmark;
    j["unique_genes"] = per_gene.size();
    j["memberships"] = static_cast<std::size_t>(total_members);
    j["mean_genes_per_pathway"] = sets.empty() ? 0.0 : total_members / static_cast<double>(sets.size());
    j["median_genes_per_pathway"] = median;
    j["mean_pathways_per_gene"] = per_gene.empty() ? 0.0 : total_members / static_cast<double>(per_gene.size());
    j["genes_in_single_pathway"] = single;
    j["genes_in_10_plus_pathways"] = ten_plus;
    return j;
}

inline nlohmann::ordered_json config_json(const CurationConfig& c) {
    nlohmann::ordered_json j;
    j["target_depth"] = c.target_depth;
    j["min_genes"] = c.min_genes;
    j["max_genes"] = c.max_genes;
    j["jaccard_threshold"] = c.jaccard_threshold;
    j["excluded_categories"] = c.excluded_categories;
    j["min_coverage_genes"] = c.min_coverage_genes;
    j["variance_keep_fraction"] = c.variance_keep_fraction;
    j["species_prefix"] = c.species_prefix;
    return j;
}

struct StageCount {
    std::string stage;
    std::size_t pathways;
};

struct CurationManifest {
    CurationConfig config;
    std::vector<StageCount> stages;
    std::vector<std::string> warnings;
    std::map<std::string, std::string> input_digests;
    nlohmann::ordered_json extra = nlohmann::ordered_json::object();

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["config"] = config_json(config);
        j["stages"] = nlohmann::ordered_json::array();
        for (const auto& s : stages) j["stages"].push_back({{"stage", s.stage}, {"pathways", s.pathways}});
        j["warnings"] = warnings;
        j["input_digests"] = input_digests;
        for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
        return j;
    }

    std::size_t count(const std::string& stage) const {
        for (const auto& s : stages)
            if (s.stage == stage) return s.pathways;
        throw ContractError("no stage named " + stage);
    }
};

struct Stage1Inputs {
    std::vector<GeneSet> reactome;
    std::vector<Relation> relations;
    std::vector<GeneSet> hallmark;
    std::map<std::string, std::string> names; // optional extra node names
};

struct Stage1Result {
    std::vector<GeneSet> pathways;
    HierarchyDag dag;
    CurationManifest manifest;
    std::vector<std::pair<std::string, std::string>> redundancy; // removed, representative
};

/// Base vocabulary: depth selection, category exclusion, size filter,
/// Hallmark supplementation, redundancy removal.
inline Stage1Result run_stage1(const Stage1Inputs& in, const CurationConfig& config) {
    config.validate();
    Stage1Result r;
    r.manifest.config = config;

    std::vector<GeneSet> loaded;
    for (const auto& s : in.reactome)
        if (s.id.starts_with(config.species_prefix)) loaded.push_back(s);
    sort_by_id(loaded);
    std::vector<std::string> ids;
    std::map<std::string, std::string> names = in.names;
    for (const auto& s : loaded) {
        ids.push_back(s.id);
        if (!names.count(s.id) && !s.name.empty()) names[s.id] = s.name;
    }
    r.dag = HierarchyDag(in.relations, ids);
    r.dag.set_names(names);
    r.dag.compute_depths();
    r.manifest.stages.push_back({"loaded", loaded.size()});

    auto depth_sel = select_by_depth(r.dag, loaded, config.target_depth);
    r.manifest.stages.push_back({"depth_selected", depth_sel.size()});

    auto cat = exclude_categories(depth_sel, r.dag, config.excluded_categories);
    r.manifest.warnings = cat.warnings;
    r.manifest.stages.push_back({"category_excluded", cat.kept.size()});

    auto sized = filter_size(cat.kept, config.min_genes, config.max_genes);
    r.manifest.stages.push_back({"size_filtered", sized.size()});

    auto hallmark = in.hallmark;
    sort_by_id(hallmark);
    auto merged = merge_hallmark(sized, hallmark);
    r.manifest.stages.push_back({"hallmark_merged", merged.merged.size()});

    auto dedup = dedup_jaccard(merged.merged, r.dag, config.jaccard_threshold);
    r.manifest.stages.push_back({"deduplicated", dedup.kept.size()});

    r.pathways = std::move(dedup.kept);
    r.redundancy = std::move(dedup.removed);
    for (const auto& [rid, hid] : merged.removed) r.redundancy.emplace_back(rid, hid);
    std::sort(r.redundancy.begin(), r.redundancy.end());

    r.manifest.extra["output_basename"] = config.base_filename();
    r.manifest.extra["leaf_evaluation"] = "full_dag";
    r.manifest.extra["base_statistics"] = vocabulary_stats(r.pathways);
    return r;
}

struct Stage2Result {
    std::vector<GeneSet> pathways;
    BipartiteGraph graph;
    CurationManifest manifest;
    std::vector<std::string> dropped;
};

/// Per-dataset adaptation: coverage filter, optional variance filter, graph.
/// Throws InputError listing the base genes when none is measured.
inline Stage2Result run_stage2(const std::vector<GeneSet>& base, const std::vector<std::string>& measured_genes,
                               const CurationConfig& config,
                               const std::vector<std::vector<double>>& expression = {}) {
    config.validate();
    std::set<std::string> base_genes;
    for (const auto& s : base) base_genes.insert(s.genes.begin(), s.genes.end());
    std::set<std::string> measured(measured_genes.begin(), measured_genes.end());
    std::vector<std::string> overlap;
    std::set_intersection(base_genes.begin(), base_genes.end(), measured.begin(), measured.end(),
                          std::back_inserter(overlap));
    if (overlap.empty()) {
        std::string missing;
        std::size_t shown = 0;
        for (const auto& g : base_genes) {
            if (shown++ == 20) {
                missing += ", ...";
                break;
            }
            missing += (missing.empty() ? "" : ", ") + g;
        }
        throw InputError("no pathway gene is measured in the expression data; missing: " + missing);
    }

    Stage2Result r;
    r.manifest.config = config;
    r.manifest.stages.push_back({"base", base.size()});
    auto cov = coverage_filter(base, measured_genes, config.min_coverage_genes);
    r.dropped = cov.dropped;
    r.manifest.stages.push_back({"coverage_filtered", cov.kept.size()});
    r.pathways = variance_filter(cov.kept, measured_genes, expression, config.variance_keep_fraction);
    r.manifest.stages.push_back({"variance_filtered", r.pathways.size()});
    r.graph = build_bipartite(r.pathways);
    r.graph.validate(config.min_coverage_genes);

    nlohmann::ordered_json g;
    g["input_genes"] = measured.size();
    g["genes"] = r.graph.num_genes();
    g["pathways"] = r.graph.num_pathways();
    g["bidirectional_edges"] = r.graph.num_memberships();
    g["directed_edges"] = r.graph.num_directed_edges();
    const double members = static_cast<double>(r.graph.num_memberships());
    g["mean_genes_per_pathway"] = r.graph.num_pathways() ? members / static_cast<double>(r.graph.num_pathways()) : 0.0;
    g["mean_pathways_per_gene"] = r.graph.num_genes() ? members / static_cast<double>(r.graph.num_genes()) : 0.0;
    r.manifest.extra["graph_statistics"] = g;
    r.manifest.extra["base_statistics"] = vocabulary_stats(base);
    r.manifest.extra["dropped_pathways"] = r.dropped;
    return r;
}

} // namespace protopath::curation
