#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "protopath/core/error.hpp"
#include "protopath/curation/gene_set.hpp"

namespace protopath::curation {

/// Gene and pathway nodes joined by bidirectional membership edges.
///
/// Node ids used by the message-passing encoder place genes first
/// (0..G-1) and pathways after them (G..G+P-1). Both indices are assigned in
/// sorted symbol/id order, so the graph is a pure function of its memberships.
class BipartiteGraph {
public:
    BipartiteGraph() = default;

    /// Memberships as (gene symbol, pathway id) pairs; duplicates collapse.
    static BipartiteGraph from_memberships(std::vector<std::pair<std::string, std::string>> pairs) {
        std::sort(pairs.begin(), pairs.end());
        pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
        BipartiteGraph g;
        for (const auto& [gene, pathway] : pairs) {
            g.genes_.push_back(gene);
            g.pathways_.push_back(pathway);
        }
        normalize_genes(g.genes_);
        normalize_genes(g.pathways_);
        for (std::size_t i = 0; i < g.genes_.size(); ++i) g.gene_index_[g.genes_[i]] = i;
        for (std::size_t i = 0; i < g.pathways_.size(); ++i) g.pathway_index_[g.pathways_[i]] = i;
        for (const auto& [gene, pathway] : pairs)
            g.memberships_.emplace_back(g.gene_index_.at(gene), g.pathway_index_.at(pathway));
        std::sort(g.memberships_.begin(), g.memberships_.end(), [](const auto& a, const auto& b) {
            return a.second != b.second ? a.second < b.second : a.first < b.first;
        });
        g.build_directed_edges();
        return g;
    }

    static BipartiteGraph from_gene_sets(const std::vector<GeneSet>& sets) {
        std::vector<std::pair<std::string, std::string>> pairs;
        for (const auto& s : sets)
            for (const auto& gene : s.genes) pairs.emplace_back(gene, s.id);
        return from_memberships(std::move(pairs));
    }

    std::size_t num_genes() const noexcept { return genes_.size(); }
    std::size_t num_pathways() const noexcept { return pathways_.size(); }
    std::size_t num_nodes() const noexcept { return genes_.size() + pathways_.size(); }
    /// One bidirectional edge per membership.
    std::size_t num_memberships() const noexcept { return memberships_.size(); }

    const std::vector<std::string>& genes() const noexcept { return genes_; }
    const std::vector<std::string>& pathways() const noexcept { return pathways_; }
    /// (gene index, pathway index), sorted by pathway then gene.
    const std::vector<std::pair<std::size_t, std::size_t>>& memberships() const noexcept { return memberships_; }

    bool has_gene(const std::string& g) const { return gene_index_.count(g) != 0; }
    bool has_pathway(const std::string& p) const { return pathway_index_.count(p) != 0; }
    std::size_t gene_index(const std::string& g) const {
        auto it = gene_index_.find(g);
        if (it == gene_index_.end()) throw IndexError("unknown gene " + g);
        return it->second;
    }
    std::size_t pathway_index(const std::string& p) const {
        auto it = pathway_index_.find(p);
        if (it == pathway_index_.end()) throw IndexError("unknown pathway " + p);
        return it->second;
    }

    std::size_t pathway_node(std::size_t p) const noexcept { return genes_.size() + p; }

    /// Directed edge list: for membership m, edge 2m is gene -> pathway and
    /// edge 2m+1 is pathway -> gene.
    const std::vector<std::size_t>& edge_src() const noexcept { return src_; }
    const std::vector<std::size_t>& edge_dst() const noexcept { return dst_; }
    std::size_t num_directed_edges() const noexcept { return src_.size(); }

    std::vector<std::size_t> pathway_genes(std::size_t p) const {
        std::vector<std::size_t> out;
        for (const auto& [g, q] : memberships_)
            if (q == p) out.push_back(g);
        return out;
    }

    std::vector<std::size_t> gene_degree() const {
        std::vector<std::size_t> deg(genes_.size(), 0);
        for (const auto& m : memberships_) ++deg[m.first];
        return deg;
    }

    std::vector<std::size_t> pathway_degree() const {
        std::vector<std::size_t> deg(pathways_.size(), 0);
        for (const auto& m : memberships_) ++deg[m.second];
        return deg;
    }

    /// Throws StructuralError if a documented invariant does not hold.
    void validate(std::size_t min_pathway_genes = 1) const {
        for (std::size_t d : gene_degree())
            if (d == 0) throw StructuralError("gene node without edges");
        const auto pdeg = pathway_degree();
        for (std::size_t p = 0; p < pdeg.size(); ++p)
            if (pdeg[p] < min_pathway_genes)
                throw StructuralError("pathway " + pathways_[p] + " has fewer than " +
                                      std::to_string(min_pathway_genes) + " genes");
        if (src_.size() != 2 * memberships_.size()) throw StructuralError("edge list is not bidirectional");
    }

private:
    void build_directed_edges() {
        src_.clear();
        dst_.clear();
        for (const auto& [g, p] : memberships_) {
            src_.push_back(g);
            dst_.push_back(pathway_node(p));
            src_.push_back(pathway_node(p));
            dst_.push_back(g);
        }
    }

    std::vector<std::string> genes_;
    std::vector<std::string> pathways_;
    std::map<std::string, std::size_t> gene_index_;
    std::map<std::string, std::size_t> pathway_index_;
    std::vector<std::pair<std::size_t, std::size_t>> memberships_;
    std::vector<std::size_t> src_;
    std::vector<std::size_t> dst_;
};

} // namespace protopath::curation
