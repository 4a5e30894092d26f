#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "protopath/core/error.hpp"
#include "protopath/curation/gene_set.hpp"

namespace protopath::curation {

using Relation = std::pair<std::string, std::string>; // parent, child

/// `parent<TAB>child` lines; only pairs where both ids carry the species
/// prefix are kept.
inline std::vector<Relation> parse_relations(std::string_view text, std::string_view species_prefix = "R-HSA") {
    std::vector<Relation> out;
    const auto all = detail::lines(text);
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (all[i].empty()) continue;
        const auto f = detail::split(all[i], '\t');
        if (f.size() != 2 || f[0].empty() || f[1].empty())
            throw ParseError("relations line must be parent<TAB>child", i + 1);
        if (f[0].starts_with(species_prefix) && f[1].starts_with(species_prefix))
            out.emplace_back(std::string(f[0]), std::string(f[1]));
    }
    return out;
}

/// Pathway membership hierarchy. Depths count from 1 at the roots and follow
/// the global shortest path when a node is reachable from several roots.
class HierarchyDag {
public:
    HierarchyDag() = default;

    /// `extra_nodes` adds ids with no relations (they become isolated roots).
    HierarchyDag(const std::vector<Relation>& edges, const std::vector<std::string>& extra_nodes = {}) {
        for (const auto& [p, c] : edges) {
            if (p == c) throw StructuralError("self-loop on " + p);
            nodes_.insert(p);
            nodes_.insert(c);
            children_[p].insert(c);
            parents_[c].insert(p);
        }
        nodes_.insert(extra_nodes.begin(), extra_nodes.end());
    }

    void set_names(std::map<std::string, std::string> names) { names_ = std::move(names); }

    const std::set<std::string>& nodes() const noexcept { return nodes_; }
    bool contains(const std::string& id) const { return nodes_.count(id) != 0; }
    bool is_leaf(const std::string& id) const {
        auto it = children_.find(id);
        return it == children_.end() || it->second.empty();
    }
    bool is_root(const std::string& id) const {
        auto it = parents_.find(id);
        return it == parents_.end() || it->second.empty();
    }

    /// Computes depth and top-level category for every node; throws on cycles.
    void compute_depths() {
        // Kahn's algorithm doubles as the cycle check and gives an order in
        // which every parent precedes its children.
        std::map<std::string, std::size_t> indegree;
        for (const auto& n : nodes_) indegree[n] = parents_.count(n) ? parents_.at(n).size() : 0;
        std::deque<std::string> queue;
        for (const auto& [n, d] : indegree)
            if (d == 0) queue.push_back(n);
        std::vector<std::string> order;
        while (!queue.empty()) {
            std::string n = queue.front();
            queue.pop_front();
            order.push_back(n);
            auto it = children_.find(n);
            if (it == children_.end()) continue;
            for (const auto& c : it->second)
                if (--indegree[c] == 0) queue.push_back(c);
        }
        if (order.size() != nodes_.size()) throw StructuralError("pathway hierarchy contains a cycle");

        depth_.clear();
        top_root_.clear();
        for (const auto& n : order) {
            if (is_root(n)) {
                depth_[n] = 1;
                top_root_[n] = n;
                continue;
            }
            std::size_t best = SIZE_MAX;
            std::string root;
            for (const auto& p : parents_.at(n)) {
                best = std::min(best, depth_.at(p) + 1);
                const std::string& r = top_root_.at(p);
                if (root.empty() || r < root) root = r;
            }
            depth_[n] = best;
            top_root_[n] = root;
        }
    }

    bool has_depths() const noexcept { return !depth_.empty() || nodes_.empty(); }

    std::size_t depth(const std::string& id) const {
        auto it = depth_.find(id);
        if (it == depth_.end()) throw ContractError("no depth for " + id + " (compute_depths not run or unknown id)");
        return it->second;
    }

    /// Lexicographically smallest root id among the node's root ancestors.
    const std::string& top_root(const std::string& id) const {
        auto it = top_root_.find(id);
        if (it == top_root_.end()) throw ContractError("no top category for " + id);
        return it->second;
    }

    /// Display name of the node's top-level ancestor (falls back to its id).
    std::string top_category(const std::string& id) const { return name_of(top_root(id)); }

    std::string name_of(const std::string& id) const {
        auto it = names_.find(id);
        return it == names_.end() ? id : it->second;
    }

    std::set<std::string> root_category_names() const {
        std::set<std::string> out;
        for (const auto& n : nodes_)
            if (is_root(n)) out.insert(name_of(n));
        return out;
    }

private:
    std::set<std::string> nodes_;
    std::map<std::string, std::set<std::string>> children_;
    std::map<std::string, std::set<std::string>> parents_;
    std::map<std::string, std::string> names_;
    std::map<std::string, std::size_t> depth_;
    std::map<std::string, std::string> top_root_;
};

/// Names for hierarchy nodes. Accepts Reactome's `id<TAB>name<TAB>species`
/// listing; lines with fewer than two fields are rejected.
inline std::map<std::string, std::string> parse_pathway_names(std::string_view text) {
    std::map<std::string, std::string> out;
    const auto all = detail::lines(text);
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (all[i].empty()) continue;
        const auto f = detail::split(all[i], '\t');
        if (f.size() < 2) throw ParseError("pathway names line must be id<TAB>name[<TAB>species]", i + 1);
        out[std::string(f[0])] = std::string(f[1]);
    }
    return out;
}

} // namespace protopath::curation
