#pragma once

#include <algorithm>
#include <cstddef>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "protopath/core/error.hpp"

namespace protopath::curation {

enum class Source { Reactome, Hallmark };

inline const char* to_string(Source s) { return s == Source::Reactome ? "Reactome" : "Hallmark"; }

/// A named pathway as a sorted, duplicate-free list of gene symbols.
struct GeneSet {
    std::string id;
    std::string name;
    Source source = Source::Reactome;
    std::vector<std::string> genes;

    std::size_t size() const noexcept { return genes.size(); }
    bool contains(const std::string& gene) const { return std::binary_search(genes.begin(), genes.end(), gene); }
};

/// Column layout of a GMT line. IdFirst: `id<TAB>description<TAB>genes...`
/// (MSigDB style). NameFirst: `name<TAB>id<TAB>genes...` (Reactome's export).
/// Auto picks NameFirst for a line whose second field looks like a Reactome
/// stable id and whose first does not.
enum class GmtLayout { IdFirst, NameFirst, Auto };

namespace detail {

inline std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

inline std::vector<std::string_view> lines(std::string_view text) {
    std::vector<std::string_view> out = split(text, '\n');
    for (auto& l : out)
        if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    if (!out.empty() && out.back().empty()) out.pop_back();
    return out;
}

inline bool looks_like_stable_id(std::string_view s) {
    static const std::regex re("^R-[A-Z]{3}-[0-9]+$");
    return std::regex_match(s.begin(), s.end(), re);
}

} // namespace detail

inline void normalize_genes(std::vector<std::string>& genes) {
    std::sort(genes.begin(), genes.end());
    genes.erase(std::unique(genes.begin(), genes.end()), genes.end());
}

/// One GeneSet per non-empty line; duplicate symbols within a line collapse.
inline std::vector<GeneSet> parse_gmt(std::string_view text, Source source = Source::Reactome,
                                      GmtLayout layout = GmtLayout::IdFirst) {
    std::vector<GeneSet> sets;
    std::set<std::string> seen;
    const auto all = detail::lines(text);
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (all[i].empty()) continue;
        const auto fields = detail::split(all[i], '\t');
        if (fields.size() < 3) throw ParseError("GMT line needs at least 3 tab-separated fields", i + 1);
        bool name_first = layout == GmtLayout::NameFirst;
        if (layout == GmtLayout::Auto)
            name_first = detail::looks_like_stable_id(fields[1]) && !detail::looks_like_stable_id(fields[0]);
        GeneSet gs;
        gs.id = std::string(name_first ? fields[1] : fields[0]);
        gs.name = std::string(name_first ? fields[0] : fields[1]);
        gs.source = source;
        for (std::size_t f = 2; f < fields.size(); ++f)
            if (!fields[f].empty()) gs.genes.emplace_back(fields[f]);
        normalize_genes(gs.genes);
        if (gs.id.empty()) throw ParseError("empty pathway id", i + 1);
        if (gs.genes.empty()) throw ParseError("pathway " + gs.id + " lists no genes", i + 1);
        if (!seen.insert(gs.id).second) throw ParseError("duplicate pathway id " + gs.id, i + 1);
        sets.push_back(std::move(gs));
    }
    return sets;
}

/// Writes IdFirst layout, genes sorted. parse_gmt(write_gmt(x)) == x up to source.
inline std::string write_gmt(const std::vector<GeneSet>& sets) {
    std::string out;
    for (const auto& gs : sets) {
        out += gs.id;
        out += '\t';
        out += gs.name;
        for (const auto& g : gs.genes) {
            out += '\t';
            out += g;
        }
        out += '\n';
    }
    return out;
}

inline std::size_t intersection_size(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::size_t n = 0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (*ia < *ib)
            ++ia;
        else if (*ib < *ia)
            ++ib;
        else {
            ++n;
            ++ia;
            ++ib;
        }
    }
    return n;
}

/// |A n B| / |A u B| over sorted unique gene lists.
inline double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    if (a.empty() && b.empty()) throw ParameterError("jaccard: undefined for two empty sets");
    const std::size_t inter = intersection_size(a, b);
    return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

inline double jaccard(const GeneSet& a, const GeneSet& b) { return jaccard(a.genes, b.genes); }

inline void sort_by_id(std::vector<GeneSet>& sets) {
    std::sort(sets.begin(), sets.end(), [](const GeneSet& x, const GeneSet& y) { return x.id < y.id; });
}

} // namespace protopath::curation
