#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "protopath/core/error.hpp"
#include "protopath/core/ndarray.hpp"
#include "protopath/curation/bipartite_graph.hpp"
#include "protopath/interpret/signals.hpp"
#include "protopath/io/csv.hpp"
#include "protopath/prototype/patch_bag.hpp"
#include "protopath/stats/statistics.hpp"
#include "protopath/survival/survival.hpp"
#include "protopath/train/harness.hpp"

namespace protopath::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

using ad::NdArray;
using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Survival: patient_id,time_months,event

inline std::string write_survival_csv(const std::vector<survival::SurvivalRecord>& recs) {
    CsvTable t{{"patient_id", "time_months", "event"}, {}};
    for (const auto& r : recs) t.rows.push_back({r.patient_id, format_number(r.time), r.event ? "1" : "0"});
    return write_csv(t);
}

inline std::vector<survival::SurvivalRecord> parse_survival_csv(std::string_view text) {
    const auto t = parse_csv(text);
    t.require_header({"patient_id", "time_months", "event"}, "survival CSV");
    std::vector<survival::SurvivalRecord> out;
    std::set<std::string> seen;
    for (const auto& row : t.rows) {
        survival::SurvivalRecord r;
        r.patient_id = row[0];
        r.time = parse_number<double>(row[1], "survival time of " + row[0]);
        if (row[2] != "0" && row[2] != "1") throw InputError("event of " + row[0] + " must be 0 or 1, got '" + row[2] + "'");
        r.event = row[2] == "1";
        survival::validate(r);
        if (!seen.insert(r.patient_id).second) throw InputError("duplicate patient " + r.patient_id + " in survival CSV");
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Expression: patient_id,<gene symbols...>

struct ExpressionTable {
    std::vector<std::string> patient_ids;
    std::vector<std::string> genes;
    std::vector<std::vector<double>> values; // patients x genes
};

inline std::string write_expression_csv(const ExpressionTable& e) {
    CsvTable t;
    t.header.push_back("patient_id");
    t.header.insert(t.header.end(), e.genes.begin(), e.genes.end());
    for (std::size_t i = 0; i < e.patient_ids.size(); ++i) {
        std::vector<std::string> row{e.patient_ids[i]};
        for (double v : e.values[i]) row.push_back(format_number(v));
        t.rows.push_back(std::move(row));
    }
    return write_csv(t);
}

inline ExpressionTable parse_expression_csv(std::string_view text) {
    const auto t = parse_csv(text);
    if (t.header.empty() || t.header[0] != "patient_id") throw InputError("expression CSV: first column must be patient_id");
    ExpressionTable e;
    e.genes.assign(t.header.begin() + 1, t.header.end());
    if (std::set<std::string>(e.genes.begin(), e.genes.end()).size() != e.genes.size())
        throw InputError("expression CSV: duplicate gene column");
    for (const auto& row : t.rows) {
        e.patient_ids.push_back(row[0]);
        std::vector<double> v;
        for (std::size_t j = 1; j < row.size(); ++j) {
            v.push_back(parse_number<double>(row[j], "expression of " + row[0] + "/" + t.header[j]));
            if (!std::isfinite(v.back())) throw InputError("expression of " + row[0] + "/" + t.header[j] + " is not finite");
        }
        e.values.push_back(std::move(v));
    }
    return e;
}

struct AlignedExpression {
    std::vector<std::vector<double>> values; // columns follow graph->genes()
    std::vector<std::string> ignored_genes;
};

/// Reorders columns to the graph's gene order. Genes outside the graph are
/// ignored and reported; graph genes missing from the table are an error.
inline AlignedExpression align_expression(const ExpressionTable& e, const curation::BipartiteGraph& g) {
    std::map<std::string, std::size_t> col;
    for (std::size_t j = 0; j < e.genes.size(); ++j) col[e.genes[j]] = j;
    std::vector<std::string> missing;
    std::vector<std::size_t> src;
    for (const auto& gene : g.genes()) {
        auto it = col.find(gene);
        if (it == col.end())
            missing.push_back(gene);
        else
            src.push_back(it->second);
    }
    if (!missing.empty()) {
        std::string list;
        for (std::size_t i = 0; i < missing.size() && i < 20; ++i) list += (i ? ", " : "") + missing[i];
        if (missing.size() > 20) list += ", ...";
        throw AlignmentError(std::to_string(missing.size()) + " graph genes missing from expression data: " + list);
    }
    AlignedExpression out;
    for (const auto& gene : e.genes)
        if (!g.has_gene(gene)) out.ignored_genes.push_back(gene);
    for (const auto& row : e.values) {
        std::vector<double> r;
        for (std::size_t j : src) r.push_back(row[j]);
        out.values.push_back(std::move(r));
    }
    return out;
}

/// Measured genes: either one symbol per line or a CSV header whose first
/// column is patient_id.
inline std::vector<std::string> parse_gene_list(std::string_view text) {
    std::vector<std::string> out;
    auto nl = text.find('\n');
    std::string_view first = text.substr(0, nl);
    if (first.find(',') != std::string_view::npos) {
        auto t = parse_csv(first);
        if (t.header.empty() || t.header[0] != "patient_id") throw InputError("gene list header must start with patient_id");
        out.assign(t.header.begin() + 1, t.header.end());
        return out;
    }
    for (auto line : curation::detail::lines(text)) {
        std::string s(line);
        while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
        if (!s.empty()) out.push_back(s);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Bipartite edge list: gene_symbol,pathway_id

inline std::string write_edge_list_csv(const curation::BipartiteGraph& g) {
    CsvTable t{{"gene_symbol", "pathway_id"}, {}};
    for (const auto& [gi, pi] : g.memberships()) t.rows.push_back({g.genes()[gi], g.pathways()[pi]});
    return write_csv(t);
}

inline curation::BipartiteGraph parse_edge_list_csv(std::string_view text) {
    const auto t = parse_csv(text);
    t.require_header({"gene_symbol", "pathway_id"}, "edge list CSV");
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& row : t.rows) {
        if (row[0].empty() || row[1].empty()) throw InputError("edge list CSV: empty gene or pathway id");
        pairs.emplace_back(row[0], row[1]);
    }
    if (pairs.empty()) throw InputError("edge list CSV has no edges");
    auto g = curation::BipartiteGraph::from_memberships(pairs);
    g.validate();
    return g;
}

// ---------------------------------------------------------------------------
// Patch features. Both layouts hold 32-bit values and load to identical
// arrays. CSV: header x,y,f0..f{D-1}. Binary: magic "PPATCHF1", u32 D,
// u64 N, then N rows of (x, y, f0..f{D-1}) as little-endian float32.

inline constexpr char kPatchMagic[8] = {'P', 'P', 'A', 'T', 'C', 'H', 'F', '1'};

inline std::string write_patch_csv(const prototype::PatchBag& bag) {
    CsvTable t{{"x", "y"}, {}};
    for (std::size_t j = 0; j < bag.dim(); ++j) t.header.push_back("f" + std::to_string(j));
    for (std::size_t n = 0; n < bag.size(); ++n) {
        std::vector<std::string> row{format_number(float(bag.coords[n].first)), format_number(float(bag.coords[n].second))};
        for (std::size_t j = 0; j < bag.dim(); ++j) row.push_back(format_number(float(bag.features(n, j))));
        t.rows.push_back(std::move(row));
    }
    return write_csv(t);
}

inline prototype::PatchBag parse_patch_csv(std::string_view text, const std::string& patient_id, const std::string& slide_id) {
    const auto t = parse_csv(text);
    t.require_header({"x", "y"}, "patch CSV " + slide_id);
    const std::size_t d = t.header.size() - 2;
    for (std::size_t j = 0; j < d; ++j)
        if (t.header[j + 2] != "f" + std::to_string(j))
            throw InputError("patch CSV " + slide_id + ": column " + std::to_string(j + 2) + " must be f" + std::to_string(j));
    prototype::PatchBag bag;
    bag.patient_id = patient_id;
    bag.slide_id = slide_id;
    bag.features = NdArray({t.rows.size(), d});
    for (std::size_t n = 0; n < t.rows.size(); ++n) {
        const auto& row = t.rows[n];
        bag.coords.emplace_back(parse_number<float>(row[0], slide_id + " x"), parse_number<float>(row[1], slide_id + " y"));
        for (std::size_t j = 0; j < d; ++j) bag.features(n, j) = parse_number<float>(row[j + 2], slide_id + " feature");
    }
    bag.validate();
    return bag;
}

inline std::string write_patch_binary(const prototype::PatchBag& bag) {
    std::string out(kPatchMagic, sizeof kPatchMagic);
    auto put = [&out](auto v) {
        char buf[sizeof v];
        std::memcpy(buf, &v, sizeof v);
        out.append(buf, sizeof v);
    };
    put(std::uint32_t(bag.dim()));
    put(std::uint64_t(bag.size()));
    for (std::size_t n = 0; n < bag.size(); ++n) {
        put(float(bag.coords[n].first));
        put(float(bag.coords[n].second));
        for (std::size_t j = 0; j < bag.dim(); ++j) put(float(bag.features(n, j)));
    }
    return out;
}

inline prototype::PatchBag parse_patch_binary(std::string_view data, const std::string& patient_id, const std::string& slide_id) {
    const std::size_t head = sizeof kPatchMagic + 4 + 8;
    if (data.size() < head || std::memcmp(data.data(), kPatchMagic, sizeof kPatchMagic) != 0)
        throw InputError("patch file " + slide_id + " is not in the binary patch format");
    std::uint32_t d;
    std::uint64_t n;
    std::memcpy(&d, data.data() + 8, 4);
    std::memcpy(&n, data.data() + 12, 8);
    const std::uint64_t floats = n * (std::uint64_t(d) + 2);
    if (data.size() != head + floats * 4)
        throw InputError("patch file " + slide_id + ": expected " + std::to_string(head + floats * 4) + " bytes, found " +
                         std::to_string(data.size()));
    prototype::PatchBag bag;
    bag.patient_id = patient_id;
    bag.slide_id = slide_id;
    bag.features = NdArray({std::size_t(n), std::size_t(d)});
    const char* p = data.data() + head;
    auto next = [&p] {
        float v;
        std::memcpy(&v, p, 4);
        p += 4;
        return v;
    };
    for (std::size_t i = 0; i < n; ++i) {
        const float x = next(), y = next();
        bag.coords.emplace_back(x, y);
        for (std::size_t j = 0; j < d; ++j) bag.features(i, j) = next();
    }
    bag.validate();
    return bag;
}

/// Dispatches on the magic bytes.
inline prototype::PatchBag load_patch_file(const fs::path& path, const std::string& patient_id, const std::string& slide_id) {
    const std::string data = read_file(path);
    if (data.size() >= sizeof kPatchMagic && std::memcmp(data.data(), kPatchMagic, sizeof kPatchMagic) == 0)
        return parse_patch_binary(data, patient_id, slide_id);
    return parse_patch_csv(data, patient_id, slide_id);
}

// Slide index: patient_id,slide_id,path (relative to the cohort directory)
struct SlideEntry {
    std::string patient_id;
    std::string slide_id;
    std::string path;
};

inline std::string write_slides_csv(const std::vector<SlideEntry>& s) {
    CsvTable t{{"patient_id", "slide_id", "path"}, {}};
    for (const auto& e : s) t.rows.push_back({e.patient_id, e.slide_id, e.path});
    return write_csv(t);
}

inline std::vector<SlideEntry> parse_slides_csv(std::string_view text) {
    const auto t = parse_csv(text);
    t.require_header({"patient_id", "slide_id", "path"}, "slide index CSV");
    std::vector<SlideEntry> out;
    for (const auto& r : t.rows) out.push_back({r[0], r[1], r[2]});
    return out;
}

// ---------------------------------------------------------------------------
// Risk output: patient_id,risk,bin,S1..SB. `bin` is the first bin whose
// survival probability drops to 0.5 or below (B-1 when none does).

struct RiskRow {
    std::string patient_id;
    double risk = 0.0;
    std::size_t bin = 0;
    std::vector<double> survival;
};

inline std::size_t median_bin(const std::vector<double>& s) {
    for (std::size_t b = 0; b < s.size(); ++b)
        if (s[b] <= 0.5) return b;
    return s.empty() ? 0 : s.size() - 1;
}

inline std::string write_risk_csv(const std::vector<RiskRow>& rows) {
    const std::size_t b = rows.empty() ? 0 : rows.front().survival.size();
    CsvTable t{{"patient_id", "risk", "bin"}, {}};
    for (std::size_t j = 1; j <= b; ++j) t.header.push_back("S" + std::to_string(j));
    for (const auto& r : rows) {
        if (r.survival.size() != b) throw DimensionError("risk rows disagree on the number of bins");
        std::vector<std::string> f{r.patient_id, format_number(r.risk), std::to_string(r.bin)};
        for (double s : r.survival) f.push_back(format_number(s));
        t.rows.push_back(std::move(f));
    }
    return write_csv(t);
}

inline std::vector<RiskRow> parse_risk_csv(std::string_view text) {
    const auto t = parse_csv(text);
    t.require_header({"patient_id", "risk", "bin"}, "risk CSV");
    std::vector<RiskRow> out;
    for (const auto& row : t.rows) {
        RiskRow r;
        r.patient_id = row[0];
        r.risk = parse_number<double>(row[1], "risk");
        r.bin = parse_number<std::size_t>(row[2], "bin");
        for (std::size_t j = 3; j < row.size(); ++j) r.survival.push_back(parse_number<double>(row[j], "survival"));
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Per-epoch log: fold,epoch,train_loss,val_cindex

inline std::string write_epoch_csv(const std::vector<train::EpochLog>& logs) {
    CsvTable t{{"fold", "epoch", "train_loss", "val_cindex"}, {}};
    for (const auto& l : logs)
        t.rows.push_back({std::to_string(l.fold), std::to_string(l.epoch), format_number(l.train_loss), format_number(l.val_cindex)});
    return write_csv(t);
}

inline std::vector<train::EpochLog> parse_epoch_csv(std::string_view text) {
    const auto t = parse_csv(text);
    t.require_header({"fold", "epoch", "train_loss", "val_cindex"}, "epoch CSV");
    std::vector<train::EpochLog> out;
    for (const auto& r : t.rows) {
        train::EpochLog l;
        l.fold = parse_number<int>(r[0], "fold");
        l.epoch = parse_number<std::size_t>(r[1], "epoch");
        l.train_loss = parse_number<double>(r[2], "train_loss");
        l.val_cindex = parse_number<double>(r[3], "val_cindex");
        out.push_back(l);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Overlay: slide_id,x,y,prototype,pathway_id,raw_value,rank_value. Optional
// fields are left empty.

inline std::string write_overlay_csv(const std::vector<interpret::OverlayRecord>& recs) {
    CsvTable t{{"slide_id", "x", "y", "prototype", "pathway_id", "raw_value", "rank_value"}, {}};
    for (const auto& r : recs)
        t.rows.push_back({r.slide_id, format_number(r.x), format_number(r.y), std::to_string(r.prototype), r.pathway.value_or(""),
                          r.raw_value ? format_number(*r.raw_value) : "", r.rank_value ? format_number(*r.rank_value) : ""});
    return write_csv(t);
}

inline std::vector<interpret::OverlayRecord> parse_overlay_csv(std::string_view text) {
    const auto t = parse_csv(text);
    t.require_header({"slide_id", "x", "y", "prototype", "pathway_id", "raw_value", "rank_value"}, "overlay CSV");
    std::vector<interpret::OverlayRecord> out;
    for (const auto& r : t.rows) {
        interpret::OverlayRecord o;
        o.slide_id = r[0];
        o.x = parse_number<double>(r[1], "x");
        o.y = parse_number<double>(r[2], "y");
        o.prototype = parse_number<std::size_t>(r[3], "prototype");
        if (!r[4].empty()) o.pathway = r[4];
        if (!r[5].empty()) o.raw_value = parse_number<double>(r[5], "raw_value");
        if (!r[6].empty()) o.rank_value = parse_number<double>(r[6], "rank_value");
        out.push_back(std::move(o));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Exemplars: prototypes in gate order, each with its top patches.

inline Json exemplars_json(const std::vector<interpret::PrototypeExemplars>& ex) {
    Json arr = Json::array();
    for (const auto& e : ex) {
        Json patches = Json::array();
        for (const auto& p : e.patches)
            patches.push_back({{"patch", p.patch}, {"slide_id", p.slide_id}, {"x", p.x}, {"y", p.y}, {"similarity", p.similarity}});
        arr.push_back({{"prototype", e.prototype}, {"gate_weight", e.gate_weight}, {"patches", patches}});
    }
    return arr;
}

inline std::vector<interpret::PrototypeExemplars> exemplars_from_json(const Json& j) {
    std::vector<interpret::PrototypeExemplars> out;
    for (const auto& e : j) {
        interpret::PrototypeExemplars pe;
        pe.prototype = e.at("prototype").get<std::size_t>();
        pe.gate_weight = e.at("gate_weight").get<double>();
        for (const auto& p : e.at("patches"))
            pe.patches.push_back({p.at("patch").get<std::size_t>(), p.at("slide_id").get<std::string>(), p.at("x").get<double>(),
                                  p.at("y").get<double>(), p.at("similarity").get<double>()});
        out.push_back(std::move(pe));
    }
    return out;
}

inline std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Statistics tables.

inline std::string write_fold_tests_csv(const std::vector<stats::FoldTestResult>& rows) {
    CsvTable t{{"entity", "U", "p", "r", "mean_rank_diff", "n_low", "n_high", "fold"}, {}};
    for (const auto& r : rows)
        t.rows.push_back({r.entity, format_number(r.u), format_number(r.p), format_number(r.r), format_number(r.mean_rank_diff),
                          std::to_string(r.n_low), std::to_string(r.n_high), std::to_string(r.fold)});
    return write_csv(t);
}

inline std::vector<stats::FoldTestResult> parse_fold_tests_csv(std::string_view text) {
    const auto t = parse_csv(text);
    t.require_header({"entity", "U", "p", "r", "mean_rank_diff", "n_low", "n_high", "fold"}, "per-fold statistics CSV");
    std::vector<stats::FoldTestResult> out;
    for (const auto& r : t.rows) {
        stats::FoldTestResult f;
        f.entity = r[0];
        f.u = parse_number<double>(r[1], "U");
        f.p = parse_number<double>(r[2], "p");
        f.r = parse_number<double>(r[3], "r");
        f.mean_rank_diff = parse_number<double>(r[4], "mean_rank_diff");
        f.n_low = parse_number<std::size_t>(r[5], "n_low");
        f.n_high = parse_number<std::size_t>(r[6], "n_high");
        f.fold = parse_number<int>(r[7], "fold");
        out.push_back(std::move(f));
    }
    return out;
}

/// Entities seen in a single fold cannot be combined; their Z, p, effect and
/// q are written as nan.
inline std::string write_meta_csv(const std::vector<stats::MetaResult>& rows) {
    CsvTable t{{"entity", "Z", "p", "effect", "q", "significant", "folds_used"}, {}};
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& m : rows) {
        const bool ok = m.combinable;
        t.rows.push_back({m.entity, format_number(ok ? m.z : nan), format_number(ok ? m.p : nan), format_number(ok ? m.effect : nan),
                          format_number(ok ? m.q : nan), m.significant ? "true" : "false", std::to_string(m.folds_used)});
    }
    return write_csv(t);
}

inline std::vector<stats::MetaResult> parse_meta_csv(std::string_view text) {
    const auto t = parse_csv(text);
    t.require_header({"entity", "Z", "p", "effect", "q", "significant", "folds_used"}, "meta statistics CSV");
    std::vector<stats::MetaResult> out;
    for (const auto& r : t.rows) {
        stats::MetaResult m;
        m.entity = r[0];
        m.z = parse_number<double>(r[1], "Z");
        m.p = parse_number<double>(r[2], "p");
        m.effect = parse_number<double>(r[3], "effect");
        m.q = parse_number<double>(r[4], "q");
        if (r[5] != "true" && r[5] != "false") throw InputError("significant must be true or false");
        m.significant = r[5] == "true";
        m.folds_used = parse_number<std::size_t>(r[6], "folds_used");
        m.combinable = !std::isnan(m.z);
        out.push_back(std::move(m));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Fold assignment: fold,patient_id,role (role = train | validation)

inline std::string write_splits_csv(const std::vector<train::FoldSplit>& splits) {
    CsvTable t{{"fold", "patient_id", "role"}, {}};
    for (const auto& s : splits) {
        for (const auto& id : s.train) t.rows.push_back({std::to_string(s.fold), id, "train"});
        for (const auto& id : s.validation) t.rows.push_back({std::to_string(s.fold), id, "validation"});
    }
    return write_csv(t);
}

inline std::vector<train::FoldSplit> parse_splits_csv(std::string_view text) {
    const auto t = parse_csv(text);
    t.require_header({"fold", "patient_id", "role"}, "splits CSV");
    std::map<int, train::FoldSplit> by_fold;
    for (const auto& r : t.rows) {
        const int f = parse_number<int>(r[0], "fold");
        auto& s = by_fold[f];
        s.fold = f;
        if (r[2] == "train")
            s.train.push_back(r[1]);
        else if (r[2] == "validation")
            s.validation.push_back(r[1]);
        else
            throw InputError("splits CSV: role must be train or validation, got '" + r[2] + "'");
    }
    std::vector<train::FoldSplit> out;
    for (auto& [f, s] : by_fold) out.push_back(std::move(s));
    return out;
}

// ---------------------------------------------------------------------------
// Kaplan-Meier table: group,time,survival,at_risk,events

inline std::string write_km_csv(const std::vector<std::pair<std::string, survival::KmCurve>>& curves) {
    CsvTable t{{"group", "time", "survival", "at_risk", "events"}, {}};
    for (const auto& [group, km] : curves)
        for (std::size_t i = 0; i < km.times.size(); ++i)
            t.rows.push_back({group, format_number(km.times[i]), format_number(km.survival[i]), std::to_string(km.at_risk[i]),
                              std::to_string(km.events[i])});
    return write_csv(t);
}

} // namespace protopath::io
