#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "protopath/io/formats.hpp"
#include "protopath/io/manifest.hpp"
#include "protopath/train/cohort.hpp"

namespace protopath::io {

inline constexpr const char* kCohortIndex = "cohort.json";

enum class PatchFormat { Csv, Binary };

struct LoadedCohort {
    train::Cohort cohort;
    std::vector<fs::path> files; // every file read, for manifests
    std::vector<std::string> warnings;
};

/// Reads a cohort directory described by cohort.json:
///   {"survival": "...", "edges": "...", "expression": "...", "slides": "..."}
/// survival is required; edges and expression come together; slides is
/// optional. Patients follow the survival file's order. When the directory
/// holds a manifest, its digests are checked first.
inline LoadedCohort load_cohort(const fs::path& dir) {
    if (!fs::exists(dir / kCohortIndex)) throw InputError("no " + std::string(kCohortIndex) + " in " + dir.string());
    if (fs::exists(dir / kManifestName)) verify_manifest(dir);
    LoadedCohort out;
    const auto index = nlohmann::ordered_json::parse(read_file(dir / kCohortIndex));
    out.files.push_back(dir / kCohortIndex);
    auto entry = [&](const char* key) -> std::optional<fs::path> {
        if (!index.contains(key)) return std::nullopt;
        fs::path p = dir / index.at(key).get<std::string>();
        out.files.push_back(p);
        return p;
    };
    train::Cohort& c = out.cohort;

    const auto surv = entry("survival");
    if (!surv) throw InputError(std::string(kCohortIndex) + " must name a survival file");
    c.records = parse_survival_csv(read_file(*surv));
    for (const auto& r : c.records) c.patient_ids.push_back(r.patient_id);

    const auto edges = entry("edges");
    const auto expr = entry("expression");
    if (edges.has_value() != expr.has_value()) throw InputError("edges and expression must be given together");
    if (edges) {
        c.graph = std::make_shared<curation::BipartiteGraph>(parse_edge_list_csv(read_file(*edges)));
        const auto table = parse_expression_csv(read_file(*expr));
        auto aligned = align_expression(table, *c.graph);
        if (!aligned.ignored_genes.empty())
            out.warnings.push_back(std::to_string(aligned.ignored_genes.size()) + " expression genes are not in the graph and were ignored");
        std::map<std::string, std::size_t> row_of;
        for (std::size_t i = 0; i < table.patient_ids.size(); ++i)
            if (!row_of.emplace(table.patient_ids[i], i).second)
                throw AlignmentError("duplicate patient " + table.patient_ids[i] + " in expression data");
        for (const auto& id : c.patient_ids) {
            auto it = row_of.find(id);
            if (it == row_of.end()) throw AlignmentError("patient " + id + " has no expression row");
            c.expression.push_back(aligned.values[it->second]);
        }
        if (table.patient_ids.size() > c.patient_ids.size())
            out.warnings.push_back(std::to_string(table.patient_ids.size() - c.patient_ids.size()) +
                                   " expression rows have no survival record and were ignored");
    }

    if (const auto slides = entry("slides")) {
        std::map<std::string, std::vector<prototype::PatchBag>> per_patient;
        for (const auto& s : parse_slides_csv(read_file(*slides))) {
            const fs::path p = dir / s.path;
            out.files.push_back(p);
            per_patient[s.patient_id].push_back(load_patch_file(p, s.patient_id, s.slide_id));
        }
        for (const auto& id : c.patient_ids) {
            auto it = per_patient.find(id);
            if (it == per_patient.end()) throw AlignmentError("patient " + id + " has no slides");
            c.bags.push_back(it->second.size() == 1 ? it->second.front() : prototype::concatenate(it->second));
        }
    }
    c.validate();
    return out;
}

/// Writes a cohort in the layout load_cohort reads. Patch files go to
/// patches/<slide_id>.csv or .bin.
inline void save_cohort(const train::Cohort& c, const fs::path& dir, PatchFormat fmt) {
    c.validate();
    nlohmann::ordered_json index;
    index["survival"] = "survival.csv";
    write_file(dir / "survival.csv", write_survival_csv(c.records));
    if (c.has_expression()) {
        index["edges"] = "graph_edges.csv";
        index["expression"] = "expression.csv";
        write_file(dir / "graph_edges.csv", write_edge_list_csv(*c.graph));
        write_file(dir / "expression.csv", write_expression_csv({c.patient_ids, c.graph->genes(), c.expression}));
    }
    if (c.has_patches()) {
        index["slides"] = "slides.csv";
        std::vector<SlideEntry> entries;
        for (const auto& bag : c.bags) {
            const std::string rel = "patches/" + bag.slide_id + (fmt == PatchFormat::Csv ? ".csv" : ".bin");
            write_file(dir / rel, fmt == PatchFormat::Csv ? write_patch_csv(bag) : write_patch_binary(bag));
            entries.push_back({bag.patient_id, bag.slide_id, rel});
        }
        write_file(dir / "slides.csv", write_slides_csv(entries));
    }
    write_file(dir / kCohortIndex, index.dump(2) + "\n");
}

} // namespace protopath::io
