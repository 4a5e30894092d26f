#pragma once

#include <algorithm>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "protopath/curation/curation.hpp"
#include "protopath/interpret/analysis.hpp"
#include "protopath/io/cohort_io.hpp"
#include "protopath/io/formats.hpp"
#include "protopath/io/manifest.hpp"
#include "protopath/train/checkpoint.hpp"
#include "protopath/train/harness.hpp"

namespace protopath::io {

struct Log {
    std::ostream* out = nullptr;
    template <class... T>
    void operator()(const T&... parts) const {
        if (!out) return;
        ((*out) << ... << parts) << '\n';
    }
};

// ---------------------------------------------------------------------------
// Curation config: flat key = value text, excluded_categories ';'-separated.

inline curation::CurationConfig parse_curation_config(const std::string& text, curation::CurationConfig c = {}) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = train::detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("expected key = value", lineno);
        const std::string key = train::detail::trim(line.substr(0, eq));
        const std::string v = train::detail::trim(line.substr(eq + 1));
        try {
            if (key == "target_depth")
                c.target_depth = parse_number<std::size_t>(v, key);
            else if (key == "min_genes")
                c.min_genes = parse_number<std::size_t>(v, key);
            else if (key == "max_genes")
                c.max_genes = parse_number<std::size_t>(v, key);
            else if (key == "jaccard_threshold")
                c.jaccard_threshold = parse_number<double>(v, key);
            else if (key == "min_coverage_genes")
                c.min_coverage_genes = parse_number<std::size_t>(v, key);
            else if (key == "variance_keep_fraction")
                c.variance_keep_fraction = parse_number<double>(v, key);
            else if (key == "species_prefix")
                c.species_prefix = v;
            else if (key == "excluded_categories") {
                c.excluded_categories.clear();
                std::string item;
                std::istringstream items(v);
                while (std::getline(items, item, ';'))
                    if (auto t = train::detail::trim(item); !t.empty()) c.excluded_categories.push_back(t);
            } else
                throw ConfigError("unknown curation key '" + key + "'");
        } catch (const ConfigError&) {
            throw;
        } catch (const InputError& e) {
            throw ConfigError(e.what());
        }
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Shared plumbing

inline RunManifest start_manifest(const std::string& command, const fs::path& out) {
    fs::create_directories(out);
    RunManifest m;
    m.command = command;
    m.started_at = utc_timestamp();
    return m;
}

/// The files a consumer loads must be the ones the producer recorded.
/// Compared by content digest, so a copied cohort still matches.
inline void check_same_inputs(const RunManifest& producer, const std::vector<fs::path>& files, const std::string& what) {
    std::multiset<std::string> recorded, now;
    for (const auto& f : producer.inputs) recorded.insert(f.sha256);
    for (const auto& f : files) now.insert(sha256_file(f));
    if (recorded != now)
        throw DigestError(what + " differs from the data recorded in the " + producer.command + " manifest");
}

inline std::vector<RiskRow> risk_rows(const std::vector<interpret::PatientSignals>& ps) {
    std::vector<RiskRow> out;
    for (const auto& p : ps) out.push_back({p.patient_id, p.risk, median_bin(p.survival), p.survival});
    return out;
}

inline std::string fold_dir(int fold) { return "fold" + std::to_string(fold); }

/// A trained run: its manifest, cohort, splits and per-fold checkpoints.
struct TrainedRun {
    RunManifest manifest;
    LoadedCohort cohort;
    std::vector<train::FoldSplit> splits;
    std::map<int, train::Checkpoint> checkpoints;
};

inline TrainedRun open_run(const fs::path& run, const std::optional<fs::path>& cohort_dir) {
    if (!fs::exists(run / kManifestName))
        throw DependencyError("no trained run in " + run.string() + "; run `protopath train` first");
    TrainedRun r;
    r.manifest = verify_manifest(run, "train");
    const fs::path cdir = cohort_dir ? *cohort_dir : fs::path(r.manifest.extra.at("cohort_dir").get<std::string>());
    r.cohort = load_cohort(cdir);
    check_same_inputs(r.manifest, r.cohort.files, "cohort " + cdir.string());
    r.splits = parse_splits_csv(read_file(run / "splits.csv"));
    for (int f : r.manifest.extra.at("folds").get<std::vector<int>>())
        r.checkpoints[f] = train::load_checkpoint((run / fold_dir(f) / "checkpoint.bin").string());
    return r;
}

inline const train::FoldSplit& split_of(const TrainedRun& r, int fold) {
    for (const auto& s : r.splits)
        if (s.fold == fold) return s;
    throw InputError("fold " + std::to_string(fold) + " is not in splits.csv");
}

inline std::vector<int> selected_folds(const TrainedRun& r, std::optional<int> fold) {
    std::vector<int> out;
    for (const auto& [f, ck] : r.checkpoints)
        if (!fold || *fold == f) out.push_back(f);
    if (out.empty()) throw InputError("fold " + std::to_string(*fold) + " was not trained in this run");
    return out;
}

inline interpret::FoldBundles fold_bundles(const TrainedRun& r, int fold) {
    auto m = train::model_from_checkpoint(r.checkpoints.at(fold), r.cohort.cohort);
    return {fold, interpret::collect_signals(*m, r.cohort.cohort, split_of(r, fold).validation)};
}

// ---------------------------------------------------------------------------
// preprocess reactome

struct PreprocessReactomeOptions {
    fs::path gmt;
    fs::path relations;
    std::optional<fs::path> hallmark;
    std::optional<fs::path> names;
    std::optional<fs::path> config;
    fs::path out;
    Log log;
};

inline curation::Stage1Result cmd_preprocess_reactome(const PreprocessReactomeOptions& o) {
    curation::CurationConfig cfg;
    if (o.config) cfg = parse_curation_config(read_file(*o.config));
    auto m = start_manifest("preprocess reactome", o.out);
    curation::Stage1Inputs in;
    in.reactome = curation::parse_gmt(read_file(o.gmt), curation::Source::Reactome);
    in.relations = curation::parse_relations(read_file(o.relations), cfg.species_prefix);
    m.add_input(o.gmt);
    m.add_input(o.relations);
    if (o.hallmark) {
        in.hallmark = curation::parse_gmt(read_file(*o.hallmark), curation::Source::Hallmark, curation::GmtLayout::IdFirst);
        m.add_input(*o.hallmark);
    }
    if (o.names) {
        in.names = curation::parse_pathway_names(read_file(*o.names));
        m.add_input(*o.names);
    }
    auto res = curation::run_stage1(in, cfg);
    for (const auto& f : m.inputs) res.manifest.input_digests[f.path] = f.sha256;

    const std::string base = cfg.base_filename() + ".gmt";
    write_file(o.out / base, curation::write_gmt(res.pathways));
    CsvTable red{{"removed_id", "representative_id"}, {}};
    for (const auto& [a, b] : res.redundancy) red.rows.push_back({a, b});
    write_file(o.out / "redundancy.csv", write_csv(red));
    m.config = curation::config_json(cfg);
    m.extra["curation"] = res.manifest.to_json();
    m.extra["pathways_file"] = base;
    for (const auto& s : res.manifest.stages) o.log(s.stage, ": ", s.pathways, " pathways");
    finalize_manifest(m, o.out);
    return res;
}

// ---------------------------------------------------------------------------
// preprocess genes

struct PreprocessGenesOptions {
    fs::path pathways;                  // base GMT from preprocess reactome
    std::optional<fs::path> expression; // expression CSV (header gives the measured genes)
    std::optional<fs::path> genes;      // or a plain gene list
    std::optional<fs::path> config;
    fs::path out;
    Log log;
};

inline curation::Stage2Result cmd_preprocess_genes(const PreprocessGenesOptions& o) {
    if (o.expression.has_value() == o.genes.has_value()) throw InputError("give exactly one of --expression or --genes");
    curation::CurationConfig cfg;
    if (o.config) cfg = parse_curation_config(read_file(*o.config));
    if (const auto up = o.pathways.parent_path(); fs::exists(up / kManifestName)) {
        const auto um = verify_manifest(up, "preprocess reactome");
        if (!um.find_output(o.pathways.filename().string()))
            throw DependencyError(o.pathways.string() + " is not an output of the manifest next to it");
    }
    auto m = start_manifest("preprocess genes", o.out);
    m.add_input(o.pathways);
    const auto base = curation::parse_gmt(read_file(o.pathways), curation::Source::Reactome, curation::GmtLayout::IdFirst);
    std::vector<std::string> measured;
    std::vector<std::vector<double>> values;
    if (o.expression) {
        auto table = parse_expression_csv(read_file(*o.expression));
        measured = table.genes;
        values = std::move(table.values);
        m.add_input(*o.expression);
    } else {
        measured = parse_gene_list(read_file(*o.genes));
        m.add_input(*o.genes);
        if (cfg.variance_keep_fraction < 1.0) throw ConfigError("variance filter needs --expression values");
    }
    auto res = curation::run_stage2(base, measured, cfg, values);
    write_file(o.out / "pathways_curated.gmt", curation::write_gmt(res.pathways));
    write_file(o.out / "graph_edges.csv", write_edge_list_csv(res.graph));
    m.config = curation::config_json(cfg);
    m.extra["curation"] = res.manifest.to_json();
    m.extra["graph"] = {{"pathways", res.graph.num_pathways()}, {"genes", res.graph.num_genes()}, {"edges", res.graph.num_memberships()}};
    o.log(res.graph.num_pathways(), " pathways, ", res.graph.num_genes(), " genes, ", res.graph.num_memberships(), " edges");
    finalize_manifest(m, o.out);
    return res;
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
    train::SyntheticCohortSpec spec;
    PatchFormat patch_format = PatchFormat::Csv;
    fs::path out;
    Log log;
};

inline train::SyntheticCohort cmd_synth(const SynthOptions& o) {
    auto m = start_manifest("synth", o.out);
    auto syn = train::generate_synthetic_cohort(o.spec);
    save_cohort(syn.cohort, o.out, o.patch_format);
    Json truth;
    truth["planted_pathway"] = syn.truth.planted_pathway;
    truth["planted_genes"] = syn.truth.planted_genes;
    Json risk = Json::object();
    for (std::size_t i = 0; i < syn.cohort.size(); ++i) risk[syn.cohort.patient_ids[i]] = syn.truth.risk[i];
    truth["latent_risk"] = risk;
    write_file(o.out / "truth.json", dump_json(truth));
    const auto& s = o.spec;
    m.config = {{"n_patients", s.n_patients}, {"genes", s.genes}, {"pathways", s.pathways}, {"clusters", s.clusters},
                {"planted_pathway", s.planted_pathway}, {"planted_size", s.planted_size},
                {"max_pathway_size", s.max_pathway_size}, {"signal", s.signal}, {"censoring", s.censoring},
                {"feature_dim", s.feature_dim}, {"min_patches", s.min_patches}, {"max_patches", s.max_patches},
                {"patch_format", o.patch_format == PatchFormat::Csv ? "csv" : "binary"}};
    m.seeds = {{"seed", s.seed}, {"graph_seed", s.graph_seed}};
    o.log("synthetic cohort: ", syn.cohort.size(), " patients, planted ", syn.truth.planted_pathway);
    finalize_manifest(m, o.out);
    return syn;
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
    fs::path cohort;
    std::optional<fs::path> config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> variant;
    std::optional<int> fold; // all folds when unset
    std::size_t threads = 1;
    fs::path out;
    Log log;
};

inline train::TrainConfig resolve_config(const std::optional<fs::path>& path, const std::optional<std::uint64_t>& seed,
                                         const std::optional<std::string>& variant) {
    train::TrainConfig cfg = path ? train::load_config(path->string()) : train::TrainConfig{};
    if (seed) cfg.seed = *seed;
    if (variant) cfg.fusion_variant = fusion::parse_fusion_variant(*variant);
    cfg.validate();
    return cfg;
}

inline std::vector<train::FoldResult> cmd_train(const TrainOptions& o) {
    const auto cfg = resolve_config(o.config, o.seed, o.variant);
    const auto loaded = load_cohort(o.cohort);
    for (const auto& w : loaded.warnings) o.log("warning: ", w);
    auto m = start_manifest("train", o.out);
    for (const auto& f : loaded.files) m.add_input(f);

    const auto splits = train::make_folds(loaded.cohort.patient_ids, cfg.folds, cfg.seed);
    std::vector<train::FoldSplit> chosen;
    for (const auto& s : splits)
        if (!o.fold || *o.fold == s.fold) chosen.push_back(s);
    if (chosen.empty()) throw InputError("fold " + std::to_string(*o.fold) + " does not exist (folds = " + std::to_string(cfg.folds) + ")");

    train::RunOptions ro;
    if (o.log.out && o.threads <= 1)
        ro.on_epoch = [&](const train::EpochLog& l) {
            o.log("fold ", l.fold, " epoch ", l.epoch, " loss ", format_number(l.train_loss), " val_cindex ", format_number(l.val_cindex));
        };
    auto results = train::run_cross_validation(cfg, loaded.cohort, chosen, ro, o.threads);

    write_file(o.out / "config.txt", train::format_config(cfg));
    write_file(o.out / "splits.csv", write_splits_csv(splits));
    std::vector<train::EpochLog> logs;
    Json folds = Json::array();
    std::vector<int> trained;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        const int f = chosen[i].fold;
        trained.push_back(f);
        logs.insert(logs.end(), r.history.begin(), r.history.end());
        train::save_checkpoint(r.checkpoint, (o.out / fold_dir(f) / "checkpoint.bin").string());
        auto model = train::model_from_checkpoint(r.checkpoint, loaded.cohort);
        write_file(o.out / fold_dir(f) / "val_risks.csv",
                   write_risk_csv(risk_rows(interpret::collect_signals(*model, loaded.cohort, chosen[i].validation))));
        folds.push_back({{"fold", f}, {"best_epoch", r.checkpoint.best_epoch}, {"best_val_cindex", r.checkpoint.best_val_cindex},
                         {"final_val_cindex", r.final_val_cindex}});
        o.log("fold ", f, ": best val C-index ", format_number(r.checkpoint.best_val_cindex), " at epoch ", r.checkpoint.best_epoch);
    }
    write_file(o.out / "epochs.csv", write_epoch_csv(logs));
    write_file(o.out / "summary.json", dump_json({{"folds", folds}}));
    m.config = train::config_json(cfg);
    m.seeds = {{"seed", cfg.seed}};
    m.extra["cohort_dir"] = fs::absolute(o.cohort).lexically_normal().string();
    m.extra["folds"] = trained;
    finalize_manifest(m, o.out);
    return results;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateOptions {
    fs::path run;
    std::optional<fs::path> cohort;
    fs::path out;
    Log log;
};

struct EvaluateResult {
    std::map<int, double> fold_cindex;
    std::optional<survival::LogRankResult> logrank;
};

inline EvaluateResult cmd_evaluate(const EvaluateOptions& o) {
    const auto run = open_run(o.run, o.cohort);
    auto m = start_manifest("evaluate", o.out);
    m.add_input(o.run / kManifestName);
    EvaluateResult res;
    std::vector<survival::SurvivalRecord> pooled;
    std::vector<bool> high;
    Json folds = Json::array();
    const auto& c = run.cohort.cohort;
    for (const auto& [f, ck] : run.checkpoints) {
        (void)ck;
        const auto fb = fold_bundles(run, f);
        write_file(o.out / ("risks_fold" + std::to_string(f) + ".csv"), write_risk_csv(risk_rows(fb.patients)));
        std::vector<double> risks;
        std::vector<survival::SurvivalRecord> recs;
        for (const auto& p : fb.patients) {
            risks.push_back(p.risk);
            recs.push_back(c.records[c.index_of(p.patient_id)]);
        }
        Json entry = {{"fold", f}, {"n", recs.size()}};
        try {
            res.fold_cindex[f] = survival::c_index(risks, recs);
            entry["cindex"] = res.fold_cindex[f];
        } catch (const MetricError& e) {
            entry["cindex"] = nullptr;
            entry["note"] = e.what();
        }
        folds.push_back(entry);
        const auto split = survival::median_risk_split(risks);
        pooled.insert(pooled.end(), recs.begin(), recs.end());
        high.insert(high.end(), split.begin(), split.end());
    }
    std::vector<survival::SurvivalRecord> lo, hi;
    for (std::size_t i = 0; i < pooled.size(); ++i) (high[i] ? hi : lo).push_back(pooled[i]);
    std::vector<std::pair<std::string, survival::KmCurve>> curves;
    if (!lo.empty()) curves.emplace_back("low", survival::km_curve(lo));
    if (!hi.empty()) curves.emplace_back("high", survival::km_curve(hi));
    write_file(o.out / "km.csv", write_km_csv(curves));

    Json summary;
    summary["folds"] = folds;
    double mean = 0.0;
    for (const auto& [f, v] : res.fold_cindex) mean += v / double(res.fold_cindex.size());
    summary["mean_cindex"] = res.fold_cindex.empty() ? Json(nullptr) : Json(mean);
    try {
        res.logrank = survival::logrank_test(pooled, high);
        summary["logrank"] = {{"statistic", res.logrank->statistic}, {"p_value", res.logrank->p_value},
                              {"observed_high", res.logrank->observed_high}, {"expected_high", res.logrank->expected_high}};
    } catch (const MetricError& e) {
        summary["logrank"] = {{"note", e.what()}};
    }
    write_file(o.out / "evaluation.json", dump_json(summary));
    m.config = run.manifest.config;
    m.seeds = run.manifest.seeds;
    o.log("mean validation C-index ", format_number(mean));
    finalize_manifest(m, o.out);
    return res;
}

// ---------------------------------------------------------------------------
// interpret

struct InterpretOptions {
    fs::path run;
    std::optional<fs::path> cohort;
    std::optional<int> fold;
    std::optional<std::string> pathway;
    std::optional<std::string> gene;
    std::size_t exemplars = 8;
    fs::path out;
    Log log;
};

inline void cmd_interpret(const InterpretOptions& o) {
    const auto run = open_run(o.run, o.cohort);
    auto m = start_manifest("interpret", o.out);
    m.add_input(o.run / kManifestName);
    const auto& c = run.cohort.cohort;
    std::vector<interpret::OverlayRecord> proto_ov, path_ov, one_path, one_gene;
    for (int f : selected_folds(run, o.fold)) {
        const auto fb = fold_bundles(run, f);
        if (fb.patients.empty()) continue;
        const auto& b0 = fb.patients.front().bundle;
        if ((o.pathway || o.gene) && !b0.has_cross_attention())
            throw ContractError("--pathway/--gene heatmaps need a cross-attention model");
        std::vector<double> risks;
        for (const auto& p : fb.patients) risks.push_back(p.risk);
        const auto high = survival::median_risk_split(risks);
        interpret::PrototypeRankStats rank_stats;
        if (b0.has_cross_attention()) rank_stats = interpret::rank_stats_for_fold(fb);
        for (std::size_t i = 0; i < fb.patients.size(); ++i) {
            const auto& p = fb.patients[i];
            Json sig = interpret::to_json(p.bundle);
            Json doc = {{"patient_id", p.patient_id}, {"fold", f}, {"risk", p.risk}, {"survival", p.survival}};
            for (auto it = sig.begin(); it != sig.end(); ++it) doc[it.key()] = it.value();
            write_file(o.out / "signals" / (p.patient_id + ".json"), dump_json(doc));
            if (!p.bundle.has_wsi()) continue;
            const auto& bag = c.bags[c.index_of(p.patient_id)];
            for (auto& r : interpret::prototype_overlay(p.bundle, bag)) proto_ov.push_back(std::move(r));
            write_file(o.out / "exemplars" / (p.patient_id + ".json"),
                       dump_json(exemplars_json(interpret::extract_exemplars(p.bundle, bag, o.exemplars))));
            if (!p.bundle.has_cross_attention()) continue;
            for (auto& r : interpret::pathway_overlay(p.bundle, bag, rank_stats, high[i])) path_ov.push_back(std::move(r));
            if (o.pathway)
                for (auto& r : interpret::single_pathway_heatmap(p.bundle, bag, *o.pathway)) one_path.push_back(std::move(r));
            if (o.gene)
                for (auto& r : interpret::single_gene_heatmap(p.bundle, bag, *o.gene)) one_gene.push_back(std::move(r));
        }
    }
    if (!proto_ov.empty()) write_file(o.out / "overlays" / "prototype.csv", write_overlay_csv(proto_ov));
    if (!path_ov.empty()) write_file(o.out / "overlays" / "pathway.csv", write_overlay_csv(path_ov));
    if (o.pathway) write_file(o.out / "overlays" / ("pathway_" + *o.pathway + ".csv"), write_overlay_csv(one_path));
    if (o.gene) write_file(o.out / "overlays" / ("gene_" + *o.gene + ".csv"), write_overlay_csv(one_gene));
    m.config = run.manifest.config;
    m.seeds = run.manifest.seeds;
    if (o.pathway) m.extra["pathway"] = *o.pathway;
    if (o.gene) m.extra["gene"] = *o.gene;
    finalize_manifest(m, o.out);
}

// ---------------------------------------------------------------------------
// stats

struct StatsOptions {
    fs::path run;
    std::optional<fs::path> cohort;
    stats::EntityKind kind = stats::EntityKind::pathway_gate;
    bool combine = false;
    double alpha = 0.05;
    fs::path out;
    Log log;
};

inline stats::AnalysisResult cmd_stats(const StatsOptions& o) {
    if (o.combine && stats::is_prototype_indexed(o.kind))
        throw ContractError("--combine is not allowed for prototype-indexed entity kind '" + stats::to_string(o.kind) +
                            "': prototypes are not aligned across folds");
    const auto run = open_run(o.run, o.cohort);
    auto m = start_manifest("stats", o.out);
    m.add_input(o.run / kManifestName);
    std::vector<interpret::FoldBundles> folds;
    for (const auto& entry : run.checkpoints) folds.push_back(fold_bundles(run, entry.first));
    const auto res = interpret::flatten(interpret::analyze_kind(o.kind, folds, o.combine, o.alpha), o.kind);
    write_file(o.out / "per_fold.csv", write_fold_tests_csv(res.per_fold));
    if (o.combine) write_file(o.out / "meta.csv", write_meta_csv(res.meta));

    const bool gating = (o.kind == stats::EntityKind::prototype_gate || o.kind == stats::EntityKind::fusion_gate) &&
                        !folds.empty() && !folds.front().patients.empty() &&
                        folds.front().patients.front().bundle.has_cross_attention();
    if (gating) {
        CsvTable t{{"fold", "prototype", "mean_delta", "U", "p", "r"}, {}};
        for (const auto& fb : folds) {
            stats::Matrix pre, post;
            std::vector<double> risks;
            for (const auto& p : fb.patients) {
                pre.push_back(p.bundle.wsi_gate);
                post.push_back(p.bundle.fusion_gate);
                risks.push_back(p.risk);
            }
            const auto g = stats::gating_shift(pre, post, risks);
            for (std::size_t k = 0; k < g.mean_delta.size(); ++k) {
                const bool tested = !g.group_test.empty();
                t.rows.push_back({std::to_string(fb.fold), interpret::prototype_label(k), format_number(g.mean_delta[k]),
                                  tested ? format_number(g.group_test[k].u) : "", tested ? format_number(g.group_test[k].p) : "",
                                  tested ? format_number(g.group_effect[k]) : ""});
            }
        }
        write_file(o.out / "gating_shift.csv", write_csv(t));
    }
    m.config = run.manifest.config;
    m.seeds = run.manifest.seeds;
    m.extra["entity_kind"] = stats::to_string(o.kind);
    m.extra["combine"] = o.combine;
    m.extra["alpha"] = o.alpha;
    m.extra["excluded_folds"] = res.excluded_folds;
    o.log(res.per_fold.size(), " per-fold tests, ", res.meta.size(), " combined entities");
    finalize_manifest(m, o.out);
    return res;
}

// ---------------------------------------------------------------------------
// ablate

enum class AblationGrid { Fusion, Prototypes };

struct AblateOptions {
    fs::path cohort;
    std::optional<fs::path> config;
    std::optional<std::uint64_t> seed;
    AblationGrid grid = AblationGrid::Fusion;
    std::vector<std::size_t> ks = {4, 8, 16};
    std::size_t threads = 1;
    fs::path out;
    Log log;
};

inline std::vector<train::AblationRow> cmd_ablate(const AblateOptions& o) {
    const auto cfg = resolve_config(o.config, o.seed, std::nullopt);
    const auto loaded = load_cohort(o.cohort);
    auto m = start_manifest("ablate", o.out);
    for (const auto& f : loaded.files) m.add_input(f);
    const auto splits = train::make_folds(loaded.cohort.patient_ids, cfg.folds, cfg.seed);
    const auto grid = o.grid == AblationGrid::Fusion ? train::fusion_grid(cfg) : train::prototype_grid(cfg, o.ks);
    std::vector<train::AblationRow> rows;
    for (const auto& g : grid) {
        rows.push_back(train::summarize(g.label, g.config, train::run_cross_validation(g.config, loaded.cohort, splits, {}, o.threads)));
        o.log(g.label, ": mean C-index ", format_number(rows.back().mean));
    }
    write_file(o.out / "ablation.csv", train::ablation_csv(rows));
    write_file(o.out / "splits.csv", write_splits_csv(splits));
    m.config = train::config_json(cfg);
    m.config["grid"] = o.grid == AblationGrid::Fusion ? "fusion" : "prototypes";
    m.seeds = {{"seed", cfg.seed}};
    finalize_manifest(m, o.out);
    return rows;
}

} // namespace protopath::io
