#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "protopath/io/commands.hpp"

using namespace protopath;
namespace fs = std::filesystem;

namespace {

int report(const std::string& kind, const std::string& message, int code) {
    nlohmann::ordered_json j;
    j["error"] = kind;
    j["message"] = message;
    j["exit_code"] = code;
    std::cerr << j.dump() << std::endl;
    return code;
}

std::optional<int> parse_fold(const std::string& s) {
    if (s.empty() || s == "all") return std::nullopt;
    return io::parse_number<int>(s, "--fold");
}

template <class T>
std::optional<T> opt_if(const CLI::Option* o, const T& v) {
    return o->count() ? std::optional<T>(v) : std::nullopt;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"protopath: prototype and pathway survival modeling"};
    app.require_subcommand(1);
    app.fallthrough();
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "Suppress progress logging");

    std::string config, out, fold = "all", cohort, run, variant, pathway, gene, entity_kind = "pathway_gate";
    std::uint64_t seed = 42;
    std::size_t threads = 1;

    // preprocess
    auto* pre = app.add_subcommand("preprocess", "Pathway curation stages");
    pre->require_subcommand(1);
    pre->fallthrough();
    std::string gmt, relations, hallmark, names;
    auto* pre_r = pre->add_subcommand("reactome", "Stage 1: base pathway vocabulary");
    pre_r->add_option("--gmt", gmt, "Reactome GMT")->required()->check(CLI::ExistingFile);
    pre_r->add_option("--relations", relations, "Parent/child relations")->required()->check(CLI::ExistingFile);
    auto* o_hall = pre_r->add_option("--hallmark", hallmark, "Hallmark GMT")->check(CLI::ExistingFile);
    auto* o_names = pre_r->add_option("--names", names, "Pathway id/name listing")->check(CLI::ExistingFile);
    auto* o_pr_cfg = pre_r->add_option("--config", config, "Curation config")->check(CLI::ExistingFile);
    pre_r->add_option("--out", out, "Output directory")->required();

    std::string base_gmt, expression, genes;
    auto* pre_g = pre->add_subcommand("genes", "Stage 2: coverage filter and graph");
    pre_g->add_option("--pathways", base_gmt, "Base pathway GMT")->required()->check(CLI::ExistingFile);
    auto* o_expr = pre_g->add_option("--expression", expression, "Expression CSV")->check(CLI::ExistingFile);
    auto* o_genes = pre_g->add_option("--genes", genes, "Measured gene list")->check(CLI::ExistingFile);
    auto* o_pg_cfg = pre_g->add_option("--config", config, "Curation config")->check(CLI::ExistingFile);
    pre_g->add_option("--out", out, "Output directory")->required();

    // synth
    train::SyntheticCohortSpec spec;
    std::string patch_format = "csv";
    auto* syn = app.add_subcommand("synth", "Generate a synthetic cohort with a planted risk pathway");
    syn->add_option("--patients", spec.n_patients);
    syn->add_option("--genes", spec.genes);
    syn->add_option("--pathways", spec.pathways);
    syn->add_option("--clusters", spec.clusters);
    syn->add_option("--planted-size", spec.planted_size);
    syn->add_option("--signal", spec.signal);
    syn->add_option("--censoring", spec.censoring);
    syn->add_option("--feature-dim", spec.feature_dim);
    syn->add_option("--min-patches", spec.min_patches);
    syn->add_option("--max-patches", spec.max_patches);
    syn->add_option("--graph-seed", spec.graph_seed);
    syn->add_option("--seed", spec.seed);
    syn->add_option("--patch-format", patch_format)->check(CLI::IsMember({"csv", "binary"}));
    syn->add_option("--out", out, "Output directory")->required();

    // train
    auto* tr = app.add_subcommand("train", "Cross-validated training");
    tr->add_option("--cohort", cohort, "Cohort directory")->required();
    auto* o_tr_cfg = tr->add_option("--config", config, "Training config")->check(CLI::ExistingFile);
    auto* o_tr_seed = tr->add_option("--seed", seed, "Overrides the config seed");
    auto* o_tr_var = tr->add_option("--variant", variant, "Overrides the fusion variant");
    tr->add_option("--fold", fold, "Fold index or 'all'");
    tr->add_option("--threads", threads, "Folds trained in parallel");
    tr->add_option("--out", out, "Output directory")->required();

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Risks, C-index, Kaplan-Meier and log-rank for a trained run");
    ev->add_option("--run", run, "Training output directory")->required();
    auto* o_ev_cohort = ev->add_option("--cohort", cohort, "Cohort directory (default: the one used for training)");
    ev->add_option("--out", out, "Output directory")->required();

    // interpret
    std::size_t exemplars = 8;
    auto* in = app.add_subcommand("interpret", "Signal dumps, overlays and exemplars");
    in->add_option("--run", run, "Training output directory")->required();
    auto* o_in_cohort = in->add_option("--cohort", cohort, "Cohort directory");
    in->add_option("--fold", fold, "Fold index or 'all'");
    auto* o_path = in->add_option("--pathway", pathway, "Also write a single-pathway heatmap");
    auto* o_gene = in->add_option("--gene", gene, "Also write a single-gene heatmap");
    in->add_option("--exemplars", exemplars, "Patches per prototype");
    in->add_option("--out", out, "Output directory")->required();

    // stats
    bool combine = false;
    double alpha = 0.05;
    auto* st = app.add_subcommand("stats", "Fold-stratified risk-group analysis");
    st->add_option("--run", run, "Training output directory")->required();
    auto* o_st_cohort = st->add_option("--cohort", cohort, "Cohort directory");
    st->add_option("--entity-kind", entity_kind, "pathway_gate | gene_importance | within_pathway_genes | prototype_gate | "
                                                 "fusion_gate | cross_attention_row");
    st->add_flag("--combine", combine, "Combine folds (Stouffer + BH)");
    st->add_option("--alpha", alpha, "FDR level");
    st->add_option("--out", out, "Output directory")->required();

    // ablate
    std::string grid = "fusion";
    std::vector<std::size_t> ks = {4, 8, 16};
    auto* ab = app.add_subcommand("ablate", "Fusion-variant or prototype-count grid");
    ab->add_option("--cohort", cohort, "Cohort directory")->required();
    auto* o_ab_cfg = ab->add_option("--config", config, "Training config")->check(CLI::ExistingFile);
    auto* o_ab_seed = ab->add_option("--seed", seed, "Overrides the config seed");
    ab->add_option("--variant", grid, "Grid: fusion or prototypes")->check(CLI::IsMember({"fusion", "prototypes"}));
    ab->add_option("--ks", ks, "Prototype counts for the prototypes grid")->delimiter(',');
    ab->add_option("--threads", threads, "Folds trained in parallel");
    ab->add_option("--out", out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        return report("usage_error", e.what(), 2);
    }

    const io::Log log{quiet ? nullptr : &std::cout};
    try {
        if (pre_r->parsed()) {
            io::cmd_preprocess_reactome({gmt, relations, opt_if<fs::path>(o_hall, hallmark), opt_if<fs::path>(o_names, names),
                                         opt_if<fs::path>(o_pr_cfg, config), out, log});
        } else if (pre_g->parsed()) {
            io::cmd_preprocess_genes({base_gmt, opt_if<fs::path>(o_expr, expression), opt_if<fs::path>(o_genes, genes),
                                      opt_if<fs::path>(o_pg_cfg, config), out, log});
        } else if (syn->parsed()) {
            io::cmd_synth({spec, patch_format == "csv" ? io::PatchFormat::Csv : io::PatchFormat::Binary, out, log});
        } else if (tr->parsed()) {
            io::cmd_train({cohort, opt_if<fs::path>(o_tr_cfg, config), opt_if(o_tr_seed, seed), opt_if(o_tr_var, variant),
                           parse_fold(fold), threads, out, log});
        } else if (ev->parsed()) {
            io::cmd_evaluate({run, opt_if<fs::path>(o_ev_cohort, cohort), out, log});
        } else if (in->parsed()) {
            io::cmd_interpret({run, opt_if<fs::path>(o_in_cohort, cohort), parse_fold(fold), opt_if(o_path, pathway),
                               opt_if(o_gene, gene), exemplars, out, log});
        } else if (st->parsed()) {
            io::cmd_stats({run, opt_if<fs::path>(o_st_cohort, cohort), stats::parse_entity_kind(entity_kind), combine, alpha, out, log});
        } else if (ab->parsed()) {
            io::cmd_ablate({cohort, opt_if<fs::path>(o_ab_cfg, config), opt_if(o_ab_seed, seed),
                            grid == "fusion" ? io::AblationGrid::Fusion : io::AblationGrid::Prototypes, ks, threads, out, log});
        }
    } catch (const InputError& e) {
        return report(e.kind(), e.what(), 2);
    } catch (const ContractError& e) {
        return report(e.kind(), e.what(), 2);
    } catch (const nlohmann::json::exception& e) {
        return report("parse_error", e.what(), 2);
    } catch (const Error& e) {
        return report(e.kind(), e.what(), 1);
    } catch (const std::exception& e) {
        return report("internal_error", e.what(), 1);
    }
    return 0;
}
