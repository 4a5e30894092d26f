#pragma once

#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "protopath/core/adamw.hpp"
#include "protopath/core/error.hpp"
#include "protopath/model/model.hpp"
#include "protopath/prototype/kmeans.hpp"
#include "protopath/survival/survival.hpp"
#include "protopath/train/cohort.hpp"
#include "protopath/train/config.hpp"

namespace protopath::train {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct EpochLog {
    int fold = 0;
    std::size_t epoch = 0; // 1-based
    double train_loss = 0.0;
    double val_cindex = 0.0;
    double train_cindex = kNaN; // only when tracked
};

struct Checkpoint {
    TrainConfig config;
    std::size_t input_dim = 0;
    std::size_t num_genes = 0;
    std::size_t num_pathways = 0;
    int fold = 0;
    double best_val_cindex = 0.0;
    std::size_t best_epoch = 0;
    std::vector<double> bin_edges;
    std::string rng_state; // training rng right after the best epoch
    std::vector<std::string> names;
    std::vector<NdArray> values;
};

struct FoldResult {
    Checkpoint checkpoint;
    std::vector<EpochLog> history;
    std::vector<std::string> val_ids;
    std::vector<double> val_risks;       // best checkpoint
    std::vector<double> final_val_risks; // last epoch
    double final_val_cindex = 0.0;
    NdArray initial_prototypes; // empty without the WSI branch
};

struct RunOptions {
    bool track_train_cindex = false;
    /// Stop once the training C-index reaches this value (needs tracking).
    double stop_at_train_cindex = kNaN;
    std::function<void(const EpochLog&)> on_epoch;
};

inline model::PatientInput patient_input(const model::SurvivalModel& m, const Cohort& c, std::size_t i) {
    model::PatientInput in;
    if (m.has_wsi()) {
        if (!c.has_patches()) throw ContractError("model needs patch features but the cohort has none");
        in.patches = &c.bags[i].features;
    }
    if (m.has_genomic()) {
        if (!c.has_expression()) throw ContractError("model needs expression but the cohort has none");
        in.expression = &c.expression[i];
    }
    return in;
}

/// Inference-mode risk scores (dropout off).
inline std::vector<double> predict_risks(const model::SurvivalModel& m, const Cohort& c, const std::vector<std::size_t>& idx) {
    std::vector<double> risks;
    Rng unused(0);
    for (std::size_t i : idx) {
        ad::Tape tape;
        ad::ParamBinding p(tape, m.params());
        auto out = m.forward(tape, p, patient_input(m, c, i), unused, false);
        risks.push_back(survival::risk_from_logits(out.logits.value().values()));
    }
    return risks;
}

inline std::vector<std::size_t> indices_of(const Cohort& c, const std::vector<std::string>& ids) {
    std::vector<std::size_t> out;
    for (const auto& id : ids) out.push_back(c.index_of(id));
    return out;
}

inline std::vector<SurvivalRecord> records_of(const Cohort& c, const std::vector<std::size_t>& idx) {
    std::vector<SurvivalRecord> out;
    for (std::size_t i : idx) out.push_back(c.records[i]);
    return out;
}

inline double validation_cindex(const std::vector<double>& risks, const std::vector<SurvivalRecord>& recs, int fold) {
    try {
        return survival::c_index(risks, recs);
    } catch (const MetricError& e) {
        throw MetricError("fold " + std::to_string(fold) + ": validation C-index undefined (" + e.what() + ")");
    }
}

// Every fold starts from the same seeded state, so folds differ only in their
// data and do not depend on the order in which they run.
inline constexpr std::uint64_t kInitStream = 100;
inline constexpr std::uint64_t kKMeansStream = 200;
inline constexpr std::uint64_t kTrainStream = 300;

/// Prototype centroids from the given patients' bags only.
inline NdArray fit_prototypes(const Cohort& c, const std::vector<std::size_t>& idx, const TrainConfig& cfg) {
    std::vector<NdArray> bags;
    for (std::size_t i : idx) bags.push_back(c.bags[i].features);
    prototype::KMeansOptions opt;
    opt.k = cfg.K;
    opt.budget = cfg.kmeans_budget;
    opt.restarts = cfg.kmeans_restarts;
    opt.seed = derive_seed(cfg.seed, kKMeansStream);
    return prototype::kmeans_init(bags, opt);
}

inline std::unique_ptr<model::SurvivalModel> make_model(const TrainConfig& cfg, const Cohort& c) {
    return std::make_unique<model::SurvivalModel>(cfg.model_config(c.input_dim()), c.graph,
                                                  derive_seed(cfg.seed, kInitStream));
}

/// Trains one fold for max_epochs and keeps the parameters of the epoch with
/// the best validation C-index (first such epoch on ties).
inline FoldResult run_fold(const TrainConfig& cfg, const FoldSplit& split, const Cohort& c, const RunOptions& opt = {}) {
    cfg.validate();
    validate_split(split, c);
    const auto train_idx = indices_of(c, split.train);
    const auto val_idx = indices_of(c, split.validation);
    const auto train_recs = records_of(c, train_idx);
    const auto val_recs = records_of(c, val_idx);

    FoldResult res;
    res.val_ids = split.validation;
    Checkpoint& ck = res.checkpoint;
    ck.config = cfg;
    ck.fold = split.fold;
    ck.input_dim = c.input_dim();
    ck.num_genes = c.graph ? c.graph->num_genes() : 0;
    ck.num_pathways = c.graph ? c.graph->num_pathways() : 0;
    ck.bin_edges = survival::fit_bins(train_recs, cfg.B);

    auto m = make_model(cfg, c);
    if (m->has_wsi()) {
        res.initial_prototypes = fit_prototypes(c, train_idx, cfg);
        m->set_prototypes(res.initial_prototypes);
    }
    for (std::size_t i = 0; i < m->params().size(); ++i) ck.names.push_back(m->params().name(i));

    std::vector<std::size_t> bins;
    for (const auto& r : train_recs) bins.push_back(survival::bin_index(r.time, ck.bin_edges));

    ad::AdamW adam({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
    Rng rng(derive_seed(cfg.seed, kTrainStream));
    std::vector<std::size_t> order(train_idx.size());
    std::iota(order.begin(), order.end(), 0);
    ck.best_val_cindex = -1.0;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t j : order) {
            ad::Tape tape;
            ad::ParamBinding p(tape, m->params());
            auto out = m->forward(tape, p, patient_input(*m, c, train_idx[j]), rng, true);
            auto loss = ad::survival_nll(out.logits, bins[j], train_recs[j].event);
            loss_sum += loss.value()[0];
            tape.backward(loss);
            adam.step(m->params().values(), p.gradients());
        }
        EpochLog log;
        log.fold = split.fold;
        log.epoch = epoch;
        log.train_loss = loss_sum / double(order.size());
        res.final_val_risks = predict_risks(*m, c, val_idx);
        log.val_cindex = validation_cindex(res.final_val_risks, val_recs, split.fold);
        if (opt.track_train_cindex) log.train_cindex = survival::c_index(predict_risks(*m, c, train_idx), train_recs);
        res.history.push_back(log);
        if (opt.on_epoch) opt.on_epoch(log);
        if (log.val_cindex > ck.best_val_cindex) {
            ck.best_val_cindex = log.val_cindex;
            ck.best_epoch = epoch;
            ck.values = m->params().values();
            ck.rng_state = rng.state();
            res.val_risks = res.final_val_risks;
        }
        res.final_val_cindex = log.val_cindex;
        if (opt.track_train_cindex && log.train_cindex >= opt.stop_at_train_cindex) break;
    }
    return res;
}

/// Rebuilds a model carrying the checkpoint's parameters.
inline std::unique_ptr<model::SurvivalModel> model_from_checkpoint(const Checkpoint& ck, const Cohort& c) {
    if (c.graph && (c.graph->num_genes() != ck.num_genes || c.graph->num_pathways() != ck.num_pathways))
        throw AlignmentError("checkpoint graph has " + std::to_string(ck.num_genes) + " genes / " +
                             std::to_string(ck.num_pathways) + " pathways; cohort graph differs");
    if (c.has_patches() && c.input_dim() != ck.input_dim)
        throw DimensionError("checkpoint expects feature dim " + std::to_string(ck.input_dim));
    auto m = std::make_unique<model::SurvivalModel>(ck.config.model_config(ck.input_dim), c.graph, 0);
    auto& store = m->params();
    if (store.size() != ck.names.size()) throw ContractError("checkpoint parameter count does not match the model");
    for (std::size_t i = 0; i < ck.names.size(); ++i) {
        auto& dst = store.value(store.index_of(ck.names[i]));
        if (!dst.same_shape(ck.values[i])) throw DimensionError("checkpoint parameter " + ck.names[i] + " has wrong shape");
        dst = ck.values[i];
    }
    return m;
}

struct Evaluation {
    std::vector<std::string> ids;
    std::vector<double> risks;
    double cindex = kNaN;
};

inline Evaluation evaluate_checkpoint(const Checkpoint& ck, const Cohort& c, const std::vector<std::string>& ids) {
    auto m = model_from_checkpoint(ck, c);
    const auto idx = indices_of(c, ids);
    Evaluation e;
    e.ids = ids;
    e.risks = predict_risks(*m, c, idx);
    try {
        e.cindex = survival::c_index(e.risks, records_of(c, idx));
    } catch (const MetricError&) {
    }
    return e;
}

/// Independent folds, optionally on worker threads; results keep fold order.
inline std::vector<FoldResult> run_cross_validation(const TrainConfig& cfg, const Cohort& c,
                                                    const std::vector<FoldSplit>& splits, const RunOptions& opt = {},
                                                    std::size_t threads = 1) {
    std::vector<FoldResult> results(splits.size());
    std::vector<std::exception_ptr> errors(splits.size());
    auto work = [&](std::size_t f) {
        try {
            results[f] = run_fold(cfg, splits[f], c, opt);
        } catch (...) {
            errors[f] = std::current_exception();
        }
    };
    if (threads <= 1) {
        for (std::size_t f = 0; f < splits.size(); ++f) work(f);
    } else {
        std::vector<std::thread> pool;
        std::size_t next = 0;
        while (next < splits.size()) {
            pool.clear();
            for (std::size_t t = 0; t < threads && next < splits.size(); ++t) pool.emplace_back(work, next++);
            for (auto& th : pool) th.join();
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return results;
}

struct GridPoint {
    std::string label;
    TrainConfig config;
};

inline std::vector<GridPoint> fusion_grid(const TrainConfig& base) {
    std::vector<GridPoint> out;
    for (auto v : {fusion::FusionVariant::CrossAttention, fusion::FusionVariant::Concatenation,
                   fusion::FusionVariant::Bilinear, fusion::FusionVariant::Gated}) {
        TrainConfig c = base;
        c.fusion_variant = v;
        out.push_back({fusion::to_string(v), c});
    }
    return out;
}

inline std::vector<GridPoint> prototype_grid(const TrainConfig& base, const std::vector<std::size_t>& ks) {
    std::vector<GridPoint> out;
    for (std::size_t k : ks) {
        TrainConfig c = base;
        c.K = k;
        out.push_back({"K=" + std::to_string(k), c});
    }
    return out;
}

struct AblationRow {
    std::string label;
    TrainConfig config;
    std::vector<double> fold_cindex;
    double mean = 0.0;
    double se = kNaN; // sample standard deviation / sqrt(folds)
};

inline AblationRow summarize(const std::string& label, const TrainConfig& cfg, const std::vector<FoldResult>& folds) {
    AblationRow r;
    r.label = label;
    r.config = cfg;
    for (const auto& f : folds) r.fold_cindex.push_back(f.checkpoint.best_val_cindex);
    const double n = double(r.fold_cindex.size());
    for (double v : r.fold_cindex) r.mean += v / n;
    if (r.fold_cindex.size() > 1) {
        double ss = 0.0;
        for (double v : r.fold_cindex) ss += (v - r.mean) * (v - r.mean);
        r.se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    }
    return r;
}

/// Every grid point sees the same folds and seed.
inline std::vector<AblationRow> run_ablation(const std::vector<GridPoint>& grid, const Cohort& c,
                                             const std::vector<FoldSplit>& splits, const RunOptions& opt = {},
                                             std::size_t threads = 1) {
    std::vector<AblationRow> rows;
    for (const auto& g : grid) rows.push_back(summarize(g.label, g.config, run_cross_validation(g.config, c, splits, opt, threads)));
    return rows;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::size_t folds = 0;
    for (const auto& r : rows) folds = std::max(folds, r.fold_cindex.size());
    std::string out = "config,fusion_variant,K,seed";
    for (std::size_t f = 0; f < folds; ++f) out += ",fold" + std::to_string(f);
    out += ",mean,se\n";
    for (const auto& r : rows) {
        out += r.label + "," + fusion::to_string(r.config.fusion_variant) + "," + std::to_string(r.config.K) + "," +
               std::to_string(r.config.seed);
        for (std::size_t f = 0; f < folds; ++f)
            out += "," + (f < r.fold_cindex.size() ? detail::format_double(r.fold_cindex[f]) : std::string());
        out += "," + detail::format_double(r.mean) + "," + (std::isnan(r.se) ? std::string("nan") : detail::format_double(r.se)) + "\n";
    }
    return out;
}

} // namespace protopath::train
