#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "protopath/core/error.hpp"
#include "protopath/core/ops.hpp"
#include "protopath/core/params.hpp"
#include "protopath/curation/bipartite_graph.hpp"
#include "protopath/fusion/fusion.hpp"
#include "protopath/pathway/encoder.hpp"
#include "protopath/prototype/encoder.hpp"

namespace protopath::model {

using ad::Linear;
using ad::NdArray;
using ad::ParamBinding;
using ad::ParamStore;
using ad::Tape;
using ad::Var;

enum class Branches { Both, WsiOnly, GeneOnly };

inline const char* to_string(Branches b) {
    switch (b) {
    case Branches::Both: return "both";
    case Branches::WsiOnly: return "wsi_only";
    case Branches::GeneOnly: return "gene_only";
    }
    return "?";
}

inline Branches parse_branches(const std::string& s) {
    for (auto b : {Branches::Both, Branches::WsiOnly, Branches::GeneOnly})
        if (s == to_string(b)) return b;
    throw ConfigError("unknown branches value: " + s);
}

struct ModelConfig {
    std::size_t input_dim = 1536;
    std::size_t num_prototypes = 16;
    std::size_t dim = 128;
    double temperature = 0.1;
    std::size_t gnn_layers = 3; // SAGE layers + one attention layer
    std::size_t heads_gene = 4;
    std::size_t heads_fusion = 4;
    double dropout = 0.25;
    std::size_t bins = 4;
    fusion::FusionVariant variant = fusion::FusionVariant::CrossAttention;
    Branches branches = Branches::Both;
};

/// One patient's inputs. Either pointer may be null when its branch is off.
struct PatientInput {
    const NdArray* patches = nullptr;
    const std::vector<double>* expression = nullptr;
};

struct ModelForward {
    std::optional<prototype::PrototypeForward> wsi;
    std::optional<pathway::PathwayForward> genomic;
    std::optional<fusion::FusionForward> fusion;
    Var logits; // 1 x B
};

/// Full survival model. Unimodal configurations instantiate only their own
/// encoder followed by a fresh linear map from d to the bin logits.
class SurvivalModel {
public:
    SurvivalModel(const ModelConfig& cfg, std::shared_ptr<const curation::BipartiteGraph> graph, std::uint64_t seed)
        : cfg_(cfg), graph_(std::move(graph)) {
        if (cfg.gnn_layers < 2) throw ConfigError("gnn_layers must be >= 2 (SAGE layers plus attention layer)");
        if (cfg.branches != Branches::WsiOnly && !graph_) throw ContractError("genomic branch needs a graph");
        Rng rng(seed);
        if (cfg.branches != Branches::GeneOnly)
            wsi_ = prototype::PrototypeEncoder::create(
                store_, "prototype", {cfg.input_dim, cfg.num_prototypes, cfg.dim, cfg.temperature}, rng);
        if (cfg.branches != Branches::WsiOnly)
            genomic_ = pathway::PathwayEncoder::create(
                store_, "pathway", {cfg.dim, cfg.heads_gene, cfg.gnn_layers - 1, cfg.dropout}, rng);
        if (cfg.branches == Branches::Both)
            fusion_ = fusion::FusionHead::create(
                store_, "fusion", {cfg.dim, cfg.heads_fusion, cfg.bins, cfg.dropout, cfg.variant, 0}, rng);
        else
            unimodal_head_ = Linear::create(store_, "unimodal_head", cfg.dim, cfg.bins, rng);
    }

    const ModelConfig& config() const noexcept { return cfg_; }
    ParamStore& params() noexcept { return store_; }
    const ParamStore& params() const noexcept { return store_; }
    const curation::BipartiteGraph* graph() const noexcept { return graph_.get(); }
    bool has_wsi() const noexcept { return wsi_.has_value(); }
    bool has_genomic() const noexcept { return genomic_.has_value(); }
    const prototype::PrototypeEncoder& wsi_encoder() const { return wsi_.value(); }

    void set_prototypes(const NdArray& centroids) {
        if (!wsi_) throw ContractError("model has no prototype encoder");
        wsi_->set_prototypes(store_, centroids);
    }

    ModelForward forward(Tape& tape, ParamBinding& p, const PatientInput& in, Rng& rng, bool training) const {
        ModelForward out;
        if (wsi_) {
            if (!in.patches) throw ContractError("patient input lacks patch features");
            out.wsi = wsi_->forward(p, tape, *in.patches);
        }
        if (genomic_) {
            if (!in.expression) throw ContractError("patient input lacks expression");
            out.genomic = genomic_->forward(p, tape, *graph_, *in.expression, rng, training);
        }
        if (fusion_) {
            fusion::FusionInputs fi{out.wsi->tokens, out.genomic->pathways, out.genomic->pooled, out.wsi->embedding};
            out.fusion = fusion_->forward(p, fi, rng, training);
            out.logits = out.fusion->logits;
        } else {
            out.logits = unimodal_head_(p, wsi_ ? out.wsi->embedding : out.genomic->pooled);
        }
        return out;
    }

private:
    ModelConfig cfg_;
    std::shared_ptr<const curation::BipartiteGraph> graph_;
    ParamStore store_;
    std::optional<prototype::PrototypeEncoder> wsi_;
    std::optional<pathway::PathwayEncoder> genomic_;
    std::optional<fusion::FusionHead> fusion_;
    Linear unimodal_head_;
};

} // namespace protopath::model
