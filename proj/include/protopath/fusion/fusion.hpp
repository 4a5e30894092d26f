#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "protopath/core/error.hpp"
#include "protopath/core/ops.hpp"
#include "protopath/core/params.hpp"

namespace protopath::fusion {

using ad::Linear;
using ad::NdArray;
using ad::ParamBinding;
using ad::ParamStore;
using ad::Tape;
using ad::Var;

enum class FusionVariant { CrossAttention, Concatenation, Bilinear, Gated };

inline const char* to_string(FusionVariant v) {
    switch (v) {
    case FusionVariant::CrossAttention: return "cross_attention";
    case FusionVariant::Concatenation: return "concatenation";
    case FusionVariant::Bilinear: return "bilinear";
    case FusionVariant::Gated: return "gated";
    }
    return "?";
}

inline FusionVariant parse_fusion_variant(const std::string& s) {
    for (auto v : {FusionVariant::CrossAttention, FusionVariant::Concatenation, FusionVariant::Bilinear,
                   FusionVariant::Gated})
        if (s == to_string(v)) return v;
    throw ConfigError("unknown fusion variant: " + s);
}

struct FusionConfig {
    std::size_t dim = 128;
    std::size_t heads = 4;
    std::size_t bins = 4;
    double dropout = 0.25;
    FusionVariant variant = FusionVariant::CrossAttention;
    /// Rank of the low-rank bilinear interaction (defaults to dim).
    std::size_t bilinear_rank = 0;
};

/// Two-layer bottleneck: Linear -> ReLU -> dropout -> Linear.
struct Mlp {
    Linear hidden;
    Linear output;

    static Mlp create(ParamStore& store, const std::string& name, std::size_t in, std::size_t dim, Rng& rng) {
        return {Linear::create(store, name + ".hidden", in, dim, rng), Linear::create(store, name + ".output", dim, dim, rng)};
    }

    Var operator()(ParamBinding& p, const Var& x, double dropout, Rng& rng, bool training) const {
        return output(p, ad::dropout(ad::relu(hidden(p, x)), dropout, rng, training));
    }
};

/// LayerNorm with its own affine parameters.
struct Norm {
    std::size_t gamma = 0, beta = 0;

    static Norm create(ParamStore& store, const std::string& name, std::size_t dim) {
        return {store.add_ones(name + ".gamma", 1, dim), store.add_zeros(name + ".beta", 1, dim)};
    }
    Var operator()(ParamBinding& p, const Var& x) const { return ad::layer_norm(x, p(gamma), p(beta)); }
};

struct AttentionResult {
    Var attended;  // K x d
    Var attention; // K x P, mean over heads
    std::vector<Var> per_head;
};

/// Multi-head scaled dot-product attention: tokens query pathway embeddings.
/// Heads are concatenated and mixed by an output projection.
struct CrossAttention {
    Linear q, k, v, o;
    std::size_t heads = 1;

    static CrossAttention create(ParamStore& store, const std::string& name, std::size_t dim, std::size_t heads,
                                 Rng& rng) {
        if (heads == 0 || dim % heads != 0)
            throw ParameterError("model dim " + std::to_string(dim) + " is not divisible by " + std::to_string(heads) +
                                 " heads");
        return {Linear::create(store, name + ".query", dim, dim, rng), Linear::create(store, name + ".key", dim, dim, rng),
                Linear::create(store, name + ".value", dim, dim, rng),
                Linear::create(store, name + ".output", dim, dim, rng), heads};
    }

    AttentionResult operator()(ParamBinding& p, const Var& tokens, const Var& pathways) const {
        if (pathways.rows() == 0) throw ContractError("cross attention needs at least one pathway");
        const std::size_t dim = tokens.cols();
        const std::size_t dh = dim / heads;
        Var qa = q(p, tokens), ka = k(p, pathways), va = v(p, pathways);
        std::vector<Var> outs;
        AttentionResult r;
        for (std::size_t h = 0; h < heads; ++h) {
            Var qh = ad::slice_cols(qa, h * dh, (h + 1) * dh);
            Var kh = ad::slice_cols(ka, h * dh, (h + 1) * dh);
            Var vh = ad::slice_cols(va, h * dh, (h + 1) * dh);
            Var a = ad::softmax_last(ad::scale(ad::matmul_nt(qh, kh), 1.0 / std::sqrt(double(dh))));
            r.per_head.push_back(a);
            outs.push_back(ad::matmul(a, vh));
            r.attention = h == 0 ? a : ad::add(r.attention, a);
        }
        r.attention = ad::scale(r.attention, 1.0 / double(heads));
        r.attended = o(p, ad::concat_cols(outs));
        return r;
    }
};

/// Softmax gate over rows followed by the weighted row sum.
struct GatedPool {
    Linear score;

    static GatedPool create(ParamStore& store, const std::string& name, std::size_t dim, Rng& rng) {
        return {Linear::create(store, name, dim, 1, rng)};
    }

    /// Returns {weights 1 x K, pooled 1 x d}.
    std::pair<Var, Var> operator()(ParamBinding& p, const Var& rows) const {
        Var w = ad::softmax_last(ad::reshape(score(p, rows), {1, rows.rows()}));
        return {w, ad::matmul(w, rows)};
    }
};

/// Low-rank bilinear interaction ((a U) * (b V)) W of two row vectors.
struct BilinearInteraction {
    std::size_t u = 0, v = 0;
    Linear w;

    static BilinearInteraction create(ParamStore& store, const std::string& name, std::size_t dim, std::size_t rank,
                                      Rng& rng) {
        BilinearInteraction b;
        b.u = store.add_linear_weight(name + ".u", dim, rank, rng);
        b.v = store.add_linear_weight(name + ".v", dim, rank, rng);
        b.w = Linear::create(store, name + ".w", rank, dim, rng);
        return b;
    }

    Var operator()(ParamBinding& p, const Var& a, const Var& b) const {
        return w(p, ad::mul(ad::matmul(a, p(u)), ad::matmul(b, p(v))));
    }
};

/// sigmoid(gate_src W + b) * x, elementwise.
struct SigmoidGate {
    Linear gate;

    static SigmoidGate create(ParamStore& store, const std::string& name, std::size_t dim, Rng& rng) {
        return {Linear::create(store, name, dim, dim, rng)};
    }

    Var operator()(ParamBinding& p, const Var& gate_src, const Var& x) const {
        return ad::mul(ad::sigmoid(gate(p, gate_src)), x);
    }
};

struct FusionInputs {
    Var tokens;          // K x d prototype tokens
    Var pathways;        // P x d pathway embeddings
    Var pooled_pathway;  // 1 x d
    Var wsi;             // 1 x d
};

struct FusionForward {
    Var attention;    // K x P (cross-attention variant only)
    Var attended;     // K x d
    Var gate_weights; // 1 x K
    Var cross;        // 1 x d
    Var fused;        // 1 x d
    Var logits;       // 1 x B
    bool has_attention = false;
};

/// Multimodal head: one of the fusion variants, then the bin classifier.
class FusionHead {
public:
    static FusionHead create(ParamStore& store, const std::string& name, const FusionConfig& cfg, Rng& rng) {
        FusionHead f;
        f.cfg_ = cfg;
        const std::size_t d = cfg.dim;
        f.norm_pathway_ = Norm::create(store, name + ".norm_pathway", d);
        f.norm_wsi_ = Norm::create(store, name + ".norm_wsi", d);
        switch (cfg.variant) {
        case FusionVariant::CrossAttention:
            f.attention_ = CrossAttention::create(store, name + ".attention", d, cfg.heads, rng);
            f.gate_ = GatedPool::create(store, name + ".gate", d, rng);
            f.norm_cross_ = Norm::create(store, name + ".norm_cross", d);
            f.mlp_ = Mlp::create(store, name + ".mlp", 3 * d, d, rng);
            break;
        case FusionVariant::Concatenation: f.mlp_ = Mlp::create(store, name + ".mlp", 2 * d, d, rng); break;
        case FusionVariant::Bilinear:
            f.bilinear_ = BilinearInteraction::create(store, name + ".bilinear", d, cfg.bilinear_rank ? cfg.bilinear_rank : d,
                                                      rng);
            f.mlp_ = Mlp::create(store, name + ".mlp", d, d, rng);
            break;
        case FusionVariant::Gated:
            f.sigmoid_gate_ = SigmoidGate::create(store, name + ".sigmoid_gate", d, rng);
            f.mlp_ = Mlp::create(store, name + ".mlp", d, d, rng);
            break;
        }
        f.classifier_ = Linear::create(store, name + ".classifier", d, cfg.bins, rng);
        return f;
    }

    const FusionConfig& config() const noexcept { return cfg_; }

    FusionForward forward(ParamBinding& p, const FusionInputs& in, Rng& rng, bool training) const {
        FusionForward out;
        Var zp = norm_pathway_(p, in.pooled_pathway);
        Var zw = norm_wsi_(p, in.wsi);
        Var mixed;
        switch (cfg_.variant) {
        case FusionVariant::CrossAttention: {
            auto att = attention_(p, in.tokens, in.pathways);
            out.attention = att.attention;
            out.attended = att.attended;
            out.has_attention = true;
            auto [w, cross] = gate_(p, att.attended);
            out.gate_weights = w;
            out.cross = cross;
            mixed = ad::concat_cols({zp, norm_cross_(p, cross), zw});
            break;
        }
        case FusionVariant::Concatenation: mixed = ad::concat_cols({zp, zw}); break;
        case FusionVariant::Bilinear: mixed = bilinear_(p, zp, zw); break;
        case FusionVariant::Gated: mixed = sigmoid_gate_(p, zw, zp); break;
        }
        out.fused = mlp_(p, mixed, cfg_.dropout, rng, training);
        out.logits = classifier_(p, out.fused);
        return out;
    }

private:
    FusionConfig cfg_;
    Norm norm_pathway_, norm_wsi_, norm_cross_;
    CrossAttention attention_;
    GatedPool gate_;
    BilinearInteraction bilinear_;
    SigmoidGate sigmoid_gate_;
    Mlp mlp_;
    Linear classifier_;
};

} // namespace protopath::fusion
