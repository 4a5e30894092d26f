#pragma once

#include <string>
#include <vector>

#include "protopath/core/error.hpp"
#include "protopath/core/ops.hpp"
#include "protopath/core/params.hpp"
#include "protopath/curation/bipartite_graph.hpp"

namespace protopath::pathway {

using ad::Linear;
using ad::NdArray;
using ad::ParamBinding;
using ad::ParamStore;
using ad::Tape;
using ad::Var;
using curation::BipartiteGraph;

struct PathwayConfig {
    std::size_t hidden_dim = 128;
    std::size_t heads = 4;
    std::size_t sage_layers = 2;
    double dropout = 0.25;
};

struct PathwayForward {
    Var nodes;        // (G+P) x d after the attention layer
    Var pathways;     // P x d
    Var gate_weights; // 1 x P
    Var pooled;       // 1 x d
    /// Head-averaged attention per membership (gene -> pathway edge), aligned
    /// with BipartiteGraph::memberships().
    std::vector<double> gene_attention;
};

/// Gene nodes carry their scalar expression, pathway nodes start at zero.
inline NdArray build_node_features(const std::vector<double>& expression, const BipartiteGraph& graph) {
    if (expression.size() != graph.num_genes())
        throw AlignmentError("expression vector has " + std::to_string(expression.size()) + " values for " +
                             std::to_string(graph.num_genes()) + " graph genes");
    NdArray x({graph.num_nodes(), 1});
    for (std::size_t g = 0; g < expression.size(); ++g) x(g, 0) = expression[g];
    return x;
}

/// One mean-aggregation layer before activation:
/// x W_self + mean_{u in N(v)} x_u W_neigh + b.
struct SageLayer {
    Linear self;
    Linear neigh;

    static SageLayer create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
        return {Linear::create(store, name + ".self", in, out, rng, true),
                Linear::create(store, name + ".neigh", in, out, rng, false)};
    }

    Var operator()(ParamBinding& p, const Var& x, const std::vector<std::size_t>& src,
                   const std::vector<std::size_t>& dst) const {
        Var agg = ad::segment_mean(ad::gather_rows(x, src), dst, x.rows());
        return ad::add(self(p, x), neigh(p, agg));
    }
};

/// Multi-head GATv2 layer with head-averaged output. Edge score for u -> v is
/// a . LeakyReLU(x_u W_src + x_v W_dst); messages are x_u W_src.
struct GatV2Layer {
    std::vector<std::size_t> w_src, w_dst, att;
    std::size_t bias = 0;

    static GatV2Layer create(ParamStore& store, const std::string& name, std::size_t dim, std::size_t heads,
                             Rng& rng) {
        if (heads < 1) throw ParameterError("attention heads must be >= 1");
        GatV2Layer l;
        for (std::size_t h = 0; h < heads; ++h) {
            const std::string hn = name + ".head" + std::to_string(h);
            l.w_src.push_back(store.add_linear_weight(hn + ".w_src", dim, dim, rng));
            l.w_dst.push_back(store.add_linear_weight(hn + ".w_dst", dim, dim, rng));
            l.att.push_back(store.add_linear_weight(hn + ".att", dim, 1, rng));
        }
        l.bias = store.add_zeros(name + ".bias", 1, dim);
        return l;
    }

    std::size_t heads() const noexcept { return w_src.size(); }

    /// Returns node outputs; `coefficients` receives per-edge head-averaged
    /// attention.
    Var operator()(ParamBinding& p, const Var& x, const std::vector<std::size_t>& src,
                   const std::vector<std::size_t>& dst, std::vector<double>& coefficients) const {
        const std::size_t n = x.rows();
        coefficients.assign(src.size(), 0.0);
        Var total;
        for (std::size_t h = 0; h < heads(); ++h) {
            Var xs = ad::matmul(x, p(w_src[h]));
            Var xd = ad::matmul(x, p(w_dst[h]));
            Var msg = ad::gather_rows(xs, src);
            Var pre = ad::leaky_relu(ad::add(msg, ad::gather_rows(xd, dst)));
            Var alpha = ad::segment_softmax(ad::matmul(pre, p(att[h])), dst, n);
            Var out = ad::segment_sum(ad::mul_col(msg, alpha), dst, n);
            total = h == 0 ? out : ad::add(total, out);
            for (std::size_t e = 0; e < src.size(); ++e) coefficients[e] += alpha.value()[e] / double(heads());
        }
        return ad::add_row(ad::scale(total, 1.0 / double(heads())), p(bias));
    }
};

/// Graph encoder: SAGE layers (LeakyReLU + dropout), LayerNorm, GATv2, then a
/// softmax gate over pathway embeddings.
class PathwayEncoder {
public:
    static PathwayEncoder create(ParamStore& store, const std::string& name, const PathwayConfig& cfg, Rng& rng) {
        if (cfg.sage_layers < 1) throw ParameterError("at least one SAGE layer is required");
        PathwayEncoder e;
        e.cfg_ = cfg;
        for (std::size_t l = 0; l < cfg.sage_layers; ++l)
            e.sage_.push_back(
                SageLayer::create(store, name + ".sage" + std::to_string(l), l == 0 ? 1 : cfg.hidden_dim,
                                  cfg.hidden_dim, rng));
        e.ln_gamma_ = store.add_ones(name + ".norm.gamma", 1, cfg.hidden_dim);
        e.ln_beta_ = store.add_zeros(name + ".norm.beta", 1, cfg.hidden_dim);
        e.gat_ = GatV2Layer::create(store, name + ".gat", cfg.hidden_dim, cfg.heads, rng);
        e.gate_ = Linear::create(store, name + ".gate", cfg.hidden_dim, 1, rng);
        return e;
    }

    const PathwayConfig& config() const noexcept { return cfg_; }

    PathwayForward forward(ParamBinding& p, Tape& tape, const BipartiteGraph& graph,
                           const std::vector<double>& expression, Rng& rng, bool training) const {
        const std::vector<std::size_t>& src = graph.edge_src();
        const std::vector<std::size_t>& dst = graph.edge_dst();
        Var x = tape.constant(build_node_features(expression, graph));
        for (const auto& layer : sage_)
            x = ad::dropout(ad::leaky_relu(layer(p, x, src, dst)), cfg_.dropout, rng, training);
        x = ad::layer_norm(x, p(ln_gamma_), p(ln_beta_));

        PathwayForward out;
        std::vector<double> coeff;
        out.nodes = gat_(p, x, src, dst, coeff);
        out.gene_attention.resize(graph.num_memberships());
        for (std::size_t m = 0; m < graph.num_memberships(); ++m) out.gene_attention[m] = coeff[2 * m];

        std::vector<std::size_t> rows;
        for (std::size_t q = 0; q < graph.num_pathways(); ++q) rows.push_back(graph.pathway_node(q));
        out.pathways = ad::gather_rows(out.nodes, rows);
        Var logits = ad::reshape(gate_(p, out.pathways), {1, graph.num_pathways()});
        out.gate_weights = ad::softmax_last(logits);
        out.pooled = ad::matmul(out.gate_weights, out.pathways);
        return out;
    }

private:
    PathwayConfig cfg_;
    std::vector<SageLayer> sage_;
    std::size_t ln_gamma_ = 0, ln_beta_ = 0;
    GatV2Layer gat_;
    Linear gate_;
};

} // namespace protopath::pathway
