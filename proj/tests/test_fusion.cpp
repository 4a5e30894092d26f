#include <gtest/gtest.h>

#include <cmath>

#include "protopath/fusion/fusion.hpp"
#include "protopath/model/model.hpp"
#include "support/gradcheck.hpp"
#include "support/param_gradcheck.hpp"

using namespace protopath;
using namespace protopath::fusion;
using protopath::testing::random_array;

namespace {

NdArray& param(ad::ParamStore& s, const std::string& name) { return s.value(s.index_of(name)); }

void jitter_biases(ad::ParamStore& s, std::uint64_t seed) {
    Rng r(seed);
    for (std::size_t i = 0; i < s.size(); ++i)
        if (s.name(i).find("bias") != std::string::npos || s.name(i).find("beta") != std::string::npos ||
            s.name(i).find("gamma") != std::string::npos)
            for (double& v : s.value(i).data()) v += 0.2 * r.normal();
}

NdArray matmul_ref(const NdArray& a, const NdArray& b) {
    NdArray c({a.rows(), b.cols()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j)
            for (std::size_t k = 0; k < a.cols(); ++k) c(i, j) += a(i, k) * b(k, j);
    return c;
}

NdArray add_bias_ref(NdArray x, const NdArray& b) {
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) x(i, j) += b(0, j);
    return x;
}

NdArray layer_norm_ref(const NdArray& x, const NdArray& g, const NdArray& b) {
    NdArray out(x.shape());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double mu = 0, var = 0;
        for (std::size_t j = 0; j < x.cols(); ++j) mu += x(i, j);
        mu /= double(x.cols());
        for (std::size_t j = 0; j < x.cols(); ++j) var += (x(i, j) - mu) * (x(i, j) - mu);
        var /= double(x.cols());
        for (std::size_t j = 0; j < x.cols(); ++j)
            out(i, j) = (x(i, j) - mu) / std::sqrt(var + 1e-5) * g(0, j) + b(0, j);
    }
    return out;
}

NdArray softmax_rows_ref(NdArray x) {
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double mx = -1e300, z = 0;
        for (std::size_t j = 0; j < x.cols(); ++j) mx = std::max(mx, x(i, j));
        for (std::size_t j = 0; j < x.cols(); ++j) z += std::exp(x(i, j) - mx);
        for (std::size_t j = 0; j < x.cols(); ++j) x(i, j) = std::exp(x(i, j) - mx) / z;
    }
    return x;
}

NdArray linear_ref(ad::ParamStore& s, const std::string& name, const NdArray& x) {
    NdArray y = matmul_ref(x, param(s, name + ".weight"));
    return s.contains(name + ".bias") ? add_bias_ref(y, param(s, name + ".bias")) : y;
}

struct HeadFixture {
    ad::ParamStore store;
    FusionHead head;
    FusionConfig cfg;

    explicit HeadFixture(FusionConfig c, std::uint64_t seed = 1) : cfg(c) {
        Rng rng(seed);
        head = FusionHead::create(store, "fusion", cfg, rng);
        jitter_biases(store, seed + 7);
    }

    FusionForward run(ad::Tape& t, const NdArray& tokens, const NdArray& pathways, const NdArray& zp,
                      const NdArray& zw) {
        ad::ParamBinding p(t, store);
        Rng rng(0);
        return head.forward(p, {t.constant(tokens), t.constant(pathways), t.constant(zp), t.constant(zw)}, rng,
                            false);
    }
};

FusionConfig cfg_of(std::size_t d, std::size_t heads, FusionVariant v = FusionVariant::CrossAttention) {
    FusionConfig c;
    c.dim = d;
    c.heads = heads;
    c.bins = 4;
    c.dropout = 0.0;
    c.variant = v;
    return c;
}

AttentionResult attend(ad::Tape& t, ad::ParamStore& s, const CrossAttention& att, const NdArray& tok,
                       const NdArray& path) {
    ad::ParamBinding p(t, s);
    return att(p, t.constant(tok), t.constant(path));
}

} // namespace

TEST(CrossAttentionOp, SinglePathway) {
    ad::ParamStore s;
    Rng rng(2);
    auto att = CrossAttention::create(s, "a", 4, 2, rng);
    ad::Tape t;
    auto r = attend(t, s, att, random_array({3, 4}, 1), random_array({1, 4}, 2));
    for (std::size_t k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(r.attention.value()(k, 0), 1.0);
    for (std::size_t k = 1; k < 3; ++k)
        for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(r.attended.value()(k, j), r.attended.value()(0, j), 1e-14);
}

TEST(CrossAttentionOp, IdenticalPathwaysUniform) {
    ad::ParamStore s;
    Rng rng(3);
    auto att = CrossAttention::create(s, "a", 4, 4, rng);
    NdArray z({3, 4});
    for (std::size_t q = 0; q < 3; ++q)
        for (std::size_t j = 0; j < 4; ++j) z(q, j) = 0.1 * double(j) - 0.2;
    ad::Tape t;
    auto r = attend(t, s, att, random_array({2, 4}, 5), z);
    for (double v : r.attention.value().data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-12);
}

TEST(CrossAttentionOp, HandBuiltSingleHead) {
    ad::ParamStore s;
    Rng rng(4);
    auto att = CrossAttention::create(s, "a", 2, 1, rng);
    param(s, "a.query.weight") = NdArray::identity(2);
    param(s, "a.key.weight") = NdArray::identity(2);
    // q = [10 sqrt2, 0]; keys [0,1] and [1,0]; scaled logits [0, 10].
    ad::Tape t;
    auto r = attend(t, s, att, NdArray::matrix({{10.0 * std::sqrt(2.0), 0.0}}), NdArray::matrix({{0, 1}, {1, 0}}));
    EXPECT_NEAR(r.attention.value()(0, 0), 4.54e-5, 1e-7);
    EXPECT_NEAR(r.attention.value()(0, 1), 0.9999546, 1e-7);
    EXPECT_NEAR(r.attention.value()(0, 1), 1.0 / (1.0 + std::exp(-10.0)), 1e-12);
}

TEST(CrossAttentionOp, MatchesMultiHeadReference) {
    ad::ParamStore s;
    Rng rng(5);
    auto att = CrossAttention::create(s, "a", 6, 3, rng);
    jitter_biases(s, 1);
    NdArray tok = random_array({4, 6}, 6), path = random_array({5, 6}, 7);
    ad::Tape t;
    auto r = attend(t, s, att, tok, path);
    NdArray q = linear_ref(s, "a.query", tok), k = linear_ref(s, "a.key", path), v = linear_ref(s, "a.value", path);
    NdArray concat({4, 6}), mean({4, 5});
    for (std::size_t h = 0; h < 3; ++h) {
        NdArray logits({4, 5});
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 5; ++j) {
                for (std::size_t c = 2 * h; c < 2 * h + 2; ++c) logits(i, j) += q(i, c) * k(j, c);
                logits(i, j) /= std::sqrt(2.0);
            }
        NdArray a = softmax_rows_ref(logits);
        for (std::size_t i = 0; i < 4; ++i) {
            for (std::size_t j = 0; j < 5; ++j) mean(i, j) += a(i, j) / 3.0;
            for (std::size_t c = 2 * h; c < 2 * h + 2; ++c)
                for (std::size_t j = 0; j < 5; ++j) concat(i, c) += a(i, j) * v(j, c);
        }
    }
    EXPECT_LE(max_abs_diff(r.attention.value(), mean), 1e-12);
    EXPECT_LE(max_abs_diff(r.attended.value(), linear_ref(s, "a.output", concat)), 1e-12);
}

TEST(CrossAttentionOp, PathwayPermutationEquivariance) {
    ad::ParamStore s;
    Rng rng(8);
    auto att = CrossAttention::create(s, "a", 4, 2, rng);
    NdArray tok = random_array({3, 4}, 1), path = random_array({4, 4}, 2);
    const std::vector<std::size_t> perm{2, 0, 3, 1};
    NdArray permuted({4, 4});
    for (std::size_t q = 0; q < 4; ++q)
        for (std::size_t j = 0; j < 4; ++j) permuted(q, j) = path(perm[q], j);
    ad::Tape t1, t2;
    auto a = attend(t1, s, att, tok, path);
    auto b = attend(t2, s, att, tok, permuted);
    for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t q = 0; q < 4; ++q)
            EXPECT_NEAR(b.attention.value()(k, q), a.attention.value()(k, perm[q]), 1e-14);
    EXPECT_LE(max_abs_diff(a.attended.value(), b.attended.value()), 1e-12);
}

TEST(CrossAttentionOp, KeyBiasShiftKeepsRows) {
    ad::ParamStore s;
    Rng rng(9);
    auto att = CrossAttention::create(s, "a", 4, 2, rng);
    NdArray tok = random_array({3, 4}, 3), path = random_array({5, 4}, 4);
    ad::Tape t1;
    auto a = attend(t1, s, att, tok, path);
    for (double& v : param(s, "a.key.bias").data()) v += 1.7;
    ad::Tape t2;
    auto b = attend(t2, s, att, tok, path);
    EXPECT_LE(max_abs_diff(a.attention.value(), b.attention.value()), 1e-12);
}

TEST(CrossAttentionOp, Errors) {
    ad::ParamStore s;
    Rng rng(1);
    EXPECT_THROW(CrossAttention::create(s, "a", 6, 4, rng), ParameterError);
    auto att = CrossAttention::create(s, "b", 4, 2, rng);
    ad::Tape t;
    EXPECT_THROW(attend(t, s, att, random_array({2, 4}, 1), NdArray({0, 4})), ContractError);
    EXPECT_THROW(parse_fusion_variant("kronecker"), ConfigError);
    EXPECT_EQ(parse_fusion_variant("bilinear"), FusionVariant::Bilinear);
}

TEST(FusionGate, Examples) {
    ad::ParamStore s;
    Rng rng(2);
    auto gate = GatedPool::create(s, "g", 3, rng);
    param(s, "g.bias") = NdArray::matrix({{0.4}});
    {
        ad::Tape t;
        ad::ParamBinding p(t, s);
        auto [w, pooled] = gate(p, t.constant(NdArray::matrix({{1, 2, 3}})));
        EXPECT_DOUBLE_EQ(w.value()[0], 1.0);
    }
    {
        ad::Tape t;
        ad::ParamBinding p(t, s);
        auto [w, pooled] = gate(p, t.constant(NdArray::matrix({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}, {1, 2, 3}})));
        for (double v : w.value().data()) EXPECT_NEAR(v, 0.25, 1e-12);
    }
    NdArray rows = random_array({3, 3}, 4);
    ad::Tape t;
    ad::ParamBinding p(t, s);
    auto [w, pooled] = gate(p, t.constant(rows));
    NdArray logits = linear_ref(s, "g", rows);
    NdArray wr = softmax_rows_ref(logits.transposed());
    for (std::size_t j = 0; j < 3; ++j) {
        double acc = 0;
        for (std::size_t k = 0; k < 3; ++k) acc += wr(0, k) * rows(k, j);
        EXPECT_NEAR(pooled.value()(0, j), acc, 1e-12);
    }
}

TEST(FuseAndClassify, MatchesStraightLineReference) {
    HeadFixture f(cfg_of(4, 2), 3);
    NdArray tok = random_array({3, 4}, 1), path = random_array({5, 4}, 2);
    NdArray zp = random_array({1, 4}, 3), zw = random_array({1, 4}, 4);
    ad::Tape t;
    auto out = f.run(t, tok, path, zp, zw);
    auto& s = f.store;
    NdArray cross = out.cross.value();
    // Independent recomputation of the gated pool from the attended tokens.
    NdArray att = out.attended.value();
    NdArray w = softmax_rows_ref(linear_ref(s, "fusion.gate", att).transposed());
    NdArray cross_ref({1, 4});
    for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t k = 0; k < 3; ++k) cross_ref(0, j) += w(0, k) * att(k, j);
    EXPECT_LE(max_abs_diff(cross, cross_ref), 1e-12);

    NdArray a = layer_norm_ref(zp, param(s, "fusion.norm_pathway.gamma"), param(s, "fusion.norm_pathway.beta"));
    NdArray b = layer_norm_ref(cross_ref, param(s, "fusion.norm_cross.gamma"), param(s, "fusion.norm_cross.beta"));
    NdArray c = layer_norm_ref(zw, param(s, "fusion.norm_wsi.gamma"), param(s, "fusion.norm_wsi.beta"));
    NdArray cat({1, 12});
    for (std::size_t j = 0; j < 4; ++j) {
        cat(0, j) = a(0, j);
        cat(0, 4 + j) = b(0, j);
        cat(0, 8 + j) = c(0, j);
    }
    NdArray hidden = linear_ref(s, "fusion.mlp.hidden", cat);
    for (double& v : hidden.data()) v = std::max(v, 0.0);
    NdArray fused = linear_ref(s, "fusion.mlp.output", hidden);
    NdArray logits = linear_ref(s, "fusion.classifier", fused);
    EXPECT_LE(max_abs_diff(out.fused.value(), fused), 1e-10);
    EXPECT_LE(max_abs_diff(out.logits.value(), logits), 1e-10);
}

TEST(FuseAndClassify, ZeroMlpWeightsGiveConstantLogits) {
    HeadFixture f(cfg_of(4, 2), 5);
    for (auto name : {"fusion.mlp.hidden.weight", "fusion.mlp.output.weight"})
        for (double& v : param(f.store, name).data()) v = 0.0;
    ad::Tape t1, t2;
    auto a = f.run(t1, random_array({3, 4}, 1), random_array({2, 4}, 2), random_array({1, 4}, 3), random_array({1, 4}, 4));
    auto b = f.run(t2, random_array({3, 4}, 5), random_array({2, 4}, 6), random_array({1, 4}, 7), random_array({1, 4}, 8));
    EXPECT_EQ(a.logits.value(), b.logits.value());
    NdArray fused = param(f.store, "fusion.mlp.output.bias");
    EXPECT_LE(max_abs_diff(a.logits.value(), linear_ref(f.store, "fusion.classifier", fused)), 1e-14);
}

TEST(FuseAndClassify, BlockPermutationReparameterization) {
    ad::ParamStore s;
    Rng rng(6);
    auto mlp = Mlp::create(s, "m", 6, 3, rng);
    NdArray x = random_array({1, 6}, 1);
    auto eval = [&](const NdArray& in) {
        ad::Tape t;
        ad::ParamBinding p(t, s);
        return mlp(p, t.constant(in), 0.0, rng, false).value();
    };
    NdArray base = eval(x);
    // Swap the two 3-wide input blocks and the matching weight rows.
    NdArray swapped({1, 6});
    NdArray& w = param(s, "m.hidden.weight");
    NdArray w2 = w;
    for (std::size_t j = 0; j < 3; ++j) {
        swapped(0, j) = x(0, j + 3);
        swapped(0, j + 3) = x(0, j);
        for (std::size_t c = 0; c < 3; ++c) {
            w2(j, c) = w(j + 3, c);
            w2(j + 3, c) = w(j, c);
        }
    }
    w = w2;
    EXPECT_LE(max_abs_diff(eval(swapped), base), 1e-14);
}

TEST(AlternativeFusion, ConcatenationIgnoresZeroGenomicStream) {
    HeadFixture f(cfg_of(4, 2, FusionVariant::Concatenation), 2);
    NdArray zero({1, 4});
    NdArray zw = random_array({1, 4}, 1);
    ad::Tape t1, t2, t3;
    auto a = f.run(t1, random_array({3, 4}, 2), random_array({2, 4}, 3), zero, zw);
    auto b = f.run(t2, random_array({3, 4}, 4), random_array({5, 4}, 5), zero, zw);
    EXPECT_EQ(a.logits.value(), b.logits.value());
    auto c = f.run(t3, random_array({3, 4}, 2), random_array({2, 4}, 3), zero, random_array({1, 4}, 9));
    EXPECT_GT(max_abs_diff(a.logits.value(), c.logits.value()), 1e-6);
    EXPECT_FALSE(a.has_attention);
}

TEST(AlternativeFusion, BilinearAnnihilator) {
    ad::ParamStore s;
    Rng rng(3);
    auto bl = BilinearInteraction::create(s, "b", 4, 3, rng);
    auto eval = [&](const NdArray& a, const NdArray& b) {
        ad::Tape t;
        ad::ParamBinding p(t, s);
        return bl(p, t.constant(a), t.constant(b)).value();
    };
    NdArray zero({1, 4});
    // Zero bias: the interaction term alone.
    const NdArray left_zero = eval(zero, random_array({1, 4}, 1));
    const NdArray right_zero = eval(random_array({1, 4}, 2), zero);
    for (double v : left_zero.data()) EXPECT_EQ(v, 0.0);
    for (double v : right_zero.data()) EXPECT_EQ(v, 0.0);
    const NdArray both = eval(random_array({1, 4}, 2), random_array({1, 4}, 1));
    EXPECT_GT(std::abs(both.sum()), 0.0);
}

TEST(AlternativeFusion, SaturatedGatePassesThrough) {
    ad::ParamStore s;
    Rng rng(4);
    auto g = SigmoidGate::create(s, "g", 4, rng);
    for (double& v : param(s, "g.bias").data()) v = 60.0;
    NdArray x = random_array({1, 4}, 1);
    ad::Tape t;
    ad::ParamBinding p(t, s);
    auto out = g(p, t.constant(random_array({1, 4}, 2)), t.constant(x));
    EXPECT_LE(max_abs_diff(out.value(), x), 1e-20);
}

TEST(AlternativeFusion, AllVariantsProduceLogits) {
    for (auto v : {FusionVariant::CrossAttention, FusionVariant::Concatenation, FusionVariant::Bilinear,
                   FusionVariant::Gated}) {
        HeadFixture f(cfg_of(4, 2, v), 1);
        ad::Tape t;
        auto out = f.run(t, random_array({3, 4}, 1), random_array({2, 4}, 2), random_array({1, 4}, 3),
                         random_array({1, 4}, 4));
        EXPECT_EQ(out.logits.value().shape(), (ad::Shape{1, 4})) << to_string(v);
        EXPECT_TRUE(out.logits.value().all_finite());
    }
}

TEST(FullModel, GradcheckSmallScale) {
    auto graph = std::make_shared<curation::BipartiteGraph>(curation::BipartiteGraph::from_memberships(
        {{"A", "P1"}, {"B", "P1"}, {"B", "P2"}, {"C", "P2"}, {"C", "P3"}, {"A", "P3"}}));
    model::ModelConfig cfg;
    cfg.input_dim = 3;
    cfg.num_prototypes = 2;
    cfg.dim = 4;
    cfg.heads_gene = 2;
    cfg.heads_fusion = 2;
    cfg.bins = 2;
    cfg.dropout = 0.0;
    cfg.temperature = 0.5;
    model::SurvivalModel m(cfg, graph, 17);
    jitter_biases(m.params(), 3);
    NdArray patches = random_array({5, 3}, 4);
    std::vector<double> expr{0.5, -1.0, 1.5};
    for (bool event : {true, false}) {
        auto res = protopath::testing::param_gradcheck(m.params(), [&](ad::Tape& t, ad::ParamBinding& p) {
            Rng rng(0);
            auto out = m.forward(t, p, {&patches, &expr}, rng, false);
            return ad::survival_nll(out.logits, 1, event);
        });
        EXPECT_LE(res.max_rel_error, 1e-4) << res.worst_param << "[" << res.worst_index << "] a=" << res.analytic
                                           << " n=" << res.numeric;
        EXPECT_GT(res.max_abs_grad, 0.0);
    }
}

TEST(FullModel, UnimodalBranchesInstantiateOneEncoder) {
    auto graph = std::make_shared<curation::BipartiteGraph>(
        curation::BipartiteGraph::from_memberships({{"A", "P1"}, {"B", "P1"}}));
    model::ModelConfig cfg;
    cfg.input_dim = 3;
    cfg.num_prototypes = 2;
    cfg.dim = 4;
    cfg.heads_gene = 2;
    cfg.heads_fusion = 2;
    cfg.branches = model::Branches::GeneOnly;
    model::SurvivalModel gene(cfg, graph, 1);
    EXPECT_FALSE(gene.has_wsi());
    for (std::size_t i = 0; i < gene.params().size(); ++i) {
        EXPECT_EQ(gene.params().name(i).find("prototype"), std::string::npos);
        EXPECT_EQ(gene.params().name(i).find("fusion"), std::string::npos);
    }
    EXPECT_TRUE(gene.params().contains("unimodal_head.weight"));
    cfg.branches = model::Branches::WsiOnly;
    model::SurvivalModel wsi(cfg, nullptr, 1);
    EXPECT_FALSE(wsi.has_genomic());
    NdArray patches = random_array({4, 3}, 1);
    ad::Tape t;
    ad::ParamBinding p(t, wsi.params());
    Rng rng(0);
    auto out = wsi.forward(t, p, {&patches, nullptr}, rng, false);
    EXPECT_EQ(out.logits.value().shape(), (ad::Shape{1, 4}));
}
