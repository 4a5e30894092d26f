#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "protopath/curation/curation.hpp"
#include "protopath/pathway/encoder.hpp"
#include "support/gradcheck.hpp"
#include "support/param_gradcheck.hpp"

using namespace protopath;
using namespace protopath::pathway;
using protopath::curation::GeneSet;
using protopath::testing::random_array;

namespace {

GeneSet gs(const std::string& id, std::vector<std::string> genes) {
    GeneSet s{id, id, curation::Source::Reactome, std::move(genes)};
    curation::normalize_genes(s.genes);
    return s;
}

BipartiteGraph small_graph() {
    return BipartiteGraph::from_gene_sets(
        {gs("P1", {"A", "B", "C"}), gs("P2", {"C", "D"}), gs("P3", {"D", "E", "F", "A"})});
}

struct EncoderFixture {
    ad::ParamStore store;
    PathwayEncoder enc;

    explicit EncoderFixture(std::size_t d = 4, std::size_t heads = 2, std::uint64_t seed = 3, double dropout = 0.0) {
        Rng rng(seed);
        enc = PathwayEncoder::create(store, "gene", {d, heads, 2, dropout}, rng);
        // Non-trivial biases and norm affine so no term vanishes by accident.
        Rng r2(seed + 100);
        for (std::size_t i = 0; i < store.size(); ++i)
            if (store.name(i).find("bias") != std::string::npos || store.name(i).find("norm") != std::string::npos)
                for (double& v : store.value(i).data()) v += 0.3 * r2.normal();
    }

    PathwayForward run(ad::Tape& tape, const BipartiteGraph& g, const std::vector<double>& x) {
        ad::ParamBinding p(tape, store);
        Rng rng(0);
        return enc.forward(p, tape, g, x, rng, false);
    }
};

std::vector<double> random_expr(std::size_t n, std::uint64_t seed) {
    Rng r(seed);
    std::vector<double> v(n);
    for (double& x : v) x = r.normal();
    return v;
}

} // namespace

TEST(NodeFeatures, GenesCarryExpressionPathwaysZero) {
    auto g = small_graph();
    std::vector<double> x{2.3, 0, 1, -1, 4, 5};
    auto f = build_node_features(x, g);
    EXPECT_EQ(f.shape(), (ad::Shape{9, 1}));
    EXPECT_DOUBLE_EQ(f(0, 0), 2.3);
    for (std::size_t p = 0; p < 3; ++p) EXPECT_EQ(f(g.pathway_node(p), 0), 0.0);
    EXPECT_THROW(build_node_features({1.0}, g), AlignmentError);
}

TEST(Sage, MeanOfNeighbors) {
    auto g = BipartiteGraph::from_gene_sets({gs("P", {"A", "B"})});
    ad::ParamStore store;
    Rng rng(1);
    auto layer = SageLayer::create(store, "s", 1, 1, rng);
    store.value(layer.self.weight) = NdArray::matrix({{0.0}});
    store.value(layer.neigh.weight) = NdArray::matrix({{1.0}});
    ad::Tape t;
    ad::ParamBinding p(t, store);
    auto out = layer(p, t.constant(NdArray::column({1.0, 3.0, 0.0})), g.edge_src(), g.edge_dst());
    EXPECT_DOUBLE_EQ(out.value()(2, 0), 2.0);

    store.value(layer.self.weight) = NdArray::matrix({{1.0}});
    store.value(layer.neigh.weight) = NdArray::matrix({{0.0}});
    ad::Tape t2;
    ad::ParamBinding p2(t2, store);
    auto id = layer(p2, t2.constant(NdArray::column({1.0, 3.0, 0.5})), g.edge_src(), g.edge_dst());
    EXPECT_EQ(id.value(), NdArray::column({1.0, 3.0, 0.5}));
}

TEST(Sage, MatchesPerNodeLoop) {
    auto g = small_graph();
    ad::ParamStore store;
    Rng rng(2);
    auto layer = SageLayer::create(store, "s", 3, 2, rng);
    store.value(layer.self.bias) = NdArray::row({0.1, -0.2});
    NdArray x = random_array({g.num_nodes(), 3}, 4);
    ad::Tape t;
    ad::ParamBinding p(t, store);
    auto out = layer(p, t.constant(x), g.edge_src(), g.edge_dst()).value();
    const NdArray& ws = store.value(layer.self.weight);
    const NdArray& wn = store.value(layer.neigh.weight);
    for (std::size_t v = 0; v < g.num_nodes(); ++v) {
        std::vector<std::size_t> nb;
        for (std::size_t e = 0; e < g.num_directed_edges(); ++e)
            if (g.edge_dst()[e] == v) nb.push_back(g.edge_src()[e]);
        for (std::size_t j = 0; j < 2; ++j) {
            double expect = j == 0 ? 0.1 : -0.2;
            for (std::size_t k = 0; k < 3; ++k) {
                expect += x(v, k) * ws(k, j);
                double m = 0;
                for (std::size_t u : nb) m += x(u, k);
                if (!nb.empty()) expect += m / double(nb.size()) * wn(k, j);
            }
            EXPECT_NEAR(out(v, j), expect, 1e-12);
        }
    }
}

TEST(GatV2, SingleNeighborAndSymmetricNeighbors) {
    EncoderFixture f;
    ad::Tape t;
    auto g1 = BipartiteGraph::from_gene_sets({gs("P", {"A"}), gs("Q", {"A", "B"})});
    auto out = f.run(t, g1, {0.7, 0.7});
    // P has a single gene neighbour; Q has two genes with identical features.
    EXPECT_DOUBLE_EQ(out.gene_attention[0], 1.0);
    EXPECT_NEAR(out.gene_attention[1], 0.5, 1e-12);
    EXPECT_NEAR(out.gene_attention[2], 0.5, 1e-12);
}

TEST(GatV2, CoefficientsNormalizePerPathway) {
    EncoderFixture f(6, 4, 7);
    auto g = small_graph();
    for (std::uint64_t s = 0; s < 5; ++s) {
        ad::Tape t;
        auto out = f.run(t, g, random_expr(g.num_genes(), s));
        std::vector<double> sums(g.num_pathways(), 0.0);
        for (std::size_t m = 0; m < g.num_memberships(); ++m) sums[g.memberships()[m].second] += out.gene_attention[m];
        for (double v : sums) EXPECT_NEAR(v, 1.0, 1e-10);
    }
}

TEST(GatV2, MatchesLoopReference) {
    // Direct per-edge evaluation of the attention layer from raw weights.
    auto g = small_graph();
    ad::ParamStore store;
    Rng rng(9);
    auto layer = GatV2Layer::create(store, "gat", 3, 2, rng);
    store.value(layer.bias) = NdArray::row({0.1, 0.2, -0.3});
    NdArray x = random_array({g.num_nodes(), 3}, 10);
    ad::Tape t;
    ad::ParamBinding p(t, store);
    std::vector<double> coeff;
    auto out = layer(p, t.constant(x), g.edge_src(), g.edge_dst(), coeff).value();
    const std::size_t n = g.num_nodes(), E = g.num_directed_edges();
    NdArray expect({n, 3});
    std::vector<double> avg(E, 0.0);
    for (std::size_t h = 0; h < 2; ++h) {
        const NdArray& ws = store.value(layer.w_src[h]);
        const NdArray& wd = store.value(layer.w_dst[h]);
        const NdArray& a = store.value(layer.att[h]);
        auto lin = [&](const NdArray& w, std::size_t u) {
            std::vector<double> r(3, 0.0);
            for (std::size_t j = 0; j < 3; ++j)
                for (std::size_t k = 0; k < 3; ++k) r[j] += x(u, k) * w(k, j);
            return r;
        };
        std::vector<double> score(E);
        for (std::size_t e = 0; e < E; ++e) {
            auto s = lin(ws, g.edge_src()[e]);
            auto d = lin(wd, g.edge_dst()[e]);
            double acc = 0;
            for (std::size_t j = 0; j < 3; ++j) {
                double z = s[j] + d[j];
                acc += a(j, 0) * (z > 0 ? z : 0.01 * z);
            }
            score[e] = acc;
        }
        for (std::size_t v = 0; v < n; ++v) {
            double z = 0;
            for (std::size_t e = 0; e < E; ++e)
                if (g.edge_dst()[e] == v) z += std::exp(score[e]);
            for (std::size_t e = 0; e < E; ++e) {
                if (g.edge_dst()[e] != v) continue;
                const double al = std::exp(score[e]) / z;
                avg[e] += al / 2.0;
                auto m = lin(ws, g.edge_src()[e]);
                for (std::size_t j = 0; j < 3; ++j) expect(v, j) += al * m[j] / 2.0;
            }
        }
    }
    for (std::size_t v = 0; v < n; ++v)
        for (std::size_t j = 0; j < 3; ++j) expect(v, j) += store.value(layer.bias)(0, j);
    EXPECT_LE(max_abs_diff(out, expect), 1e-12);
    for (std::size_t e = 0; e < E; ++e) EXPECT_NEAR(coeff[e], avg[e], 1e-12);
}

TEST(PathwayGate, SinglePathwayAndLoopOracle) {
    EncoderFixture f;
    {
        ad::Tape t;
        auto g = BipartiteGraph::from_gene_sets({gs("P", {"A", "B"})});
        auto out = f.run(t, g, {1.0, -2.0});
        EXPECT_DOUBLE_EQ(out.gate_weights.value()[0], 1.0);
        EXPECT_LE(max_abs_diff(out.pooled.value(), out.pathways.value()), 1e-15);
    }
    ad::Tape t;
    auto g = BipartiteGraph::from_gene_sets(
        {gs("P1", {"A", "B"}), gs("P2", {"B", "C"}), gs("P3", {"C", "D"}), gs("P4", {"A", "D"})});
    auto out = f.run(t, g, random_expr(4, 8));
    const auto& w = out.gate_weights.value();
    const auto& z = out.pathways.value();
    double sum = 0;
    for (double v : w.data()) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    for (std::size_t j = 0; j < z.cols(); ++j) {
        double acc = 0;
        for (std::size_t q = 0; q < 4; ++q) acc += w[q] * z(q, j);
        EXPECT_NEAR(out.pooled.value()(0, j), acc, 1e-12);
    }
}

TEST(PathwayEncoderProps, IdenticalEmbeddingsGiveUniformGate) {
    // Two pathways over the same single gene see identical neighbourhoods.
    EncoderFixture f;
    ad::Tape t;
    auto g = BipartiteGraph::from_gene_sets({gs("P1", {"A"}), gs("P2", {"A"})});
    auto out = f.run(t, g, {0.4});
    EXPECT_NEAR(out.gate_weights.value()[0], 0.5, 1e-12);
}

TEST(PathwayEncoderProps, ZeroExpressionIsPatientIndependent) {
    EncoderFixture f;
    auto g = small_graph();
    std::vector<double> zero(g.num_genes(), 0.0);
    ad::Tape t1, t2;
    auto a = f.run(t1, g, zero);
    auto b = f.run(t2, g, zero);
    EXPECT_EQ(a.pathways.value(), b.pathways.value());
    auto feat = build_node_features(zero, g);
    for (double v : feat.data()) EXPECT_EQ(v, 0.0);
}

TEST(PathwayEncoderProps, PermutationEquivariance) {
    EncoderFixture f(5, 2, 11);
    auto g = small_graph();
    // Rename genes and pathways so that their sorted order changes.
    std::map<std::string, std::string> gene_map{{"A", "Z"}, {"B", "Y"}, {"C", "X"}, {"D", "W"}, {"E", "V"}, {"F", "U"}};
    std::map<std::string, std::string> path_map{{"P1", "Q9"}, {"P2", "Q1"}, {"P3", "Q5"}};
    std::vector<GeneSet> renamed;
    for (std::size_t q = 0; q < g.num_pathways(); ++q) {
        std::vector<std::string> genes;
        for (std::size_t gi : g.pathway_genes(q)) genes.push_back(gene_map[g.genes()[gi]]);
        renamed.push_back(gs(path_map[g.pathways()[q]], genes));
    }
    auto h = BipartiteGraph::from_gene_sets(renamed);
    auto x = random_expr(g.num_genes(), 3);
    std::vector<double> y(h.num_genes());
    for (std::size_t gi = 0; gi < g.num_genes(); ++gi) y[h.gene_index(gene_map[g.genes()[gi]])] = x[gi];
    ad::Tape t1, t2;
    auto a = f.run(t1, g, x);
    auto b = f.run(t2, h, y);
    for (std::size_t q = 0; q < g.num_pathways(); ++q) {
        const std::size_t q2 = h.pathway_index(path_map[g.pathways()[q]]);
        for (std::size_t j = 0; j < 5; ++j)
            EXPECT_NEAR(a.pathways.value()(q, j), b.pathways.value()(q2, j), 1e-12);
        EXPECT_NEAR(a.gate_weights.value()[q], b.gate_weights.value()[q2], 1e-12);
    }
    EXPECT_LE(max_abs_diff(a.pooled.value(), b.pooled.value()), 1e-12);
}

TEST(PathwayEncoderProps, SharedGeneReachesBothPathways) {
    EncoderFixture f(4, 2, 5);
    auto g = small_graph(); // C is shared by P1 and P2
    auto x = random_expr(g.num_genes(), 1);
    ad::Tape t1, t2;
    auto base = f.run(t1, g, x);
    x[g.gene_index("C")] += 1.0;
    auto moved = f.run(t2, g, x);
    for (std::string pid : {"P1", "P2"}) {
        const std::size_t q = g.pathway_index(pid);
        double diff = 0;
        for (std::size_t j = 0; j < 4; ++j)
            diff = std::max(diff, std::abs(base.pathways.value()(q, j) - moved.pathways.value()(q, j)));
        EXPECT_GT(diff, 1e-6) << pid;
    }
}

TEST(PathwayEncoderProps, DropoutOnlyInTraining) {
    EncoderFixture f(4, 2, 5, 0.5);
    auto g = small_graph();
    auto x = random_expr(g.num_genes(), 1);
    ad::Tape t1, t2;
    ad::ParamBinding p1(t1, f.store), p2(t2, f.store);
    Rng r1(1), r2(2);
    auto a = f.enc.forward(p1, t1, g, x, r1, false);
    auto b = f.enc.forward(p2, t2, g, x, r2, false);
    EXPECT_EQ(a.pooled.value(), b.pooled.value());
    ad::Tape t3;
    ad::ParamBinding p3(t3, f.store);
    auto c = f.enc.forward(p3, t3, g, x, r1, true);
    EXPECT_GT(max_abs_diff(a.pooled.value(), c.pooled.value()), 0.0);
}

TEST(PathwayEncoderProps, FullEncoderGradcheck) {
    EncoderFixture f(4, 2, 13);
    auto g = small_graph();
    auto x = random_expr(g.num_genes(), 2);
    NdArray probe = random_array({1, 4}, 3);
    auto res = protopath::testing::param_gradcheck(f.store, [&](ad::Tape& t, ad::ParamBinding& p) {
        Rng rng(0);
        auto o = f.enc.forward(p, t, g, x, rng, false);
        return ad::sum(ad::mul(o.pooled, t.constant(probe)));
    });
    EXPECT_LE(res.max_rel_error, 1e-4) << res.worst_param << "[" << res.worst_index << "] a=" << res.analytic
                                       << " n=" << res.numeric;
}
