#include <gtest/gtest.h>

#include "protopath/interpret/signals.hpp"
#include "support/gradcheck.hpp"

using namespace protopath;
using namespace protopath::interpret;
using protopath::testing::random_array;

namespace {

struct Fixture {
    std::shared_ptr<curation::BipartiteGraph> graph;
    std::unique_ptr<model::SurvivalModel> model;
    prototype::PatchBag bag;
    std::vector<double> expr;
};

Fixture make_fixture(std::uint64_t seed, std::size_t n_patches = 7) {
    Fixture f;
    // SOLO belongs only to P2.
    f.graph = std::make_shared<curation::BipartiteGraph>(curation::BipartiteGraph::from_memberships(
        {{"A", "P1"}, {"B", "P1"}, {"SOLO", "P2"}, {"C", "P3"}, {"A", "P3"}, {"B", "P3"}, {"D", "P1"}}));
    model::ModelConfig cfg;
    cfg.input_dim = 5;
    cfg.num_prototypes = 3;
    cfg.dim = 4;
    cfg.heads_gene = 2;
    cfg.heads_fusion = 2;
    cfg.bins = 4;
    cfg.dropout = 0.25;
    f.model = std::make_unique<model::SurvivalModel>(cfg, f.graph, seed);
    f.bag.patient_id = "pt";
    f.bag.slide_id = "s1";
    f.bag.features = random_array({n_patches, 5}, seed + 1);
    for (std::size_t i = 0; i < n_patches; ++i) {
        f.bag.coords.emplace_back(double(i * 224), double((i % 3) * 224));
        f.bag.patch_slide.push_back(i < n_patches / 2 ? "s1" : "s2");
    }
    Rng rng(seed + 2);
    for (std::size_t g = 0; g < f.graph->num_genes(); ++g) f.expr.push_back(rng.normal());
    return f;
}

SignalBundle run(const Fixture& f) {
    ad::Tape t;
    ad::ParamBinding p(t, f.model->params());
    Rng rng(0);
    auto out = f.model->forward(t, p, {&f.bag.features, &f.expr}, rng, false);
    return extract_signals(out, f.graph.get(), false);
}

} // namespace

TEST(Signals, GeneImportanceHandCase) {
    SignalBundle b;
    b.genes = {"G"};
    b.pathways = {"P", "Q"};
    b.memberships = {{0, 0}};
    b.gene_pathway_attention = {1.0};
    b.pathway_gate = {0.2, 0.8};
    compute_gene_importance(b);
    EXPECT_EQ(b.gene_importance_sum[0], 0.2);
    EXPECT_EQ(b.gene_importance_avg[0], 1.0);
}

TEST(Signals, SimplexSumsAndDenseImportance) {
    for (std::uint64_t s = 0; s < 20; ++s) {
        auto f = make_fixture(s);
        auto b = run(f);
        EXPECT_NO_THROW(b.validate(1e-10));
        ASSERT_TRUE(b.has_wsi() && b.has_genomic() && b.has_cross_attention());
        // Dense G x P attention times the pathway gate.
        std::vector<std::vector<double>> dense(b.genes.size(), std::vector<double>(b.pathways.size(), 0.0));
        for (std::size_t m = 0; m < b.memberships.size(); ++m)
            dense[b.memberships[m].first][b.memberships[m].second] = b.gene_pathway_attention[m];
        for (std::size_t g = 0; g < b.genes.size(); ++g) {
            double v = 0.0, tot = 0.0;
            int cnt = 0;
            for (std::size_t p = 0; p < b.pathways.size(); ++p) {
                v += dense[g][p] * b.pathway_gate[p];
                tot += dense[g][p];
                cnt += dense[g][p] > 0;
            }
            EXPECT_NEAR(b.gene_importance_sum[g], v, 1e-12);
            EXPECT_NEAR(b.gene_importance_avg[g], tot / cnt, 1e-12);
        }
    }
}

TEST(Signals, TrainingPassRejected) {
    auto f = make_fixture(1);
    ad::Tape t;
    ad::ParamBinding p(t, f.model->params());
    Rng rng(0);
    auto out = f.model->forward(t, p, {&f.bag.features, &f.expr}, rng, true);
    EXPECT_THROW(extract_signals(out, f.graph.get(), true), ContractError);
}

TEST(Signals, ReextractionBitIdentical) {
    auto f = make_fixture(3);
    EXPECT_EQ(to_json(run(f)).dump(), to_json(run(f)).dump());
}

TEST(Overlay, PrototypeLabelsFollowHardAssign) {
    auto f = make_fixture(4);
    auto b = run(f);
    auto recs = prototype_overlay(b, f.bag);
    ASSERT_EQ(recs.size(), f.bag.size());
    for (std::size_t n = 0; n < recs.size(); ++n) {
        EXPECT_EQ(recs[n].prototype, b.hard_assign[n]);
        EXPECT_EQ(recs[n].x, f.bag.coords[n].first);
        EXPECT_EQ(recs[n].slide_id, f.bag.patch_slide[n]);
    }
    SignalBundle tie;
    tie.alpha = NdArray::matrix({{0.5, 0.5}});
    tie.sims = tie.alpha;
    tie.hard_assign = prototype::hard_assign(tie.alpha);
    prototype::PatchBag one;
    one.slide_id = "s";
    one.coords = {{1, 2}};
    auto r = prototype_overlay(tie, one);
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(r[0].prototype, 0u);
}

TEST(Overlay, PercentileRanks) {
    EXPECT_EQ(percentile_ranks({0.3, 0.3, 0.3}), (std::vector<double>{0.5, 0.5, 0.5}));
    EXPECT_EQ(percentile_ranks({0.1, 0.9}), (std::vector<double>{0.0, 1.0}));
    EXPECT_EQ(percentile_ranks({4.0}), (std::vector<double>{0.0}));
    Rng rng(2);
    std::vector<double> raw(30);
    for (double& v : raw) v = double(rng.index(6));
    auto r = percentile_ranks(raw);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        EXPECT_GE(r[i], 0.0);
        EXPECT_LE(r[i], 1.0);
        for (std::size_t j = 0; j < raw.size(); ++j) {
            if (raw[i] < raw[j]) {
                EXPECT_LT(r[i], r[j]);
            }
        }
    }
}

TEST(Overlay, PathwayLabelsByRiskGroup) {
    auto f = make_fixture(5);
    auto b = run(f);
    PrototypeRankStats st;
    st[0] = {{"P1", 2.0}, {"P2", -1.0}, {"P3", 0.5}};
    st[1] = {{"P1", 0.0}, {"P2", 0.0}, {"P3", 0.0}};
    // Prototype 2 has no stats.
    auto high = pathway_overlay(b, f.bag, st, true);
    auto low = pathway_overlay(b, f.bag, st, false);
    std::set<std::string> labels;
    for (std::size_t n = 0; n < high.size(); ++n) {
        EXPECT_EQ(high[n].prototype, low[n].prototype);
        const auto k = high[n].prototype;
        if (k == 0) {
            EXPECT_EQ(*high[n].pathway, "P1");
            EXPECT_EQ(*low[n].pathway, "P2");
        } else if (k == 1) {
            EXPECT_EQ(*high[n].pathway, "P1");
            EXPECT_EQ(*low[n].pathway, "P1");
        } else {
            EXPECT_EQ(*high[n].pathway, kUnranked);
        }
        labels.insert(*high[n].pathway);
    }
    EXPECT_LE(labels.size(), 3u);
}

TEST(Overlay, SingleGeneEqualsSinglePathwayForSoloMember) {
    for (std::uint64_t s = 0; s < 10; ++s) {
        auto f = make_fixture(10 + s);
        auto b = run(f);
        // SOLO is the only gene of P2, so its attention into P2 is exactly 1.
        const std::size_t g = f.graph->gene_index("SOLO");
        for (std::size_t m = 0; m < b.memberships.size(); ++m) {
            if (b.memberships[m].first == g) {
                EXPECT_EQ(b.gene_pathway_attention[m], 1.0);
            }
        }
        auto gene = single_gene_heatmap(b, f.bag, "SOLO");
        auto path = single_pathway_heatmap(b, f.bag, "P2");
        ASSERT_EQ(gene.size(), path.size());
        for (std::size_t n = 0; n < gene.size(); ++n) {
            EXPECT_EQ(*gene[n].raw_value, *path[n].raw_value);
            EXPECT_EQ(*gene[n].rank_value, *path[n].rank_value);
        }
    }
}

TEST(Overlay, GeneHeatmapMatchesDoubleLoop) {
    auto f = make_fixture(30, 12);
    auto b = run(f);
    for (const auto& gene : b.genes) {
        auto recs = single_gene_heatmap(b, f.bag, gene);
        const std::size_t g = f.graph->gene_index(gene);
        for (std::size_t n = 0; n < recs.size(); ++n) {
            double v = 0.0;
            for (std::size_t p = 0; p < b.pathways.size(); ++p)
                for (std::size_t m = 0; m < b.memberships.size(); ++m)
                    if (b.memberships[m] == std::pair<std::size_t, std::size_t>{g, p})
                        v += b.cross_attention(b.hard_assign[n], p) * b.gene_pathway_attention[m];
            EXPECT_NEAR(*recs[n].raw_value, v, 1e-12);
        }
    }
    SignalBundle zero = b;
    std::fill(zero.gene_pathway_attention.begin(), zero.gene_pathway_attention.end(), 0.0);
    for (const auto& r : single_gene_heatmap(zero, f.bag, "A")) EXPECT_EQ(*r.raw_value, 0.0);
    EXPECT_THROW(single_gene_heatmap(b, f.bag, "NOPE"), IndexError);
    EXPECT_THROW(single_pathway_heatmap(b, f.bag, "NOPE"), IndexError);
}

TEST(Overlay, ConstantRawGivesHalfRanks) {
    auto f = make_fixture(6);
    auto b = run(f);
    std::fill(b.hard_assign.begin(), b.hard_assign.end(), 1);
    f.bag.patch_slide.clear(); // one slide
    auto recs = single_pathway_heatmap(b, f.bag, "P1");
    for (const auto& r : recs) {
        EXPECT_EQ(*r.raw_value, b.cross_attention(1, 0));
        EXPECT_EQ(*r.rank_value, 0.5);
    }
}

TEST(Exemplars, RankingBySimilarity) {
    auto f = make_fixture(7);
    auto b = run(f);
    auto ex = extract_exemplars(b, f.bag, 100);
    ASSERT_EQ(ex.size(), 3u);
    for (std::size_t i = 1; i < ex.size(); ++i) EXPECT_GE(ex[i - 1].gate_weight, ex[i].gate_weight);
    for (const auto& e : ex) {
        EXPECT_EQ(e.patches.size(), f.bag.size());
        for (std::size_t i = 1; i < e.patches.size(); ++i) EXPECT_GE(e.patches[i - 1].similarity, e.patches[i].similarity);
    }
    EXPECT_EQ(extract_exemplars(b, f.bag, 2)[0].patches.size(), 2u);
}

TEST(Exemplars, SimilarityDiffersFromAlpha) {
    // Patch 1 is weakly similar to everything yet its alpha for prototype 0 is
    // the largest because the softmax normalizes across prototypes.
    SignalBundle b;
    b.sims = NdArray::matrix({{0.9, 0.85}, {0.2, -0.9}, {0.5, 0.4}});
    NdArray logits = b.sims;
    for (double& v : logits.data()) v /= 0.1;
    b.alpha = NdArray(logits.shape());
    for (std::size_t n = 0; n < 3; ++n) {
        const double z = std::exp(logits(n, 0)) + std::exp(logits(n, 1));
        for (std::size_t k = 0; k < 2; ++k) b.alpha(n, k) = std::exp(logits(n, k)) / z;
    }
    b.hard_assign = prototype::hard_assign(b.alpha);
    b.wsi_gate = {0.5, 0.5};
    prototype::PatchBag bag;
    bag.slide_id = "s";
    bag.coords = {{0, 0}, {1, 0}, {2, 0}};
    auto ex = extract_exemplars(b, bag, 1);
    EXPECT_EQ(ex[0].patches[0].patch, 0u);
    std::size_t by_alpha = 0;
    for (std::size_t n = 1; n < 3; ++n)
        if (b.alpha(n, 0) > b.alpha(by_alpha, 0)) by_alpha = n;
    EXPECT_EQ(by_alpha, 1u);
    // The same patch can head several prototype lists.
    b.sims = NdArray::matrix({{0.9, 0.9}, {0.1, 0.1}});
    b.alpha = NdArray::matrix({{0.5, 0.5}, {0.5, 0.5}});
    b.hard_assign = {0, 0};
    bag.coords.resize(2);
    auto both = extract_exemplars(b, bag, 1);
    EXPECT_EQ(both[0].patches[0].patch, 0u);
    EXPECT_EQ(both[1].patches[0].patch, 0u);
}
