#include <gtest/gtest.h>

#include <cmath>

#include "protopath/core/rng.hpp"
#include "protopath/stats/statistics.hpp"

using namespace protopath;
using namespace protopath::stats;

namespace {

// Phi by composite Simpson integration of the density from 0.
double integrated_cdf(double x) {
    const int n = 20000;
    const double h = x / n;
    auto f = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI); };
    double s = f(0) + f(x);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(i * h);
    return 0.5 + s * h / 3.0;
}

// Two-sided exact p by explicit recursion over which pooled items go low.
void enumerate(const std::vector<double>& pooled, std::size_t i, std::size_t left, std::vector<double>& low,
               std::vector<double>& high, std::vector<double>& us) {
    if (i == pooled.size()) {
        if (left == 0) {
            double u = 0;
            for (double a : low)
                for (double b : high) u += a > b ? 1 : (a == b ? 0.5 : 0);
            us.push_back(u);
        }
        return;
    }
    if (left > 0) {
        low.push_back(pooled[i]);
        enumerate(pooled, i + 1, left - 1, low, high, us);
        low.pop_back();
    }
    high.push_back(pooled[i]);
    enumerate(pooled, i + 1, left, low, high, us);
    high.pop_back();
}

double enumeration_p(const std::vector<double>& lo, const std::vector<double>& hi) {
    std::vector<double> pooled = lo;
    pooled.insert(pooled.end(), hi.begin(), hi.end());
    std::vector<double> us, a, b;
    enumerate(pooled, 0, lo.size(), a, b, us);
    double obs = 0;
    for (double x : lo)
        for (double y : hi) obs += x > y ? 1 : (x == y ? 0.5 : 0);
    const double mean = lo.size() * hi.size() / 2.0;
    double extreme = 0;
    for (double u : us) extreme += std::abs(u - mean) >= std::abs(obs - mean) - 1e-9;
    return extreme / us.size();
}

std::vector<double> random_values(Rng& rng, std::size_t n, bool ties) {
    std::vector<double> v(n);
    for (double& x : v) x = ties ? double(rng.index(4)) : rng.normal();
    return v;
}

} // namespace

TEST(Normal, CdfAndQuantile) {
    EXPECT_EQ(normal_cdf(0.0), 0.5);
    for (double x : {-3.0, -1.2, 0.4, 1.7, 2.5}) EXPECT_NEAR(normal_cdf(x), integrated_cdf(x), 1e-12);
    EXPECT_NEAR(normal_quantile(0.975), 1.959964, 1e-6);
    for (double p = 1e-12; p < 1.0; p = p < 0.01 ? p * 10 : p + 0.01) {
        const double x = normal_quantile(p);
        EXPECT_NEAR(normal_cdf(x), p, 1e-9 * std::max(p, 1e-3));
        // Bisection oracle.
        double lo = -40, hi = 40;
        for (int it = 0; it < 200; ++it) {
            double mid = 0.5 * (lo + hi);
            (normal_cdf(mid) < p ? lo : hi) = mid;
        }
        EXPECT_NEAR(x, 0.5 * (lo + hi), 1e-9);
    }
    EXPECT_THROW(normal_quantile(0.0), ContractError);
    EXPECT_THROW(normal_quantile(1.0), ContractError);
}

TEST(Ranks, Examples) {
    EXPECT_EQ(average_ranks(std::vector<double>{0.1, 0.3, 0.2}), (std::vector<double>{1, 3, 2}));
    EXPECT_EQ(average_ranks(std::vector<double>{5, 5}), (std::vector<double>{1.5, 1.5}));
    EXPECT_EQ(average_ranks(std::vector<double>(4, 7.0)), std::vector<double>(4, 2.5));
}

TEST(Ranks, RowSumsAndPermutation) {
    Rng rng(3);
    for (int t = 0; t < 100; ++t) {
        const std::size_t e = 1 + rng.index(12);
        auto r = average_ranks(random_values(rng, e, t % 2 == 0));
        double s = 0;
        for (double x : r) s += x;
        EXPECT_EQ(s, e * (e + 1) / 2.0);
    }
}

TEST(MannWhitney, WorkedExample) {
    std::vector<double> lo{1, 2, 3}, hi{4, 5, 6};
    auto ex = mann_whitney(lo, hi, MwuMode::exact);
    EXPECT_EQ(ex.u, 0.0);
    EXPECT_NEAR(ex.p, 0.1, 1e-12);
    EXPECT_EQ(rank_biserial(ex.u, 3, 3), 1.0);
}

TEST(MannWhitney, ExactMatchesEnumeration) {
    Rng rng(9);
    for (int t = 0; t < 60; ++t) {
        const std::size_t n1 = 2 + rng.index(5), n2 = 2 + rng.index(12 - n1 - 1);
        auto lo = random_values(rng, n1, t % 2 == 0), hi = random_values(rng, n2, t % 2 == 0);
        EXPECT_NEAR(mann_whitney(lo, hi, MwuMode::exact).p, enumeration_p(lo, hi), 1e-12);
    }
}

TEST(MannWhitney, NormalApproximationCloseToExactForTwenty) {
    Rng rng(10);
    for (int t = 0; t < 10; ++t) {
        auto lo = random_values(rng, 10, false), hi = random_values(rng, 10, false);
        for (double& x : hi) x += 0.5 * t / 10.0;
        EXPECT_NEAR(mann_whitney(lo, hi).p, enumeration_p(lo, hi), 0.02);
    }
}

TEST(MannWhitney, Symmetries) {
    std::vector<double> a{0.3, 1.2, 2.0, 0.7};
    auto same = mann_whitney(a, a);
    EXPECT_EQ(same.u, 8.0);
    EXPECT_NEAR(same.p, 1.0, 1e-12);
    Rng rng(4);
    for (int t = 0; t < 50; ++t) {
        auto lo = random_values(rng, 2 + rng.index(8), t % 2), hi = random_values(rng, 2 + rng.index(8), t % 2);
        auto x = mann_whitney(lo, hi), y = mann_whitney(hi, lo);
        EXPECT_EQ(y.u, double(lo.size() * hi.size()) - x.u);
        EXPECT_NEAR(x.p, y.p, 1e-15);
        EXPECT_GT(x.p, 0.0);
        EXPECT_LE(x.p, 1.0);
    }
    EXPECT_THROW(mann_whitney(std::vector<double>{1}, a), MetricError);
}

TEST(RankBiserial, ExamplesAndSign) {
    EXPECT_EQ(rank_biserial(0, 3, 4), 1.0);
    EXPECT_EQ(rank_biserial(12, 3, 4), -1.0);
    EXPECT_EQ(rank_biserial(6, 3, 4), 0.0);
    Rng rng(12);
    for (int t = 0; t < 200; ++t) {
        auto lo = random_values(rng, 2 + rng.index(8), true), hi = random_values(rng, 2 + rng.index(8), true);
        // Compare mean joint ranks directly.
        std::vector<double> pooled = lo;
        pooled.insert(pooled.end(), hi.begin(), hi.end());
        auto rk = average_ranks(pooled);
        double ml = 0, mh = 0;
        for (std::size_t i = 0; i < lo.size(); ++i) ml += rk[i] / lo.size();
        for (std::size_t i = 0; i < hi.size(); ++i) mh += rk[lo.size() + i] / hi.size();
        const double r = rank_biserial(mwu_statistic(lo, hi), lo.size(), hi.size());
        if (std::abs(mh - ml) < 1e-12) {
            EXPECT_NEAR(r, 0.0, 1e-12);
        } else {
            EXPECT_EQ(r > 0, mh > ml);
        }
    }
}

TEST(Stouffer, Examples) {
    auto two = stouffer_combine({{0.05, 0.3, 50}, {0.05, 0.2, 50}});
    EXPECT_NEAR(two.z, 1.959964 * std::sqrt(2.0), 1e-5);
    EXPECT_NEAR(two.z, 2.77180, 1e-5);
    EXPECT_NEAR(two.effect, 0.25, 1e-15);
    auto cancel = stouffer_combine({{0.05, 0.3, 50}, {0.05, -0.3, 50}});
    EXPECT_NEAR(cancel.z, 0.0, 1e-15);
    EXPECT_NEAR(cancel.p, 1.0, 1e-15);
    auto dominant = stouffer_combine({{0.01, 0.5, 1000000}, {0.9, -0.1, 1}});
    EXPECT_NEAR(dominant.z, normal_quantile(1 - 0.005), 2e-3);
    EXPECT_THROW(stouffer_combine({{0.05, 0.3, 50}}), MetricError);
}

TEST(Stouffer, EqualWeightIdentity) {
    for (std::size_t f = 2; f <= 6; ++f)
        for (double p : {0.001, 0.04, 0.3}) {
            std::vector<FoldEffect> v(f, FoldEffect{p, 0.4, 30});
            const double z = normal_quantile(1 - p / 2);
            EXPECT_NEAR(stouffer_combine(v).z, z * std::sqrt(double(f)), 1e-12);
        }
}

TEST(BenjaminiHochberg, Examples) {
    auto r = bh_fdr({0.01, 0.02, 0.03, 0.04});
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_NEAR(r.q[i], 0.04, 1e-15);
        EXPECT_TRUE(r.significant[i]);
    }
    auto ones = bh_fdr({1, 1, 1});
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(ones.q[i], 1.0);
        EXPECT_FALSE(ones.significant[i]);
    }
    EXPECT_EQ(bh_fdr({0.3}).q[0], 0.3);
}

TEST(BenjaminiHochberg, MatchesStepUpAndMonotoneInAlpha) {
    Rng rng(21);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> p(1 + rng.index(30));
        for (double& x : p) x = std::pow(rng.uniform(), 3);
        // Classical step-up: reject the k smallest where k is the largest with p_(k) <= k alpha / m.
        for (double alpha : {0.01, 0.05, 0.2}) {
            auto sorted = p;
            std::sort(sorted.begin(), sorted.end());
            double cut = -1;
            for (std::size_t k = 0; k < sorted.size(); ++k)
                if (sorted[k] <= (k + 1) * alpha / sorted.size()) cut = sorted[k];
            auto r = bh_fdr(p, alpha);
            for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(r.significant[i], p[i] <= cut);
        }
        auto a = bh_fdr(p, 0.05), b = bh_fdr(p, 0.1);
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (a.significant[i]) {
                EXPECT_TRUE(b.significant[i]);
            }
            EXPECT_LE(a.q[i], 1.0);
            EXPECT_GT(a.q[i], 0.0);
        }
    }
}

namespace {

std::vector<FoldSignals> random_folds(std::uint64_t seed, std::size_t folds, std::size_t entities) {
    Rng rng(seed);
    std::vector<FoldSignals> out;
    for (std::size_t f = 0; f < folds; ++f) {
        FoldSignals s;
        s.fold = int(f);
        for (std::size_t e = 0; e < entities; ++e) s.entities.push_back("E" + std::to_string(e));
        for (std::size_t i = 0; i < 16; ++i) {
            std::vector<double> row(entities);
            for (double& x : row) x = rng.uniform();
            s.values.push_back(row);
            s.risks.push_back(rng.normal());
        }
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace

TEST(FoldAnalysis, MonotoneTransformInvariance) {
    auto folds = random_folds(1, 3, 6);
    auto transformed = folds;
    for (auto& f : transformed)
        for (auto& row : f.values)
            for (double& x : row) x = std::exp(x);
    auto a = fold_stratified_analysis(folds, EntityKind::pathway_gate, true);
    auto b = fold_stratified_analysis(transformed, EntityKind::pathway_gate, true);
    ASSERT_EQ(a.per_fold.size(), b.per_fold.size());
    for (std::size_t i = 0; i < a.per_fold.size(); ++i) {
        EXPECT_EQ(a.per_fold[i].u, b.per_fold[i].u);
        EXPECT_EQ(a.per_fold[i].p, b.per_fold[i].p);
        EXPECT_EQ(a.per_fold[i].mean_rank_diff, b.per_fold[i].mean_rank_diff);
    }
    for (std::size_t i = 0; i < a.meta.size(); ++i) {
        EXPECT_EQ(a.meta[i].z, b.meta[i].z);
        EXPECT_EQ(a.meta[i].q, b.meta[i].q);
    }
}

TEST(FoldAnalysis, IdenticalGroupsAndPlantedEntity) {
    FoldSignals f;
    f.entities = {"A", "B", "C"};
    for (int i = 0; i < 10; ++i) {
        const bool high = i >= 5;
        f.risks.push_back(i);
        // A and B swap places in the same way in both groups; C rises with risk.
        f.values.push_back({i % 2 ? 1.0 : 2.0, i % 2 ? 2.0 : 1.0, high ? 5.0 : 0.0});
    }
    // Balance A/B between the groups.
    f.values[4] = {2.0, 1.0, 0.0};
    f.values[9] = {1.0, 2.0, 5.0};
    auto t = fold_tests(f);
    ASSERT_EQ(t.size(), 3u);
    EXPECT_EQ(t[2].r, 1.0);
    EXPECT_GT(t[2].mean_rank_diff, 0.0);
    EXPECT_EQ(t[2].n_low, 5u);
    EXPECT_EQ(t[2].n_high, 5u);
}

TEST(FoldAnalysis, PrototypeEntitiesNeverCombine) {
    auto folds = random_folds(2, 3, 4);
    EXPECT_THROW(fold_stratified_analysis(folds, EntityKind::prototype_gate, true), ContractError);
    EXPECT_THROW(fold_stratified_analysis(folds, EntityKind::cross_attention_row, true), ContractError);
    auto r = fold_stratified_analysis(folds, EntityKind::fusion_gate, false);
    EXPECT_TRUE(r.meta.empty());
    EXPECT_EQ(r.per_fold.size(), 12u);
    EXPECT_EQ(r.per_fold[0].fold, 0);
    EXPECT_EQ(r.per_fold[1].fold, 1);
}

TEST(FoldAnalysis, SingleFoldEntitiesFlagged) {
    auto folds = random_folds(3, 2, 3);
    folds[1].entities[2] = "ONLY_IN_FOLD_1";
    auto r = fold_stratified_analysis(folds, EntityKind::gene_importance, true);
    bool seen = false;
    for (const auto& m : r.meta)
        if (m.entity == "ONLY_IN_FOLD_1" || m.entity == "E2") {
            EXPECT_FALSE(m.combinable);
            EXPECT_EQ(m.folds_used, 1u);
            seen = true;
        }
    EXPECT_TRUE(seen);
}

TEST(FoldAnalysis, SmallGroupFoldExcluded) {
    auto folds = random_folds(4, 2, 3);
    folds[1].values.resize(3);
    folds[1].risks = {1, 2, 3};
    auto r = fold_stratified_analysis(folds, EntityKind::pathway_gate, false);
    EXPECT_EQ(r.excluded_folds, std::vector<int>{1});
}

TEST(GatingShift, Examples) {
    Matrix g{{0.2, 0.3, 0.5}, {0.6, 0.3, 0.1}};
    auto same = gating_shift(g, g);
    for (const auto& row : same.delta)
        for (double d : row) EXPECT_EQ(d, 0.0);
    auto rev = gating_shift({{0.1, 0.3, 0.6}}, {{0.6, 0.3, 0.1}});
    EXPECT_EQ(rev.delta[0], (std::vector<double>{2, 0, -2}));
    Rng rng(5);
    Matrix a, b;
    std::vector<double> risks;
    for (int i = 0; i < 12; ++i) {
        a.push_back(random_values(rng, 5, i % 2));
        b.push_back(random_values(rng, 5, i % 3 == 0));
        risks.push_back(rng.normal());
    }
    auto s = gating_shift(a, b, risks);
    for (const auto& row : s.delta) {
        double sum = 0;
        for (double d : row) sum += d;
        EXPECT_NEAR(sum, 0.0, 1e-12);
    }
    EXPECT_EQ(s.group_test.size(), 5u);
}
