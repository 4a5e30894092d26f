#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "protopath/core/error.hpp"
#include "protopath/survival/survival.hpp"

namespace protopath::stats {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Acklam's rational approximation followed by one Halley step.
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw ContractError("normal_quantile: p must lie in (0, 1), got " + std::to_string(p));
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01, -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double plow = 0.02425;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // Work in the lower tail to keep the residual accurate.
    const double e = x < 0 ? normal_cdf(x) - p : (1.0 - p) - normal_cdf(-x);
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

/// Ranks starting at 1 for the smallest value; ties share the mean position.
inline std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * double(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

using Matrix = std::vector<std::vector<double>>;

inline Matrix within_patient_ranks(const Matrix& values) {
    Matrix out;
    out.reserve(values.size());
    for (const auto& row : values) {
        if (row.empty()) throw ContractError("within_patient_ranks: patient with no entities");
        out.push_back(average_ranks(row));
    }
    return out;
}

enum class MwuMode { normal, exact };

struct MwuResult {
    double u = 0.0;
    double p = 1.0;
};

inline constexpr std::size_t kExactMaxN = 20;

/// U counts (low, high) pairs where the low value is larger, ties as 1/2.
inline double mwu_statistic(std::span<const double> low, std::span<const double> high) {
    double u = 0.0;
    for (double a : low)
        for (double b : high) u += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
    return u;
}

namespace detail {

inline double exact_mwu_p(std::span<const double> low, std::span<const double> high, double u_obs) {
    std::vector<double> pooled(low.begin(), low.end());
    pooled.insert(pooled.end(), high.begin(), high.end());
    const std::size_t n = pooled.size(), n1 = low.size();
    const double mean = 0.5 * double(low.size() * high.size());
    const double obs = std::abs(u_obs - mean);
    std::size_t total = 0, extreme = 0;
    std::vector<double> a, b;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        if (std::size_t(std::popcount(mask)) != n1) continue;
        a.clear();
        b.clear();
        for (std::size_t i = 0; i < n; ++i) ((mask >> i) & 1u ? a : b).push_back(pooled[i]);
        ++total;
        if (std::abs(mwu_statistic(a, b) - mean) >= obs - 1e-9) ++extreme;
    }
    return double(extreme) / double(total);
}

} // namespace detail

/// Two-sided Mann-Whitney test. The normal mode applies tie and continuity
/// corrections; the exact mode enumerates every relabeling of the pooled data.
inline MwuResult mann_whitney(std::span<const double> low, std::span<const double> high, MwuMode mode = MwuMode::normal) {
    if (low.size() < 2 || high.size() < 2)
        throw MetricError("mann_whitney: both groups need at least 2 observations (got " + std::to_string(low.size()) +
                          " and " + std::to_string(high.size()) + ")");
    MwuResult r;
    r.u = mwu_statistic(low, high);
    const double n1 = double(low.size()), n2 = double(high.size()), n = n1 + n2;
    if (mode == MwuMode::exact) {
        if (low.size() + high.size() > kExactMaxN)
            throw ContractError("mann_whitney: exact mode supports at most " + std::to_string(kExactMaxN) + " observations");
        r.p = detail::exact_mwu_p(low, high, r.u);
        return r;
    }
    std::vector<double> pooled(low.begin(), low.end());
    pooled.insert(pooled.end(), high.begin(), high.end());
    std::sort(pooled.begin(), pooled.end());
    double tie_term = 0.0;
    for (std::size_t i = 0; i < pooled.size();) {
        std::size_t j = i;
        while (j < pooled.size() && pooled[j] == pooled[i]) ++j;
        const double t = double(j - i);
        tie_term += t * t * t - t;
        i = j;
    }
    const double var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if (var <= 0.0) return r; // every observation tied
    const double z = std::max(0.0, std::abs(r.u - 0.5 * n1 * n2) - 0.5) / std::sqrt(var);
    r.p = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
    return r;
}

/// Positive when the high group tends to rank above the low group.
inline double rank_biserial(double u, std::size_t n_low, std::size_t n_high) {
    if (n_low == 0 || n_high == 0) throw ContractError("rank_biserial: empty group");
    return 1.0 - 2.0 * u / (double(n_low) * double(n_high));
}

struct FoldEffect {
    double p = 1.0;
    double r = 0.0;
    std::size_t n = 0;
};

struct StoufferResult {
    double z = 0.0;
    double p = 1.0;
    double effect = 0.0;
};

inline StoufferResult stouffer_combine(const std::vector<FoldEffect>& folds) {
    if (folds.size() < 2) throw MetricError("stouffer_combine: need at least 2 folds");
    double num = 0.0, w2 = 0.0, wr = 0.0, w1 = 0.0;
    for (const auto& f : folds) {
        const double p = std::clamp(f.p, 1e-15, 1.0 - 1e-15);
        const double sign = f.r > 0 ? 1.0 : (f.r < 0 ? -1.0 : 0.0);
        const double z = normal_quantile(1.0 - p / 2.0) * sign;
        const double w = std::sqrt(double(f.n));
        num += w * z;
        w2 += w * w;
        wr += w * f.r;
        w1 += w;
    }
    StoufferResult s;
    s.z = num / std::sqrt(w2);
    s.p = std::erfc(std::abs(s.z) / std::sqrt(2.0));
    s.effect = wr / w1;
    return s;
}

struct BhResult {
    std::vector<double> q;
    std::vector<bool> significant;
};

inline BhResult bh_fdr(const std::vector<double>& p, double alpha = 0.05) {
    const std::size_t m = p.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
    BhResult out{std::vector<double>(m), std::vector<bool>(m)};
    double running = 1.0;
    for (std::size_t i = m; i-- > 0;) {
        running = std::min(running, p[order[i]] * double(m) / double(i + 1));
        out.q[order[i]] = running;
    }
    for (std::size_t i = 0; i < m; ++i) out.significant[i] = out.q[i] <= alpha;
    return out;
}

enum class EntityKind { pathway_gate, gene_importance, within_pathway_genes, prototype_gate, fusion_gate, cross_attention_row };

inline std::string to_string(EntityKind k) {
    switch (k) {
    case EntityKind::pathway_gate: return "pathway_gate";
    case EntityKind::gene_importance: return "gene_importance";
    case EntityKind::within_pathway_genes: return "within_pathway_genes";
    case EntityKind::prototype_gate: return "prototype_gate";
    case EntityKind::fusion_gate: return "fusion_gate";
    case EntityKind::cross_attention_row: return "cross_attention_row";
    }
    return "?";
}

inline EntityKind parse_entity_kind(const std::string& s) {
    for (auto k : {EntityKind::pathway_gate, EntityKind::gene_importance, EntityKind::within_pathway_genes,
                   EntityKind::prototype_gate, EntityKind::fusion_gate, EntityKind::cross_attention_row})
        if (to_string(k) == s) return k;
    throw ConfigError("unknown entity kind '" + s + "'");
}

/// Prototype identities are fold-specific, so these entities never combine across folds.
inline bool is_prototype_indexed(EntityKind k) {
    return k == EntityKind::prototype_gate || k == EntityKind::fusion_gate || k == EntityKind::cross_attention_row;
}

/// Signal values for one fold: one row per patient, one column per entity.
struct FoldSignals {
    int fold = 0;
    std::vector<std::string> entities;
    Matrix values;
    std::vector<double> risks;
};

struct FoldTestResult {
    std::string entity;
    int fold = 0;
    double u = 0.0;
    double p = 1.0;
    double r = 0.0;
    double mean_rank_diff = 0.0;
    std::size_t n_low = 0;
    std::size_t n_high = 0;
};

struct MetaResult {
    std::string entity;
    double z = 0.0;
    double p = 1.0;
    double effect = 0.0;
    double q = 1.0;
    bool significant = false;
    std::size_t folds_used = 0;
    bool combinable = true;
};

struct AnalysisResult {
    EntityKind kind = EntityKind::pathway_gate;
    std::vector<FoldTestResult> per_fold;
    std::vector<MetaResult> meta;
    std::vector<int> excluded_folds; // a risk group had fewer than 2 patients
};

inline std::vector<FoldTestResult> fold_tests(const FoldSignals& f) {
    if (f.values.size() != f.risks.size())
        throw DimensionError("fold " + std::to_string(f.fold) + ": " + std::to_string(f.values.size()) +
                             " signal rows but " + std::to_string(f.risks.size()) + " risks");
    for (const auto& row : f.values)
        if (row.size() != f.entities.size())
            throw DimensionError("fold " + std::to_string(f.fold) + ": signal row length does not match entity count");
    const auto high = survival::median_risk_split(f.risks);
    const Matrix ranks = within_patient_ranks(f.values);
    std::vector<FoldTestResult> out;
    std::vector<double> lo, hi;
    for (std::size_t e = 0; e < f.entities.size(); ++e) {
        lo.clear();
        hi.clear();
        for (std::size_t i = 0; i < ranks.size(); ++i) (high[i] ? hi : lo).push_back(ranks[i][e]);
        const auto mw = mann_whitney(lo, hi);
        FoldTestResult t;
        t.entity = f.entities[e];
        t.fold = f.fold;
        t.u = mw.u;
        t.p = mw.p;
        t.r = rank_biserial(mw.u, lo.size(), hi.size());
        t.mean_rank_diff = std::accumulate(hi.begin(), hi.end(), 0.0) / double(hi.size()) -
                           std::accumulate(lo.begin(), lo.end(), 0.0) / double(lo.size());
        t.n_low = lo.size();
        t.n_high = hi.size();
        out.push_back(std::move(t));
    }
    return out;
}

inline AnalysisResult fold_stratified_analysis(const std::vector<FoldSignals>& folds, EntityKind kind, bool combine,
                                               double alpha = 0.05) {
    if (combine && is_prototype_indexed(kind))
        throw ContractError("cross-fold combination is not defined for prototype-indexed entity kind '" +
                            to_string(kind) + "'");
    AnalysisResult res;
    res.kind = kind;
    for (const auto& f : folds) {
        std::size_t n_high = 0;
        for (bool h : survival::median_risk_split(f.risks)) n_high += h;
        if (n_high < 2 || f.risks.size() - n_high < 2) {
            res.excluded_folds.push_back(f.fold);
            continue;
        }
        auto t = fold_tests(f);
        res.per_fold.insert(res.per_fold.end(), t.begin(), t.end());
    }
    std::stable_sort(res.per_fold.begin(), res.per_fold.end(), [](const auto& a, const auto& b) {
        return a.entity != b.entity ? a.entity < b.entity : a.fold < b.fold;
    });
    if (!combine) return res;

    std::map<std::string, std::vector<FoldEffect>> by_entity;
    for (const auto& t : res.per_fold) by_entity[t.entity].push_back({t.p, t.r, t.n_low + t.n_high});
    std::vector<double> ps;
    std::vector<std::size_t> slots;
    for (const auto& [entity, effects] : by_entity) {
        MetaResult m;
        m.entity = entity;
        m.folds_used = effects.size();
        if (effects.size() < 2) {
            m.combinable = false;
        } else {
            const auto s = stouffer_combine(effects);
            m.z = s.z;
            m.p = s.p;
            m.effect = s.effect;
            ps.push_back(s.p);
            slots.push_back(res.meta.size());
        }
        res.meta.push_back(std::move(m));
    }
    const auto bh = bh_fdr(ps, alpha);
    for (std::size_t i = 0; i < slots.size(); ++i) {
        res.meta[slots[i]].q = bh.q[i];
        res.meta[slots[i]].significant = bh.significant[i];
    }
    return res;
}

struct GatingShift {
    Matrix delta;                   // patients x K
    std::vector<double> mean_delta; // K
    std::vector<MwuResult> group_test; // per prototype; empty when a group has < 2 patients
    std::vector<double> group_effect;  // rank-biserial per prototype
};

/// Rank change of each prototype from the pre-fusion gate to the fusion gate.
inline GatingShift gating_shift(const Matrix& wsi_gate, const Matrix& fusion_gate, const std::vector<double>& risks = {}) {
    if (wsi_gate.size() != fusion_gate.size()) throw DimensionError("gating_shift: patient counts differ");
    GatingShift out;
    if (wsi_gate.empty()) return out;
    const std::size_t k = wsi_gate[0].size();
    for (std::size_t i = 0; i < wsi_gate.size(); ++i) {
        if (wsi_gate[i].size() != k || fusion_gate[i].size() != k)
            throw DimensionError("gating_shift: gate vectors must all have length " + std::to_string(k));
        const auto a = average_ranks(wsi_gate[i]), b = average_ranks(fusion_gate[i]);
        std::vector<double> d(k);
        for (std::size_t j = 0; j < k; ++j) d[j] = b[j] - a[j];
        out.delta.push_back(std::move(d));
    }
    out.mean_delta.assign(k, 0.0);
    for (const auto& d : out.delta)
        for (std::size_t j = 0; j < k; ++j) out.mean_delta[j] += d[j] / double(out.delta.size());
    if (risks.empty()) return out;
    if (risks.size() != out.delta.size()) throw DimensionError("gating_shift: risk count differs from patient count");
    const auto high = survival::median_risk_split(risks);
    std::vector<double> lo, hi;
    for (std::size_t j = 0; j < k; ++j) {
        lo.clear();
        hi.clear();
        for (std::size_t i = 0; i < high.size(); ++i) (high[i] ? hi : lo).push_back(out.delta[i][j]);
        if (lo.size() < 2 || hi.size() < 2) {
            out.group_test.clear();
            out.group_effect.clear();
            return out;
        }
        const auto mw = mann_whitney(lo, hi);
        out.group_test.push_back(mw);
        out.group_effect.push_back(rank_biserial(mw.u, lo.size(), hi.size()));
    }
    return out;
}

} // namespace protopath::stats
