#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "protopath/core/error.hpp"
#include "protopath/core/ndarray.hpp"
#include "protopath/core/ops.hpp"

namespace protopath::survival {

struct SurvivalRecord {
    std::string patient_id;
    double time = 0.0; // months
    bool event = false;
};

inline void validate(const SurvivalRecord& r) {
    if (!std::isfinite(r.time) || r.time <= 0.0)
        throw InputError("survival time of " + r.patient_id + " must be finite and positive");
}

/// Linear-interpolation quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw MetricError("quantile of empty data");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

/// B-1 cut points at quantiles 1/B..(B-1)/B of the uncensored times.
inline std::vector<double> fit_bins(const std::vector<SurvivalRecord>& records, std::size_t bins) {
    if (bins < 2) throw ParameterError("need at least 2 survival bins");
    std::vector<double> times;
    for (const auto& r : records)
        if (r.event) times.push_back(r.time);
    std::sort(times.begin(), times.end());
    const std::set<double> distinct(times.begin(), times.end());
    if (distinct.size() < bins)
        throw MetricError("bin fitting needs " + std::to_string(bins) + " distinct uncensored times, got " +
                          std::to_string(distinct.size()));
    std::vector<double> edges;
    for (std::size_t b = 1; b < bins; ++b) edges.push_back(quantile_sorted(times, double(b) / double(bins)));
    for (std::size_t i = 1; i < edges.size(); ++i)
        if (!(edges[i] > edges[i - 1])) throw MetricError("bin edges are not strictly increasing");
    return edges;
}

/// Number of edges strictly below t; a time equal to an edge falls in the
/// lower bin and times past the last edge land in bin B-1.
inline std::size_t bin_index(double t, const std::vector<double>& edges) {
    return static_cast<std::size_t>(std::lower_bound(edges.begin(), edges.end(), t) - edges.begin());
}

/// S(b) = prod_{j<=b} (1 - sigmoid(h_j)).
inline std::vector<double> survival_curve(std::span<const double> logits) {
    std::vector<double> s;
    double acc = 1.0;
    for (double h : logits) {
        acc *= 1.0 - ad::detail::sigmoid(h);
        s.push_back(acc);
    }
    return s;
}

inline double risk_score(const std::vector<double>& s) {
    double r = 0.0;
    for (double v : s) r -= v;
    return r;
}

inline double risk_from_logits(std::span<const double> logits) { return risk_score(survival_curve(logits)); }

/// Harrell's concordance: pairs with t_i < t_j and an event at t_i; ties in
/// risk count one half.
inline double c_index(const std::vector<double>& risks, const std::vector<SurvivalRecord>& records) {
    if (risks.size() != records.size()) throw DimensionError("c_index: risks and records differ in length");
    double concordant = 0.0;
    std::size_t comparable = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!records[i].event) continue;
        for (std::size_t j = 0; j < records.size(); ++j) {
            if (!(records[i].time < records[j].time)) continue;
            ++comparable;
            if (risks[i] > risks[j])
                concordant += 1.0;
            else if (risks[i] == risks[j])
                concordant += 0.5;
        }
    }
    if (comparable == 0) throw MetricError("c_index: no comparable pairs");
    return concordant / static_cast<double>(comparable);
}

struct KmCurve {
    std::vector<double> times;    // distinct event times
    std::vector<double> survival; // estimate just after each time
    std::vector<std::size_t> at_risk;
    std::vector<std::size_t> events;

    /// Step-function value at t.
    double at(double t) const {
        double s = 1.0;
        for (std::size_t i = 0; i < times.size() && times[i] <= t; ++i) s = survival[i];
        return s;
    }
};

inline KmCurve km_curve(const std::vector<SurvivalRecord>& records) {
    if (records.empty()) throw MetricError("km_curve: empty group");
    std::set<double> event_times;
    for (const auto& r : records)
        if (r.event) event_times.insert(r.time);
    KmCurve km;
    double s = 1.0;
    for (double t : event_times) {
        std::size_t n = 0, d = 0;
        for (const auto& r : records) {
            n += r.time >= t;
            d += r.event && r.time == t;
        }
        s *= 1.0 - double(d) / double(n);
        km.times.push_back(t);
        km.survival.push_back(s);
        km.at_risk.push_back(n);
        km.events.push_back(d);
    }
    return km;
}

struct LogRankResult {
    double statistic = 0.0;
    double p_value = 1.0;
    double observed_high = 0.0;
    double expected_high = 0.0;
};

/// Two-group log-rank test, chi-square with one degree of freedom.
inline LogRankResult logrank_test(const std::vector<SurvivalRecord>& records, const std::vector<bool>& group) {
    if (records.size() != group.size()) throw DimensionError("logrank_test: labels and records differ in length");
    std::size_t ev1 = 0, ev0 = 0;
    std::set<double> event_times;
    for (std::size_t i = 0; i < records.size(); ++i)
        if (records[i].event) {
            (group[i] ? ev1 : ev0)++;
            event_times.insert(records[i].time);
        }
    if (ev1 == 0 || ev0 == 0) throw MetricError("logrank_test: each group needs at least one event");
    LogRankResult r;
    double var = 0.0;
    for (double t : event_times) {
        double n = 0, n1 = 0, d = 0, d1 = 0;
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (records[i].time < t) continue;
            n += 1;
            n1 += group[i];
            if (records[i].event && records[i].time == t) {
                d += 1;
                d1 += group[i];
            }
        }
        r.observed_high += d1;
        r.expected_high += d * n1 / n;
        if (n > 1) var += d * (n1 / n) * (1.0 - n1 / n) * (n - d) / (n - 1.0);
    }
    if (!(var > 0.0)) throw MetricError("logrank_test: zero variance (a group has nobody at risk)");
    const double diff = r.observed_high - r.expected_high;
    r.statistic = diff * diff / var;
    r.p_value = std::erfc(std::sqrt(r.statistic / 2.0));
    return r;
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw MetricError("median of empty data");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// true = high risk (strictly above the median).
inline std::vector<bool> median_risk_split(const std::vector<double>& risks) {
    const double m = median(risks);
    std::vector<bool> high;
    for (double r : risks) high.push_back(r > m);
    return high;
}

} // namespace protopath::survival
