#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <set>
#include <vector>

#include "protopath/core/error.hpp"
#include "protopath/core/ndarray.hpp"
#include "protopath/core/rng.hpp"

namespace protopath::prototype {

using ad::NdArray;

struct KMeansOptions {
    std::size_t k = 16;
    double budget = 1e5;
    std::size_t batch = 1024;
    std::size_t restarts = 10;
    std::size_t max_iter = 100;
    std::uint64_t seed = 0;
};

/// Per-slide sample counts proportional to slide size, at least one each and
/// never more than the slide holds.
inline std::vector<std::size_t> sample_counts(const std::vector<std::size_t>& bag_sizes, double budget) {
    const double total = std::accumulate(bag_sizes.begin(), bag_sizes.end(), 0.0);
    std::vector<std::size_t> out;
    for (std::size_t n : bag_sizes) {
        auto share = static_cast<std::size_t>(std::floor(static_cast<double>(n) * budget / total));
        out.push_back(std::min(n, std::max<std::size_t>(1, share)));
    }
    return out;
}

inline void normalize_row(std::span<double> row) {
    double s = 0.0;
    for (double v : row) s += v * v;
    const double norm = std::sqrt(s);
    if (norm < 1e-12) return;
    for (double& v : row) v /= norm;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

/// Samples patches without replacement from each bag and L2-normalizes them.
inline NdArray sample_patches(const std::vector<NdArray>& bags, double budget, Rng& rng) {
    if (bags.empty()) throw InitializationError("no training bags for prototype initialization");
    std::vector<std::size_t> sizes;
    for (const auto& b : bags) sizes.push_back(b.rows());
    const auto counts = sample_counts(sizes, budget);
    const std::size_t d = bags.front().cols();
    const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    NdArray out({total, d});
    std::size_t row = 0;
    for (std::size_t b = 0; b < bags.size(); ++b) {
        if (bags[b].cols() != d) throw DimensionError("training bags differ in feature dim");
        std::vector<std::size_t> idx(sizes[b]);
        std::iota(idx.begin(), idx.end(), 0);
        for (std::size_t i = 0; i < counts[b]; ++i) {
            std::swap(idx[i], idx[i + rng.index(sizes[b] - i)]);
            auto src = bags[b].row_span(idx[i]);
            auto dst = out.data().subspan(row * d, d);
            std::copy(src.begin(), src.end(), dst.begin());
            normalize_row(dst);
            ++row;
        }
    }
    return out;
}

inline std::size_t count_distinct_rows(const NdArray& x) {
    std::set<std::vector<double>> rows;
    for (std::size_t i = 0; i < x.rows(); ++i) rows.emplace(x.row_span(i).begin(), x.row_span(i).end());
    return rows.size();
}

inline std::size_t nearest_center(std::span<const double> x, const NdArray& centers, double* dist = nullptr) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centers.rows(); ++c) {
        const double d = squared_distance(x, centers.row_span(c));
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    if (dist) *dist = best_d;
    return best;
}

inline double inertia(const NdArray& x, const NdArray& centers) {
    double total = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double d = 0.0;
        nearest_center(x.row_span(i), centers, &d);
        total += d;
    }
    return total;
}

/// k-means++ seeding: each new center drawn with probability proportional to
/// its squared distance from the nearest chosen center.
inline NdArray kmeans_plus_plus(const NdArray& x, std::size_t k, Rng& rng) {
    const std::size_t n = x.rows(), d = x.cols();
    NdArray centers({k, d});
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    std::size_t pick = rng.index(n);
    for (std::size_t c = 0; c < k; ++c) {
        auto src = x.row_span(pick);
        std::copy(src.begin(), src.end(), centers.data().begin() + c * d);
        if (c + 1 == k) break;
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            dist[i] = std::min(dist[i], squared_distance(x.row_span(i), centers.row_span(c)));
            total += dist[i];
        }
        if (total <= 0.0) throw InitializationError("k-means++ ran out of distinct points");
        double u = rng.uniform() * total;
        pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
            if (dist[i] <= 0.0) continue;
            u -= dist[i];
            if (u < 0.0) {
                pick = i;
                break;
            }
        }
        while (dist[pick] <= 0.0) --pick; // rounding fallback
    }
    return centers;
}

struct KMeansResult {
    NdArray centers;
    double inertia = 0.0;
    std::size_t restart = 0;
};

/// Mini-batch k-means with per-center learning rates 1/count. Returns the
/// restart with the lowest inertia over all samples.
inline KMeansResult minibatch_kmeans(const NdArray& x, std::size_t k, std::size_t batch, std::size_t restarts,
                                     std::size_t max_iter, Rng& rng) {
    if (k == 0) throw ParameterError("k-means: k must be >= 1");
    if (count_distinct_rows(x) < k)
        throw InitializationError("k-means: fewer distinct samples (" + std::to_string(count_distinct_rows(x)) +
                                  ") than prototypes (" + std::to_string(k) + ")");
    const std::size_t n = x.rows(), d = x.cols();
    const std::size_t b = std::min(batch, n);
    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < std::max<std::size_t>(1, restarts); ++r) {
        NdArray centers = kmeans_plus_plus(x, k, rng);
        std::vector<double> counts(k, 0.0);
        std::vector<std::size_t> idx(b), assign(b);
        for (std::size_t it = 0; it < max_iter; ++it) {
            for (std::size_t i = 0; i < b; ++i) {
                idx[i] = rng.index(n);
                assign[i] = nearest_center(x.row_span(idx[i]), centers);
            }
            const NdArray before = centers;
            for (std::size_t i = 0; i < b; ++i) {
                const std::size_t c = assign[i];
                counts[c] += 1.0;
                const double eta = 1.0 / counts[c];
                auto src = x.row_span(idx[i]);
                for (std::size_t j = 0; j < d; ++j) centers(c, j) = (1.0 - eta) * centers(c, j) + eta * src[j];
            }
            if (max_abs_diff(before, centers) < 1e-10) break;
        }
        const double in = inertia(x, centers);
        if (in < best.inertia) best = {centers, in, r};
    }
    return best;
}

/// Prototype initialization from training bags only: proportional sampling,
/// mini-batch k-means, unit-norm centroids rounded to float32.
inline NdArray kmeans_init(const std::vector<NdArray>& training_bags, const KMeansOptions& opt) {
    Rng rng(opt.seed);
    const NdArray samples = sample_patches(training_bags, opt.budget, rng);
    if (samples.rows() < opt.k)
        throw InitializationError("prototype initialization: fewer samples than prototypes");
    KMeansResult res = minibatch_kmeans(samples, opt.k, opt.batch, opt.restarts, opt.max_iter, rng);
    NdArray c = std::move(res.centers);
    for (std::size_t i = 0; i < c.rows(); ++i) normalize_row(c.data().subspan(i * c.cols(), c.cols()));
    for (double& v : c.data()) v = static_cast<double>(static_cast<float>(v));
    return c;
}

} // namespace protopath::prototype
