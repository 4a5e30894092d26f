#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "protopath/core/error.hpp"
#include "protopath/core/ndarray.hpp"
#include "protopath/core/rng.hpp"
#include "protopath/core/tape.hpp"

namespace protopath::ad {

inline constexpr double kLeakySlope = 0.01;
inline constexpr double kLayerNormEps = 1e-5;

namespace detail {

/// C = op(A) * op(B) for rank-2 arrays.
inline NdArray gemm(const NdArray& a, bool trans_a, const NdArray& b, bool trans_b) {
    const std::size_t m = trans_a ? a.cols() : a.rows();
    const std::size_t k = trans_a ? a.rows() : a.cols();
    const std::size_t kb = trans_b ? b.cols() : b.rows();
    const std::size_t n = trans_b ? b.rows() : b.cols();
    if (k != kb)
        throw DimensionError("matmul: inner dimensions differ (" + shape_str(a.shape()) +
                             (trans_a ? "^T" : "") + " x " + shape_str(b.shape()) + (trans_b ? "^T" : "") + ")");
    NdArray c({m, n});
    const std::size_t lda = a.cols(), ldb = b.cols();
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* pc = c.data().data();
    if (!trans_b) {
        for (std::size_t i = 0; i < m; ++i) {
            double* crow = pc + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = trans_a ? pa[p * lda + i] : pa[i * lda + p];
                if (av == 0.0) continue;
                const double* brow = pb + p * ldb;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                const double* brow = pb + j * ldb;
                if (trans_a) {
                    for (std::size_t p = 0; p < k; ++p) acc += pa[p * lda + i] * brow[p];
                } else {
                    const double* arow = pa + i * lda;
                    for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
                }
                pc[i * n + j] = acc;
            }
        }
    }
    return c;
}

inline void require_same_shape(const NdArray& a, const NdArray& b, const char* op) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
}

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// log(1 + e^x) without overflow.
inline double softplus(double x) {
    if (x > 0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

template <typename F>
NdArray map(const NdArray& x, F f) {
    NdArray out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
    return out;
}

inline void check_segments(std::span<const std::size_t> ids, std::size_t rows, std::size_t num_segments,
                           const char* op) {
    if (ids.size() != rows)
        throw DimensionError(std::string(op) + ": " + std::to_string(ids.size()) + " segment ids for " +
                             std::to_string(rows) + " rows");
    for (std::size_t id : ids)
        if (id >= num_segments)
            throw IndexError(std::string(op) + ": segment id " + std::to_string(id) + " out of range [0, " +
                             std::to_string(num_segments) + ")");
}

} // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

inline Var matmul(const Var& a, const Var& b) {
    NdArray out = detail::gemm(a.value(), false, b.value(), false);
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const NdArray& g) {
        if (t.requires_grad(a)) t.accumulate(a, detail::gemm(g, false, b.value(), true));
        if (t.requires_grad(b)) t.accumulate(b, detail::gemm(a.value(), true, g, false));
    });
}

/// a * b^T
inline Var matmul_nt(const Var& a, const Var& b) {
    NdArray out = detail::gemm(a.value(), false, b.value(), true);
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const NdArray& g) {
        if (t.requires_grad(a)) t.accumulate(a, detail::gemm(g, false, b.value(), false));
        if (t.requires_grad(b)) t.accumulate(b, detail::gemm(g, true, a.value(), false));
    });
}

inline Var transpose(const Var& x) {
    return x.tape->record(x.value().transposed(), {x},
                          [x](Tape& t, const NdArray& g) { t.accumulate(x, g.transposed()); });
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic

inline Var add(const Var& a, const Var& b) {
    detail::require_same_shape(a.value(), b.value(), "add");
    NdArray out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const NdArray& g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

inline Var sub(const Var& a, const Var& b) {
    detail::require_same_shape(a.value(), b.value(), "sub");
    NdArray out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const NdArray& g) {
        t.accumulate(a, g);
        if (t.requires_grad(b)) t.accumulate(b, detail::map(g, [](double v) { return -v; }));
    });
}

/// Hadamard product.
inline Var mul(const Var& a, const Var& b) {
    detail::require_same_shape(a.value(), b.value(), "mul");
    NdArray out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const NdArray& g) {
        if (t.requires_grad(a)) {
            NdArray ga = g;
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= b.value()[i];
            t.accumulate(a, std::move(ga));
        }
        if (t.requires_grad(b)) {
            NdArray gb = g;
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= a.value()[i];
            t.accumulate(b, std::move(gb));
        }
    });
}

inline Var scale(const Var& x, double s) {
    return x.tape->record(detail::map(x.value(), [s](double v) { return v * s; }), {x},
                          [x, s](Tape& t, const NdArray& g) {
                              t.accumulate(x, detail::map(g, [s](double v) { return v * s; }));
                          });
}

inline Var add_scalar(const Var& x, double s) {
    return x.tape->record(detail::map(x.value(), [s](double v) { return v + s; }), {x},
                          [x](Tape& t, const NdArray& g) { t.accumulate(x, g); });
}

/// max(x, lo) elementwise; the gradient is zero where the floor is active.
inline Var clamp_min(const Var& x, double lo) {
    return x.tape->record(detail::map(x.value(), [lo](double v) { return v < lo ? lo : v; }), {x},
                          [x, lo](Tape& t, const NdArray& g) {
                              NdArray gx = g;
                              const NdArray& xv = x.value();
                              for (std::size_t i = 0; i < gx.size(); ++i)
                                  if (xv[i] < lo) gx[i] = 0.0;
                              t.accumulate(x, std::move(gx));
                          });
}

/// x[m x n] + b[1 x n], b broadcast over rows.
inline Var add_row(const Var& x, const Var& b) {
    const NdArray& xv = x.value();
    const NdArray& bv = b.value();
    if (bv.size() != xv.cols())
        throw DimensionError("add_row: bias " + shape_str(bv.shape()) + " vs input " + shape_str(xv.shape()));
    NdArray out = xv;
    const std::size_t n = xv.cols();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % n];
    return x.tape->record(std::move(out), {x, b}, [x, b, n](Tape& t, const NdArray& g) {
        t.accumulate(x, g);
        if (t.requires_grad(b)) {
            NdArray gb(b.value().shape());
            for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
            t.accumulate(b, std::move(gb));
        }
    });
}

/// x[m x n] * c[m x 1], c broadcast over columns.
inline Var mul_col(const Var& x, const Var& c) {
    const NdArray& xv = x.value();
    const NdArray& cv = c.value();
    if (cv.size() != xv.rows())
        throw DimensionError("mul_col: column " + shape_str(cv.shape()) + " vs input " + shape_str(xv.shape()));
    const std::size_t n = xv.cols();
    NdArray out = xv;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= cv[i / n];
    return x.tape->record(std::move(out), {x, c}, [x, c, n](Tape& t, const NdArray& g) {
        if (t.requires_grad(x)) {
            NdArray gx = g;
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= c.value()[i / n];
            t.accumulate(x, std::move(gx));
        }
        if (t.requires_grad(c)) {
            NdArray gc(c.value().shape());
            for (std::size_t i = 0; i < g.size(); ++i) gc[i / n] += g[i] * x.value()[i];
            t.accumulate(c, std::move(gc));
        }
    });
}

/// x[m x n] / c[m x 1], c broadcast over columns.
inline Var div_col(const Var& x, const Var& c) {
    const NdArray& xv = x.value();
    const NdArray& cv = c.value();
    if (cv.size() != xv.rows())
        throw DimensionError("div_col: column " + shape_str(cv.shape()) + " vs input " + shape_str(xv.shape()));
    const std::size_t n = xv.cols();
    NdArray out = xv;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= cv[i / n];
    return x.tape->record(std::move(out), {x, c}, [x, c, n](Tape& t, const NdArray& g) {
        const NdArray& cv = c.value();
        if (t.requires_grad(x)) {
            NdArray gx = g;
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] /= cv[i / n];
            t.accumulate(x, std::move(gx));
        }
        if (t.requires_grad(c)) {
            NdArray gc(cv.shape());
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double ci = cv[i / n];
                gc[i / n] -= g[i] * x.value()[i] / (ci * ci);
            }
            t.accumulate(c, std::move(gc));
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions and reshaping

inline Var sum(const Var& x) {
    const Shape shape = x.value().shape();
    return x.tape->record(NdArray({1, 1}, x.value().sum()), {x},
                          [x, shape](Tape& t, const NdArray& g) { t.accumulate(x, NdArray(shape, g[0])); });
}

inline Var mean(const Var& x) {
    const double n = static_cast<double>(x.value().size());
    return scale(sum(x), 1.0 / n);
}

/// Column sums of a matrix as a 1 x n row.
inline Var sum_rows(const Var& x) {
    const NdArray& xv = x.value();
    const std::size_t m = xv.rows(), n = xv.cols();
    NdArray out({1, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j] += xv(i, j);
    return x.tape->record(std::move(out), {x}, [x, m, n](Tape& t, const NdArray& g) {
        NdArray gx({m, n});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gx(i, j) = g[j];
        t.accumulate(x, std::move(gx));
    });
}

inline Var reshape(const Var& x, Shape shape) {
    const Shape original = x.value().shape();
    return x.tape->record(x.value().reshaped(std::move(shape)), {x},
                          [x, original](Tape& t, const NdArray& g) { t.accumulate(x, g.reshaped(original)); });
}

inline Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    const std::size_t m = parts.front().value().rows();
    std::size_t total = 0;
    for (const Var& p : parts) {
        if (p.value().rows() != m) throw DimensionError("concat_cols: row counts differ");
        total += p.value().cols();
    }
    NdArray out({m, total});
    std::size_t offset = 0;
    for (const Var& p : parts) {
        const NdArray& v = p.value();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < v.cols(); ++j) out(i, offset + j) = v(i, j);
        offset += v.cols();
    }
    return parts.front().tape->record(std::move(out), parts, [parts, m, total](Tape& t, const NdArray& g) {
        std::size_t off = 0;
        for (const Var& p : parts) {
            const std::size_t c = p.value().cols();
            if (t.requires_grad(p)) {
                NdArray gp({m, c});
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < c; ++j) gp(i, j) = g(i, off + j);
                t.accumulate(p, std::move(gp));
            }
            off += c;
        }
        (void)total;
    });
}

/// Columns [begin, end).
inline Var slice_cols(const Var& x, std::size_t begin, std::size_t end) {
    const NdArray& xv = x.value();
    if (begin > end || end > xv.cols()) throw IndexError("slice_cols: range out of bounds");
    const std::size_t m = xv.rows(), n = xv.cols(), w = end - begin;
    NdArray out({m, w});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) out(i, j) = xv(i, begin + j);
    return x.tape->record(std::move(out), {x}, [x, m, n, w, begin](Tape& t, const NdArray& g) {
        NdArray gx({m, n});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) gx(i, begin + j) = g(i, j);
        t.accumulate(x, std::move(gx));
    });
}

/// Rows selected by index (duplicates allowed).
inline Var gather_rows(const Var& x, std::vector<std::size_t> index) {
    const NdArray& xv = x.value();
    const std::size_t n = xv.cols(), src_rows = xv.rows();
    NdArray out({index.size(), n});
    for (std::size_t r = 0; r < index.size(); ++r) {
        if (index[r] >= src_rows) throw IndexError("gather_rows: index out of range");
        std::copy_n(xv.row_span(index[r]).begin(), n, out.row_span(r).begin());
    }
    return x.tape->record(std::move(out), {x}, [x, index = std::move(index), n, src_rows](Tape& t, const NdArray& g) {
        NdArray gx({src_rows, n});
        for (std::size_t r = 0; r < index.size(); ++r)
            for (std::size_t j = 0; j < n; ++j) gx(index[r], j) += g(r, j);
        t.accumulate(x, std::move(gx));
    });
}

// ---------------------------------------------------------------------------
// Nonlinearities

inline Var leaky_relu(const Var& x, double slope = kLeakySlope) {
    return x.tape->record(detail::map(x.value(), [slope](double v) { return v > 0 ? v : (slope == 0.0 ? 0.0 : slope * v); }), {x},
                          [x, slope](Tape& t, const NdArray& g) {
                              NdArray gx = g;
                              for (std::size_t i = 0; i < gx.size(); ++i)
                                  if (!(x.value()[i] > 0)) gx[i] *= slope;
                              t.accumulate(x, std::move(gx));
                          });
}

inline Var relu(const Var& x) { return leaky_relu(x, 0.0); }

inline Var sigmoid(const Var& x) {
    NdArray out = detail::map(x.value(), detail::sigmoid);
    return x.tape->record(out, {x}, [x, out](Tape& t, const NdArray& g) {
        NdArray gx = g;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= out[i] * (1.0 - out[i]);
        t.accumulate(x, std::move(gx));
    });
}

/// Softmax over the last dimension with max subtraction.
inline Var softmax_last(const Var& x) {
    const NdArray& xv = x.value();
    const std::size_t n = xv.last_dim();
    if (n == 0 || xv.empty()) throw DimensionError("softmax_last: empty last dimension");
    NdArray out(xv.shape());
    const std::size_t slices = xv.size() / n;
    for (std::size_t s = 0; s < slices; ++s) {
        const double* in = xv.data().data() + s * n;
        double* o = out.data().data() + s * n;
        const double mx = *std::max_element(in, in + n);
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) total += (o[j] = std::exp(in[j] - mx));
        for (std::size_t j = 0; j < n; ++j) o[j] /= total;
    }
    return x.tape->record(out, {x}, [x, out, n, slices](Tape& t, const NdArray& g) {
        NdArray gx(out.shape());
        for (std::size_t s = 0; s < slices; ++s) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += g[s * n + j] * out[s * n + j];
            for (std::size_t j = 0; j < n; ++j) gx[s * n + j] = out[s * n + j] * (g[s * n + j] - dot);
        }
        t.accumulate(x, std::move(gx));
    });
}

/// Normalization over the last dimension followed by gamma * xhat + beta.
/// gamma and beta hold last_dim values each.
inline Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = kLayerNormEps) {
    const NdArray& xv = x.value();
    const std::size_t n = xv.last_dim();
    if (gamma.value().size() != n || beta.value().size() != n)
        throw DimensionError("layer_norm: affine parameters must have " + std::to_string(n) + " entries");
    if (eps < 0) throw ParameterError("layer_norm: eps must be non-negative");
    const std::size_t slices = xv.size() / n;
    NdArray xhat(xv.shape());
    std::vector<double> inv_std(slices);
    NdArray out(xv.shape());
    for (std::size_t s = 0; s < slices; ++s) {
        const double* in = xv.data().data() + s * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += in[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (in[j] - mu) * (in[j] - mu);
        var /= static_cast<double>(n);
        const double denom = std::sqrt(var + eps);
        inv_std[s] = denom > 0 ? 1.0 / denom : 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (in[j] - mu) * inv_std[s];
            xhat[s * n + j] = h;
            out[s * n + j] = h * gamma.value()[j] + beta.value()[j];
        }
    }
    return x.tape->record(std::move(out), {x, gamma, beta},
                          [x, gamma, beta, xhat, inv_std, n, slices](Tape& t, const NdArray& g) {
                              if (t.requires_grad(gamma) || t.requires_grad(beta)) {
                                  NdArray gg(gamma.value().shape()), gb(beta.value().shape());
                                  for (std::size_t i = 0; i < g.size(); ++i) {
                                      gg[i % n] += g[i] * xhat[i];
                                      gb[i % n] += g[i];
                                  }
                                  t.accumulate(gamma, std::move(gg));
                                  t.accumulate(beta, std::move(gb));
                              }
                              if (!t.requires_grad(x)) return;
                              NdArray gx(x.value().shape());
                              const double inv_n = 1.0 / static_cast<double>(n);
                              for (std::size_t s = 0; s < slices; ++s) {
                                  double mean_d = 0.0, mean_dx = 0.0;
                                  for (std::size_t j = 0; j < n; ++j) {
                                      const double d = g[s * n + j] * gamma.value()[j];
                                      mean_d += d;
                                      mean_dx += d * xhat[s * n + j];
                                  }
                                  mean_d *= inv_n;
                                  mean_dx *= inv_n;
                                  for (std::size_t j = 0; j < n; ++j) {
                                      const double d = g[s * n + j] * gamma.value()[j];
                                      gx[s * n + j] = inv_std[s] * (d - mean_d - xhat[s * n + j] * mean_dx);
                                  }
                              }
                              t.accumulate(x, std::move(gx));
                          });
}

/// Inverted dropout. In eval mode, or with p == 0, returns x unchanged.
inline Var dropout(const Var& x, double p, Rng& rng, bool training) {
    if (!(p >= 0.0 && p < 1.0)) throw ParameterError("dropout: probability must lie in [0, 1)");
    if (!training || p == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - p);
    NdArray mask(x.value().shape());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.uniform() >= p ? keep_scale : 0.0;
    NdArray out = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
    return x.tape->record(std::move(out), {x}, [x, mask = std::move(mask)](Tape& t, const NdArray& g) {
        NdArray gx = g;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= mask[i];
        t.accumulate(x, std::move(gx));
    });
}

/// Each row scaled to unit L2 norm. Rows with norm below 1e-12 map to zero
/// (and pass no gradient), which gives them cosine 0 against everything.
inline Var l2_normalize_rows(const Var& x) {
    const NdArray& xv = x.value();
    const std::size_t m = xv.rows(), n = xv.cols();
    NdArray out({m, n});
    std::vector<double> norms(m);
    for (std::size_t i = 0; i < m; ++i) {
        double ss = 0.0;
        for (std::size_t j = 0; j < n; ++j) ss += xv(i, j) * xv(i, j);
        norms[i] = std::sqrt(ss);
        if (norms[i] < 1e-12) continue;
        for (std::size_t j = 0; j < n; ++j) out(i, j) = xv(i, j) / norms[i];
    }
    return x.tape->record(out, {x}, [x, out, norms, m, n](Tape& t, const NdArray& g) {
        NdArray gx({m, n});
        for (std::size_t i = 0; i < m; ++i) {
            if (norms[i] < 1e-12) continue;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += g(i, j) * out(i, j);
            for (std::size_t j = 0; j < n; ++j) gx(i, j) = (g(i, j) - out(i, j) * dot) / norms[i];
        }
        t.accumulate(x, std::move(gx));
    });
}

// ---------------------------------------------------------------------------
// Segment (graph) primitives

/// Row s of the result is the sum of rows whose id is s.
inline Var segment_sum(const Var& values, std::vector<std::size_t> ids, std::size_t num_segments) {
    const NdArray& v = values.value();
    detail::check_segments(ids, v.rows(), num_segments, "segment_sum");
    const std::size_t d = v.cols();
    NdArray out({num_segments, d});
    for (std::size_t r = 0; r < ids.size(); ++r)
        for (std::size_t j = 0; j < d; ++j) out(ids[r], j) += v(r, j);
    return values.tape->record(std::move(out), {values}, [values, ids = std::move(ids), d](Tape& t, const NdArray& g) {
        NdArray gv({ids.size(), d});
        for (std::size_t r = 0; r < ids.size(); ++r)
            for (std::size_t j = 0; j < d; ++j) gv(r, j) = g(ids[r], j);
        t.accumulate(values, std::move(gv));
    });
}

/// Row s of the result is the mean of rows whose id is s; empty segments
/// yield zero rows.
inline Var segment_mean(const Var& values, std::vector<std::size_t> ids, std::size_t num_segments) {
    const NdArray& v = values.value();
    detail::check_segments(ids, v.rows(), num_segments, "segment_mean");
    const std::size_t d = v.cols();
    std::vector<double> count(num_segments, 0.0);
    for (std::size_t id : ids) count[id] += 1.0;
    NdArray out({num_segments, d});
    for (std::size_t r = 0; r < ids.size(); ++r)
        for (std::size_t j = 0; j < d; ++j) out(ids[r], j) += v(r, j);
    for (std::size_t s = 0; s < num_segments; ++s)
        if (count[s] > 0)
            for (std::size_t j = 0; j < d; ++j) out(s, j) /= count[s];
    return values.tape->record(std::move(out), {values},
                               [values, ids = std::move(ids), count = std::move(count), d](Tape& t, const NdArray& g) {
                                   NdArray gv({ids.size(), d});
                                   for (std::size_t r = 0; r < ids.size(); ++r)
                                       for (std::size_t j = 0; j < d; ++j) gv(r, j) = g(ids[r], j) / count[ids[r]];
                                   t.accumulate(values, std::move(gv));
                               });
}

/// Softmax of an E x 1 score column within each segment.
inline Var segment_softmax(const Var& scores, std::vector<std::size_t> ids, std::size_t num_segments) {
    const NdArray& s = scores.value();
    if (s.cols() != 1) throw DimensionError("segment_softmax: scores must be a column");
    detail::check_segments(ids, s.rows(), num_segments, "segment_softmax");
    const std::size_t e = ids.size();
    std::vector<double> mx(num_segments, -std::numeric_limits<double>::infinity());
    for (std::size_t r = 0; r < e; ++r) mx[ids[r]] = std::max(mx[ids[r]], s[r]);
    NdArray out({e, 1});
    std::vector<double> total(num_segments, 0.0);
    for (std::size_t r = 0; r < e; ++r) total[ids[r]] += (out[r] = std::exp(s[r] - mx[ids[r]]));
    for (std::size_t r = 0; r < e; ++r) out[r] /= total[ids[r]];
    return scores.tape->record(out, {scores}, [scores, out, ids = std::move(ids), num_segments](Tape& t, const NdArray& g) {
        std::vector<double> dot(num_segments, 0.0);
        for (std::size_t r = 0; r < ids.size(); ++r) dot[ids[r]] += g[r] * out[r];
        NdArray gs({ids.size(), 1});
        for (std::size_t r = 0; r < ids.size(); ++r) gs[r] = out[r] * (g[r] - dot[ids[r]]);
        t.accumulate(scores, std::move(gs));
    });
}

// ---------------------------------------------------------------------------
// Discrete-time survival likelihood

/// Negative log-likelihood of one patient under per-bin hazards sigma(h_j).
/// Event in bin b: -log S(b-1) - log sigma(h_b). Censored in bin b:
/// -censor_weight * log S(b). Every log argument is clamped at 1e-12.
inline Var survival_nll(const Var& logits, std::size_t bin, bool event, double censor_weight = 1.0) {
    const NdArray& h = logits.value();
    const std::size_t nbins = h.size();
    if (bin >= nbins) throw IndexError("survival_nll: bin index out of range");
    constexpr double kMaxTerm = 27.631021115928547; // -log(1e-12)
    double loss = 0.0;
    NdArray grad(h.shape());
    auto add_term = [&](std::size_t j, bool hazard_term, double weight) {
        // -log(1 - sigma(h)) = softplus(h); -log(sigma(h)) = softplus(-h).
        const double term = hazard_term ? detail::softplus(-h[j]) : detail::softplus(h[j]);
        if (term >= kMaxTerm) {
            loss += weight * kMaxTerm;
            return;
        }
        loss += weight * term;
        const double sg = detail::sigmoid(h[j]);
        grad[j] += weight * (hazard_term ? sg - 1.0 : sg);
    };
    if (event) {
        for (std::size_t j = 0; j < bin; ++j) add_term(j, false, 1.0);
        add_term(bin, true, 1.0);
    } else {
        for (std::size_t j = 0; j <= bin; ++j) add_term(j, false, censor_weight);
    }
    return logits.tape->record(NdArray({1, 1}, loss), {logits}, [logits, grad](Tape& t, const NdArray& g) {
        NdArray gl = grad;
        for (std::size_t i = 0; i < gl.size(); ++i) gl[i] *= g[0];
        t.accumulate(logits, std::move(gl));
    });
}

} // namespace protopath::ad
