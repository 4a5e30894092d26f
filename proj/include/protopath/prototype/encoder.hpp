#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "protopath/core/error.hpp"
#include "protopath/core/ops.hpp"
#include "protopath/core/params.hpp"

namespace protopath::prototype {

using ad::Linear;
using ad::NdArray;
using ad::ParamBinding;
using ad::ParamStore;
using ad::Tape;
using ad::Var;

struct PrototypeConfig {
    std::size_t input_dim = 1536;
    std::size_t num_prototypes = 16;
    std::size_t hidden_dim = 128;
    double temperature = 0.1;
};

struct PrototypeForward {
    Var sims;         // N x K cosine similarities
    Var alpha;        // N x K soft assignments
    Var tokens;       // K x d
    Var gate_weights; // 1 x K
    Var embedding;    // 1 x d
    std::vector<std::size_t> hard_assign;
    std::size_t zero_norm_patches = 0;
};

inline constexpr double kTokenMassEps = 1e-12;

/// Row-wise argmax; ties go to the smallest index.
inline std::vector<std::size_t> hard_assign(const NdArray& alpha) {
    std::vector<std::size_t> out(alpha.rows(), 0);
    for (std::size_t n = 0; n < alpha.rows(); ++n)
        for (std::size_t k = 1; k < alpha.cols(); ++k)
            if (alpha(n, k) > alpha(n, out[n])) out[n] = k;
    return out;
}

/// Learnable prototype bank with a shared bias-free projection and a linear
/// token gate.
class PrototypeEncoder {
public:
    static PrototypeEncoder create(ParamStore& store, const std::string& name, const PrototypeConfig& cfg, Rng& rng) {
        if (cfg.num_prototypes < 1) throw ParameterError("prototype count must be >= 1");
        if (!(cfg.temperature > 0.0)) throw ParameterError("temperature must be positive");
        PrototypeEncoder e;
        e.cfg_ = cfg;
        NdArray protos({cfg.num_prototypes, cfg.input_dim});
        for (double& v : protos.data()) v = rng.normal();
        for (std::size_t k = 0; k < cfg.num_prototypes; ++k) {
            double s = 0.0;
            for (double v : protos.row_span(k)) s += v * v;
            for (double& v : protos.row_span(k)) v /= std::sqrt(s);
        }
        e.prototypes_ = store.add(name + ".prototypes", std::move(protos));
        e.projection_ = Linear::create(store, name + ".projection", cfg.input_dim, cfg.hidden_dim, rng, false);
        e.gate_ = Linear::create(store, name + ".gate", cfg.hidden_dim, 1, rng);
        return e;
    }

    const PrototypeConfig& config() const noexcept { return cfg_; }
    std::size_t prototype_param() const noexcept { return prototypes_; }

    void set_prototypes(ParamStore& store, const NdArray& centroids) const {
        if (centroids.shape() != store.value(prototypes_).shape())
            throw DimensionError("prototype centroids have shape " + ad::shape_str(centroids.shape()) + ", expected " +
                                 ad::shape_str(store.value(prototypes_).shape()));
        store.value(prototypes_) = centroids;
    }

    PrototypeForward forward(ParamBinding& p, Tape& tape, const NdArray& features) const {
        if (features.rank() != 2 || features.rows() == 0) throw DimensionError("prototype encoder: empty bag");
        if (features.cols() != cfg_.input_dim)
            throw DimensionError("prototype encoder: feature dim " + std::to_string(features.cols()) + ", expected " +
                                 std::to_string(cfg_.input_dim));
        PrototypeForward out;
        Var h = tape.constant(features);
        Var fh = projection_(p, h);
        Var fc = projection_(p, p(prototypes_));
        out.sims = ad::matmul_nt(ad::l2_normalize_rows(fh), ad::l2_normalize_rows(fc));
        out.alpha = ad::softmax_last(ad::scale(out.sims, 1.0 / cfg_.temperature));

        const std::size_t n = features.rows();
        Var mass = ad::matmul(ad::transpose(out.alpha), tape.constant(NdArray::ones(n, 1)));
        out.tokens = ad::div_col(ad::matmul(ad::transpose(out.alpha), fh), ad::clamp_min(mass, kTokenMassEps));

        Var logits = ad::reshape(gate_(p, out.tokens), {1, cfg_.num_prototypes});
        out.gate_weights = ad::softmax_last(logits);
        out.embedding = ad::matmul(out.gate_weights, out.tokens);
        out.hard_assign = hard_assign(out.alpha.value());
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (double v : fh.value().row_span(i)) s += v * v;
            out.zero_norm_patches += std::sqrt(s) < 1e-12;
        }
        return out;
    }

private:
    PrototypeConfig cfg_;
    std::size_t prototypes_ = 0;
    Linear projection_;
    Linear gate_;
};

} // namespace protopath::prototype
