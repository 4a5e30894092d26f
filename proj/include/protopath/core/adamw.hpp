#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "protopath/core/error.hpp"
#include "protopath/core/ndarray.hpp"

namespace protopath::ad {

struct AdamWOptions {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-5;
};

/// AdamW with decoupled weight decay: the decay shrinks parameters directly
/// (p <- p - lr * lambda * p) and never enters the moment estimates.
class AdamW {
public:
    AdamW() = default;
    explicit AdamW(AdamWOptions options) : opt_(options) {}

    const AdamWOptions& options() const noexcept { return opt_; }
    std::uint64_t step_count() const noexcept { return step_; }
    const std::vector<NdArray>& first_moments() const noexcept { return m_; }
    const std::vector<NdArray>& second_moments() const noexcept { return v_; }

    void step(std::vector<NdArray>& params, const std::vector<NdArray>& grads) {
        if (params.size() != grads.size()) throw DimensionError("adamw: parameter/gradient count mismatch");
        if (m_.empty()) {
            for (const auto& p : params) {
                m_.emplace_back(p.shape(), 0.0);
                v_.emplace_back(p.shape(), 0.0);
            }
        }
        if (m_.size() != params.size()) throw DimensionError("adamw: parameter count changed between steps");
        ++step_;
        const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(step_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            NdArray& p = params[i];
            const NdArray& g = grads[i];
            if (!p.same_shape(g) || !p.same_shape(m_[i]))
                throw DimensionError("adamw: shape mismatch for parameter " + std::to_string(i));
            for (std::size_t j = 0; j < p.size(); ++j) {
                p[j] -= opt_.lr * opt_.weight_decay * p[j];
                m_[i][j] = opt_.beta1 * m_[i][j] + (1.0 - opt_.beta1) * g[j];
                v_[i][j] = opt_.beta2 * v_[i][j] + (1.0 - opt_.beta2) * g[j] * g[j];
                const double mhat = m_[i][j] / bc1;
                const double vhat = v_[i][j] / bc2;
                p[j] -= opt_.lr * mhat / (std::sqrt(vhat) + opt_.eps);
            }
        }
    }

private:
    AdamWOptions opt_;
    std::vector<NdArray> m_;
    std::vector<NdArray> v_;
    std::uint64_t step_ = 0;
};

} // namespace protopath::ad
