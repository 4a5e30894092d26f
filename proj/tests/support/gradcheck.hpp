#pragma once

// Central finite-difference oracle for tape gradients. Independent of the
// backward rules: it only ever evaluates forward passes.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "protopath/core/ndarray.hpp"
#include "protopath/core/rng.hpp"
#include "protopath/core/tape.hpp"

namespace protopath::testing {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_input = 0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

using LossFn = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

/// Elementwise relative error |a - n| / max(|a|, |n|, floor). The floor keeps
/// near-zero components from dividing finite-difference noise by ~0.
inline double relative_error(double a, double n, double floor = 1e-3) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

inline double evaluate(const LossFn& fn, const std::vector<ad::NdArray>& inputs) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const auto& in : inputs) vars.push_back(tape.leaf(in, false));
    return fn(tape, vars).value()[0];
}

inline GradCheckResult gradcheck(const LossFn& fn, std::vector<ad::NdArray> inputs, double step = 1e-5) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const auto& in : inputs) vars.push_back(tape.leaf(in, true));
    ad::Var loss = fn(tape, vars);
    tape.backward(loss);
    GradCheckResult result;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const ad::NdArray analytic = tape.grad(vars[i]);
        for (std::size_t j = 0; j < inputs[i].size(); ++j) {
            const double saved = inputs[i][j];
            inputs[i][j] = saved + step;
            const double up = evaluate(fn, inputs);
            inputs[i][j] = saved - step;
            const double down = evaluate(fn, inputs);
            inputs[i][j] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double err = relative_error(analytic[j], numeric);
            if (err > result.max_rel_error) result = {err, i, j, analytic[j], numeric};
        }
    }
    return result;
}

inline ad::NdArray random_array(ad::Shape shape, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    ad::NdArray out(std::move(shape));
    for (double& v : out.data()) v = scale * rng.normal();
    return out;
}

} // namespace protopath::testing
