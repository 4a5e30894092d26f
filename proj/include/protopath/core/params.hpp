#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "protopath/core/error.hpp"
#include "protopath/core/ndarray.hpp"
#include "protopath/core/rng.hpp"
#include "protopath/core/tape.hpp"

namespace protopath::ad {

/// Named, ordered collection of learnable arrays. Modules keep indices into
/// the store; the order of registration is the serialization order.
class ParamStore {
public:
    std::size_t add(const std::string& name, NdArray init) {
        if (lookup_.count(name)) throw ContractError("duplicate parameter name: " + name);
        lookup_.emplace(name, values_.size());
        names_.push_back(name);
        values_.push_back(std::move(init));
        return values_.size() - 1;
    }

    /// Fan-in scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    std::size_t add_linear_weight(const std::string& name, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
        NdArray w({fan_in, fan_out});
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& v : w.data()) v = rng.uniform(-bound, bound);
        return add(name, std::move(w));
    }

    std::size_t add_zeros(const std::string& name, std::size_t rows, std::size_t cols) {
        return add(name, NdArray({rows, cols}));
    }

    std::size_t add_ones(const std::string& name, std::size_t rows, std::size_t cols) {
        return add(name, NdArray({rows, cols}, 1.0));
    }

    std::size_t size() const noexcept { return values_.size(); }
    const std::string& name(std::size_t i) const { return names_.at(i); }
    const NdArray& value(std::size_t i) const { return values_.at(i); }
    NdArray& value(std::size_t i) { return values_.at(i); }
    const std::vector<NdArray>& values() const noexcept { return values_; }
    std::vector<NdArray>& values() noexcept { return values_; }

    bool contains(const std::string& name) const { return lookup_.count(name) != 0; }
    std::size_t index_of(const std::string& name) const {
        auto it = lookup_.find(name);
        if (it == lookup_.end()) throw ContractError("unknown parameter: " + name);
        return it->second;
    }

    std::size_t total_elements() const {
        std::size_t n = 0;
        for (const auto& v : values_) n += v.size();
        return n;
    }

private:
    std::vector<std::string> names_;
    std::vector<NdArray> values_;
    std::unordered_map<std::string, std::size_t> lookup_;
};

/// Binds store entries to leaves of one tape, created on first use.
class ParamBinding {
public:
    ParamBinding(Tape& tape, const ParamStore& store)
        : tape_(tape), store_(store), vars_(store.size()), bound_(store.size(), false) {}

    Var operator()(std::size_t index) {
        if (!bound_.at(index)) {
            vars_[index] = tape_.leaf(store_.value(index), true);
            bound_[index] = true;
        }
        return vars_[index];
    }

    Tape& tape() noexcept { return tape_; }

    /// Gradients for every store entry after tape.backward(); zeros for
    /// entries that took no part in the pass.
    std::vector<NdArray> gradients() const {
        std::vector<NdArray> grads;
        grads.reserve(store_.size());
        for (std::size_t i = 0; i < store_.size(); ++i)
            grads.push_back(bound_[i] ? tape_.grad(vars_[i]) : NdArray(store_.value(i).shape(), 0.0));
        return grads;
    }

private:
    Tape& tape_;
    const ParamStore& store_;
    std::vector<Var> vars_;
    std::vector<bool> bound_;
};

/// Linear map x * W + b (b optional).
struct Linear {
    std::size_t weight = 0;
    std::size_t bias = 0;
    bool has_bias = true;

    static Linear create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                         bool with_bias = true) {
        Linear l;
        l.weight = store.add_linear_weight(name + ".weight", in, out, rng);
        l.has_bias = with_bias;
        if (with_bias) l.bias = store.add_zeros(name + ".bias", 1, out);
        return l;
    }

    Var operator()(ParamBinding& p, const Var& x) const;
};

} // namespace protopath::ad

#include "protopath/core/ops.hpp"

namespace protopath::ad {

inline Var Linear::operator()(ParamBinding& p, const Var& x) const {
    Var y = matmul(x, p(weight));
    return has_bias ? add_row(y, p(bias)) : y;
}

} // namespace protopath::ad
