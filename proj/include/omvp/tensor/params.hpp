#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "omvp/tensor/graph.hpp"

namespace omvp::tensor {

struct Parameter {
    std::string name;
    Tensor value;

    friend bool operator==(const Parameter&, const Parameter&) = default;
};

/// Ordered, named table of learnable tensors. Networks keep indices into it, so a
/// copied set (e.g. a target network) stays consistent with the same network object.
class ParamSet {
public:
    std::size_t add(std::string name, Tensor init) {
        if (find(name) != npos) throw ContractError("duplicate parameter name: " + name);
        params_.push_back({std::move(name), std::move(init)});
        return params_.size() - 1;
    }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::size_t find(const std::string& name) const {
        for (std::size_t i = 0; i < params_.size(); ++i)
            if (params_[i].name == name) return i;
        return npos;
    }

    std::size_t size() const { return params_.size(); }
    bool empty() const { return params_.empty(); }
    Parameter& operator[](std::size_t i) { return params_[i]; }
    const Parameter& operator[](std::size_t i) const { return params_[i]; }
    Tensor& value(std::size_t i) { return params_[i].value; }
    const Tensor& value(std::size_t i) const { return params_[i].value; }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.value.size();
        return n;
    }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    friend bool operator==(const ParamSet&, const ParamSet&) = default;

private:
    std::vector<Parameter> params_;
};

using Gradients = std::vector<Tensor>;

/// Leaves of one graph, index-aligned with a ParamSet.
struct Bound {
    std::vector<Var> vars;
    Var operator[](std::size_t i) const { return vars[i]; }
};

inline Bound bind(Graph& g, const ParamSet& ps) {
    Bound b;
    b.vars.reserve(ps.size());
    for (const auto& p : ps) b.vars.push_back(g.leaf(p.value, true));
    return b;
}

inline Gradients gradients(const Graph& g, const Bound& b) {
    Gradients out;
    out.reserve(b.vars.size());
    for (const Var& v : b.vars) out.push_back(g.grad(v));
    return out;
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline Tensor fan_in_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t = Tensor::matrix(rows, cols);
    for (auto& x : t.values()) x = dist(rng);
    return t;
}

/// Registers a dense layer `prefix.w` (in x out) and `prefix.b` (1 x out).
struct DenseIds {
    std::size_t weight = 0;
    std::size_t bias = 0;
};

inline DenseIds add_dense(ParamSet& ps, const std::string& prefix, std::size_t in, std::size_t out, std::mt19937_64& rng) {
    DenseIds ids;
    ids.weight = ps.add(prefix + ".w", fan_in_uniform(in, out, in, rng));
    ids.bias = ps.add(prefix + ".b", fan_in_uniform(1, out, in, rng));
    return ids;
}

inline double global_norm(const Gradients& g) {
    double s = 0.0;
    for (const auto& t : g)
        for (double x : t.values()) s += x * x;
    return std::sqrt(s);
}

/// Rescales gradients in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
inline double clip_global_norm(Gradients& g, double max_norm) {
    const double n = global_norm(g);
    if (max_norm > 0.0 && n > max_norm) {
        const double k = max_norm / n;
        for (auto& t : g)
            for (auto& x : t.values()) x *= k;
    }
    return n;
}

}  // namespace omvp::tensor
