#pragma once

#include <cmath>
#include <functional>

#include "omvp/tensor/params.hpp"

namespace omvp::tensor {

/// Builds a scalar loss on `g` from the parameters bound in `b`.
using LossFn = std::function<Var(Graph& g, const Bound& b)>;

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

/// Compares reverse-mode gradients against central differences for every scalar
/// of `params` (or every `stride`-th one). The relative error of one entry is
/// |analytic - numeric| / max(1, |numeric|).
inline GradCheckReport grad_check_report(const LossFn& f, ParamSet& params, double h = 1e-6, std::size_t stride = 1) {
    if (!(h > 0.0)) throw ContractError("grad_check: step must be positive");
    if (stride == 0) stride = 1;

    Gradients analytic;
    {
        Graph g;
        Bound b = bind(g, params);
        Var loss = f(g, b);
        g.backward(loss);
        analytic = gradients(g, b);
    }
    auto eval = [&]() {
        Graph g(false);
        Bound b = bind(g, params);
        return f(g, b).value()[0];
    };

    GradCheckReport rep;
    std::size_t counter = 0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& value = params.value(p);
        for (std::size_t i = 0; i < value.size(); ++i, ++counter) {
            if (counter % stride != 0) continue;
            const double orig = value[i];
            value[i] = orig + h;
            const double up = eval();
            value[i] = orig - h;
            const double down = eval();
            value[i] = orig;
            const double numeric = (up - down) / (2.0 * h);
            const double err = std::abs(analytic[p][i] - numeric) / std::max(1.0, std::abs(numeric));
            ++rep.checked;
            if (err > rep.max_rel_error || rep.checked == 1) {
                rep.max_rel_error = std::max(rep.max_rel_error, err);
                rep.worst_param = params[p].name;
                rep.worst_index = i;
                rep.analytic = analytic[p][i];
                rep.numeric = numeric;
            }
        }
    }
    return rep;
}

inline double grad_check(const LossFn& f, ParamSet& params, double h = 1e-6) {
    return grad_check_report(f, params, h).max_rel_error;
}

}  // namespace omvp::tensor
