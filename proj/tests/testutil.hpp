#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "a2fm/graph.hpp"
#include "a2fm/tensor.hpp"

namespace a2fm::testutil {

// Uniform values in [-amp, amp].
inline Tensor random_tensor(Shape shape, Rng& rng, double amp = 1.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-amp, amp);
    return t;
}

// Uniform magnitude in [margin, amp], random sign. Keeps inputs away from
// the kinks of relu/|.| so central differences measure the claim, not the
// kink. For max_abs additionally re-rolls until the top-2 |x| gap >= margin.
inline Tensor random_tensor_margin(Shape shape, Rng& rng, double amp = 1.0, double margin = 1e-2) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) {
        double mag = rng.uniform(margin, amp);
        t[i] = rng.uniform() < 0.5 ? -mag : mag;
    }
    return t;
}

inline void widen_top_gap(Tensor& t, double margin = 1e-2) {
    std::size_t top = 0;
    for (std::size_t i = 1; i < t.size(); ++i) {
        if (std::abs(t[i]) > std::abs(t[top])) top = i;
    }
    t[top] += (t[top] < 0 ? -2.0 : 2.0) * margin;
}

// Finite-difference check of every gradient `output` produces for the named
// inputs. Returns the worst relative error across all of them.
inline double fd_check(Graph& g, int output, const std::vector<std::string>& wrt_names,
                       const std::vector<int>& wrt_ids, Bindings bindings, double step = 1e-4) {
    g.eval(bindings);
    GradMap grads = g.backward(output, wrt_ids);
    double worst = 0.0;
    for (std::size_t k = 0; k < wrt_ids.size(); ++k) {
        const std::string& name = wrt_names[k];
        auto f = [&](const Tensor& x) {
            Bindings b = bindings;
            b[name] = x;
            g.eval(b);
            return g.value(output)[0];
        };
        Tensor numeric = finite_diff(f, bindings.at(name), step);
        double err = max_rel_err(grads.at(wrt_ids[k]), numeric);
        if (err > worst) worst = err;
    }
    g.eval(bindings);  // leave cached values consistent with the bindings
    return worst;
}

}  // namespace a2fm::testutil
