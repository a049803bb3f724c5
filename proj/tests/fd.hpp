#pragma once

// Central finite-difference oracle used by the gradient checks. Kept
// independent of the tape: plain function evaluation only.

#include <algorithm>
#include <cmath>
#include <functional>

#include "vec.hpp"

namespace dht::testing {

template <typename F>
Vector fd_grad(F&& f, Vector x, double h = 1e-6) {
    Vector g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double x0 = x[i];
        x[i] = x0 + h;
        const double fp = f(x);
        x[i] = x0 - h;
        const double fm = f(x);
        x[i] = x0;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

// Max component error relative to the oracle's scale.
inline double rel_err(const Vector& got, const Vector& want) {
    double scale = 1e-12;
    for (double v : want)
        scale = std::max(scale, std::abs(v));
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i)
        worst = std::max(worst, std::abs(got[i] - want[i]));
    return worst / scale;
}

}  // namespace dht::testing
