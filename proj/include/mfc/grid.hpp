#pragma once

#include <stdexcept>

namespace mfc {

// Uniform grid 0 = t_0 < t_1 < ... < t_K = T.
struct TimeGrid {
    double horizon = 1.0;
    int steps = 100;

    TimeGrid() = default;
    TimeGrid(double T, int K) : horizon(T), steps(K) {
        if (!(T > 0.0)) throw std::invalid_argument("TimeGrid: horizon must be positive");
        if (K < 1) throw std::invalid_argument("TimeGrid: need at least one step");
    }

    double dt() const { return horizon / steps; }
    double node(int k) const { return horizon * k / steps; }
    int nodes() const { return steps + 1; }
};

}  // namespace mfc
