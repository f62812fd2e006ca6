#pragma once

#include <functional>

#include "epseg/tape.hpp"

namespace epseg {

// Builds a scalar-valued graph from a single differentiable input leaf.
// Must be deterministic: the harness evaluates it repeatedly.
using GraphBuilder = std::function<Var(Tape&, Var x)>;

// Max over coordinates of |analytic - central difference| / (|analytic| + 1e-8).
// h must lie in [1e-7, 1e-4]. Flags non-deterministic builders.
double finite_diff_check(const GraphBuilder& f, const Tensor& x, double h = 1e-6);

}  // namespace epseg
