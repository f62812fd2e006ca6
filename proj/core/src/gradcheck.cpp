#include "epseg/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace epseg {

namespace {

double eval(const GraphBuilder& f, const Tensor& x) {
    Tape t;
    Var leaf = t.leaf(x, false);
    Var out = f(t, leaf);
    if (t.val(out).size() != 1)
        throw std::invalid_argument("finite_diff_check: builder must produce a scalar");
    return t.val(out).data[0];
}

}  // namespace

double finite_diff_check(const GraphBuilder& f, const Tensor& x, double h) {
    if (h < 1e-7 || h > 1e-4)
        throw std::invalid_argument("finite_diff_check: h outside [1e-7, 1e-4]");
    if (eval(f, x) != eval(f, x))
        throw std::runtime_error("finite_diff_check: non-deterministic builder");

    Tape t;
    Var leaf = t.leaf(x, true);
    Var out = f(t, leaf);
    t.backward(out);
    Tensor analytic = t.grad(leaf);
    if (analytic.data.empty()) analytic = Tensor::zeros(x.shape);  // unreachable leaf

    Tensor probe = x;
    double worst = 0.0;
    for (std::size_t i = 0; i < probe.data.size(); ++i) {
        probe.data[i] = x.data[i] + h;
        double hi = eval(f, probe);
        probe.data[i] = x.data[i] - h;
        double lo = eval(f, probe);
        probe.data[i] = x.data[i];
        double fd = (hi - lo) / (2.0 * h);
        double rel = std::fabs(analytic.data[i] - fd) / (std::fabs(analytic.data[i]) + 1e-8);
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace epseg
