#include "epseg/proera.hpp"

#include <cmath>

namespace epseg {

void init_proera(ParamStore& store, const std::string& module, int d, Rng& rng) {
    store.add(module, "wq", init_linear(d, d, rng));
    store.add(module, "wk", init_linear(d, d, rng));
    store.add(module, "wv", init_linear(d, d, rng));
    store.add(module, "wo", init_linear(d, d, rng));
}

int init_registers(ParamStore& store, const std::string& module, const std::string& name, int n_r,
                   int d, Rng& rng) {
    if (n_r == 0) return -1;
    return store.add(module, name, init_normal(n_r, d, 0.02, rng));
}

ProeraOut proera_forward(Tape& t, Var stream, Var registers, Var protos, Var wq, Var wk, Var wv,
                         Var wo) {
    const int m = t.val(stream).rows();
    const int d = t.val(stream).cols();
    const int n_r = registers.valid() ? t.val(registers).rows() : 0;
    const int n_p = protos.valid() ? t.val(protos).rows() : 0;

    std::vector<Var> parts = {stream};
    if (n_r > 0) parts.push_back(registers);
    if (n_p > 0) parts.push_back(protos);
    Var x = parts.size() == 1 ? parts[0] : t.concat_rows(parts);

    Var q = t.matmul(x, wq);
    Var k = t.matmul(x, wk);
    Var v = t.matmul(x, wv);
    Var attn = t.softmax_rows(t.scale(t.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d))));
    Var res = t.add(x, t.matmul(t.matmul(attn, v), wo));
    Var out = t.sub_rowvec(res, t.mean_rows(stream));

    ProeraOut o;
    o.stream = t.slice_rows(out, 0, m);
    o.registers = n_r > 0 ? t.slice_rows(out, m, n_r) : Var{};
    o.protos = n_p > 0 ? t.slice_rows(out, m + n_r, n_p) : Var{};
    return o;
}

ProeraOut proera_forward(const Bound& p, const std::string& module, Var stream, Var registers,
                         Var protos) {
    return proera_forward(*p.tape, stream, registers, protos, p(module, "wq"), p(module, "wk"),
                          p(module, "wv"), p(module, "wo"));
}

}  // namespace epseg
