#pragma once

#include <string>

#include "epseg/params.hpp"
#include "epseg/tape.hpp"

namespace epseg {

struct ProeraOut {
    Var stream;
    Var registers;
    Var protos;
};

// Adds wq/wk/wv/wo (all D x D) under the given module name.
void init_proera(ParamStore& store, const std::string& module, int d, Rng& rng);

// Adds "<name>" as an n_r x D trainable bank, Gaussian std 0.02. Returns the
// store index; n_r = 0 registers as a placeholder the forward pass skips.
int init_registers(ParamStore& store, const std::string& module, const std::string& name, int n_r,
                   int d, Rng& rng);

// Eq.-3 block: single-head self-attention over [stream ; registers ; protos],
// plain residual, then the mean of the *input stream tokens* subtracted from
// every output token. registers and protos may be invalid (absent segment).
ProeraOut proera_forward(Tape& t, Var stream, Var registers, Var protos, Var wq, Var wk, Var wv,
                         Var wo);

ProeraOut proera_forward(const Bound& p, const std::string& module, Var stream, Var registers,
                         Var protos);

}  // namespace epseg
