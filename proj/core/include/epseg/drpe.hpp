#pragma once

#include <string>
#include <vector>

#include "epseg/params.hpp"
#include "epseg/tape.hpp"

namespace epseg {

// Interleaved [sin(l/g^(0/D)), cos(l/g^(0/D)), ..., sin(l/g^((D-2)/D)), ...].
std::vector<double> sin_emb(double l, int d, double gamma = 10000.0);

struct DrpeConfig {
    double s_e = 1.0;
    double s_c = 3.14159265358979323846;
    double gamma = 10000.0;
};

// R and its components flattened (M*(N+1)) x D with row a*(N+1)+b, matching
// the rel_logits layout. R is a constant: no gradient reaches it.
struct Drpe {
    Tensor r, r_e, r_c;  // (m*n) x d
    Tensor d_e, d_c;     // m x n
    int m = 0, n = 0;
};

Drpe compute_drpe(const Tensor& query_feats, const Tensor& prototypes, const DrpeConfig& cfg);

// (a*b) x d -> (b*a) x d, swapping the pair order for the prototype-side call.
Tensor rel_transpose(const Tensor& r, int a, int b);

// logit(a,b) = (q_a . k_b + q_a . R[a,b,:]) / sqrt(D); out = q_tokens + (softmax V) Wo.
Var cra_cross_attention(Tape& t, Var q_tokens, Var kv_tokens, const Tensor& r, Var wq, Var wk,
                        Var wv, Var wo);

// Adds wq/wk/wv/wo under `module` for one CRA call.
void init_cra(ParamStore& store, const std::string& module, int d, Rng& rng);

// Eq. 6: softmax over classes of row-normalized dot products. A zero-norm
// query row yields a uniform row; *warnings counts them if given.
Var predict(Tape& t, Var query_feats, Var prototypes, int* warnings = nullptr);

}  // namespace epseg
