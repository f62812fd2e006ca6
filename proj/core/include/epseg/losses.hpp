#pragma once

#include <vector>

#include "epseg/rng.hpp"
#include "epseg/tape.hpp"

namespace epseg {

struct LossWeights {
    double lambda_con = 0.01;
    double lambda_align = 0.02;
    double tau = 0.5;
};

// Mean per-point cross-entropy over predicted probability rows.
Var seg_loss(Tape& t, Var probs, const std::vector<int>& labels);

// Symmetric two-term InfoNCE over sampled support/query foreground pairs.
// Features are L2-normalized internally; up to max_pairs positive pairs per
// class. With no negative classes the loss is 0 and *warnings increments.
Var con_loss(Tape& t, Var support_feats, const std::vector<int>& support_labels, Var query_feats,
             const std::vector<int>& query_labels, double tau, Rng& rng, int max_pairs = 64,
             int* warnings = nullptr);

// Foreground prototype-vs-all-texts cross-entropy: logits_c[b] = (W p_c) . T_b.
Var align_loss(Tape& t, Var fg_prototypes, Var text_embeds, Var w);

Var total_loss(Tape& t, Var seg, Var con, Var align, const LossWeights& w);

}  // namespace epseg
