#include "epseg/losses.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace epseg {

Var seg_loss(Tape& t, Var probs, const std::vector<int>& labels) {
    return t.nll_rows(probs, labels);
}

Var con_loss(Tape& t, Var support_feats, const std::vector<int>& support_labels, Var query_feats,
             const std::vector<int>& query_labels, double tau, Rng& rng, int max_pairs,
             int* warnings) {
    std::set<int> classes;
    for (int l : support_labels)
        if (l > 0) classes.insert(l);
    std::set<int> q_classes;
    for (int l : query_labels)
        if (l > 0) q_classes.insert(l);

    std::vector<int> shared;
    for (int c : classes)
        if (q_classes.count(c)) shared.push_back(c);
    if (shared.size() < 2) {
        if (warnings) ++*warnings;
        return t.constant(Tensor::scalar(0.0));
    }

    Var s_norm = t.l2norm_rows(support_feats);
    Var q_norm = t.l2norm_rows(query_feats);

    Var acc = t.constant(Tensor::scalar(0.0));
    int n_pairs = 0;
    for (int c : shared) {
        std::vector<int> s_pos, q_pos, s_neg, q_neg;
        for (std::size_t i = 0; i < support_labels.size(); ++i) {
            if (support_labels[i] == c)
                s_pos.push_back(static_cast<int>(i));
            else if (support_labels[i] > 0 &&
                     std::find(shared.begin(), shared.end(), support_labels[i]) != shared.end())
                s_neg.push_back(static_cast<int>(i));
        }
        for (std::size_t i = 0; i < query_labels.size(); ++i) {
            if (query_labels[i] == c)
                q_pos.push_back(static_cast<int>(i));
            else if (query_labels[i] > 0 &&
                     std::find(shared.begin(), shared.end(), query_labels[i]) != shared.end())
                q_neg.push_back(static_cast<int>(i));
        }
        Var q_neg_rows = t.gather_rows(q_norm, q_neg);
        Var s_neg_rows = t.gather_rows(s_norm, s_neg);
        const int count = std::min<int>(
            max_pairs, static_cast<int>(s_pos.size()) * static_cast<int>(q_pos.size()));
        for (int p = 0; p < count; ++p) {
            const int i = s_pos[rng.below(static_cast<int>(s_pos.size()))];
            const int j = q_pos[rng.below(static_cast<int>(q_pos.size()))];
            Var s_row = t.gather_rows(s_norm, {i});
            Var q_row = t.gather_rows(q_norm, {j});
            Var cand_q = t.concat_rows({q_row, q_neg_rows});
            Var cand_s = t.concat_rows({s_row, s_neg_rows});
            Var ce1 = t.cross_entropy_logits(t.scale(t.matmul_nt(s_row, cand_q), 1.0 / tau), {0});
            Var ce2 = t.cross_entropy_logits(t.scale(t.matmul_nt(q_row, cand_s), 1.0 / tau), {0});
            acc = t.add(acc, t.scale(t.add(ce1, ce2), 0.5));
            ++n_pairs;
        }
    }
    return t.scale(acc, 1.0 / n_pairs);
}

Var align_loss(Tape& t, Var fg_prototypes, Var text_embeds, Var w) {
    const int n = t.val(fg_prototypes).rows();
    if (n < 1) throw std::invalid_argument("align_loss: no foreground prototypes");
    if (t.val(text_embeds).rows() != n)
        throw std::invalid_argument("align_loss: prototype/text count mismatch");
    Var logits = t.matmul_nt(t.matmul(fg_prototypes, w), text_embeds);
    std::vector<int> targets(n);
    for (int c = 0; c < n; ++c) targets[c] = c;
    return t.cross_entropy_logits(logits, targets);
}

Var total_loss(Tape& t, Var seg, Var con, Var align, const LossWeights& w) {
    return t.add(seg, t.add(t.scale(con, w.lambda_con), t.scale(align, w.lambda_align)));
}

}  // namespace epseg
