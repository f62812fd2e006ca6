#pragma once

#include <functional>
#include <vector>

#include "epseg/tensor.hpp"

namespace epseg {

// Handle into a Tape node.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Tape-based reverse-mode autodiff over rank-2 tensors. Every primitive
// records its backward pass as a closure; backward() replays them in exact
// reverse order. Non-finite forward output aborts with the op name.
class Tape {
public:
    Var leaf(Tensor value, bool requires_grad);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    const Tensor& val(Var v) const { return nodes_[v.id].value; }
    const Tensor& grad(Var v) const { return nodes_[v.id].grad; }
    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
    int size() const { return static_cast<int>(nodes_.size()); }

    // --- primitive suite ---
    Var matmul(Var a, Var b);
    Var matmul_nt(Var a, Var b);  // a * b^T
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);  // elementwise
    Var scale(Var a, double s);
    Var add_rowvec(Var a, Var v);  // broadcast 1xC over rows
    Var sub_rowvec(Var a, Var v);
    Var concat_rows(const std::vector<Var>& parts);
    Var concat_cols(const std::vector<Var>& parts);
    Var slice_rows(Var a, int begin, int count);
    Var softmax_rows(Var a);
    Var l2norm_rows(Var a);  // zero rows pass through as zero
    Var mean_rows(Var a);    // 1xC
    Var sum_all(Var a);      // 1x1
    Var mean_all(Var a);     // 1x1
    Var exp(Var a);
    Var log(Var a);
    Var sin(Var a);
    Var cos(Var a);
    Var leaky_relu(Var a, double slope);
    Var gather_rows(Var a, std::vector<int> idx);
    // mean of rows with mask != 0; rejects an empty selection
    Var masked_mean_rows(Var a, const std::vector<int>& mask);
    // out[g] = mean of rows assigned to group g; a group with no members
    // copies the row fallback[g]
    Var group_mean_rows(Var a, std::vector<int> assign, int n_groups,
                        std::vector<int> fallback);
    // edge features for a kNN graph: row j*k+t is [x_j ; x_idx[j*k+t] - x_j]
    Var edge_features(Var a, std::vector<int> idx, int k);
    // max over consecutive blocks of k rows
    Var rowblock_max(Var a, int k);
    // mean over rows of -log(probs[r, target[r]])
    Var nll_rows(Var probs, std::vector<int> targets);
    // mean over rows of (logsumexp(row) - row[target])
    Var cross_entropy_logits(Var logits, std::vector<int> targets);
    Var pairwise_euclid(Var a, Var b);  // A x B distances
    Var pairwise_cosine(Var a, Var b);  // A x B cosine similarity, 0 on zero rows
    // out[a,b] = sum_d q[a,d] * rel[a*B+b, d]; rel is a constant (A*B) x D block
    Var rel_logits(Var q, Tensor rel, int b_count);

    // Accumulates gradients of all requires_grad nodes w.r.t. a scalar loss.
    void backward(Var loss);

private:
    struct Node {
        const char* op;
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        std::function<void(Tape&, const Tensor&)> back;
    };

    Var record(const char* op, Tensor value, bool requires_grad,
               std::function<void(Tape&, const Tensor&)> back);
    void accum(Var v, const Tensor& g);
    Tensor& grad_buf(Var v) { return nodes_[v.id].grad; }

    std::vector<Node> nodes_;
};

}  // namespace epseg
