#pragma once

#include <string>
#include <vector>

#include "epseg/rng.hpp"
#include "epseg/tape.hpp"
#include "epseg/tensor.hpp"

namespace epseg {

// Named trainable tensors grouped by module. Insertion order is the canonical
// order for binding, gradients and checkpoint records.
class ParamStore {
public:
    struct Entry {
        std::string module;
        std::string name;
        Tensor value;
    };

    int add(std::string module, std::string name, Tensor init);
    int find(const std::string& module, const std::string& name) const;  // -1 if absent

    Tensor& value(int i) { return entries_[i].value; }
    const Tensor& value(int i) const { return entries_[i].value; }
    const Entry& entry(int i) const { return entries_[i]; }
    int count() const { return static_cast<int>(entries_.size()); }
    std::int64_t scalar_count() const;
    std::int64_t scalar_count(const std::string& module) const;
    std::vector<std::string> modules() const;  // unique, in first-seen order

private:
    std::vector<Entry> entries_;
};

// One forward pass worth of leaf bindings for every parameter.
struct Bound {
    Tape* tape = nullptr;
    const ParamStore* store = nullptr;
    std::vector<Var> vars;

    Var operator()(const std::string& module, const std::string& name) const;
};

Bound bind(Tape& tape, const ParamStore& store);

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init for a fan_in x fan_out matrix.
Tensor init_linear(int fan_in, int fan_out, Rng& rng);
Tensor init_normal(int rows, int cols, double stddev, Rng& rng);

struct LrSchedule {
    double lr0 = 0.001;
    int decay_step = 5000;
    double decay_ratio = 0.5;

    double at(int iter) const;
};

// Adaptive moments with decoupled weight decay; two groups with independent
// step-decay schedules (module "backbone" vs everything else).
class AdamW {
public:
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
    LrSchedule main_lr{0.001, 5000, 0.5};
    LrSchedule backbone_lr{0.006, 1000, 0.5};

    // grads[i] pairs with store entry i; iter is 0-based.
    void step(ParamStore& store, const std::vector<Tensor>& grads, int iter);

private:
    std::vector<Tensor> m_, v_;
    int t_ = 0;
};

void save_checkpoint(const ParamStore& store, const std::string& path);
ParamStore load_checkpoint(const std::string& path);

}  // namespace epseg
