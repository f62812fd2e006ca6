#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace epseg {

// Dense row-major tensor of 64-bit reals. Rank 1/2/3 is all the pipeline
// needs; most ops treat rank-2 as the canonical case.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s);
    Tensor(std::vector<int> s, std::vector<double> d);

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }
    static Tensor row(std::vector<double> d);

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int rows() const { return shape.empty() ? 0 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;
    std::string shape_str() const;
};

// C = A * B, A: m x k, B: k x n. `accumulate` adds into C instead of storing.
void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n,
               bool accumulate = false);
// C = A * B^T, A: m x k, B: n x k.
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n,
               bool accumulate = false);
// C = A^T * B, A: k x m, B: k x n.
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n,
               bool accumulate = false);

}  // namespace epseg
