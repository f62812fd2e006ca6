#pragma once

#include <vector>

#include "epseg/params.hpp"
#include "epseg/pointcloud.hpp"
#include "epseg/tape.hpp"
#include "epseg/tensor.hpp"

namespace epseg {

struct BackboneConfig {
    int n_blocks = 3;
    int k = 20;
    int d = 64;  // per-block width and final output dim
};

// xyz and rgb stacked into an M x 6 matrix.
Tensor input_channels(const PointCloud& cloud);

// Row j holds the k nearest rows to j by Euclidean distance, self excluded,
// ties broken by lower index. Flattened M*k, row-major.
std::vector<int> knn_graph(const Tensor& features, int k);

void init_backbone(ParamStore& store, const BackboneConfig& cfg, Rng& rng);

// One EdgeConv block: edge features [x_j ; x_n - x_j] through a shared linear
// + leaky-ReLU(0.2), max over the k neighbors.
Var edgeconv_block(Tape& t, Var x, const std::vector<int>& idx, int k, Var w, Var b);

// Full encoder: n_blocks dynamic EdgeConv blocks, skip concatenation, final
// linear projection to D.
Var encode(const Bound& p, Var input, const BackboneConfig& cfg);
Var encode(const Bound& p, const Tensor& input, const BackboneConfig& cfg);

}  // namespace epseg
