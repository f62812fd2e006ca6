#include "epseg/backbone.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace epseg {

Tensor input_channels(const PointCloud& cloud) {
    Tensor t({cloud.size(), 6});
    for (int i = 0; i < cloud.size(); ++i) {
        for (int d = 0; d < 3; ++d) {
            t.at(i, d) = cloud.xyz[i][d];
            t.at(i, 3 + d) = cloud.rgb[i][d];
        }
    }
    return t;
}

std::vector<int> knn_graph(const Tensor& features, int k) {
    const int m = features.rows(), d = features.cols();
    if (k >= m)
        throw std::invalid_argument("knn_graph: k=" + std::to_string(k) +
                                    " must be < M=" + std::to_string(m));
    std::vector<int> out(static_cast<std::size_t>(m) * k);
    std::vector<std::pair<double, int>> cand(m - 1);
    for (int j = 0; j < m; ++j) {
        const double* fj = features.data.data() + static_cast<std::size_t>(j) * d;
        int c = 0;
        for (int n = 0; n < m; ++n) {
            if (n == j) continue;
            const double* fn = features.data.data() + static_cast<std::size_t>(n) * d;
            double dist = 0.0;
            for (int t = 0; t < d; ++t) {
                const double diff = fj[t] - fn[t];
                dist += diff * diff;
            }
            cand[c++] = {dist, n};
        }
        std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
        for (int t = 0; t < k; ++t) out[static_cast<std::size_t>(j) * k + t] = cand[t].second;
    }
    return out;
}

namespace {

std::string block_name(int b, const char* leaf) {
    return "block" + std::to_string(b) + "." + leaf;
}

}  // namespace

void init_backbone(ParamStore& store, const BackboneConfig& cfg, Rng& rng) {
    int d_in = 6;
    for (int b = 0; b < cfg.n_blocks; ++b) {
        store.add("backbone", block_name(b, "w"), init_linear(2 * d_in, cfg.d, rng));
        store.add("backbone", block_name(b, "b"), Tensor::zeros({1, cfg.d}));
        d_in = cfg.d;
    }
    store.add("backbone", "proj.w", init_linear(cfg.n_blocks * cfg.d, cfg.d, rng));
    store.add("backbone", "proj.b", Tensor::zeros({1, cfg.d}));
}

Var edgeconv_block(Tape& t, Var x, const std::vector<int>& idx, int k, Var w, Var b) {
    Var e = t.edge_features(x, idx, k);
    Var h = t.leaky_relu(t.add_rowvec(t.matmul(e, w), b), 0.2);
    return t.rowblock_max(h, k);
}

Var encode(const Bound& p, Var input, const BackboneConfig& cfg) {
    Tape& t = *p.tape;
    Var x = input;
    std::vector<Var> skips;
    for (int b = 0; b < cfg.n_blocks; ++b) {
        auto idx = knn_graph(t.val(x), cfg.k);
        x = edgeconv_block(t, x, idx, cfg.k, p("backbone", block_name(b, "w")),
                           p("backbone", block_name(b, "b")));
        skips.push_back(x);
    }
    Var cat = cfg.n_blocks == 1 ? skips[0] : t.concat_cols(skips);
    return t.add_rowvec(t.matmul(cat, p("backbone", "proj.w")), p("backbone", "proj.b"));
}

Var encode(const Bound& p, const Tensor& input, const BackboneConfig& cfg) {
    return encode(p, p.tape->constant(input), cfg);
}

}  // namespace epseg
