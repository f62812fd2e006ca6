#include "epseg/drpe.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace epseg {

std::vector<double> sin_emb(double l, int d, double gamma) {
    if (d < 2 || d % 2 != 0)
        throw std::invalid_argument("sin_emb: D must be even and >= 2, got " + std::to_string(d));
    std::vector<double> out(d);
    for (int i = 0; i < d / 2; ++i) {
        const double freq = l / std::pow(gamma, static_cast<double>(2 * i) / d);
        out[2 * i] = std::sin(freq);
        out[2 * i + 1] = std::cos(freq);
    }
    return out;
}

Drpe compute_drpe(const Tensor& query_feats, const Tensor& prototypes, const DrpeConfig& cfg) {
    const int m = query_feats.rows(), n = prototypes.rows(), d = query_feats.cols();
    if (prototypes.cols() != d)
        throw std::invalid_argument("compute_drpe: dimension mismatch " + query_feats.shape_str() +
                                    " vs " + prototypes.shape_str());
    Drpe out;
    out.m = m;
    out.n = n;
    out.d_e = Tensor({m, n});
    out.d_c = Tensor({m, n});
    out.r_e = Tensor({m * n, d});
    out.r_c = Tensor({m * n, d});
    out.r = Tensor({m * n, d});

    std::vector<double> qn(m), pn(n);
    for (int a = 0; a < m; ++a) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += query_feats.at(a, j) * query_feats.at(a, j);
        qn[a] = std::sqrt(s);
    }
    for (int b = 0; b < n; ++b) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += prototypes.at(b, j) * prototypes.at(b, j);
        pn[b] = std::sqrt(s);
    }

    for (int a = 0; a < m; ++a) {
        for (int b = 0; b < n; ++b) {
            double dist = 0.0, dot = 0.0;
            for (int j = 0; j < d; ++j) {
                const double diff = query_feats.at(a, j) - prototypes.at(b, j);
                dist += diff * diff;
                dot += query_feats.at(a, j) * prototypes.at(b, j);
            }
            const double de = std::sqrt(dist);
            const double dc = (qn[a] == 0.0 || pn[b] == 0.0) ? 0.0 : dot / (qn[a] * pn[b]);
            out.d_e.at(a, b) = de;
            out.d_c.at(a, b) = dc;
            const auto ee = sin_emb(cfg.s_e * de, d, cfg.gamma);
            const auto ec = sin_emb(cfg.s_c * dc, d, cfg.gamma);
            const int row = a * n + b;
            for (int j = 0; j < d; ++j) {
                out.r_e.at(row, j) = ee[j];
                out.r_c.at(row, j) = ec[j];
                out.r.at(row, j) = ee[j] + ec[j];
            }
        }
    }
    return out;
}

Tensor rel_transpose(const Tensor& r, int a, int b) {
    const int d = r.cols();
    if (r.rows() != a * b)
        throw std::invalid_argument("rel_transpose: rows " + std::to_string(r.rows()) +
                                    " != " + std::to_string(a) + "*" + std::to_string(b));
    Tensor out({b * a, d});
    for (int i = 0; i < a; ++i)
        for (int j = 0; j < b; ++j)
            std::memcpy(out.data.data() + (static_cast<std::size_t>(j) * a + i) * d,
                        r.data.data() + (static_cast<std::size_t>(i) * b + j) * d,
                        static_cast<std::size_t>(d) * sizeof(double));
    return out;
}

Var cra_cross_attention(Tape& t, Var q_tokens, Var kv_tokens, const Tensor& r, Var wq, Var wk,
                        Var wv, Var wo) {
    const int a = t.val(q_tokens).rows();
    const int b = t.val(kv_tokens).rows();
    const int d = t.val(q_tokens).cols();
    if (r.rows() != a * b || r.cols() != d)
        throw std::invalid_argument("cra_cross_attention: R shape " + r.shape_str() +
                                    " does not match " + std::to_string(a) + "x" +
                                    std::to_string(b) + "x" + std::to_string(d));
    Var q = t.matmul(q_tokens, wq);
    Var k = t.matmul(kv_tokens, wk);
    Var v = t.matmul(kv_tokens, wv);
    Var logits = t.scale(t.add(t.matmul_nt(q, k), t.rel_logits(q, r, b)),
                         1.0 / std::sqrt(static_cast<double>(d)));
    Var attn = t.softmax_rows(logits);
    return t.add(q_tokens, t.matmul(t.matmul(attn, v), wo));
}

void init_cra(ParamStore& store, const std::string& module, int d, Rng& rng) {
    store.add(module, "wq", init_linear(d, d, rng));
    store.add(module, "wk", init_linear(d, d, rng));
    store.add(module, "wv", init_linear(d, d, rng));
    store.add(module, "wo", init_linear(d, d, rng));
}

Var predict(Tape& t, Var query_feats, Var prototypes, int* warnings) {
    if (warnings) {
        const Tensor& qv = t.val(query_feats);
        for (int i = 0; i < qv.rows(); ++i) {
            double s = 0.0;
            for (int j = 0; j < qv.cols(); ++j) s += qv.at(i, j) * qv.at(i, j);
            if (s == 0.0) ++*warnings;
        }
    }
    return t.softmax_rows(t.matmul_nt(t.l2norm_rows(query_feats), t.l2norm_rows(prototypes)));
}

}  // namespace epseg
