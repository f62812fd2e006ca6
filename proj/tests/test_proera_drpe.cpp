#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "epseg/drpe.hpp"
#include "epseg/gradcheck.hpp"
#include "epseg/proera.hpp"
#include "epseg/rng.hpp"

using namespace epseg;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = scale * rng.normal();
    return t;
}

// plain softmax attention with output projection, computed with direct loops
Tensor attention_oracle(const Tensor& x, const Tensor& wq, const Tensor& wk, const Tensor& wv,
                        const Tensor& wo) {
    const int n = x.rows(), d = x.cols();
    auto mm = [](const Tensor& a, const Tensor& b) {
        Tensor c({a.rows(), b.cols()});
        for (int i = 0; i < a.rows(); ++i)
            for (int j = 0; j < b.cols(); ++j) {
                double s = 0.0;
                for (int p = 0; p < a.cols(); ++p) s += a.at(i, p) * b.at(p, j);
                c.at(i, j) = s;
            }
        return c;
    };
    Tensor q = mm(x, wq), k = mm(x, wk), v = mm(x, wv);
    Tensor attn({n, n});
    for (int i = 0; i < n; ++i) {
        double mx = -1e300;
        std::vector<double> row(n);
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int p = 0; p < d; ++p) s += q.at(i, p) * k.at(j, p);
            row[j] = s / std::sqrt(static_cast<double>(d));
            mx = std::max(mx, row[j]);
        }
        double z = 0.0;
        for (int j = 0; j < n; ++j) z += std::exp(row[j] - mx);
        for (int j = 0; j < n; ++j) attn.at(i, j) = std::exp(row[j] - mx) / z;
    }
    return mm(mm(attn, v), wo);
}

}  // namespace

TEST_CASE("proera with zeroed output projection has zero stream token-mean") {
    Rng rng(4);
    const int d = 6;
    Tape t;
    Var stream = t.constant(random_tensor({10, d}, rng));
    Var regs = t.constant(random_tensor({3, d}, rng));
    Var protos = t.constant(random_tensor({2, d}, rng));
    Var wq = t.constant(random_tensor({d, d}, rng));
    Var wk = t.constant(random_tensor({d, d}, rng));
    Var wv = t.constant(random_tensor({d, d}, rng));
    Var wo = t.constant(Tensor::zeros({d, d}));

    ProeraOut out = proera_forward(t, stream, regs, protos, wq, wk, wv, wo);
    const Tensor& sv = t.val(out.stream);
    for (int j = 0; j < d; ++j) {
        double mean = 0.0;
        for (int i = 0; i < 10; ++i) mean += sv.at(i, j);
        CHECK(std::fabs(mean / 10.0) < 1e-12);
    }
    CHECK(t.val(out.registers).rows() == 3);
    CHECK(t.val(out.protos).rows() == 2);
}

TEST_CASE("proera degenerate sizes: no registers, one proto, one stream token") {
    Rng rng(7);
    const int d = 4;
    Tape t;
    Tensor sx = random_tensor({1, d}, rng);
    Var stream = t.constant(sx);
    Var protos = t.constant(random_tensor({1, d}, rng));
    Var wq = t.constant(random_tensor({d, d}, rng));
    Var wk = t.constant(random_tensor({d, d}, rng));
    Var wv = t.constant(random_tensor({d, d}, rng));
    Var wo = t.constant(random_tensor({d, d}, rng));
    ProeraOut out = proera_forward(t, stream, Var{}, protos, wq, wk, wv, wo);
    // mean of the single stream token is itself, so stream_out = SA output
    Tensor x({2, d});
    for (int j = 0; j < d; ++j) {
        x.at(0, j) = sx.at(0, j);
        x.at(1, j) = t.val(protos).at(0, j);
    }
    Tensor sa = attention_oracle(x, t.val(wq), t.val(wk), t.val(wv), t.val(wo));
    for (int j = 0; j < d; ++j)
        CHECK(std::fabs(t.val(out.stream).at(0, j) - sa.at(0, j)) < 1e-10);
}

TEST_CASE("proera matches a hand-unrolled oracle on 16 tokens") {
    Rng rng(13);
    const int d = 8, m = 11, n_r = 3, n_p = 2;
    Tape t;
    Tensor sx = random_tensor({m, d}, rng);
    Tensor rx = random_tensor({n_r, d}, rng);
    Tensor px = random_tensor({n_p, d}, rng);
    Tensor wq = random_tensor({d, d}, rng);
    Tensor wk = random_tensor({d, d}, rng);
    Tensor wv = random_tensor({d, d}, rng);
    Tensor wo = random_tensor({d, d}, rng);

    ProeraOut out = proera_forward(t, t.constant(sx), t.constant(rx), t.constant(px),
                                   t.constant(wq), t.constant(wk), t.constant(wv), t.constant(wo));

    Tensor x({m + n_r + n_p, d});
    for (int j = 0; j < d; ++j) {
        for (int i = 0; i < m; ++i) x.at(i, j) = sx.at(i, j);
        for (int i = 0; i < n_r; ++i) x.at(m + i, j) = rx.at(i, j);
        for (int i = 0; i < n_p; ++i) x.at(m + n_r + i, j) = px.at(i, j);
    }
    Tensor sa = attention_oracle(x, wq, wk, wv, wo);
    std::vector<double> mean(d, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < d; ++j) mean[j] += sx.at(i, j) / m;

    for (int i = 0; i < m; ++i)
        for (int j = 0; j < d; ++j)
            CHECK(std::fabs(t.val(out.stream).at(i, j) - (x.at(i, j) + sa.at(i, j) - mean[j])) <
                  1e-10);
    for (int i = 0; i < n_r; ++i)
        for (int j = 0; j < d; ++j)
            CHECK(std::fabs(t.val(out.registers).at(i, j) -
                            (x.at(m + i, j) + sa.at(m + i, j) - mean[j])) < 1e-10);
    for (int i = 0; i < n_p; ++i)
        for (int j = 0; j < d; ++j)
            CHECK(std::fabs(t.val(out.protos).at(i, j) -
                            (x.at(m + n_r + i, j) + sa.at(m + n_r + i, j) - mean[j])) < 1e-10);
}

TEST_CASE("proera gradients match finite differences on 8 tokens") {
    Rng rng(21);
    const int d = 5;
    Tensor regs = random_tensor({2, d}, rng);
    Tensor protos = random_tensor({2, d}, rng);
    Tensor wq = random_tensor({d, d}, rng);
    Tensor wk = random_tensor({d, d}, rng);
    Tensor wv = random_tensor({d, d}, rng);
    Tensor wo = random_tensor({d, d}, rng);
    Tensor head = random_tensor({4, d}, rng);

    auto through_stream = [&](Tape& t, Var v) {
        ProeraOut o = proera_forward(t, v, t.constant(regs), t.constant(protos), t.constant(wq),
                                     t.constant(wk), t.constant(wv), t.constant(wo));
        return t.sum_all(t.mul(o.stream, t.constant(head)));
    };
    CHECK(finite_diff_check(through_stream, random_tensor({4, d}, rng)) < 1e-5);

    Tensor stream = random_tensor({4, d}, rng);
    auto through_wq = [&](Tape& t, Var v) {
        ProeraOut o = proera_forward(t, t.constant(stream), t.constant(regs), t.constant(protos), v,
                                     t.constant(wk), t.constant(wv), t.constant(wo));
        return t.sum_all(t.mul(o.stream, t.constant(head)));
    };
    CHECK(finite_diff_check(through_wq, wq) < 1e-5);
}

TEST_CASE("register init shapes and reproducibility") {
    const int d = 16;
    ParamStore a, b;
    Rng r1(5), r2(5);
    init_registers(a, "decoder", "q_reg", 3, d, r1);
    init_registers(b, "decoder", "q_reg", 3, d, r2);
    CHECK(a.value(0).shape == std::vector<int>{3, d});
    CHECK(a.value(0).data == b.value(0).data);

    ParamStore c;
    Rng r3(5);
    CHECK(init_registers(c, "decoder", "q_reg", 0, d, r3) == -1);
    CHECK(c.count() == 0);
}

TEST_CASE("sin_emb basics") {
    auto z = sin_emb(0.0, 6);
    for (int i = 0; i < 3; ++i) {
        CHECK(z[2 * i] == 0.0);
        CHECK(z[2 * i + 1] == 1.0);
    }
    auto v = sin_emb(1.0, 4, 10000.0);
    CHECK(v[0] == doctest::Approx(std::sin(1.0)).epsilon(1e-12));
    CHECK(v[1] == doctest::Approx(std::cos(1.0)).epsilon(1e-12));
    CHECK(v[2] == doctest::Approx(std::sin(0.01)).epsilon(1e-12));
    CHECK(v[3] == doctest::Approx(std::cos(0.01)).epsilon(1e-12));
    CHECK_THROWS_AS(sin_emb(1.0, 5), std::invalid_argument);

    Rng rng(3);
    for (int i = 0; i < 50; ++i)
        for (double x : sin_emb(rng.uniform(-100.0, 100.0), 8)) {
            CHECK(x >= -1.0);
            CHECK(x <= 1.0);
        }
}

TEST_CASE("compute_drpe identity and orthogonal pairs") {
    DrpeConfig cfg;
    const int d = 4;
    Tensor q({2, d}, {1, 0, 0, 0, 0, 1, 0, 0});
    Tensor p({1, d}, {1, 0, 0, 0});
    Drpe r = compute_drpe(q, p, cfg);
    CHECK(r.d_e.at(0, 0) == 0.0);
    CHECK(r.d_c.at(0, 0) == 1.0);
    CHECK(r.d_c.at(1, 0) == 0.0);
    CHECK(r.d_e.at(1, 0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    auto e0 = sin_emb(0.0, d, cfg.gamma);
    auto ec = sin_emb(cfg.s_c, d, cfg.gamma);
    for (int j = 0; j < d; ++j)
        CHECK(r.r.at(0, j) == doctest::Approx(e0[j] + ec[j]).epsilon(1e-12));
    auto ee = sin_emb(cfg.s_e * std::sqrt(2.0), d, cfg.gamma);
    for (int j = 0; j < d; ++j)
        CHECK(r.r.at(1, j) == doctest::Approx(ee[j] + e0[j]).epsilon(1e-12));
}

TEST_CASE("compute_drpe matches brute-force pairwise oracles and stays bounded") {
    Rng rng(17);
    DrpeConfig cfg;
    const int m = 8, n = 3, d = 6;
    Tensor q = random_tensor({m, d}, rng);
    Tensor p = random_tensor({n, d}, rng);
    Drpe r = compute_drpe(q, p, cfg);
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < n; ++b) {
            double dist = 0.0, dot = 0.0, qn = 0.0, pn = 0.0;
            for (int j = 0; j < d; ++j) {
                dist += (q.at(a, j) - p.at(b, j)) * (q.at(a, j) - p.at(b, j));
                dot += q.at(a, j) * p.at(b, j);
                qn += q.at(a, j) * q.at(a, j);
                pn += p.at(b, j) * p.at(b, j);
            }
            CHECK(std::fabs(r.d_e.at(a, b) - std::sqrt(dist)) < 1e-12);
            CHECK(std::fabs(r.d_c.at(a, b) - dot / std::sqrt(qn * pn)) < 1e-12);
        }
    for (double v : r.r.data) CHECK(std::fabs(v) <= 2.0);
    for (double v : r.r_e.data) CHECK(std::fabs(v) <= 1.0);
    for (double v : r.r_c.data) CHECK(std::fabs(v) <= 1.0);
}

TEST_CASE("zero-norm rows give d_C = 0") {
    DrpeConfig cfg;
    Tensor q({1, 4}, {0.0, 0.0, 0.0, 0.0});
    Tensor p({1, 4}, {1.0, 2.0, 3.0, 4.0});
    CHECK(compute_drpe(q, p, cfg).d_c.at(0, 0) == 0.0);
}

TEST_CASE("rel_transpose swaps the pair indexing") {
    Rng rng(2);
    Tensor r = random_tensor({6, 4}, rng);  // a=2, b=3
    Tensor rt = rel_transpose(r, 2, 3);
    REQUIRE(rt.rows() == 6);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 3; ++j)
            for (int c = 0; c < 4; ++c) CHECK(rt.at(j * 2 + i, c) == r.at(i * 3 + j, c));
}

TEST_CASE("cra with a single key attends fully regardless of R") {
    Rng rng(3);
    const int d = 4;
    Tape t;
    Tensor qx = random_tensor({3, d}, rng);
    Tensor kv = random_tensor({1, d}, rng);
    Tensor r = random_tensor({3, d}, rng);
    Tensor wv = random_tensor({d, d}, rng);
    Tensor wo = random_tensor({d, d}, rng);
    Var out = cra_cross_attention(t, t.constant(qx), t.constant(kv), r,
                                  t.constant(random_tensor({d, d}, rng)),
                                  t.constant(random_tensor({d, d}, rng)), t.constant(wv),
                                  t.constant(wo));
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < d; ++j) {
            double v = 0.0;
            for (int p = 0; p < d; ++p) {
                double vp = 0.0;
                for (int c = 0; c < d; ++c) vp += kv.at(0, c) * wv.at(c, p);
                v += vp * wo.at(p, j);
            }
            CHECK(std::fabs(t.val(out).at(i, j) - (qx.at(i, j) + v)) < 1e-10);
        }
}

TEST_CASE("cra with R=0 matches a hand-unrolled cross-attention oracle") {
    Rng rng(9);
    const int d = 5, a = 4, b = 3;
    Tensor qx = random_tensor({a, d}, rng);
    Tensor kv = random_tensor({b, d}, rng);
    Tensor wq = random_tensor({d, d}, rng);
    Tensor wk = random_tensor({d, d}, rng);
    Tensor wv = random_tensor({d, d}, rng);
    Tensor wo = random_tensor({d, d}, rng);

    Tape t;
    Var out = cra_cross_attention(t, t.constant(qx), t.constant(kv), Tensor::zeros({a * b, d}),
                                  t.constant(wq), t.constant(wk), t.constant(wv), t.constant(wo));

    auto mm = [](const Tensor& x, const Tensor& w) {
        Tensor c({x.rows(), w.cols()});
        for (int i = 0; i < x.rows(); ++i)
            for (int j = 0; j < w.cols(); ++j) {
                double s = 0.0;
                for (int p = 0; p < x.cols(); ++p) s += x.at(i, p) * w.at(p, j);
                c.at(i, j) = s;
            }
        return c;
    };
    Tensor q = mm(qx, wq), k = mm(kv, wk), v = mm(kv, wv);
    for (int i = 0; i < a; ++i) {
        std::vector<double> logit(b);
        double mx = -1e300;
        for (int j = 0; j < b; ++j) {
            double s = 0.0;
            for (int p = 0; p < d; ++p) s += q.at(i, p) * k.at(j, p);
            logit[j] = s / std::sqrt(static_cast<double>(d));
            mx = std::max(mx, logit[j]);
        }
        double z = 0.0;
        for (int j = 0; j < b; ++j) z += std::exp(logit[j] - mx);
        for (int c = 0; c < d; ++c) {
            double av = 0.0;
            for (int j = 0; j < b; ++j) av += std::exp(logit[j] - mx) / z * v.at(j, c);
            double o = 0.0;
            for (int p = 0; p < d; ++p) {
                double avp = 0.0;
                for (int j = 0; j < b; ++j) avp += std::exp(logit[j] - mx) / z * v.at(j, p);
                o += avp * wo.at(p, c);
            }
            CHECK(std::fabs(t.val(out).at(i, c) - (qx.at(i, c) + o)) < 1e-10);
        }
    }
}

TEST_CASE("an R term constant across keys leaves cra output unchanged") {
    Rng rng(5);
    const int d = 4, a = 3, b = 4;
    Tensor qx = random_tensor({a, d}, rng);
    Tensor kv = random_tensor({b, d}, rng);
    Tensor wq = random_tensor({d, d}, rng);
    Tensor wk = random_tensor({d, d}, rng);
    Tensor wv = random_tensor({d, d}, rng);
    Tensor wo = random_tensor({d, d}, rng);

    Tensor r_const({a * b, d});
    Tensor delta = random_tensor({a, d}, rng);  // per-query row, same for every key
    for (int i = 0; i < a; ++i)
        for (int j = 0; j < b; ++j)
            for (int c = 0; c < d; ++c) r_const.at(i * b + j, c) = delta.at(i, c);

    Tape t1, t2;
    Var o1 = cra_cross_attention(t1, t1.constant(qx), t1.constant(kv), Tensor::zeros({a * b, d}),
                                 t1.constant(wq), t1.constant(wk), t1.constant(wv),
                                 t1.constant(wo));
    Var o2 = cra_cross_attention(t2, t2.constant(qx), t2.constant(kv), r_const, t2.constant(wq),
                                 t2.constant(wk), t2.constant(wv), t2.constant(wo));
    for (std::int64_t i = 0; i < t1.val(o1).size(); ++i)
        CHECK(std::fabs(t1.val(o1).data[i] - t2.val(o2).data[i]) < 1e-12);
}

TEST_CASE("cra gradients match finite differences") {
    Rng rng(11);
    const int d = 4, a = 3, b = 2;
    Tensor kv = random_tensor({b, d}, rng);
    Tensor r = random_tensor({a * b, d}, rng);
    Tensor wq = random_tensor({d, d}, rng);
    Tensor wk = random_tensor({d, d}, rng);
    Tensor wv = random_tensor({d, d}, rng);
    Tensor wo = random_tensor({d, d}, rng);
    Tensor head = random_tensor({a, d}, rng);
    auto f = [&](Tape& t, Var v) {
        Var o = cra_cross_attention(t, v, t.constant(kv), r, t.constant(wq), t.constant(wk),
                                    t.constant(wv), t.constant(wo));
        return t.sum_all(t.mul(o, t.constant(head)));
    };
    CHECK(finite_diff_check(f, random_tensor({a, d}, rng)) < 1e-5);
}

TEST_CASE("predict basics") {
    Tape t;
    Tensor protos({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor q({1, 3}, {0, 5.0, 0});
    Var probs = predict(t, t.constant(q), t.constant(protos));
    const Tensor& pv = t.val(probs);
    CHECK(pv.at(0, 1) > pv.at(0, 0));
    CHECK(pv.at(0, 1) > pv.at(0, 2));
    double sum = 0.0;
    for (int j = 0; j < 3; ++j) sum += pv.at(0, j);
    CHECK(std::fabs(sum - 1.0) < 1e-12);
}

TEST_CASE("identical prototypes give uniform prediction rows") {
    Rng rng(6);
    Tape t;
    Tensor protos({3, 4});
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j) protos.at(i, j) = 0.3 * j - 0.5;
    Var probs = predict(t, t.constant(random_tensor({5, 4}, rng)), t.constant(protos));
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK(t.val(probs).at(i, j) == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("predict is invariant to positive row rescaling and flags zero rows") {
    Rng rng(8);
    Tensor q = random_tensor({4, 5}, rng);
    Tensor p = random_tensor({3, 5}, rng);
    Tape t1;
    const Tensor base = t1.val(predict(t1, t1.constant(q), t1.constant(p)));

    Tensor q2 = q;
    for (int j = 0; j < 5; ++j) q2.at(2, j) *= 37.5;
    Tensor p2 = p;
    for (int j = 0; j < 5; ++j) p2.at(1, j) *= 0.001;
    Tape t2;
    const Tensor& scaled = t2.val(predict(t2, t2.constant(q2), t2.constant(p2)));
    for (std::int64_t i = 0; i < base.size(); ++i)
        CHECK(std::fabs(base.data[i] - scaled.data[i]) < 1e-12);

    Tensor qz = q;
    for (int j = 0; j < 5; ++j) qz.at(0, j) = 0.0;
    int warnings = 0;
    Tape t3;
    const Tensor& wz = t3.val(predict(t3, t3.constant(qz), t3.constant(p), &warnings));
    CHECK(warnings == 1);
    for (int j = 0; j < 3; ++j) CHECK(wz.at(0, j) == doctest::Approx(1.0 / 3).epsilon(1e-12));
}
