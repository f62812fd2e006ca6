#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "epseg/gradcheck.hpp"
#include "epseg/lgpe.hpp"
#include "epseg/losses.hpp"
#include "epseg/rng.hpp"

using namespace epseg;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = scale * rng.normal();
    return t;
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

TEST_CASE("embedding table round-trips and lookups are case-normalized") {
    TextEmbeddingTable table;
    table.d_text = 4;
    table.entries["chair"] = {0.5, -0.25, 0.125, 1.0};
    table.provenance["chair"] = "file";
    auto path = temp_path("epseg_table.ept");
    save_table(table, path);
    TextEmbeddingTable back = load_table(path);
    CHECK(back.d_text == 4);
    CHECK(back.get("Chair") == table.entries["chair"]);
    CHECK(back.provenance.at("chair") == "file");
}

TEST_CASE("table with inconsistent dimensions is rejected") {
    auto path = temp_path("epseg_badtable.ept");
    std::ofstream(path) << "EPT1 3\nchair 1 2 3\ntable 1 2\n";
    CHECK_THROWS_AS(load_table(path), std::runtime_error);
    std::ofstream(path) << "NOPE 3\n";
    CHECK_THROWS_AS(load_table(path), std::runtime_error);
}

TEST_CASE("synthetic embeddings are deterministic unit vectors") {
    auto a = synth_embedding("chair", 7, 512);
    auto b = synth_embedding("chair", 7, 512);
    CHECK(a == b);
    CHECK(std::fabs(std::sqrt(dot(a, a)) - 1.0) < 1e-12);
    CHECK(synth_embedding("chair", 8, 512) != a);
    CHECK(synth_embedding("CHAIR", 7, 512) == a);
}

TEST_CASE("distinct synthetic names are nearly orthogonal at D_text=512") {
    int below = 0;
    for (int i = 0; i < 1000; ++i) {
        auto a = synth_embedding("name_a_" + std::to_string(i), 1, 512);
        auto b = synth_embedding("name_b_" + std::to_string(i), 1, 512);
        if (std::fabs(dot(a, b)) < 0.5) ++below;
    }
    CHECK(below >= 990);
}

TEST_CASE("resolve falls back to synthetic only when allowed") {
    TextEmbeddingTable table;
    table.d_text = 16;
    CHECK_THROWS_AS(table.resolve("ghost", 1, false), std::invalid_argument);
    auto v = table.resolve("ghost", 1, true);
    CHECK(static_cast<int>(v.size()) == 16);
    CHECK(table.provenance.at("ghost") == "synthetic");
    Tensor m = table.matrix({"ghost", "other"}, 1, true);
    CHECK(m.rows() == 2);
    CHECK(m.cols() == 16);
}

TEST_CASE("fusion weight schedule endpoints and midpoint") {
    LgpeConfig cfg;
    FusionWeights w0 = fusion_weights(0.0, cfg);
    CHECK(w0.l1 == 0.0);
    CHECK(w0.l2 == 0.0);
    CHECK(w0.l3 == 0.0);
    CHECK(w0.l4 == 0.6);

    FusionWeights winf = fusion_weights(1e9, cfg);
    CHECK(winf.l1 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(winf.l2 == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(winf.l3 == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(winf.l4 == doctest::Approx(0.0).epsilon(1e-12));

    FusionWeights w2 = fusion_weights(2.0, cfg);
    CHECK(w2.l4 == doctest::Approx(0.6 * std::exp(-1.0)).epsilon(1e-12));
    CHECK(w2.l1 == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-12));

    double prev4 = 1e9, prev1 = -1.0;
    for (double t = 0.0; t < 5.0; t += 0.25) {
        FusionWeights w = fusion_weights(t, cfg);
        CHECK(w.l4 < prev4);
        CHECK(w.l1 > prev1);
        prev4 = w.l4;
        prev1 = w.l1;
    }
}

TEST_CASE("project_text with zeroed final layer returns its bias") {
    Rng rng(3);
    ParamStore store;
    init_lgpe(store, 32, 8, rng);
    store.value(store.find("lgpe", "proj.w2")) = Tensor::zeros({8, 8});
    Tensor bias = random_tensor({1, 8}, rng);
    store.value(store.find("lgpe", "proj.b2")) = bias;

    Tape t;
    Bound p = bind(t, store);
    Var out = project_text(p, t.constant(random_tensor({3, 32}, rng)));
    CHECK(t.val(out).cols() == 8);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 8; ++j) CHECK(t.val(out).at(i, j) == bias.at(0, j));
}

TEST_CASE("project_text maps 512 to 64 and passes finite differences") {
    Rng rng(5);
    ParamStore store;
    init_lgpe(store, 512, 64, rng);
    Tape t;
    Bound p = bind(t, store);
    Var out = project_text(p, t.constant(random_tensor({2, 512}, rng)));
    CHECK(t.val(out).rows() == 2);
    CHECK(t.val(out).cols() == 64);

    ParamStore small;
    Rng rng2(6);
    init_lgpe(small, 6, 4, rng2);
    Tensor head = random_tensor({2, 4}, rng2);
    auto f = [&](Tape& tt, Var v) {
        Bound b = bind(tt, small);
        return tt.sum_all(tt.mul(project_text(b, v), tt.constant(head)));
    };
    CHECK(finite_diff_check(f, random_tensor({2, 6}, rng2)) < 1e-5);
}

TEST_CASE("fuse_prototypes blends, overrides for zero-shot, and is linear") {
    Rng rng(7);
    LgpeConfig cfg;
    Tensor v = random_tensor({3, 4}, rng);
    Tape t;
    Var vv = t.constant(v);
    Var big = fuse_prototypes(t, vv, vv, vv, vv, fusion_weights(1e9, cfg));
    for (std::int64_t i = 0; i < v.size(); ++i)
        CHECK(t.val(big).data[i] == doctest::Approx(2.2 * v.data[i]).epsilon(1e-12));

    Tensor text = random_tensor({3, 4}, rng);
    Var zs = fuse_prototypes(t, vv, vv, vv, t.constant(text), {0.0, 0.0, 0.0, 1.0});
    CHECK(t.val(zs).data == text.data);

    Var t0 = fuse_prototypes(t, vv, vv, vv, t.constant(text), fusion_weights(0.0, cfg));
    for (std::int64_t i = 0; i < text.size(); ++i)
        CHECK(t.val(t0).data[i] == doctest::Approx(0.6 * text.data[i]).epsilon(1e-14));

    // superposition in the token argument
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
    FusionWeights w = fusion_weights(1.0, cfg);
    Var zero = t.constant(Tensor::zeros({3, 4}));
    Var fa = fuse_prototypes(t, t.constant(a), zero, zero, zero, w);
    Var fb = fuse_prototypes(t, t.constant(b), zero, zero, zero, w);
    Tensor ab({3, 4});
    for (std::int64_t i = 0; i < ab.size(); ++i) ab.data[i] = a.data[i] + b.data[i];
    Var fab = fuse_prototypes(t, t.constant(ab), zero, zero, zero, w);
    for (std::int64_t i = 0; i < ab.size(); ++i)
        CHECK(std::fabs(t.val(fab).data[i] - t.val(fa).data[i] - t.val(fb).data[i]) < 1e-12);
}

TEST_CASE("seg_loss analytic values and summation oracle") {
    Tape t;
    Tensor uniform({2, 3});
    for (double& v : uniform.data) v = 1.0 / 3;
    CHECK(t.val(seg_loss(t, t.constant(uniform), {0, 2})).data[0] ==
          doctest::Approx(std::log(3.0)).epsilon(1e-12));

    Tensor sharp({1, 3}, {1e-9, 1.0 - 2e-9, 1e-9});
    CHECK(t.val(seg_loss(t, t.constant(sharp), {1})).data[0] < 1e-8);

    Rng rng(4);
    Tensor probs({5, 4});
    for (int i = 0; i < 5; ++i) {
        double z = 0.0;
        for (int j = 0; j < 4; ++j) {
            probs.at(i, j) = std::exp(rng.normal());
            z += probs.at(i, j);
        }
        for (int j = 0; j < 4; ++j) probs.at(i, j) /= z;
    }
    std::vector<int> y = {1, 3, 0, 2, 2};
    double want = 0.0;
    for (int i = 0; i < 5; ++i) want -= std::log(probs.at(i, y[i])) / 5.0;
    CHECK(std::fabs(t.val(seg_loss(t, t.constant(probs), y)).data[0] - want) < 1e-12);
}

TEST_CASE("con_loss matches the two-term formula on the planted pair") {
    // support/query each hold one class-1 point at +v and one class-2 at -v
    Tensor feats({2, 2}, {1.0, 0.0, -1.0, 0.0});
    std::vector<int> labels = {1, 2};
    Rng rng(1);
    Tape t;
    Var loss = con_loss(t, t.constant(feats), labels, t.constant(feats), labels, 0.5, rng);
    const double per_dir = -std::log(std::exp(2.0) / (std::exp(2.0) + std::exp(-2.0)));
    CHECK(t.val(loss).data[0] == doctest::Approx(per_dir).epsilon(1e-10));
}

TEST_CASE("con_loss with a single foreground class is zero and warns") {
    Rng rng(2);
    Tensor s = random_tensor({4, 3}, rng);
    Tensor q = random_tensor({4, 3}, rng);
    int warnings = 0;
    Tape t;
    Var loss = con_loss(t, t.constant(s), {0, 1, 1, 0}, t.constant(q), {1, 1, 0, 0}, 0.5, rng, 64,
                        &warnings);
    CHECK(t.val(loss).data[0] == 0.0);
    CHECK(warnings == 1);
}

TEST_CASE("con_loss is invariant to rotations of the feature space") {
    Rng rng(5);
    const int d = 4;
    Tensor s = random_tensor({6, d}, rng);
    Tensor q = random_tensor({6, d}, rng);
    std::vector<int> sl = {1, 1, 2, 2, 0, 1};
    std::vector<int> ql = {2, 1, 1, 2, 2, 0};

    // random orthogonal matrix via Gram-Schmidt
    Tensor m = random_tensor({d, d}, rng);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < i; ++j) {
            double p = 0.0;
            for (int c = 0; c < d; ++c) p += m.at(i, c) * m.at(j, c);
            for (int c = 0; c < d; ++c) m.at(i, c) -= p * m.at(j, c);
        }
        double n = 0.0;
        for (int c = 0; c < d; ++c) n += m.at(i, c) * m.at(i, c);
        n = std::sqrt(n);
        for (int c = 0; c < d; ++c) m.at(i, c) /= n;
    }
    auto rotate = [&](const Tensor& x) {
        Tensor out({x.rows(), d});
        for (int i = 0; i < x.rows(); ++i)
            for (int j = 0; j < d; ++j) {
                double sum = 0.0;
                for (int c = 0; c < d; ++c) sum += x.at(i, c) * m.at(j, c);
                out.at(i, j) = sum;
            }
        return out;
    };

    Rng ra(9), rb(9);
    Tape t1, t2;
    Var l1 = con_loss(t1, t1.constant(s), sl, t1.constant(q), ql, 0.5, ra);
    Var l2 = con_loss(t2, t2.constant(rotate(s)), sl, t2.constant(rotate(q)), ql, 0.5, rb);
    CHECK(std::fabs(t1.val(l1).data[0] - t2.val(l2).data[0]) < 1e-9);
}

TEST_CASE("con_loss gradient matches finite differences") {
    Rng rng(11);
    Tensor q = random_tensor({5, 3}, rng);
    std::vector<int> sl = {1, 2, 1, 0, 2};
    std::vector<int> ql = {2, 1, 0, 1, 2};
    auto f = [&](Tape& t, Var v) {
        Rng r(3);
        return con_loss(t, v, sl, t.constant(q), ql, 0.5, r);
    };
    CHECK(finite_diff_check(f, random_tensor({5, 3}, rng)) < 1e-5);
}

TEST_CASE("align_loss analytic values") {
    Tape t;
    // uniform logits
    Tensor protos({2, 3});
    for (double& v : protos.data) v = 0.0;
    Rng rng(1);
    Tensor texts = random_tensor({2, 4}, rng);
    Tensor w = random_tensor({3, 4}, rng);
    CHECK(t.val(align_loss(t, t.constant(protos), t.constant(texts), t.constant(w))).data[0] ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // hand-set similarities [2, 0] for class 0 via orthonormal texts
    Tensor p1({1, 2}, {2.0, 0.0});
    Tensor t1({2, 2}, {1.0, 0.0, 0.0, 1.0});
    Tensor id({2, 2}, {1.0, 0.0, 0.0, 1.0});
    Tape t2;
    Var l = t2.cross_entropy_logits(
        t2.matmul_nt(t2.matmul(t2.constant(p1), t2.constant(id)), t2.constant(t1)), {0});
    CHECK(t2.val(l).data[0] ==
          doctest::Approx(-std::log(std::exp(2.0) / (std::exp(2.0) + 1.0))).epsilon(1e-10));
    CHECK(t2.val(l).data[0] == doctest::Approx(0.126928).epsilon(1e-4));
}

TEST_CASE("align_loss rejects empty foreground and passes finite differences") {
    Tape t;
    Rng rng(2);
    CHECK_THROWS_AS(align_loss(t, t.constant(Tensor({0, 4})), t.constant(Tensor({0, 5})),
                               t.constant(Tensor({4, 5}))),
                    std::invalid_argument);

    Tensor texts = random_tensor({3, 5}, rng);
    Tensor w = random_tensor({4, 5}, rng);
    auto f = [&](Tape& tt, Var v) {
        return align_loss(tt, v, tt.constant(texts), tt.constant(w));
    };
    CHECK(finite_diff_check(f, random_tensor({3, 4}, rng)) < 1e-5);
    Rng rng2(3);
    Tensor protos = random_tensor({3, 4}, rng2);
    auto g2 = [&](Tape& tt, Var v) {
        return align_loss(tt, tt.constant(protos), tt.constant(texts), v);
    };
    CHECK(finite_diff_check(g2, w) < 1e-5);
}

TEST_CASE("total_loss weighted sum") {
    Tape t;
    Var seg = t.constant(Tensor::scalar(1.0));
    Var con = t.constant(Tensor::scalar(2.0));
    Var align = t.constant(Tensor::scalar(3.0));
    LossWeights w;
    CHECK(t.val(total_loss(t, seg, con, align, w)).data[0] ==
          doctest::Approx(1.08).epsilon(1e-12));
    LossWeights off;
    off.lambda_con = 0.0;
    off.lambda_align = 0.0;
    CHECK(t.val(total_loss(t, seg, con, align, off)).data[0] == 1.0);
}
