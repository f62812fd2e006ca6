#include "epseg/tape.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace epseg {

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                                " vs " + b.shape_str());
}

void check_2d(const char* op, const Tensor& t) {
    if (t.rank() != 2)
        throw std::invalid_argument(std::string(op) + ": expected rank-2 tensor, got " +
                                    t.shape_str());
}

}  // namespace

Var Tape::record(const char* op, Tensor value, bool requires_grad,
                 std::function<void(Tape&, const Tensor&)> back) {
    if (!value.all_finite())
        throw std::runtime_error(std::string(op) + ": non-finite output");
    Node n;
    n.op = op;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    return record("leaf", std::move(value), requires_grad, nullptr);
}

void Tape::accum(Var v, const Tensor& g) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
    if (!n.grad.same_shape(g)) shape_error("accum", n.grad, g);
    double* dst = n.grad.data.data();
    const double* src = g.data.data();
    for (std::int64_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

void Tape::backward(Var loss) {
    const Tensor& lv = val(loss);
    if (lv.size() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got " + lv.shape_str());
    Node& ln = nodes_[loss.id];
    if (ln.grad.data.empty()) ln.grad = Tensor::zeros(lv.shape);
    ln.grad.data[0] = 1.0;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[i];
        if (!n.requires_grad || !n.back || n.grad.data.empty()) continue;
        n.back(*this, n.grad);
    }
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    check_2d("matmul", av);
    check_2d("matmul", bv);
    if (av.cols() != bv.rows()) shape_error("matmul", av, bv);
    const int m = av.rows(), k = av.cols(), n = bv.cols();
    Tensor out({m, n});
    matmul_nn(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
    bool rg = requires_grad(a) || requires_grad(b);
    return record("matmul", std::move(out), rg, [a, b, m, k, n](Tape& t, const Tensor& g) {
        if (t.requires_grad(a)) {
            Tensor da({m, k});
            epseg::matmul_nt(g.data.data(), t.val(b).data.data(), da.data.data(), m, n, k);
            t.accum(a, da);
        }
        if (t.requires_grad(b)) {
            Tensor db({k, n});
            epseg::matmul_tn(t.val(a).data.data(), g.data.data(), db.data.data(), k, m, n);
            t.accum(b, db);
        }
    });
}

Var Tape::matmul_nt(Var a, Var b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    check_2d("matmul_nt", av);
    check_2d("matmul_nt", bv);
    if (av.cols() != bv.cols()) shape_error("matmul_nt", av, bv);
    const int m = av.rows(), k = av.cols(), n = bv.rows();
    Tensor out({m, n});
    epseg::matmul_nt(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
    bool rg = requires_grad(a) || requires_grad(b);
    return record("matmul_nt", std::move(out), rg, [a, b, m, k, n](Tape& t, const Tensor& g) {
        if (t.requires_grad(a)) {
            // dA = g * B
            Tensor da({m, k});
            matmul_nn(g.data.data(), t.val(b).data.data(), da.data.data(), m, n, k);
            t.accum(a, da);
        }
        if (t.requires_grad(b)) {
            // dB = g^T * A
            Tensor db({n, k});
            matmul_tn(g.data.data(), t.val(a).data.data(), db.data.data(), n, m, k);
            t.accum(b, db);
        }
    });
}

Var Tape::add(Var a, Var b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    if (!av.same_shape(bv)) shape_error("add", av, bv);
    Tensor out = av;
    for (std::int64_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i];
    bool rg = requires_grad(a) || requires_grad(b);
    return record("add", std::move(out), rg, [a, b](Tape& t, const Tensor& g) {
        t.accum(a, g);
        t.accum(b, g);
    });
}

Var Tape::sub(Var a, Var b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    if (!av.same_shape(bv)) shape_error("sub", av, bv);
    Tensor out = av;
    for (std::int64_t i = 0; i < out.size(); ++i) out.data[i] -= bv.data[i];
    bool rg = requires_grad(a) || requires_grad(b);
    return record("sub", std::move(out), rg, [a, b](Tape& t, const Tensor& g) {
        t.accum(a, g);
        Tensor ng = g;
        for (double& x : ng.data) x = -x;
        t.accum(b, ng);
    });
}

Var Tape::mul(Var a, Var b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    if (!av.same_shape(bv)) shape_error("mul", av, bv);
    Tensor out = av;
    for (std::int64_t i = 0; i < out.size(); ++i) out.data[i] *= bv.data[i];
    bool rg = requires_grad(a) || requires_grad(b);
    return record("mul", std::move(out), rg, [a, b](Tape& t, const Tensor& g) {
        if (t.requires_grad(a)) {
            Tensor da = g;
            const Tensor& bv2 = t.val(b);
            for (std::int64_t i = 0; i < da.size(); ++i) da.data[i] *= bv2.data[i];
            t.accum(a, da);
        }
        if (t.requires_grad(b)) {
            Tensor db = g;
            const Tensor& av2 = t.val(a);
            for (std::int64_t i = 0; i < db.size(); ++i) db.data[i] *= av2.data[i];
            t.accum(b, db);
        }
    });
}

Var Tape::scale(Var a, double s) {
    Tensor out = val(a);
    for (double& x : out.data) x *= s;
    return record("scale", std::move(out), requires_grad(a), [a, s](Tape& t, const Tensor& g) {
        Tensor da = g;
        for (double& x : da.data) x *= s;
        t.accum(a, da);
    });
}

Var Tape::add_rowvec(Var a, Var v) {
    const Tensor& av = val(a);
    const Tensor& vv = val(v);
    check_2d("add_rowvec", av);
    if (vv.rows() != 1 || vv.cols() != av.cols()) shape_error("add_rowvec", av, vv);
    Tensor out = av;
    const int r = av.rows(), c = av.cols();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out.at(i, j) += vv.data[j];
    bool rg = requires_grad(a) || requires_grad(v);
    return record("add_rowvec", std::move(out), rg, [a, v, r, c](Tape& t, const Tensor& g) {
        t.accum(a, g);
        if (t.requires_grad(v)) {
            Tensor dv({1, c});
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) dv.data[j] += g.at(i, j);
            t.accum(v, dv);
        }
    });
}

Var Tape::sub_rowvec(Var a, Var v) {
    return add_rowvec(a, scale(v, -1.0));
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
    int cols = val(parts[0]).cols();
    int rows = 0;
    bool rg = false;
    for (Var p : parts) {
        const Tensor& pv = val(p);
        check_2d("concat_rows", pv);
        if (pv.cols() != cols) shape_error("concat_rows", val(parts[0]), pv);
        rows += pv.rows();
        rg = rg || requires_grad(p);
    }
    Tensor out({rows, cols});
    int at = 0;
    for (Var p : parts) {
        const Tensor& pv = val(p);
        std::memcpy(out.data.data() + static_cast<std::size_t>(at) * cols, pv.data.data(),
                    pv.data.size() * sizeof(double));
        at += pv.rows();
    }
    std::vector<Var> ps = parts;
    return record("concat_rows", std::move(out), rg, [ps, cols](Tape& t, const Tensor& g) {
        int at2 = 0;
        for (Var p : ps) {
            const int pr = t.val(p).rows();
            if (t.requires_grad(p)) {
                Tensor dp({pr, cols});
                std::memcpy(dp.data.data(), g.data.data() + static_cast<std::size_t>(at2) * cols,
                            dp.data.size() * sizeof(double));
                t.accum(p, dp);
            }
            at2 += pr;
        }
    });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    int rows = val(parts[0]).rows();
    int cols = 0;
    bool rg = false;
    for (Var p : parts) {
        const Tensor& pv = val(p);
        check_2d("concat_cols", pv);
        if (pv.rows() != rows) shape_error("concat_cols", val(parts[0]), pv);
        cols += pv.cols();
        rg = rg || requires_grad(p);
    }
    Tensor out({rows, cols});
    int at = 0;
    for (Var p : parts) {
        const Tensor& pv = val(p);
        const int pc = pv.cols();
        for (int r = 0; r < rows; ++r)
            std::memcpy(&out.at(r, at), pv.data.data() + static_cast<std::size_t>(r) * pc,
                        static_cast<std::size_t>(pc) * sizeof(double));
        at += pc;
    }
    std::vector<Var> ps = parts;
    return record("concat_cols", std::move(out), rg, [ps, rows](Tape& t, const Tensor& g) {
        int at2 = 0;
        for (Var p : ps) {
            const int pc = t.val(p).cols();
            if (t.requires_grad(p)) {
                Tensor dp({rows, pc});
                for (int r = 0; r < rows; ++r)
                    std::memcpy(dp.data.data() + static_cast<std::size_t>(r) * pc,
                                g.data.data() + static_cast<std::size_t>(r) * g.cols() + at2,
                                static_cast<std::size_t>(pc) * sizeof(double));
                t.accum(p, dp);
            }
            at2 += pc;
        }
    });
}

Var Tape::slice_rows(Var a, int begin, int count) {
    const Tensor& av = val(a);
    check_2d("slice_rows", av);
    if (begin < 0 || count < 0 || begin + count > av.rows())
        throw std::invalid_argument("slice_rows: range [" + std::to_string(begin) + "," +
                                    std::to_string(begin + count) + ") outside " + av.shape_str());
    const int c = av.cols();
    Tensor out({count, c});
    std::memcpy(out.data.data(), av.data.data() + static_cast<std::size_t>(begin) * c,
                out.data.size() * sizeof(double));
    return record("slice_rows", std::move(out), requires_grad(a),
                  [a, begin, count, c](Tape& t, const Tensor& g) {
                      Tensor da = Tensor::zeros(t.val(a).shape);
                      std::memcpy(da.data.data() + static_cast<std::size_t>(begin) * c,
                                  g.data.data(), g.data.size() * sizeof(double));
                      t.accum(a, da);
                  });
}

Var Tape::softmax_rows(Var a) {
    const Tensor& av = val(a);
    check_2d("softmax_rows", av);
    const int r = av.rows(), c = av.cols();
    Tensor out({r, c});
    for (int i = 0; i < r; ++i) {
        double mx = av.at(i, 0);
        for (int j = 1; j < c; ++j) mx = std::max(mx, av.at(i, j));
        double z = 0.0;
        for (int j = 0; j < c; ++j) {
            double e = std::exp(av.at(i, j) - mx);
            out.at(i, j) = e;
            z += e;
        }
        for (int j = 0; j < c; ++j) out.at(i, j) /= z;
    }
    Var self{size()};
    return record("softmax_rows", std::move(out), requires_grad(a),
                  [a, self, r, c](Tape& t, const Tensor& g) {
                      const Tensor& s = t.val(self);
                      Tensor da({r, c});
                      for (int i = 0; i < r; ++i) {
                          double dot = 0.0;
                          for (int j = 0; j < c; ++j) dot += g.at(i, j) * s.at(i, j);
                          for (int j = 0; j < c; ++j)
                              da.at(i, j) = s.at(i, j) * (g.at(i, j) - dot);
                      }
                      t.accum(a, da);
                  });
}

Var Tape::l2norm_rows(Var a) {
    const Tensor& av = val(a);
    check_2d("l2norm_rows", av);
    const int r = av.rows(), c = av.cols();
    Tensor out({r, c});
    std::vector<double> norms(r, 0.0);
    for (int i = 0; i < r; ++i) {
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += av.at(i, j) * av.at(i, j);
        double n = std::sqrt(s);
        norms[i] = n;
        if (n > 0.0)
            for (int j = 0; j < c; ++j) out.at(i, j) = av.at(i, j) / n;
    }
    Var self{size()};
    return record("l2norm_rows", std::move(out), requires_grad(a),
                  [a, self, r, c, norms](Tape& t, const Tensor& g) {
                      const Tensor& y = t.val(self);
                      Tensor da({r, c});
                      for (int i = 0; i < r; ++i) {
                          if (norms[i] == 0.0) continue;
                          double dot = 0.0;
                          for (int j = 0; j < c; ++j) dot += g.at(i, j) * y.at(i, j);
                          for (int j = 0; j < c; ++j)
                              da.at(i, j) = (g.at(i, j) - dot * y.at(i, j)) / norms[i];
                      }
                      t.accum(a, da);
                  });
}

Var Tape::mean_rows(Var a) {
    const Tensor& av = val(a);
    check_2d("mean_rows", av);
    const int r = av.rows(), c = av.cols();
    Tensor out({1, c});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out.data[j] += av.at(i, j);
    for (int j = 0; j < c; ++j) out.data[j] /= r;
    return record("mean_rows", std::move(out), requires_grad(a),
                  [a, r, c](Tape& t, const Tensor& g) {
                      Tensor da({r, c});
                      for (int i = 0; i < r; ++i)
                          for (int j = 0; j < c; ++j) da.at(i, j) = g.data[j] / r;
                      t.accum(a, da);
                  });
}

Var Tape::sum_all(Var a) {
    const Tensor& av = val(a);
    double s = 0.0;
    for (double v : av.data) s += v;
    return record("sum_all", Tensor::scalar(s), requires_grad(a),
                  [a](Tape& t, const Tensor& g) {
                      Tensor da(t.val(a).shape);
                      for (double& x : da.data) x = g.data[0];
                      t.accum(a, da);
                  });
}

Var Tape::mean_all(Var a) {
    return scale(sum_all(a), 1.0 / static_cast<double>(val(a).size()));
}

Var Tape::exp(Var a) {
    Tensor out = val(a);
    for (double& x : out.data) x = std::exp(x);
    Var self{size()};
    return record("exp", std::move(out), requires_grad(a),
                  [a, self](Tape& t, const Tensor& g) {
                      Tensor da = g;
                      const Tensor& y = t.val(self);
                      for (std::int64_t i = 0; i < da.size(); ++i) da.data[i] *= y.data[i];
                      t.accum(a, da);
                  });
}

Var Tape::log(Var a) {
    Tensor out = val(a);
    for (double& x : out.data) x = std::log(x);
    return record("log", std::move(out), requires_grad(a), [a](Tape& t, const Tensor& g) {
        Tensor da = g;
        const Tensor& x = t.val(a);
        for (std::int64_t i = 0; i < da.size(); ++i) da.data[i] /= x.data[i];
        t.accum(a, da);
    });
}

Var Tape::sin(Var a) {
    Tensor out = val(a);
    for (double& x : out.data) x = std::sin(x);
    return record("sin", std::move(out), requires_grad(a), [a](Tape& t, const Tensor& g) {
        Tensor da = g;
        const Tensor& x = t.val(a);
        for (std::int64_t i = 0; i < da.size(); ++i) da.data[i] *= std::cos(x.data[i]);
        t.accum(a, da);
    });
}

Var Tape::cos(Var a) {
    Tensor out = val(a);
    for (double& x : out.data) x = std::cos(x);
    return record("cos", std::move(out), requires_grad(a), [a](Tape& t, const Tensor& g) {
        Tensor da = g;
        const Tensor& x = t.val(a);
        for (std::int64_t i = 0; i < da.size(); ++i) da.data[i] *= -std::sin(x.data[i]);
        t.accum(a, da);
    });
}

Var Tape::leaky_relu(Var a, double slope) {
    Tensor out = val(a);
    for (double& x : out.data)
        if (x < 0.0) x *= slope;
    return record("leaky_relu", std::move(out), requires_grad(a),
                  [a, slope](Tape& t, const Tensor& g) {
                      Tensor da = g;
                      const Tensor& x = t.val(a);
                      for (std::int64_t i = 0; i < da.size(); ++i)
                          if (x.data[i] < 0.0) da.data[i] *= slope;
                      t.accum(a, da);
                  });
}

Var Tape::gather_rows(Var a, std::vector<int> idx) {
    const Tensor& av = val(a);
    check_2d("gather_rows", av);
    const int c = av.cols();
    Tensor out({static_cast<int>(idx.size()), c});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= av.rows())
            throw std::invalid_argument("gather_rows: index out of range");
        std::memcpy(out.data.data() + i * c,
                    av.data.data() + static_cast<std::size_t>(idx[i]) * c, c * sizeof(double));
    }
    return record("gather_rows", std::move(out), requires_grad(a),
                  [a, idx = std::move(idx), c](Tape& t, const Tensor& g) {
                      Tensor da = Tensor::zeros(t.val(a).shape);
                      for (std::size_t i = 0; i < idx.size(); ++i) {
                          double* dst = da.data.data() + static_cast<std::size_t>(idx[i]) * c;
                          const double* src = g.data.data() + i * c;
                          for (int j = 0; j < c; ++j) dst[j] += src[j];
                      }
                      t.accum(a, da);
                  });
}

Var Tape::masked_mean_rows(Var a, const std::vector<int>& mask) {
    const Tensor& av = val(a);
    check_2d("masked_mean_rows", av);
    if (static_cast<int>(mask.size()) != av.rows())
        throw std::invalid_argument("masked_mean_rows: mask length mismatch");
    std::vector<int> sel;
    for (int i = 0; i < av.rows(); ++i)
        if (mask[i]) sel.push_back(i);
    if (sel.empty()) throw std::invalid_argument("masked_mean_rows: empty selection");
    return mean_rows(gather_rows(a, std::move(sel)));
}

Var Tape::group_mean_rows(Var a, std::vector<int> assign, int n_groups,
                          std::vector<int> fallback) {
    const Tensor& av = val(a);
    check_2d("group_mean_rows", av);
    if (static_cast<int>(assign.size()) != av.rows())
        throw std::invalid_argument("group_mean_rows: assignment length mismatch");
    if (static_cast<int>(fallback.size()) != n_groups)
        throw std::invalid_argument("group_mean_rows: fallback length mismatch");
    const int c = av.cols();
    Tensor out({n_groups, c});
    std::vector<int> counts(n_groups, 0);
    for (int i = 0; i < av.rows(); ++i) {
        int g = assign[i];
        if (g < 0) continue;
        if (g >= n_groups) throw std::invalid_argument("group_mean_rows: group out of range");
        counts[g]++;
        for (int j = 0; j < c; ++j) out.at(g, j) += av.at(i, j);
    }
    for (int g = 0; g < n_groups; ++g) {
        if (counts[g] > 0) {
            for (int j = 0; j < c; ++j) out.at(g, j) /= counts[g];
        } else {
            for (int j = 0; j < c; ++j) out.at(g, j) = av.at(fallback[g], j);
        }
    }
    return record("group_mean_rows", std::move(out), requires_grad(a),
                  [a, assign = std::move(assign), counts, fallback = std::move(fallback),
                   n_groups, c](Tape& t, const Tensor& g) {
                      Tensor da = Tensor::zeros(t.val(a).shape);
                      for (std::size_t i = 0; i < assign.size(); ++i) {
                          int gr = assign[i];
                          if (gr < 0) continue;
                          for (int j = 0; j < c; ++j)
                              da.at(static_cast<int>(i), j) += g.at(gr, j) / counts[gr];
                      }
                      for (int gr = 0; gr < n_groups; ++gr)
                          if (counts[gr] == 0)
                              for (int j = 0; j < c; ++j) da.at(fallback[gr], j) += g.at(gr, j);
                      t.accum(a, da);
                  });
}

Var Tape::edge_features(Var a, std::vector<int> idx, int k) {
    const Tensor& av = val(a);
    check_2d("edge_features", av);
    const int m = av.rows(), c = av.cols();
    if (static_cast<int>(idx.size()) != m * k)
        throw std::invalid_argument("edge_features: index table size mismatch");
    Tensor out({m * k, 2 * c});
    for (int j = 0; j < m; ++j) {
        const double* xj = av.data.data() + static_cast<std::size_t>(j) * c;
        for (int t = 0; t < k; ++t) {
            const int nb = idx[static_cast<std::size_t>(j) * k + t];
            const double* xn = av.data.data() + static_cast<std::size_t>(nb) * c;
            double* o = out.data.data() + (static_cast<std::size_t>(j) * k + t) * 2 * c;
            for (int d = 0; d < c; ++d) {
                o[d] = xj[d];
                o[c + d] = xn[d] - xj[d];
            }
        }
    }
    return record("edge_features", std::move(out), requires_grad(a),
                  [a, idx = std::move(idx), k, m, c](Tape& t, const Tensor& g) {
                      Tensor da = Tensor::zeros(t.val(a).shape);
                      for (int j = 0; j < m; ++j) {
                          double* dj = da.data.data() + static_cast<std::size_t>(j) * c;
                          for (int e = 0; e < k; ++e) {
                              const int nb = idx[static_cast<std::size_t>(j) * k + e];
                              const double* go =
                                  g.data.data() + (static_cast<std::size_t>(j) * k + e) * 2 * c;
                              double* dn = da.data.data() + static_cast<std::size_t>(nb) * c;
                              for (int d = 0; d < c; ++d) {
                                  dj[d] += go[d] - go[c + d];
                                  dn[d] += go[c + d];
                              }
                          }
                      }
                      t.accum(a, da);
                  });
}

Var Tape::rowblock_max(Var a, int k) {
    const Tensor& av = val(a);
    check_2d("rowblock_max", av);
    if (k <= 0 || av.rows() % k != 0)
        throw std::invalid_argument("rowblock_max: rows not divisible by block size");
    const int m = av.rows() / k, c = av.cols();
    Tensor out({m, c});
    std::vector<int> arg(static_cast<std::size_t>(m) * c);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < c; ++j) {
            double best = av.at(i * k, j);
            int bi = i * k;
            for (int t = 1; t < k; ++t) {
                double v = av.at(i * k + t, j);
                if (v > best) {
                    best = v;
                    bi = i * k + t;
                }
            }
            out.at(i, j) = best;
            arg[static_cast<std::size_t>(i) * c + j] = bi;
        }
    }
    return record("rowblock_max", std::move(out), requires_grad(a),
                  [a, arg = std::move(arg), m, c](Tape& t, const Tensor& g) {
                      Tensor da = Tensor::zeros(t.val(a).shape);
                      for (int i = 0; i < m; ++i)
                          for (int j = 0; j < c; ++j)
                              da.at(arg[static_cast<std::size_t>(i) * c + j], j) += g.at(i, j);
                      t.accum(a, da);
                  });
}

Var Tape::nll_rows(Var probs, std::vector<int> targets) {
    const Tensor& pv = val(probs);
    check_2d("nll_rows", pv);
    const int r = pv.rows(), c = pv.cols();
    if (static_cast<int>(targets.size()) != r)
        throw std::invalid_argument("nll_rows: target length mismatch");
    double s = 0.0;
    for (int i = 0; i < r; ++i) {
        const int y = targets[i];
        if (y < 0 || y >= c)
            throw std::invalid_argument("nll_rows: label " + std::to_string(y) +
                                        " out of range [0," + std::to_string(c) + ")");
        s -= std::log(pv.at(i, y));
    }
    s /= r;
    return record("nll_rows", Tensor::scalar(s), requires_grad(probs),
                  [probs, targets = std::move(targets), r](Tape& t, const Tensor& g) {
                      const Tensor& p = t.val(probs);
                      Tensor da = Tensor::zeros(p.shape);
                      for (int i = 0; i < r; ++i)
                          da.at(i, targets[i]) = -g.data[0] / (r * p.at(i, targets[i]));
                      t.accum(probs, da);
                  });
}

Var Tape::cross_entropy_logits(Var logits, std::vector<int> targets) {
    const Tensor& lv = val(logits);
    check_2d("cross_entropy_logits", lv);
    const int r = lv.rows(), c = lv.cols();
    if (static_cast<int>(targets.size()) != r)
        throw std::invalid_argument("cross_entropy_logits: target length mismatch");
    for (int y : targets)
        if (y < 0 || y >= c)
            throw std::invalid_argument("cross_entropy_logits: label out of range");
    Var p = softmax_rows(logits);
    return nll_rows(p, std::move(targets));
}

Var Tape::pairwise_euclid(Var a, Var b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    check_2d("pairwise_euclid", av);
    check_2d("pairwise_euclid", bv);
    if (av.cols() != bv.cols()) shape_error("pairwise_euclid", av, bv);
    const int m = av.rows(), n = bv.rows(), c = av.cols();
    Tensor out({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int d = 0; d < c; ++d) {
                double diff = av.at(i, d) - bv.at(j, d);
                s += diff * diff;
            }
            out.at(i, j) = std::sqrt(s);
        }
    bool rg = requires_grad(a) || requires_grad(b);
    Var self{size()};
    return record("pairwise_euclid", std::move(out), rg,
                  [a, b, self, m, n, c](Tape& t, const Tensor& g) {
                      const Tensor& av2 = t.val(a);
                      const Tensor& bv2 = t.val(b);
                      const Tensor& d = t.val(self);
                      Tensor da = Tensor::zeros(av2.shape);
                      Tensor db = Tensor::zeros(bv2.shape);
                      for (int i = 0; i < m; ++i)
                          for (int j = 0; j < n; ++j) {
                              if (d.at(i, j) == 0.0) continue;  // subgradient 0 at coincidence
                              double w = g.at(i, j) / d.at(i, j);
                              for (int e = 0; e < c; ++e) {
                                  double diff = av2.at(i, e) - bv2.at(j, e);
                                  da.at(i, e) += w * diff;
                                  db.at(j, e) -= w * diff;
                              }
                          }
                      t.accum(a, da);
                      t.accum(b, db);
                  });
}

Var Tape::pairwise_cosine(Var a, Var b) {
    Var an = l2norm_rows(a);
    Var bn = l2norm_rows(b);
    return matmul_nt(an, bn);
}

Var Tape::rel_logits(Var q, Tensor rel, int b_count) {
    const Tensor& qv = val(q);
    check_2d("rel_logits", qv);
    const int ar = qv.rows(), c = qv.cols();
    if (rel.rank() != 2 || rel.rows() != ar * b_count || rel.cols() != c)
        throw std::invalid_argument("rel_logits: R shape " + rel.shape_str() + " incompatible");
    Tensor out({ar, b_count});
    for (int i = 0; i < ar; ++i)
        for (int j = 0; j < b_count; ++j) {
            const double* r = rel.data.data() + (static_cast<std::size_t>(i) * b_count + j) * c;
            const double* qi = qv.data.data() + static_cast<std::size_t>(i) * c;
            double s = 0.0;
            for (int d = 0; d < c; ++d) s += qi[d] * r[d];
            out.at(i, j) = s;
        }
    return record("rel_logits", std::move(out), requires_grad(q),
                  [q, rel = std::move(rel), b_count, ar, c](Tape& t, const Tensor& g) {
                      Tensor dq = Tensor::zeros(t.val(q).shape);
                      for (int i = 0; i < ar; ++i)
                          for (int j = 0; j < b_count; ++j) {
                              const double* r =
                                  rel.data.data() + (static_cast<std::size_t>(i) * b_count + j) * c;
                              double gv = g.at(i, j);
                              double* di = dq.data.data() + static_cast<std::size_t>(i) * c;
                              for (int d = 0; d < c; ++d) di[d] += gv * r[d];
                          }
                      t.accum(q, dq);
                  });
}

}  // namespace epseg
