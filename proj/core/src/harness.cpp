#include "epseg/harness.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace epseg {

TrainStats train(Model& m, const TrainConfig& cfg, const Corpus& corpus, std::ostream* metrics) {
    Rng rng(cfg.seed);
    init_model(m, rng);
    AdamW opt;
    opt.main_lr = cfg.main_lr;
    opt.backbone_lr = cfg.backbone_lr;
    opt.weight_decay = cfg.weight_decay;

    if (metrics) {
        *metrics << "iter,L_seg,L_con,L_align,L_total,lr_main,lr_backbone,"
                    "lambda1,lambda2,lambda3,lambda4\n";
        metrics->precision(17);
    }

    const bool augment = cfg.aug_jitter > 0.0 || cfg.aug_scale > 0.0 || cfg.aug_color > 0.0;
    auto augment_cloud = [&cfg](PointCloud& c, Rng& r) {
        const double scale =
            cfg.aug_scale > 0.0 ? r.uniform(1.0 - cfg.aug_scale, 1.0 + cfg.aug_scale) : 1.0;
        c = jitter_scale_augment(c, cfg.aug_jitter, scale, r);
        if (cfg.aug_color > 0.0) c = color_jitter_augment(c, cfg.aug_color, r);
    };

    TrainStats stats;
    for (int iter = 0; iter < cfg.iterations; ++iter) {
        const double sched_t = static_cast<double>(iter) / cfg.model.lgpe.t_unit;
        Episode ep = sample_episode(corpus, cfg.n_way, cfg.k_shot, rng);
        if (augment) {
            for (auto& shots : ep.support)
                for (PointCloud& c : shots) augment_cloud(c, rng);
            augment_cloud(ep.query, rng);
        }
        try {
            Tape t;
            ForwardResult f = episode_forward(t, m, ep, sched_t, rng, false, true);
            t.backward(f.total);
            std::vector<Tensor> grads;
            grads.reserve(m.store.count());
            for (int i = 0; i < m.store.count(); ++i) {
                const Tensor& g = t.grad(f.bound.vars[i]);
                // a parameter outside the active graph (ablated module) has
                // an empty gradient buffer; treat it as zero
                grads.push_back(g.data.empty() ? Tensor::zeros(m.store.value(i).shape) : g);
            }
            if (cfg.clip_norm > 0.0) {
                double sq = 0.0;
                for (const Tensor& g : grads)
                    for (double v : g.data) sq += v * v;
                const double norm = std::sqrt(sq);
                if (norm > cfg.clip_norm) {
                    const double s = cfg.clip_norm / norm;
                    for (Tensor& g : grads)
                        for (double& v : g.data) v *= s;
                }
            }
            opt.step(m.store, grads, iter);
            if (metrics) {
                const FusionWeights w = fusion_weights(sched_t, cfg.model.lgpe);
                *metrics << iter << "," << t.val(f.seg).data[0] << "," << t.val(f.con).data[0]
                         << "," << t.val(f.align).data[0] << "," << t.val(f.total).data[0] << ","
                         << cfg.main_lr.at(iter) << "," << cfg.backbone_lr.at(iter) << "," << w.l1
                         << "," << w.l2 << "," << w.l3 << "," << w.l4 << "\n";
            }
        } catch (const std::runtime_error&) {
            ++stats.skipped_steps;
            if (stats.skipped_steps * 100 > cfg.iterations)
                throw std::runtime_error("train: " + std::to_string(stats.skipped_steps) +
                                         " non-finite steps out of " +
                                         std::to_string(iter + 1) + " exceeds the 1% budget");
        }
    }
    stats.final_sched_t = cfg.iterations > 0
                              ? static_cast<double>(cfg.iterations - 1) / cfg.model.lgpe.t_unit
                              : 0.0;
    return stats;
}

void accumulate_confusion(const Tensor& probs, const std::vector<int>& labels,
                          std::vector<long>& tp, std::vector<long>& fp, std::vector<long>& fn) {
    const int n_cls = probs.cols();
    for (int i = 0; i < probs.rows(); ++i) {
        int pred = 0;
        for (int c = 1; c < n_cls; ++c)
            if (probs.at(i, c) > probs.at(i, pred)) pred = c;
        const int truth = labels[i];
        if (pred == truth)
            ++tp[truth];
        else {
            ++fp[pred];
            ++fn[truth];
        }
    }
}

double miou_from_counts(const std::vector<long>& tp, const std::vector<long>& fp,
                        const std::vector<long>& fn, std::vector<double>& iou,
                        std::vector<int>& excluded) {
    const int n_cls = static_cast<int>(tp.size());
    iou.assign(n_cls, 0.0);
    double sum = 0.0;
    int counted = 0;
    for (int c = 0; c < n_cls; ++c) {
        const long denom = tp[c] + fp[c] + fn[c];
        if (denom == 0) {
            excluded.push_back(c);
            continue;
        }
        iou[c] = static_cast<double>(tp[c]) / static_cast<double>(denom);
        sum += iou[c];
        ++counted;
    }
    return counted > 0 ? sum / counted : 0.0;
}

EvalReport evaluate(Model& m, const Corpus& corpus, int n_way, int k_shot, int n_episodes,
                    std::uint64_t seed, double sched_t) {
    const auto t0 = std::chrono::steady_clock::now();
    const int n_cls = n_way + 1;
    EvalReport r;
    r.tp.assign(n_cls, 0);
    r.fp.assign(n_cls, 0);
    r.fn.assign(n_cls, 0);
    r.episodes = n_episodes;

    Rng rng(seed);
    Rng loss_rng(seed + 1);
    for (int e = 0; e < n_episodes; ++e) {
        Episode ep = sample_episode(corpus, n_way, k_shot, rng);
        Tape t;
        ForwardResult f = episode_forward(t, m, ep, sched_t, loss_rng, false, false);
        accumulate_confusion(t.val(f.probs), ep.query_labels, r.tp, r.fp, r.fn);
    }

    r.miou = miou_from_counts(r.tp, r.fp, r.fn, r.iou, r.excluded);
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

void write_eval_report(const EvalReport& r, std::ostream& out) {
    out.precision(17);
    for (std::size_t c = 0; c < r.iou.size(); ++c) {
        const bool excluded =
            std::find(r.excluded.begin(), r.excluded.end(), static_cast<int>(c)) !=
            r.excluded.end();
        out << "{\"type\":\"class\",\"id\":" << c << ",\"tp\":" << r.tp[c] << ",\"fp\":" << r.fp[c]
            << ",\"fn\":" << r.fn[c] << ",\"iou\":" << r.iou[c]
            << ",\"excluded\":" << (excluded ? "true" : "false") << "}\n";
    }
    out << "{\"type\":\"summary\",\"miou\":" << r.miou << ",\"episodes\":" << r.episodes
        << ",\"wall_seconds\":" << r.wall_seconds << "}\n";
}

ZeroShotResult zero_shot_infer(Model& m, const PointCloud& query,
                               const std::vector<std::string>& class_names, double sched_t) {
    Episode ep;
    ep.n_way = static_cast<int>(class_names.size());
    ep.k_shot = 0;
    ep.query = query;
    ep.class_names = class_names;

    Tape t;
    Rng rng(0);
    ForwardResult f = episode_forward(t, m, ep, sched_t, rng, true, false);
    ZeroShotResult out;
    out.probs = t.val(f.probs);
    for (int i = 0; i < out.probs.rows(); ++i) {
        int pred = 0;
        for (int c = 1; c < out.probs.cols(); ++c)
            if (out.probs.at(i, c) > out.probs.at(i, pred)) pred = c;
        out.labels.push_back(pred);
    }
    return out;
}

namespace {

std::uint64_t spread_bits(std::uint32_t v) {
    std::uint64_t x = v & 0x1fffff;
    x = (x | x << 32) & 0x1f00000000ffffull;
    x = (x | x << 16) & 0x1f0000ff0000ffull;
    x = (x | x << 8) & 0x100f00f00f00f00full;
    x = (x | x << 4) & 0x10c30c30c30c30c3ull;
    x = (x | x << 2) & 0x1249249249249249ull;
    return x;
}

std::uint64_t morton(double x, double y, double z) {
    auto q = [](double v) {
        return static_cast<std::uint32_t>(std::min(1.0, std::max(0.0, v)) * 2097151.0);
    };
    return spread_bits(q(x)) | spread_bits(q(y)) << 1 | spread_bits(q(z)) << 2;
}

}  // namespace

std::vector<double> spectrum_profile(const Tensor& feats, const PointCloud& cloud) {
    const int m = feats.rows(), d = feats.cols();
    if (cloud.size() != m)
        throw std::invalid_argument("spectrum_profile: cloud/feature row mismatch");

    std::array<double, 3> lo = cloud.xyz[0], hi = cloud.xyz[0];
    for (const auto& p : cloud.xyz)
        for (int c = 0; c < 3; ++c) {
            lo[c] = std::min(lo[c], p[c]);
            hi[c] = std::max(hi[c], p[c]);
        }
    std::vector<int> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::uint64_t> code(m);
    for (int i = 0; i < m; ++i) {
        std::array<double, 3> u;
        for (int c = 0; c < 3; ++c) {
            const double span = hi[c] - lo[c];
            u[c] = span > 0.0 ? (cloud.xyz[i][c] - lo[c]) / span : 0.0;
        }
        code[i] = morton(u[0], u[1], u[2]);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return code[a] < code[b]; });

    const int bins = m / 2 + 1;
    std::vector<double> profile(bins, 0.0);
    const double two_pi = 6.283185307179586;
    for (int c = 0; c < d; ++c) {
        for (int k = 0; k < bins; ++k) {
            double re = 0.0, im = 0.0;
            for (int i = 0; i < m; ++i) {
                const double v = feats.at(order[i], c);
                const double ang = two_pi * k * i / m;
                re += v * std::cos(ang);
                im -= v * std::sin(ang);
            }
            profile[k] += std::sqrt(re * re + im * im) / d;
        }
    }
    return profile;
}

void write_spectrum(const std::vector<double>& profile, std::ostream& out) {
    out.precision(17);
    out << "frequency_bin,magnitude\n";
    for (std::size_t k = 0; k < profile.size(); ++k) out << k << "," << profile[k] << "\n";
}

ParamReport param_count_report(const ParamStore& store) {
    ParamReport r;
    for (const std::string& mod : store.modules())
        r.per_module.push_back({mod, store.scalar_count(mod)});
    r.total = store.scalar_count();
    return r;
}

void write_param_report(const ParamReport& r, std::ostream& out) {
    for (const auto& [mod, n] : r.per_module) out << mod << " " << n << "\n";
    out << "total " << r.total << "\n";
}

}  // namespace epseg
