#include "epseg/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace epseg {

namespace {

std::string block_prefix(int i) { return "decoder.b" + std::to_string(i); }

}  // namespace

void init_model(Model& m, Rng& rng) {
    const int d = m.cfg.backbone.d;
    const int d_text = m.cfg.lgpe.d_text;
    if (m.table.entries.empty())
        m.table.d_text = d_text;
    else if (m.table.d_text != d_text)
        throw std::invalid_argument("init_model: table D_text " + std::to_string(m.table.d_text) +
                                    " != config D_text " + std::to_string(d_text));
    init_backbone(m.store, m.cfg.backbone, rng);
    init_lgpe(m.store, d_text, d, rng);
    m.store.add("lgpe", "align.w", init_linear(d, d_text, rng));
    m.store.add("lgpe", "bg_text",
                init_normal(1, d_text, 1.0 / std::sqrt(static_cast<double>(d_text)), rng));
    init_registers(m.store, "decoder", "q_reg", m.cfg.n_r, d, rng);
    init_registers(m.store, "decoder", "s_reg", m.cfg.n_r, d, rng);
    for (int i = 0; i < m.cfg.z; ++i) {
        init_proera(m.store, block_prefix(i) + ".proera_q", d, rng);
        init_proera(m.store, block_prefix(i) + ".proera_p", d, rng);
        init_cra(m.store, block_prefix(i) + ".cra_q", d, rng);
        init_cra(m.store, block_prefix(i) + ".cra_p", d, rng);
    }
}

ForwardResult episode_forward(Tape& t, Model& m, const Episode& ep, double sched_t, Rng& rng,
                              bool zero_shot, bool with_losses) {
    const ModelConfig& cfg = m.cfg;
    const int d = cfg.backbone.d;
    const int n_way = ep.n_way;
    const int n_cls = n_way + 1;

    ForwardResult r;
    r.bound = bind(t, m.store);
    const Bound& p = r.bound;

    Var xq = encode(p, input_channels(ep.query), cfg.backbone);
    r.query_feats = xq;
    const int mq = t.val(xq).rows();

    // text prototypes: learnable background row + table rows for the N classes
    Var p_text;
    Var text_fg;
    if (cfg.use_lgpe || zero_shot) {
        Tensor t_fg = m.table.matrix(ep.class_names, m.text_seed, true);
        text_fg = t.constant(t_fg);
        p_text = project_text(p, t.concat_rows({p("lgpe", "bg_text"), text_fg}));
    }

    // support stream
    Var xs, p_raw;
    std::vector<int> s_labels;
    MultiPrototype mp;
    Var mp_feats;
    if (!zero_shot) {
        std::vector<Var> feats;
        for (int n = 0; n < n_way; ++n) {
            for (int k = 0; k < ep.k_shot; ++k) {
                ++m.support_reads;
                feats.push_back(encode(p, input_channels(ep.support[n][k]), cfg.backbone));
                for (std::uint8_t fg : ep.masks[n][k]) s_labels.push_back(fg ? n + 1 : 0);
            }
        }
        xs = feats.size() == 1 ? feats[0] : t.concat_rows(feats);
        mp = multi_prototype_sample(t, xs, s_labels, n_cls, cfg.n_p);
        mp_feats = mp.features;
        std::vector<int> no_fallback(n_cls, 0);
        p_raw = t.group_mean_rows(mp.features, mp.labels, n_cls, no_fallback);
    }

    Var q_reg = cfg.use_registers && cfg.n_r > 0 ? p("decoder", "q_reg") : Var{};
    Var s_reg = cfg.use_registers && cfg.n_r > 0 ? p("decoder", "s_reg") : Var{};
    Var p_token = zero_shot ? p_text : p_raw;

    for (int i = 0; i < cfg.z; ++i) {
        const std::string base = block_prefix(i);
        Var proera_tokens = cfg.use_proto_tokens ? p_token : Var{};

        Var p_tilde = p_token;
        if (cfg.use_proera) {
            ProeraOut oq = proera_forward(p, base + ".proera_q", xq, q_reg, proera_tokens);
            xq = oq.stream;
            if (oq.registers.valid()) q_reg = oq.registers;
            if (!zero_shot) {
                ProeraOut op = proera_forward(p, base + ".proera_p", mp_feats, s_reg,
                                              proera_tokens);
                mp_feats = op.stream;
                if (op.registers.valid()) s_reg = op.registers;
                if (op.protos.valid()) p_tilde = op.protos;
            }
            if (cfg.proera_lowpass)
                xq = t.add_rowvec(t.constant(Tensor::zeros({mq, d})), t.mean_rows(xq));
        }

        Var fused;
        if (zero_shot) {
            fused = i == 0 ? p_text : p_token;
        } else if (!cfg.use_lgpe) {
            fused = p_raw;
        } else {
            std::vector<int> no_fallback(n_cls, 0);
            Var p_dyn = t.group_mean_rows(mp_feats, mp.labels, n_cls, no_fallback);
            fused = fuse_prototypes(t, p_tilde, p_raw, p_dyn, p_text,
                                    fusion_weights(sched_t, cfg.lgpe));
        }

        Tensor rel;
        if (cfg.use_drpe && (cfg.use_r_e || cfg.use_r_c)) {
            Drpe dr = compute_drpe(t.val(xq), t.val(fused), cfg.drpe);
            if (cfg.use_r_e && cfg.use_r_c)
                rel = std::move(dr.r);
            else if (cfg.use_r_e)
                rel = std::move(dr.r_e);
            else
                rel = std::move(dr.r_c);
        } else {
            rel = Tensor::zeros({mq * n_cls, d});
        }

        Var xq2 = cra_cross_attention(t, xq, fused, rel, p(base + ".cra_q", "wq"),
                                      p(base + ".cra_q", "wk"), p(base + ".cra_q", "wv"),
                                      p(base + ".cra_q", "wo"));
        Var p2 = cra_cross_attention(t, fused, xq2, rel_transpose(rel, mq, n_cls),
                                     p(base + ".cra_p", "wq"), p(base + ".cra_p", "wk"),
                                     p(base + ".cra_p", "wv"), p(base + ".cra_p", "wo"));
        xq = xq2;
        p_token = p2;
    }

    r.decoded_feats = xq;
    r.probs = predict(t, xq, p_token, &m.zero_norm_warnings);

    if (with_losses) {
        if (zero_shot)
            throw std::invalid_argument("episode_forward: losses need the support stream");
        r.seg = seg_loss(t, r.probs, ep.query_labels);
        r.con = cfg.use_l_con
                    ? con_loss(t, xs, s_labels, r.query_feats, ep.query_labels, cfg.loss.tau,
                               rng, cfg.con_max_pairs, &m.con_warnings)
                    : t.constant(Tensor::scalar(0.0));
        r.align = cfg.use_l_align && cfg.use_lgpe
                      ? align_loss(t, t.slice_rows(p_raw, 1, n_way), text_fg,
                                   p("lgpe", "align.w"))
                      : t.constant(Tensor::scalar(0.0));
        LossWeights w = cfg.loss;
        if (!cfg.use_l_con) w.lambda_con = 0.0;
        if (!(cfg.use_l_align && cfg.use_lgpe)) w.lambda_align = 0.0;
        r.total = total_loss(t, r.seg, r.con, r.align, w);
    }
    return r;
}

}  // namespace epseg
