// Command-line front end: datagen, train, eval, zeroshot, spectrum, params.

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "epseg/epseg.hpp"

namespace {

struct CorpusFlags {
    std::uint64_t seed = 1;
    int scenes = 8;
    int classes = 4;
    double block_size = 2.0;
    int points = 512;
};

void add_corpus_flags(CLI::App* c, CorpusFlags& f) {
    c->add_option("--corpus-seed", f.seed, "Synthetic corpus seed");
    c->add_option("--scenes", f.scenes, "Number of synthetic scenes");
    c->add_option("--classes", f.classes, "Number of foreground classes");
    c->add_option("--block-size", f.block_size, "Block side length in meters");
    c->add_option("--points", f.points, "Points per block (M)");
}

void add_model_flags(CLI::App* c, epseg::ModelConfig& m) {
    c->add_option("--d", m.backbone.d, "Feature dimension D");
    c->add_option("--knn", m.backbone.k, "Backbone kNN neighborhood size");
    c->add_option("--backbone-blocks", m.backbone.n_blocks, "EdgeConv block count");
    c->add_option("--n-p", m.n_p, "Prototypes per class");
    c->add_option("--n-r", m.n_r, "Register tokens per stream");
    c->add_option("--z", m.z, "Decoder block count Z");
    c->add_option("--d-text", m.lgpe.d_text, "Text embedding dimension");
    c->add_option("--t-unit", m.lgpe.t_unit, "Iterations per fusion-schedule time unit");
    c->add_flag("--no-proera", [&m](std::int64_t) { m.use_proera = false; },
                "Disable the register attention stage");
    c->add_flag("--no-lgpe", [&m](std::int64_t) { m.use_lgpe = false; },
                "Disable language-guided prototype fusion");
    c->add_flag("--no-drpe", [&m](std::int64_t) { m.use_drpe = false; },
                "Disable relative position encoding");
    c->add_flag("--no-registers", [&m](std::int64_t) { m.use_registers = false; },
                "Drop register tokens");
    c->add_flag("--no-proto-tokens", [&m](std::int64_t) { m.use_proto_tokens = false; },
                "Drop prototype tokens from attention input");
    c->add_flag("--no-r-e", [&m](std::int64_t) { m.use_r_e = false; },
                "Drop the Euclidean relative term");
    c->add_flag("--no-r-c", [&m](std::int64_t) { m.use_r_c = false; },
                "Drop the cosine relative term");
    c->add_flag("--no-l-con", [&m](std::int64_t) { m.use_l_con = false; },
                "Drop the contrastive loss");
    c->add_flag("--no-l-align", [&m](std::int64_t) { m.use_l_align = false; },
                "Drop the text alignment loss");
    c->add_flag("--lowpass", [&m](std::int64_t) { m.proera_lowpass = true; },
                "Replace the attention stream output by its token mean");
}

void load_embeddings(epseg::Model& m, const std::string& path) {
    if (!path.empty()) m.table = epseg::load_table(path);
    if (m.table.entries.empty())
        m.table.d_text = m.cfg.lgpe.d_text;
    else
        m.cfg.lgpe.d_text = m.table.d_text;
}

int run_datagen(std::uint64_t seed, int scenes, int classes, const std::string& out_dir) {
    for (int i = 0; i < scenes; ++i) {
        epseg::SceneSpec spec =
            epseg::make_scene_spec(seed + static_cast<std::uint64_t>(i), classes);
        epseg::PointCloud cloud = epseg::generate_scene(spec);
        const std::string path = out_dir + "/scene_" + std::to_string(i) + ".epc";
        epseg::write_cloud(cloud, path);
        std::cout << path << " " << cloud.size() << " points\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Few-shot point cloud segmentation"};
    app.require_subcommand(1);

    // datagen
    auto* dg = app.add_subcommand("datagen", "Generate synthetic scenes as .epc files");
    std::uint64_t dg_seed = 1;
    int dg_scenes = 8, dg_classes = 4;
    std::string dg_out = ".";
    dg->add_option("--seed", dg_seed, "Scene seed base");
    dg->add_option("--scenes", dg_scenes, "Number of scenes");
    dg->add_option("--classes", dg_classes, "Number of foreground classes");
    dg->add_option("--out", dg_out, "Output directory")->required();

    // train
    auto* tr = app.add_subcommand("train", "Episodic training on a synthetic corpus");
    epseg::TrainConfig tc;
    CorpusFlags tr_corpus;
    std::string tr_metrics, tr_ckpt, tr_report, tr_embeds;
    std::uint64_t tr_text_seed = 0;
    tr->add_option("--seed", tc.seed, "Training seed");
    tr->add_option("--iterations", tc.iterations, "Training iterations");
    tr->add_option("--n-way", tc.n_way, "Episode classes N");
    tr->add_option("--k-shot", tc.k_shot, "Support shots K");
    tr->add_option("--eval-episodes", tc.eval_episodes, "Episodes for the post-training eval");
    tr->add_option("--main-lr", tc.main_lr.lr0, "Main group learning rate");
    tr->add_option("--main-decay-step", tc.main_lr.decay_step, "Main group decay step");
    tr->add_option("--main-decay-ratio", tc.main_lr.decay_ratio, "Main group decay ratio");
    tr->add_option("--backbone-lr", tc.backbone_lr.lr0, "Backbone learning rate");
    tr->add_option("--backbone-decay-step", tc.backbone_lr.decay_step, "Backbone decay step");
    tr->add_option("--backbone-decay-ratio", tc.backbone_lr.decay_ratio, "Backbone decay ratio");
    tr->add_option("--weight-decay", tc.weight_decay, "Decoupled weight decay");
    tr->add_option("--clip-norm", tc.clip_norm, "Global gradient-norm clip (0 = off)");
    tr->add_option("--aug-jitter", tc.aug_jitter, "Training xyz jitter stddev (0 = off)");
    tr->add_option("--aug-scale", tc.aug_scale, "Training scale range half-width (0 = off)");
    tr->add_option("--aug-color", tc.aug_color, "Training rgb noise stddev (0 = off)");
    add_corpus_flags(tr, tr_corpus);
    add_model_flags(tr, tc.model);
    tr->add_option("--text-embeddings", tr_embeds, "EPT1 embedding table path");
    tr->add_option("--text-seed", tr_text_seed, "Seed for synthetic text embeddings");
    tr->add_option("--metrics", tr_metrics, "Per-iteration metrics CSV path");
    tr->add_option("--checkpoint", tr_ckpt, "Checkpoint output path");
    tr->add_option("--report", tr_report, "Post-training eval report path (JSON lines)");

    // eval
    auto* ev = app.add_subcommand("eval", "m-IoU evaluation from a checkpoint");
    epseg::ModelConfig ev_model;
    CorpusFlags ev_corpus;
    std::string ev_ckpt, ev_report, ev_embeds;
    std::uint64_t ev_seed = 1, ev_text_seed = 0;
    int ev_episodes = 100, ev_n_way = 2, ev_k_shot = 1;
    double ev_sched_t = 0.0;
    bool ev_train_split = false;
    ev->add_option("--checkpoint", ev_ckpt, "Checkpoint path")->required();
    ev->add_option("--episodes", ev_episodes, "Evaluation episodes");
    ev->add_option("--n-way", ev_n_way, "Episode classes N");
    ev->add_option("--k-shot", ev_k_shot, "Support shots K");
    ev->add_option("--seed", ev_seed, "Episode stream seed");
    ev->add_option("--sched-t", ev_sched_t, "Fusion schedule progress t");
    ev->add_flag("--train-split", ev_train_split, "Evaluate on the training split");
    add_corpus_flags(ev, ev_corpus);
    add_model_flags(ev, ev_model);
    ev->add_option("--text-embeddings", ev_embeds, "EPT1 embedding table path");
    ev->add_option("--text-seed", ev_text_seed, "Seed for synthetic text embeddings");
    ev->add_option("--report", ev_report, "Report output path (JSON lines)");

    // zeroshot
    auto* zs = app.add_subcommand("zeroshot", "Support-free inference from class names");
    epseg::ModelConfig zs_model;
    std::string zs_ckpt, zs_cloud, zs_embeds, zs_out;
    std::vector<std::string> zs_classes;
    std::uint64_t zs_text_seed = 0;
    double zs_sched_t = 0.0;
    zs->add_option("--checkpoint", zs_ckpt, "Checkpoint path")->required();
    zs->add_option("--cloud", zs_cloud, "Query cloud (.epc)")->required();
    zs->add_option("--class", zs_classes, "Foreground class name (repeatable)")->required();
    zs->add_option("--sched-t", zs_sched_t, "Fusion schedule progress t");
    add_model_flags(zs, zs_model);
    zs->add_option("--text-embeddings", zs_embeds, "EPT1 embedding table path");
    zs->add_option("--text-seed", zs_text_seed, "Seed for synthetic text embeddings");
    zs->add_option("--out", zs_out, "Predicted labels output path (one per line)");

    // spectrum
    auto* sp = app.add_subcommand("spectrum", "Spatial frequency profile of decoded features");
    epseg::ModelConfig sp_model;
    CorpusFlags sp_corpus;
    std::string sp_ckpt, sp_embeds, sp_out;
    std::uint64_t sp_seed = 1, sp_text_seed = 0;
    int sp_n_way = 2, sp_k_shot = 1;
    double sp_sched_t = 0.0;
    sp->add_option("--checkpoint", sp_ckpt, "Checkpoint path")->required();
    sp->add_option("--seed", sp_seed, "Episode seed");
    sp->add_option("--n-way", sp_n_way, "Episode classes N");
    sp->add_option("--k-shot", sp_k_shot, "Support shots K");
    sp->add_option("--sched-t", sp_sched_t, "Fusion schedule progress t");
    add_corpus_flags(sp, sp_corpus);
    add_model_flags(sp, sp_model);
    sp->add_option("--text-embeddings", sp_embeds, "EPT1 embedding table path");
    sp->add_option("--text-seed", sp_text_seed, "Seed for synthetic text embeddings");
    sp->add_option("--out", sp_out, "Profile CSV output path");

    // params
    auto* pr = app.add_subcommand("params", "Per-module parameter counts of a checkpoint");
    std::string pr_ckpt;
    pr->add_option("--checkpoint", pr_ckpt, "Checkpoint path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (dg->parsed()) return run_datagen(dg_seed, dg_scenes, dg_classes, dg_out);

        if (tr->parsed()) {
            epseg::CorpusPair corpus = epseg::build_synthetic_corpus(
                tr_corpus.seed, tr_corpus.scenes, tr_corpus.classes, tr_corpus.block_size,
                tr_corpus.points);
            epseg::Model m;
            m.cfg = tc.model;
            m.text_seed = tr_text_seed;
            load_embeddings(m, tr_embeds);
            tc.model = m.cfg;

            std::ofstream metrics;
            if (!tr_metrics.empty()) {
                metrics.open(tr_metrics);
                if (!metrics) throw std::runtime_error("cannot open " + tr_metrics);
            }
            epseg::TrainStats stats =
                epseg::train(m, tc, corpus.train, metrics.is_open() ? &metrics : nullptr);
            std::cout << "trained " << tc.iterations << " iterations, " << stats.skipped_steps
                      << " skipped, final t=" << stats.final_sched_t << "\n";

            if (!tr_ckpt.empty()) {
                epseg::save_checkpoint(m.store, tr_ckpt);
                std::cout << "checkpoint " << tr_ckpt << " (" << m.store.scalar_count()
                          << " scalars)\n";
            }
            if (!tr_report.empty()) {
                epseg::EvalReport rep =
                    epseg::evaluate(m, corpus.test, tc.n_way, tc.k_shot, tc.eval_episodes,
                                    tc.seed + 9999, stats.final_sched_t);
                std::ofstream out(tr_report);
                if (!out) throw std::runtime_error("cannot open " + tr_report);
                epseg::write_eval_report(rep, out);
                std::cout << "test m-IoU " << rep.miou << " over " << rep.episodes
                          << " episodes\n";
            }
            return 0;
        }

        if (ev->parsed()) {
            epseg::CorpusPair corpus = epseg::build_synthetic_corpus(
                ev_corpus.seed, ev_corpus.scenes, ev_corpus.classes, ev_corpus.block_size,
                ev_corpus.points);
            epseg::Model m;
            m.cfg = ev_model;
            m.text_seed = ev_text_seed;
            load_embeddings(m, ev_embeds);
            m.store = epseg::load_checkpoint(ev_ckpt);
            epseg::EvalReport rep =
                epseg::evaluate(m, ev_train_split ? corpus.train : corpus.test, ev_n_way,
                                ev_k_shot, ev_episodes, ev_seed, ev_sched_t);
            if (!ev_report.empty()) {
                std::ofstream out(ev_report);
                if (!out) throw std::runtime_error("cannot open " + ev_report);
                epseg::write_eval_report(rep, out);
            } else {
                epseg::write_eval_report(rep, std::cout);
            }
            std::cout << "m-IoU " << rep.miou << " over " << rep.episodes << " episodes\n";
            return 0;
        }

        if (zs->parsed()) {
            epseg::Model m;
            m.cfg = zs_model;
            m.text_seed = zs_text_seed;
            load_embeddings(m, zs_embeds);
            m.store = epseg::load_checkpoint(zs_ckpt);
            epseg::PointCloud cloud = epseg::read_cloud(zs_cloud);
            epseg::ZeroShotResult res =
                epseg::zero_shot_infer(m, cloud, zs_classes, zs_sched_t);

            std::vector<long> counts(zs_classes.size() + 1, 0);
            for (int l : res.labels) ++counts[l];
            std::cout << "background " << counts[0] << "\n";
            for (std::size_t c = 0; c < zs_classes.size(); ++c)
                std::cout << zs_classes[c] << " " << counts[c + 1] << "\n";
            if (!zs_out.empty()) {
                std::ofstream out(zs_out);
                if (!out) throw std::runtime_error("cannot open " + zs_out);
                for (int l : res.labels) out << l << "\n";
            }
            std::cout << "support reads " << m.support_reads << "\n";
            return 0;
        }

        if (sp->parsed()) {
            epseg::CorpusPair corpus = epseg::build_synthetic_corpus(
                sp_corpus.seed, sp_corpus.scenes, sp_corpus.classes, sp_corpus.block_size,
                sp_corpus.points);
            epseg::Model m;
            m.cfg = sp_model;
            m.text_seed = sp_text_seed;
            load_embeddings(m, sp_embeds);
            m.store = epseg::load_checkpoint(sp_ckpt);

            epseg::Rng rng(sp_seed);
            epseg::Episode ep = epseg::sample_episode(corpus.test, sp_n_way, sp_k_shot, rng);
            epseg::Tape t;
            epseg::ForwardResult f =
                epseg::episode_forward(t, m, ep, sp_sched_t, rng, false, false);
            std::vector<double> profile =
                epseg::spectrum_profile(t.val(f.decoded_feats), ep.query);
            if (!sp_out.empty()) {
                std::ofstream out(sp_out);
                if (!out) throw std::runtime_error("cannot open " + sp_out);
                epseg::write_spectrum(profile, out);
            } else {
                epseg::write_spectrum(profile, std::cout);
            }
            return 0;
        }

        if (pr->parsed()) {
            epseg::ParamStore store = epseg::load_checkpoint(pr_ckpt);
            epseg::write_param_report(epseg::param_count_report(store), std::cout);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
