#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "epseg/model.hpp"

namespace epseg {

struct TrainConfig {
    std::uint64_t seed = 1;
    int iterations = 2000;
    int n_way = 2;
    int k_shot = 1;
    int eval_episodes = 100;
    LrSchedule main_lr{0.001, 5000, 0.5};
    LrSchedule backbone_lr{0.006, 1000, 0.5};
    double weight_decay = 1e-4;
    double clip_norm = 0.0;  // global gradient-norm clip; 0 disables
    // training-episode augmentation (0 disables each part)
    double aug_jitter = 0.0;  // xyz noise stddev (meters)
    double aug_scale = 0.0;   // uniform scale drawn from [1-s, 1+s]
    double aug_color = 0.0;   // rgb noise stddev
    ModelConfig model;
};

struct TrainStats {
    int skipped_steps = 0;
    double final_sched_t = 0.0;
};

// Episodic training loop. Writes one CSV row per iteration to `metrics` if
// given: iter, L_seg, L_con, L_align, L_total, lr_main, lr_backbone,
// lambda1..lambda4. Deterministic under (seed, config, corpus). A non-finite
// step is skipped; more than 1% skipped steps aborts.
TrainStats train(Model& m, const TrainConfig& cfg, const Corpus& corpus, std::ostream* metrics);

struct EvalReport {
    std::vector<double> iou;  // per episode-class (background first)
    std::vector<long> tp, fp, fn;
    std::vector<int> excluded;  // classes absent from every episode
    double miou = 0.0;
    int episodes = 0;
    double wall_seconds = 0.0;
};

// Argmax predictions vs truth, added into per-class counters.
void accumulate_confusion(const Tensor& probs, const std::vector<int>& labels,
                          std::vector<long>& tp, std::vector<long>& fp, std::vector<long>& fn);

// Mean IoU over classes with any counts; absent classes land in `excluded`.
double miou_from_counts(const std::vector<long>& tp, const std::vector<long>& fp,
                        const std::vector<long>& fn, std::vector<double>& iou,
                        std::vector<int>& excluded);

EvalReport evaluate(Model& m, const Corpus& corpus, int n_way, int k_shot, int n_episodes,
                    std::uint64_t seed, double sched_t);

void write_eval_report(const EvalReport& r, std::ostream& out);  // JSON lines

struct ZeroShotResult {
    std::vector<int> labels;  // hard labels in {0..N}
    Tensor probs;             // M x (N+1)
};

ZeroShotResult zero_shot_infer(Model& m, const PointCloud& query,
                               const std::vector<std::string>& class_names, double sched_t);

// Points ordered by Morton code of xyz; per-channel DFT along the point axis;
// magnitudes averaged over channels. Returns floor(M/2)+1 bins.
std::vector<double> spectrum_profile(const Tensor& feats, const PointCloud& cloud);
void write_spectrum(const std::vector<double>& profile, std::ostream& out);  // CSV

struct ParamReport {
    std::vector<std::pair<std::string, std::int64_t>> per_module;
    std::int64_t total = 0;
};

ParamReport param_count_report(const ParamStore& store);
void write_param_report(const ParamReport& r, std::ostream& out);

}  // namespace epseg
