#pragma once

#include <cstdint>

#include "epseg/backbone.hpp"
#include "epseg/drpe.hpp"
#include "epseg/episode.hpp"
#include "epseg/lgpe.hpp"
#include "epseg/losses.hpp"
#include "epseg/params.hpp"
#include "epseg/prototypes.hpp"
#include "epseg/proera.hpp"

namespace epseg {

struct ModelConfig {
    BackboneConfig backbone;
    int n_p = 100;
    int n_r = 3;
    int z = 3;
    LgpeConfig lgpe;
    DrpeConfig drpe;
    LossWeights loss;
    int con_max_pairs = 64;

    bool use_proera = true;
    bool use_lgpe = true;
    bool use_drpe = true;
    bool use_registers = true;
    bool use_proto_tokens = true;
    bool use_r_e = true;
    bool use_r_c = true;
    bool use_l_con = true;
    bool use_l_align = true;
    // spectrum ablation: ProERA stream output replaced by its token-mean
    bool proera_lowpass = false;
};

struct Model {
    ModelConfig cfg;
    ParamStore store;
    TextEmbeddingTable table;
    std::uint64_t text_seed = 0;

    // instrumentation
    long support_reads = 0;
    int zero_norm_warnings = 0;
    int con_warnings = 0;
};

void init_model(Model& m, Rng& rng);

struct ForwardResult {
    Bound bound;
    Var query_feats;   // backbone output, pre-decoder
    Var decoded_feats;  // query stream after the decoder stack
    Var probs;          // M x (N+1)
    Var seg, con, align, total;  // invalid unless with_losses
};

// Runs one episode end to end. sched_t is the fusion-schedule progress
// (iterations / t_unit). zero_shot skips every touch of support data and
// seeds the prototype tokens from projected text embeddings only.
ForwardResult episode_forward(Tape& t, Model& m, const Episode& ep, double sched_t, Rng& rng,
                              bool zero_shot, bool with_losses);

}  // namespace epseg
