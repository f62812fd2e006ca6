#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "epseg/params.hpp"
#include "epseg/tape.hpp"

namespace epseg {

// Class name -> D_text embedding. Lookups are case-normalized; entries loaded
// from an EPT1 file or synthesized deterministically from the name.
struct TextEmbeddingTable {
    int d_text = 512;
    std::map<std::string, std::vector<double>> entries;
    std::map<std::string, std::string> provenance;  // "file" | "synthetic"

    bool has(const std::string& name) const;
    const std::vector<double>& get(const std::string& name) const;
    // resolves from the file entries, falling back to a synthetic vector
    std::vector<double> resolve(const std::string& name, std::uint64_t seed, bool allow_synth);
    // rows follow `names` order; validates a uniform dimension
    Tensor matrix(const std::vector<std::string>& names, std::uint64_t seed, bool allow_synth);
};

TextEmbeddingTable load_table(const std::string& path);
void save_table(const TextEmbeddingTable& table, const std::string& path);
std::vector<double> synth_embedding(const std::string& name, std::uint64_t seed, int d_text);

struct FusionWeights {
    double l1 = 0.0, l2 = 0.0, l3 = 0.0, l4 = 0.0;
};

struct LgpeConfig {
    std::array<double, 4> lambda_star = {1.0, 0.5, 0.7, 0.6};
    double rate = 0.5;
    double t_unit = 5000.0;  // t = iterations / t_unit
    int d_text = 512;
};

// lambda_4(t) = l4* exp(-rate t); lambda_i(t) = li* (1 - exp(-rate t)).
FusionWeights fusion_weights(double t, const LgpeConfig& cfg);

// Adds proj.w1/b1 (D_text -> D), proj.w2/b2 (D -> D) under module "lgpe".
void init_lgpe(ParamStore& store, int d_text, int d, Rng& rng);

// Eq. 4: two-layer MLP applied to rows of a (N+1) x D_text matrix.
Var project_text(const Bound& p, Var text_rows);

// Eq. 5 per-class affine blend; zero-shot overrides weights to (0,0,0,1).
Var fuse_prototypes(Tape& t, Var token, Var raw, Var dyn, Var text, const FusionWeights& w);

}  // namespace epseg
