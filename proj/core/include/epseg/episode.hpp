#pragma once

#include <cstdint>
#include <vector>

#include "epseg/pointcloud.hpp"

namespace epseg {

// One N-way K-shot task. Query labels are remapped to {0..N} with 0 as
// background; they exist only for loss and metric code.
struct Episode {
    int n_way = 0;
    int k_shot = 0;
    std::vector<std::vector<PointCloud>> support;              // [n_way][k_shot]
    std::vector<std::vector<std::vector<std::uint8_t>>> masks;  // binary fg per shot
    PointCloud query;
    std::vector<int> query_labels;
    std::vector<std::string> class_names;  // the N episode class names
};

// Pool of fixed-size blocks restricted to one class split.
struct Corpus {
    std::vector<PointCloud> blocks;
    std::vector<int> classes;  // class ids this split may sample episodes from
    std::map<int, std::string> class_names;
    int min_fg_points = 10;  // eligibility threshold for a (block, class) pair
};

// Generates `n_scenes` synthetic scenes, splits them into blocks of
// `n_points`, and partitions the foreground classes into disjoint train/test
// splits (first half / second half).
struct CorpusPair {
    Corpus train;
    Corpus test;
};
CorpusPair build_synthetic_corpus(std::uint64_t seed, int n_scenes, int n_classes,
                                  double block_size, int n_points);

Corpus corpus_from_blocks(std::vector<PointCloud> blocks, std::vector<int> classes);

Episode sample_episode(const Corpus& corpus, int n_way, int k_shot, Rng& rng);

}  // namespace epseg
