#include "epseg/episode.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>

namespace epseg {

CorpusPair build_synthetic_corpus(std::uint64_t seed, int n_scenes, int n_classes,
                                  double block_size, int n_points) {
    if (n_classes < 2) throw std::invalid_argument("build_synthetic_corpus: need >= 2 classes");
    Rng rng(seed);
    std::vector<PointCloud> blocks;
    std::map<int, std::string> names;
    for (int s = 0; s < n_scenes; ++s) {
        SceneSpec spec = make_scene_spec(seed * 1000003ULL + static_cast<std::uint64_t>(s),
                                         n_classes);
        PointCloud scene = generate_scene(spec);
        names = scene.class_names;
        for (auto& b : split_and_sample(scene, block_size, n_points, rng))
            blocks.push_back(std::move(b));
    }
    CorpusPair pair;
    std::vector<int> train_classes, test_classes;
    for (int c = 1; c <= n_classes; ++c)
        (c <= n_classes / 2 ? train_classes : test_classes).push_back(c);
    pair.train = corpus_from_blocks(blocks, train_classes);
    pair.train.class_names = names;
    pair.test = corpus_from_blocks(std::move(blocks), test_classes);
    pair.test.class_names = names;
    return pair;
}

Corpus corpus_from_blocks(std::vector<PointCloud> blocks, std::vector<int> classes) {
    Corpus c;
    c.blocks = std::move(blocks);
    c.classes = std::move(classes);
    if (!c.blocks.empty()) c.class_names = c.blocks[0].class_names;
    return c;
}

namespace {

int fg_count(const PointCloud& block, int cls) {
    int n = 0;
    for (int l : block.labels)
        if (l == cls) ++n;
    return n;
}

PointCloud shuffled(const PointCloud& cloud, Rng& rng, std::vector<int>* perm_out) {
    std::vector<int> perm(cloud.size());
    for (int i = 0; i < cloud.size(); ++i) perm[i] = i;
    rng.shuffle(perm);
    PointCloud out;
    out.class_names = cloud.class_names;
    out.xyz.reserve(cloud.size());
    for (int i : perm) {
        out.xyz.push_back(cloud.xyz[i]);
        out.rgb.push_back(cloud.rgb[i]);
        out.labels.push_back(cloud.labels[i]);
    }
    if (perm_out) *perm_out = std::move(perm);
    return out;
}

}  // namespace

Episode sample_episode(const Corpus& corpus, int n_way, int k_shot, Rng& rng) {
    // eligibility: block holds at least min_fg_points of the class
    std::map<int, std::vector<int>> eligible;
    for (int cls : corpus.classes)
        for (std::size_t b = 0; b < corpus.blocks.size(); ++b)
            if (fg_count(corpus.blocks[b], cls) >= corpus.min_fg_points)
                eligible[cls].push_back(static_cast<int>(b));

    std::vector<int> usable;
    for (int cls : corpus.classes)
        if (static_cast<int>(eligible[cls].size()) >= k_shot + 1) usable.push_back(cls);
    if (static_cast<int>(usable.size()) < n_way)
        throw std::runtime_error("sample_episode: only " + std::to_string(usable.size()) +
                                 " classes have >= " + std::to_string(k_shot + 1) +
                                 " eligible blocks, need " + std::to_string(n_way));

    for (int attempt = 0; attempt < 64; ++attempt) {
        std::vector<int> classes = usable;
        rng.shuffle(classes);
        classes.resize(n_way);

        Episode ep;
        ep.n_way = n_way;
        ep.k_shot = k_shot;
        ep.support.resize(n_way);
        ep.masks.resize(n_way);
        std::vector<int> used;
        bool ok = true;
        for (int n = 0; n < n_way && ok; ++n) {
            std::vector<int> cand = eligible[classes[n]];
            rng.shuffle(cand);
            int taken = 0;
            for (int b : cand) {
                if (std::find(used.begin(), used.end(), b) != used.end()) continue;
                used.push_back(b);
                PointCloud sc = shuffled(corpus.blocks[b], rng, nullptr);
                std::vector<std::uint8_t> mask(sc.size());
                for (int i = 0; i < sc.size(); ++i) mask[i] = sc.labels[i] == classes[n] ? 1 : 0;
                ep.support[n].push_back(std::move(sc));
                ep.masks[n].push_back(std::move(mask));
                if (++taken == k_shot) break;
            }
            ok = taken == k_shot;
        }
        if (!ok) continue;

        // query: any unused block holding at least one episode class
        std::vector<int> qcand;
        for (std::size_t b = 0; b < corpus.blocks.size(); ++b) {
            if (std::find(used.begin(), used.end(), static_cast<int>(b)) != used.end()) continue;
            for (int n = 0; n < n_way; ++n)
                if (fg_count(corpus.blocks[b], classes[n]) >= corpus.min_fg_points) {
                    qcand.push_back(static_cast<int>(b));
                    break;
                }
        }
        if (qcand.empty()) continue;
        const int qb = qcand[rng.below(static_cast<int>(qcand.size()))];
        ep.query = shuffled(corpus.blocks[qb], rng, nullptr);
        ep.query_labels.resize(ep.query.size(), 0);
        bool any_fg = false;
        for (int i = 0; i < ep.query.size(); ++i)
            for (int n = 0; n < n_way; ++n)
                if (ep.query.labels[i] == classes[n]) {
                    ep.query_labels[i] = n + 1;
                    any_fg = true;
                }
        if (!any_fg) continue;  // background-only query: resample

        for (int n = 0; n < n_way; ++n)
            ep.class_names.push_back(corpus.class_names.at(classes[n]));
        return ep;
    }
    throw std::runtime_error("sample_episode: failed to draw a valid episode");
}

}  // namespace epseg
