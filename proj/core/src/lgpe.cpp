#include "epseg/lgpe.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "epseg/rng.hpp"

namespace epseg {

namespace {

std::string normalize(const std::string& name) {
    std::string out;
    for (char c : name) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return out;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

bool TextEmbeddingTable::has(const std::string& name) const {
    return entries.count(normalize(name)) > 0;
}

const std::vector<double>& TextEmbeddingTable::get(const std::string& name) const {
    auto it = entries.find(normalize(name));
    if (it == entries.end())
        throw std::invalid_argument("TextEmbeddingTable: unknown class \"" + name + "\"");
    return it->second;
}

std::vector<double> TextEmbeddingTable::resolve(const std::string& name, std::uint64_t seed,
                                                bool allow_synth) {
    const std::string key = normalize(name);
    auto it = entries.find(key);
    if (it != entries.end()) return it->second;
    if (!allow_synth)
        throw std::invalid_argument("TextEmbeddingTable: unknown class \"" + name +
                                    "\" and synthetic fallback disabled");
    std::vector<double> v = synth_embedding(key, seed, d_text);
    entries[key] = v;
    provenance[key] = "synthetic";
    return v;
}

Tensor TextEmbeddingTable::matrix(const std::vector<std::string>& names, std::uint64_t seed,
                                  bool allow_synth) {
    Tensor t({static_cast<int>(names.size()), d_text});
    for (std::size_t i = 0; i < names.size(); ++i) {
        std::vector<double> v = resolve(names[i], seed, allow_synth);
        for (int j = 0; j < d_text; ++j) t.at(static_cast<int>(i), j) = v[j];
    }
    return t;
}

TextEmbeddingTable load_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("EPT1: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("EPT1: empty file " + path);
    std::istringstream head(line);
    std::string magic;
    int d_text = 0;
    head >> magic >> d_text;
    if (magic != "EPT1" || d_text < 1)
        throw std::runtime_error("EPT1: bad header line \"" + line + "\"");

    TextEmbeddingTable table;
    table.d_text = d_text;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string name;
        ls >> name;
        std::vector<double> v;
        double x;
        while (ls >> x) v.push_back(x);
        if (static_cast<int>(v.size()) != d_text)
            throw std::runtime_error("EPT1: line " + std::to_string(lineno) + " has " +
                                     std::to_string(v.size()) + " values, expected " +
                                     std::to_string(d_text));
        const std::string key = normalize(name);
        table.entries[key] = std::move(v);
        table.provenance[key] = "file";
    }
    return table;
}

void save_table(const TextEmbeddingTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("EPT1: cannot open " + path + " for writing");
    out << "EPT1 " << table.d_text << "\n";
    out.precision(17);
    for (const auto& [name, v] : table.entries) {
        out << name;
        for (double x : v) out << " " << x;
        out << "\n";
    }
    if (!out) throw std::runtime_error("EPT1: write failed for " + path);
}

std::vector<double> synth_embedding(const std::string& name, std::uint64_t seed, int d_text) {
    Rng rng(fnv1a(normalize(name)) ^ (seed * 0x9e3779b97f4a7c15ull));
    std::vector<double> v(d_text);
    double norm = 0.0;
    for (double& x : v) {
        x = rng.normal();
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

FusionWeights fusion_weights(double t, const LgpeConfig& cfg) {
    const double decay = std::exp(-cfg.rate * t);
    FusionWeights w;
    w.l1 = cfg.lambda_star[0] * (1.0 - decay);
    w.l2 = cfg.lambda_star[1] * (1.0 - decay);
    w.l3 = cfg.lambda_star[2] * (1.0 - decay);
    w.l4 = cfg.lambda_star[3] * decay;
    return w;
}

void init_lgpe(ParamStore& store, int d_text, int d, Rng& rng) {
    store.add("lgpe", "proj.w1", init_linear(d_text, d, rng));
    store.add("lgpe", "proj.b1", Tensor::zeros({1, d}));
    store.add("lgpe", "proj.w2", init_linear(d, d, rng));
    store.add("lgpe", "proj.b2", Tensor::zeros({1, d}));
}

Var project_text(const Bound& p, Var text_rows) {
    Tape& t = *p.tape;
    Var h = t.leaky_relu(
        t.add_rowvec(t.matmul(text_rows, p("lgpe", "proj.w1")), p("lgpe", "proj.b1")), 0.2);
    return t.add_rowvec(t.matmul(h, p("lgpe", "proj.w2")), p("lgpe", "proj.b2"));
}

Var fuse_prototypes(Tape& t, Var token, Var raw, Var dyn, Var text, const FusionWeights& w) {
    Var out = t.add(t.add(t.scale(token, w.l1), t.scale(raw, w.l2)),
                    t.add(t.scale(dyn, w.l3), t.scale(text, w.l4)));
    return out;
}

}  // namespace epseg
