#include "epseg/params.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace epseg {

int ParamStore::add(std::string module, std::string name, Tensor init) {
    if (find(module, name) >= 0)
        throw std::invalid_argument("ParamStore: duplicate " + module + "." + name);
    entries_.push_back({std::move(module), std::move(name), std::move(init)});
    return count() - 1;
}

int ParamStore::find(const std::string& module, const std::string& name) const {
    for (int i = 0; i < count(); ++i)
        if (entries_[i].module == module && entries_[i].name == name) return i;
    return -1;
}

std::int64_t ParamStore::scalar_count() const {
    std::int64_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
}

std::int64_t ParamStore::scalar_count(const std::string& module) const {
    std::int64_t n = 0;
    for (const auto& e : entries_)
        if (e.module == module) n += e.value.size();
    return n;
}

std::vector<std::string> ParamStore::modules() const {
    std::vector<std::string> out;
    for (const auto& e : entries_)
        if (std::find(out.begin(), out.end(), e.module) == out.end()) out.push_back(e.module);
    return out;
}

Var Bound::operator()(const std::string& module, const std::string& name) const {
    const int i = store->find(module, name);
    if (i < 0) throw std::invalid_argument("Bound: missing parameter " + module + "." + name);
    return vars[i];
}

Bound bind(Tape& tape, const ParamStore& store) {
    Bound b;
    b.tape = &tape;
    b.store = &store;
    b.vars.reserve(store.count());
    for (int i = 0; i < store.count(); ++i) b.vars.push_back(tape.leaf(store.value(i), true));
    return b;
}

Tensor init_linear(int fan_in, int fan_out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor t({fan_in, fan_out});
    for (double& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

Tensor init_normal(int rows, int cols, double stddev, Rng& rng) {
    Tensor t({rows, cols});
    for (double& v : t.data) v = stddev * rng.normal();
    return t;
}

double LrSchedule::at(int iter) const {
    return lr0 * std::pow(decay_ratio, static_cast<double>(iter / decay_step));
}

void AdamW::step(ParamStore& store, const std::vector<Tensor>& grads, int iter) {
    if (static_cast<int>(grads.size()) != store.count())
        throw std::invalid_argument("AdamW: gradient count mismatch");
    if (m_.empty()) {
        for (int i = 0; i < store.count(); ++i) {
            m_.push_back(Tensor::zeros(store.value(i).shape));
            v_.push_back(Tensor::zeros(store.value(i).shape));
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, t_);
    const double bc2 = 1.0 - std::pow(beta2, t_);
    for (int i = 0; i < store.count(); ++i) {
        const bool bb = store.entry(i).module == "backbone";
        const double lr = (bb ? backbone_lr : main_lr).at(iter);
        Tensor& w = store.value(i);
        const Tensor& g = grads[i];
        if (!w.same_shape(g)) throw std::invalid_argument("AdamW: gradient shape mismatch");
        for (std::int64_t j = 0; j < w.size(); ++j) {
            m_[i].data[j] = beta1 * m_[i].data[j] + (1.0 - beta1) * g.data[j];
            v_[i].data[j] = beta2 * v_[i].data[j] + (1.0 - beta2) * g.data[j] * g.data[j];
            const double mh = m_[i].data[j] / bc1;
            const double vh = v_[i].data[j] / bc2;
            w.data[j] -= lr * (mh / (std::sqrt(vh) + eps) + weight_decay * w.data[j]);
        }
    }
}

namespace {

[[noreturn]] void bad_ck(const std::string& what, std::int64_t offset) {
    throw std::runtime_error("EPCK: " + what + " at byte offset " + std::to_string(offset));
}

struct CkReader {
    std::ifstream in;
    std::int64_t off = 0;
    void read(void* dst, std::size_t n) {
        in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (in.gcount() != static_cast<std::streamsize>(n)) bad_ck("truncated payload", off);
        off += static_cast<std::int64_t>(n);
    }
    std::uint32_t u32() {
        std::uint32_t v;
        read(&v, 4);
        return v;
    }
    std::string str() {
        std::uint16_t len;
        read(&len, 2);
        std::string s(len, '\0');
        read(s.data(), len);
        return s;
    }
};

void write_str(std::ofstream& out, const std::string& s) {
    const std::uint16_t len = static_cast<std::uint16_t>(s.size());
    out.write(reinterpret_cast<const char*>(&len), 2);
    out.write(s.data(), len);
}

}  // namespace

void save_checkpoint(const ParamStore& store, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("EPCK: cannot open " + path + " for writing");
    out.write("EPCK", 4);
    const std::uint32_t n = static_cast<std::uint32_t>(store.count());
    out.write(reinterpret_cast<const char*>(&n), 4);
    for (int i = 0; i < store.count(); ++i) {
        const auto& e = store.entry(i);
        write_str(out, e.module);
        write_str(out, e.name);
        const std::uint32_t rank = static_cast<std::uint32_t>(e.value.rank());
        out.write(reinterpret_cast<const char*>(&rank), 4);
        for (int d : e.value.shape) {
            const std::uint32_t dim = static_cast<std::uint32_t>(d);
            out.write(reinterpret_cast<const char*>(&dim), 4);
        }
        out.write(reinterpret_cast<const char*>(e.value.data.data()),
                  static_cast<std::streamsize>(e.value.size() * 8));
    }
    if (!out) throw std::runtime_error("EPCK: write failed for " + path);
}

ParamStore load_checkpoint(const std::string& path) {
    CkReader r;
    r.in.open(path, std::ios::binary);
    if (!r.in) throw std::runtime_error("EPCK: cannot open " + path);
    char magic[4];
    r.read(magic, 4);
    if (std::memcmp(magic, "EPCK", 4) != 0) bad_ck("bad magic", 0);
    const std::uint32_t n = r.u32();
    ParamStore store;
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string module = r.str();
        std::string name = r.str();
        const std::uint32_t rank = r.u32();
        if (rank == 0 || rank > 3) bad_ck("bad tensor rank", r.off - 4);
        std::vector<int> shape;
        std::int64_t count = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const std::uint32_t dim = r.u32();
            if (dim == 0) bad_ck("zero dimension", r.off - 4);
            shape.push_back(static_cast<int>(dim));
            count *= dim;
        }
        Tensor t(std::move(shape));
        r.read(t.data.data(), static_cast<std::size_t>(count) * 8);
        store.add(std::move(module), std::move(name), std::move(t));
    }
    return store;
}

}  // namespace epseg
