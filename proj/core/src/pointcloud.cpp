#include "epseg/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace epseg {

void PointCloud::validate() const {
    if (size() < 1) throw std::invalid_argument("PointCloud: M must be >= 1");
    if (rgb.size() != xyz.size() || labels.size() != xyz.size())
        throw std::invalid_argument("PointCloud: field lengths disagree");
    for (const auto& p : xyz)
        for (double v : p)
            if (!std::isfinite(v)) throw std::invalid_argument("PointCloud: non-finite xyz");
    for (int l : labels)
        if (l != -1 && !class_names.count(l))
            throw std::invalid_argument("PointCloud: label " + std::to_string(l) +
                                        " not in class table");
}

namespace {

[[noreturn]] void bad_file(const std::string& what, std::int64_t offset) {
    throw std::runtime_error("EPC: " + what + " at byte offset " + std::to_string(offset));
}

struct Reader {
    std::ifstream in;
    std::int64_t off = 0;
    void read(void* dst, std::size_t n) {
        in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (in.gcount() != static_cast<std::streamsize>(n)) bad_file("truncated payload", off);
        off += static_cast<std::int64_t>(n);
    }
    std::uint32_t u32() {
        std::uint32_t v;
        read(&v, 4);
        return v;
    }
    std::uint16_t u16() {
        std::uint16_t v;
        read(&v, 2);
        return v;
    }
    float f32() {
        float v;
        read(&v, 4);
        return v;
    }
    std::int32_t i32() {
        std::int32_t v;
        read(&v, 4);
        return v;
    }
};

}  // namespace

PointCloud read_cloud(const std::string& path) {
    Reader r;
    r.in.open(path, std::ios::binary);
    if (!r.in) throw std::runtime_error("EPC: cannot open " + path);
    char magic[4];
    r.read(magic, 4);
    if (std::memcmp(magic, "EPC1", 4) != 0) bad_file("bad magic", 0);
    const std::uint32_t m = r.u32();
    if (m == 0) bad_file("M = 0 violates M >= 1", 4);
    const std::uint32_t c = r.u32();
    PointCloud cloud;
    for (std::uint32_t i = 0; i < c; ++i) {
        const int id = r.u16();
        const int len = r.u16();
        std::string name(len, '\0');
        r.read(name.data(), static_cast<std::size_t>(len));
        cloud.class_names[id] = name;
    }
    cloud.xyz.resize(m);
    cloud.rgb.resize(m);
    cloud.labels.resize(m);
    for (std::uint32_t i = 0; i < m; ++i) {
        const std::int64_t rec_off = r.off;
        for (int d = 0; d < 3; ++d) cloud.xyz[i][d] = r.f32();
        for (int d = 0; d < 3; ++d) cloud.rgb[i][d] = r.f32();
        const std::int32_t label = r.i32();
        if (label != -1 && !cloud.class_names.count(label))
            bad_file("label " + std::to_string(label) + " outside class table", rec_off + 24);
        cloud.labels[i] = label;
    }
    return cloud;
}

void write_cloud(const PointCloud& cloud, const std::string& path) {
    cloud.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("EPC: cannot write " + path);
    out.write("EPC1", 4);
    auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<char*>(&v), 4); };
    auto put_u16 = [&](std::uint16_t v) { out.write(reinterpret_cast<char*>(&v), 2); };
    put_u32(static_cast<std::uint32_t>(cloud.size()));
    put_u32(static_cast<std::uint32_t>(cloud.class_names.size()));
    for (const auto& [id, name] : cloud.class_names) {
        put_u16(static_cast<std::uint16_t>(id));
        put_u16(static_cast<std::uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
    }
    for (int i = 0; i < cloud.size(); ++i) {
        float rec[6] = {static_cast<float>(cloud.xyz[i][0]), static_cast<float>(cloud.xyz[i][1]),
                        static_cast<float>(cloud.xyz[i][2]), static_cast<float>(cloud.rgb[i][0]),
                        static_cast<float>(cloud.rgb[i][1]), static_cast<float>(cloud.rgb[i][2])};
        out.write(reinterpret_cast<char*>(rec), sizeof(rec));
        std::int32_t label = cloud.labels[i];
        out.write(reinterpret_cast<char*>(&label), 4);
    }
    if (!out) throw std::runtime_error("EPC: write failed for " + path);
}

namespace {

std::array<double, 3> sample_point(const Primitive& p, Rng& rng) {
    const auto& c = p.center;
    const auto& s = p.size;
    switch (p.kind) {
        case PrimitiveKind::Plane:
            return {c[0] + rng.uniform(-0.5, 0.5) * s[0], c[1] + rng.uniform(-0.5, 0.5) * s[1],
                    c[2]};
        case PrimitiveKind::Box: {
            // pick a face weighted by area, then sample it uniformly
            const double ax = s[1] * s[2], ay = s[0] * s[2], az = s[0] * s[1];
            const double total = 2.0 * (ax + ay + az);
            double u = rng.uniform(0.0, total);
            double px = rng.uniform(-0.5, 0.5) * s[0];
            double py = rng.uniform(-0.5, 0.5) * s[1];
            double pz = rng.uniform(-0.5, 0.5) * s[2];
            if (u < 2.0 * ax)
                px = (u < ax ? 0.5 : -0.5) * s[0];
            else if (u < 2.0 * (ax + ay))
                py = (u - 2.0 * ax < ay ? 0.5 : -0.5) * s[1];
            else
                pz = (u - 2.0 * (ax + ay) < az ? 0.5 : -0.5) * s[2];
            return {c[0] + px, c[1] + py, c[2] + pz};
        }
        case PrimitiveKind::Sphere: {
            double x, y, z, n2;
            do {
                x = rng.normal();
                y = rng.normal();
                z = rng.normal();
                n2 = x * x + y * y + z * z;
            } while (n2 < 1e-12);
            const double r = 0.5 * s[0] / std::sqrt(n2);
            return {c[0] + x * r, c[1] + y * r, c[2] + z * r};
        }
        case PrimitiveKind::Cylinder: {
            const double theta = rng.uniform(0.0, 6.283185307179586);
            const double r = 0.5 * s[0];
            return {c[0] + r * std::cos(theta), c[1] + r * std::sin(theta),
                    c[2] + rng.uniform(-0.5, 0.5) * s[2]};
        }
    }
    throw std::logic_error("unknown primitive kind");
}

}  // namespace

PointCloud generate_scene(const SceneSpec& spec) {
    if (spec.primitives.empty())
        throw std::invalid_argument("generate_scene: empty primitive inventory");
    Rng rng(spec.seed);
    PointCloud cloud;
    cloud.class_names = spec.class_names;
    for (const Primitive& p : spec.primitives) {
        if (!cloud.class_names.count(p.class_id))
            throw std::invalid_argument("generate_scene: primitive class " +
                                        std::to_string(p.class_id) + " missing from class table");
        for (int i = 0; i < p.n_points; ++i) {
            cloud.xyz.push_back(sample_point(p, rng));
            std::array<double, 3> col;
            for (int d = 0; d < 3; ++d)
                col[d] = std::clamp(p.base_color[d] + p.color_noise * rng.normal(), 0.0, 1.0);
            cloud.rgb.push_back(col);
            cloud.labels.push_back(p.class_id);
        }
    }
    cloud.validate();
    return cloud;
}

SceneSpec make_scene_spec(std::uint64_t seed, int n_classes, int points_per_primitive) {
    if (n_classes < 1) throw std::invalid_argument("make_scene_spec: need >= 1 class");
    SceneSpec spec;
    spec.seed = seed;
    spec.class_names[0] = "floor";
    for (int c = 1; c <= n_classes; ++c) spec.class_names[c] = "class_" + std::string(1, char('a' + (c - 1)));

    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    Primitive floor;
    floor.kind = PrimitiveKind::Plane;
    floor.class_id = 0;
    floor.center = {0.0, 0.0, 0.0};
    floor.size = {spec.extent, spec.extent, 0.0};
    floor.n_points = points_per_primitive * 3;
    floor.base_color = {0.45, 0.45, 0.45};
    floor.color_noise = 0.03;
    spec.primitives.push_back(floor);

    // each class keeps a stable shape and color signature across scenes
    static const PrimitiveKind kinds[4] = {PrimitiveKind::Box, PrimitiveKind::Sphere,
                                           PrimitiveKind::Cylinder, PrimitiveKind::Plane};
    const int n_objects = 4 + rng.below(3);
    for (int i = 0; i < n_objects; ++i) {
        const int cls = 1 + rng.below(n_classes);
        Primitive p;
        p.kind = kinds[(cls - 1) % 4];
        p.class_id = cls;
        const double half = 0.5 * spec.extent - 0.5;
        p.center = {rng.uniform(-half, half), rng.uniform(-half, half), rng.uniform(0.2, 0.8)};
        const double base = 0.3 + 0.05 * ((cls - 1) / 4);
        p.size = {base * rng.uniform(0.8, 1.2), base * rng.uniform(0.8, 1.2),
                  base * rng.uniform(0.8, 1.2)};
        // interleave hues over the class ids so any contiguous id split sees
        // colors spread across the whole range
        const int ci = cls - 1;
        const int hue_idx = 2 * ci < n_classes ? 2 * ci : 2 * (ci - (n_classes + 1) / 2) + 1;
        const double hue = hue_idx / static_cast<double>(n_classes);
        p.base_color = {0.25 + 0.7 * hue, 0.85 - 0.7 * hue,
                        0.3 + 0.6 * std::fabs(2.0 * hue - 1.0)};
        p.color_noise = 0.05;
        p.n_points = points_per_primitive;
        spec.primitives.push_back(p);
    }
    return spec;
}

std::vector<PointCloud> split_and_sample(const PointCloud& cloud, double block_size, int n_points,
                                         Rng& rng) {
    if (block_size <= 0.0) throw std::invalid_argument("split_and_sample: block_size must be > 0");
    if (n_points < 1) throw std::invalid_argument("split_and_sample: n_points must be >= 1");
    cloud.validate();
    double minx = cloud.xyz[0][0], miny = cloud.xyz[0][1];
    for (const auto& p : cloud.xyz) {
        minx = std::min(minx, p[0]);
        miny = std::min(miny, p[1]);
    }
    std::map<std::pair<int, int>, std::vector<int>> blocks;
    for (int i = 0; i < cloud.size(); ++i) {
        const int bx = static_cast<int>(std::floor((cloud.xyz[i][0] - minx) / block_size));
        const int by = static_cast<int>(std::floor((cloud.xyz[i][1] - miny) / block_size));
        blocks[{bx, by}].push_back(i);
    }
    std::vector<PointCloud> out;
    for (auto& [key, idx] : blocks) {
        (void)key;
        std::vector<int> pick;
        pick.reserve(n_points);
        if (static_cast<int>(idx.size()) >= n_points) {
            rng.shuffle(idx);
            pick.assign(idx.begin(), idx.begin() + n_points);
        } else {
            for (int i = 0; i < n_points; ++i) pick.push_back(idx[rng.below(static_cast<int>(idx.size()))]);
        }
        PointCloud b;
        b.class_names = cloud.class_names;
        for (int i : pick) {
            b.xyz.push_back(cloud.xyz[i]);
            b.rgb.push_back(cloud.rgb[i]);
            b.labels.push_back(cloud.labels[i]);
        }
        out.push_back(std::move(b));
    }
    return out;
}

PointCloud jitter_scale_augment(const PointCloud& cloud, double sigma, double scale, Rng& rng) {
    if (sigma < 0.0) throw std::invalid_argument("jitter_scale_augment: sigma must be >= 0");
    if (scale <= 0.0) throw std::invalid_argument("jitter_scale_augment: scale must be > 0");
    PointCloud out = cloud;
    for (auto& p : out.xyz)
        for (int d = 0; d < 3; ++d) {
            const double z = sigma > 0.0 ? sigma * rng.normal() : 0.0;
            p[d] = scale * (p[d] + z);
        }
    return out;
}

PointCloud color_jitter_augment(const PointCloud& cloud, double sigma, Rng& rng) {
    if (sigma < 0.0) throw std::invalid_argument("color_jitter_augment: sigma must be >= 0");
    PointCloud out = cloud;
    for (auto& c : out.rgb)
        for (int d = 0; d < 3; ++d)
            c[d] = std::min(1.0, std::max(0.0, c[d] + sigma * rng.normal()));
    return out;
}

}  // namespace epseg
