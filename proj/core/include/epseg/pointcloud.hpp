#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "epseg/rng.hpp"

namespace epseg {

// Labeled point cloud. label -1 means unlabeled; any other label must be a
// key of class_names.
struct PointCloud {
    std::vector<std::array<double, 3>> xyz;
    std::vector<std::array<double, 3>> rgb;  // in [0,1]
    std::vector<int> labels;
    std::map<int, std::string> class_names;

    int size() const { return static_cast<int>(xyz.size()); }
    void validate() const;  // throws on violated invariants
};

// EPC binary format (little-endian): magic "EPC1", u32 M, u32 C,
// C x {u16 id, u16 name_len, utf-8 name}, M x {f32 x,y,z, f32 r,g,b, i32 label}.
PointCloud read_cloud(const std::string& path);
void write_cloud(const PointCloud& cloud, const std::string& path);

enum class PrimitiveKind { Plane, Box, Sphere, Cylinder };

struct Primitive {
    PrimitiveKind kind;
    int class_id;
    std::array<double, 3> center{};
    std::array<double, 3> size{};  // sphere/cylinder use size[0] as diameter
    int n_points = 0;
    std::array<double, 3> base_color{};
    double color_noise = 0.0;
};

struct SceneSpec {
    std::uint64_t seed = 0;
    double extent = 4.0;  // meters, square footprint
    std::vector<Primitive> primitives;
    std::map<int, std::string> class_names;
};

// Deterministic under (seed, spec). Overlaps resolve by last-writer label
// in primitive order (each point belongs to exactly one primitive here, so
// labels always match the generating primitive).
PointCloud generate_scene(const SceneSpec& spec);

// A desk-scale stand-in scene: a floor plane (class 0) plus a handful of
// colored primitives drawn from `n_classes` foreground classes.
SceneSpec make_scene_spec(std::uint64_t seed, int n_classes, int points_per_primitive = 256);

// Partition into axis-aligned XY blocks and resample each non-empty block to
// exactly n_points (with replacement iff the block is smaller than n_points).
std::vector<PointCloud> split_and_sample(const PointCloud& cloud, double block_size,
                                         int n_points, Rng& rng);

// xyz' = scale * (xyz + z), z ~ N(0, sigma^2) per coordinate.
PointCloud jitter_scale_augment(const PointCloud& cloud, double sigma, double scale, Rng& rng);

// rgb' = clamp(rgb + z, 0, 1), z ~ N(0, sigma^2) per channel.
PointCloud color_jitter_augment(const PointCloud& cloud, double sigma, Rng& rng);

}  // namespace epseg
