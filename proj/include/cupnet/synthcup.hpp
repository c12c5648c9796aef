#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cupnet/geometry.hpp"

namespace cupnet {

enum class CupClass { good = 0, defect = 1, cracked = 2 };

inline constexpr std::array<CupClass, 3> kAllClasses{CupClass::good, CupClass::defect, CupClass::cracked};

std::string_view to_string(CupClass c) noexcept;
CupClass cup_class_from_string(std::string_view s);

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
    double mid() const noexcept { return 0.5 * (lo + hi); }
};

/// Synthetic cup-drawing surrogate. Every constant here is invented: the
/// generator only has to produce a smooth, spatially local regression task
/// with a three-class quality structure. Parameter roles (1-based, as p1..p9):
///   p1 draw depth, p2 radial draw-in, p3 earing, p4 wall tilt,
///   p5 springback flare, p6/p7 crack damage g = p6 + p7*p1,
///   p8/p9 smooth perturbation fields.
struct GeneratorConfig {
    // base mesh
    int radial_count = 21;
    int angular_count = 10;
    double outer_radius = 50.0;

    std::vector<Interval> param_ranges = default_param_ranges();

    // forming geometry
    double punch_radius = 20.0;
    double die_width = 10.0;

    // mode gains
    double depth_gain = 12.0;
    double draw_in_gain = 1.5;
    double earing_gain = 0.75;
    double tilt_gain = 0.625;
    double flare_gain = 0.625;
    double perturb_gain = 0.375;

    // crack mode
    double crack_threshold = 1.43;
    double crack_gain = 80.0;
    double crack_sector_center = 0.7853981633974483;  // pi/4
    double crack_sector_half_width = 0.4;

    // classification thresholds on max point distance to the reference
    double t_good = 2.0;
    double t_crack = 10.0;

    std::size_t k() const noexcept { return param_ranges.size(); }
    /// Interval midpoints. The classification reference is the base mesh
    /// deformed with these nominal parameters.
    std::vector<double> nominal_params() const;

    static std::vector<Interval> default_param_ranges();
    void validate() const;
};

struct Sample {
    std::vector<double> params;
    std::vector<double> coords;
    CupClass label = CupClass::good;
};

struct Dataset {
    GeneratorConfig config;
    std::uint64_t seed = 0;
    Mesh base_mesh;
    std::vector<Sample> samples;

    std::size_t size() const noexcept { return samples.size(); }
    std::size_t k() const noexcept { return samples.empty() ? config.k() : samples.front().params.size(); }
    std::size_t m() const noexcept { return base_mesh.size(); }
    std::size_t d() const noexcept { return 3 * base_mesh.size(); }
    std::array<std::size_t, 3> class_counts() const;
};

/// Flat quarter-disc grid in the z = 0 plane, radial-major then angular,
/// with the centre emitted once. m = (radial_count - 1) * angular_count + 1.
Mesh generate_base_mesh(int radial_count, int angular_count, double outer_radius);

/// Deterministic deformation of the base mesh into a flattened d-vector.
std::vector<double> deform(const Mesh& base, std::span<const double> params, const GeneratorConfig& cfg);

/// good if max distance <= t_good, cracked if > t_crack, defect otherwise.
CupClass classify(std::span<const double> coords, const Mesh& reference, double t_good, double t_crack);

/// Reference used for labelling during generation.
Mesh classification_reference(const Mesh& base, const GeneratorConfig& cfg);

/// Upper bound L with ||deform(p) - deform(q)|| <= L ||p - q|| for p, q in
/// the parameter box on the same side of the crack threshold.
double lipschitz_bound(const GeneratorConfig& cfg, std::size_t m);

/// Sample i draws its parameters from a stream seeded by (seed, i).
Dataset sample_dataset(const GeneratorConfig& cfg, std::size_t n, std::uint64_t seed);

void save_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace cupnet
