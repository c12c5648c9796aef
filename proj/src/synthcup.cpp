#include "cupnet/synthcup.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "cupnet/config.hpp"
#include "cupnet/csv.hpp"
#include "cupnet/rng.hpp"

namespace cupnet {

std::string_view to_string(CupClass c) noexcept {
    switch (c) {
        case CupClass::good: return "good";
        case CupClass::defect: return "defect";
        case CupClass::cracked: return "cracked";
    }
    return "?";
}

CupClass cup_class_from_string(std::string_view s) {
    if (s == "good") return CupClass::good;
    if (s == "defect") return CupClass::defect;
    if (s == "cracked") return CupClass::cracked;
    throw std::invalid_argument("unknown cup class '" + std::string(s) + "'");
}

std::vector<Interval> GeneratorConfig::default_param_ranges() {
    return {
        {0.8, 1.2},   // p1 draw depth factor
        {-1.0, 1.0},  // p2 draw-in
        {-1.0, 1.0},  // p3 earing
        {-1.0, 1.0},  // p4 tilt
        {-1.0, 1.0},  // p5 flare
        {0.0, 1.0},   // p6 damage offset
        {0.0, 1.0},   // p7 damage sensitivity to depth
        {-1.0, 1.0},  // p8 perturbation
        {-1.0, 1.0},  // p9 perturbation
    };
}

std::vector<double> GeneratorConfig::nominal_params() const {
    std::vector<double> p(param_ranges.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = param_ranges[i].mid();
    return p;
}

void GeneratorConfig::validate() const {
    if (radial_count < 2 || angular_count < 2) throw std::invalid_argument("generator: radial_count and angular_count must be >= 2");
    if (!(outer_radius > 0.0)) throw std::invalid_argument("generator: outer_radius must be > 0");
    if (param_ranges.size() != 9) throw std::invalid_argument("generator: exactly 9 parameter ranges are required");
    for (std::size_t i = 0; i < param_ranges.size(); ++i) {
        const auto& r = param_ranges[i];
        if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi)
            throw std::invalid_argument("generator: degenerate interval for p" + std::to_string(i + 1));
    }
    if (!(die_width > 0.0)) throw std::invalid_argument("generator: die_width must be > 0");
    if (!(t_good > 0.0 && t_good < t_crack)) throw std::invalid_argument("generator: require 0 < t_good < t_crack");
    if (!(crack_sector_half_width > 0.0)) throw std::invalid_argument("generator: crack_sector_half_width must be > 0");
}

std::array<std::size_t, 3> Dataset::class_counts() const {
    std::array<std::size_t, 3> counts{};
    for (const auto& s : samples) ++counts[static_cast<std::size_t>(s.label)];
    return counts;
}

Mesh generate_base_mesh(int radial_count, int angular_count, double outer_radius) {
    if (radial_count < 2 || angular_count < 2)
        throw std::invalid_argument("generate_base_mesh: radial_count and angular_count must be >= 2");
    if (!(outer_radius > 0.0) || !std::isfinite(outer_radius))
        throw std::invalid_argument("generate_base_mesh: outer_radius must be > 0");

    std::vector<Point3> pts;
    pts.reserve(static_cast<std::size_t>((radial_count - 1) * angular_count + 1));
    pts.push_back({0.0, 0.0, 0.0});
    for (int a = 1; a < radial_count; ++a) {
        const double r = outer_radius * a / (radial_count - 1);
        for (int b = 0; b < angular_count; ++b) {
            // Pin the two symmetry edges exactly onto the axes.
            if (b == 0) {
                pts.push_back({r, 0.0, 0.0});
            } else if (b == angular_count - 1) {
                pts.push_back({0.0, r, 0.0});
            } else {
                const double theta = 0.5 * std::numbers::pi * b / (angular_count - 1);
                pts.push_back({r * std::cos(theta), r * std::sin(theta), 0.0});
            }
        }
    }
    return Mesh(std::move(pts));
}

namespace {

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

double damage(std::span<const double> p) { return p[5] + p[6] * p[0]; }

}  // namespace

std::vector<double> deform(const Mesh& base, std::span<const double> p, const GeneratorConfig& cfg) {
    if (p.size() != 9) throw std::invalid_argument("deform: expected 9 parameters, got " + std::to_string(p.size()));
    const auto m = base.size();
    const double R = cfg.outer_radius;
    const double g = damage(p);
    const double tear_amp = g > cfg.crack_threshold ? cfg.crack_gain * (g - cfg.crack_threshold) : 0.0;

    std::vector<double> out(3 * m);
    for (std::size_t i = 0; i < m; ++i) {
        const auto& pt = base[i];
        const double r = std::hypot(pt[0], pt[1]);
        const double ux = r > 0.0 ? pt[0] / r : 0.0;
        const double uy = r > 0.0 ? pt[1] / r : 0.0;
        const double theta = std::atan2(pt[1], pt[0]);
        const double rho = r / R;
        const double wall = clamp01((r - cfg.punch_radius) / cfg.die_width);
        const double rim = rho * rho;

        double z = pt[2];
        z += cfg.depth_gain * p[0] * wall;
        z += cfg.earing_gain * p[2] * (0.5 + p[0]) * std::cos(4.0 * theta) * rim * wall;
        z += cfg.perturb_gain * p[7] * std::sin(std::numbers::pi * rho) * std::cos(2.0 * theta);

        double dr = 0.0;
        dr -= cfg.draw_in_gain * p[1] * wall * rho;
        dr += cfg.tilt_gain * p[3] * wall * std::sin(std::numbers::pi * rho);
        dr += cfg.flare_gain * p[4] * wall * rim;
        dr += cfg.perturb_gain * p[8] * std::sin(2.0 * theta) * rho;

        if (tear_amp > 0.0) {
            const double sector = clamp01(1.0 - std::abs(theta - cfg.crack_sector_center) / cfg.crack_sector_half_width);
            const double tear = tear_amp * sector * wall * rho;
            z -= tear;
            dr += 0.5 * tear;
        }

        out[i] = pt[0] + dr * ux;
        out[m + i] = pt[1] + dr * uy;
        out[2 * m + i] = z;
    }
    return out;
}

CupClass classify(std::span<const double> coords, const Mesh& reference, double t_good, double t_crack) {
    if (!(t_good > 0.0 && t_good < t_crack)) throw std::invalid_argument("classify: require 0 < t_good < t_crack");
    const auto dist = point_distances(coords, reference);
    const double delta = *std::max_element(dist.begin(), dist.end());
    if (delta <= t_good) return CupClass::good;
    if (delta > t_crack) return CupClass::cracked;
    return CupClass::defect;
}

Mesh classification_reference(const Mesh& base, const GeneratorConfig& cfg) {
    return Mesh::from_flat(deform(base, cfg.nominal_params(), cfg));
}

double lipschitz_bound(const GeneratorConfig& cfg, std::size_t m) {
    auto absmax = [&](std::size_t i) { return std::max(std::abs(cfg.param_ranges[i].lo), std::abs(cfg.param_ranges[i].hi)); };
    // Bounds on |d(z)/dp_i| + |d(dr)/dp_i| over the parameter box; all shape
    // factors are bounded by 1 and |dx|,|dy| <= |dr|.
    std::array<double, 9> gain{};
    const double crack = cfg.crack_gain * 1.5;  // z and half again in dr
    gain[0] = cfg.depth_gain + cfg.earing_gain * absmax(2) + crack * absmax(6);
    gain[1] = cfg.draw_in_gain;
    gain[2] = cfg.earing_gain * (0.5 + absmax(0));
    gain[3] = cfg.tilt_gain;
    gain[4] = cfg.flare_gain;
    gain[5] = crack;
    gain[6] = crack * absmax(0);
    gain[7] = cfg.perturb_gain;
    gain[8] = cfg.perturb_gain;
    double sq = 0.0;
    for (double g : gain) sq += g * g;
    return std::sqrt(static_cast<double>(m) * sq);
}

Dataset sample_dataset(const GeneratorConfig& cfg, std::size_t n, std::uint64_t seed) {
    cfg.validate();
    if (n < 1) throw std::invalid_argument("sample_dataset: n must be >= 1");

    Dataset ds;
    ds.config = cfg;
    ds.seed = seed;
    ds.base_mesh = generate_base_mesh(cfg.radial_count, cfg.angular_count, cfg.outer_radius);
    const auto reference = classification_reference(ds.base_mesh, cfg);

    ds.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, {i}));
        auto& s = ds.samples[i];
        s.params.resize(cfg.k());
        for (std::size_t j = 0; j < cfg.k(); ++j) s.params[j] = rng.uniform(cfg.param_ranges[j].lo, cfg.param_ranges[j].hi);
        s.coords = deform(ds.base_mesh, s.params, cfg);
        s.label = classify(s.coords, reference, cfg.t_good, cfg.t_crack);
    }
    return ds;
}

namespace {

void write_rows(const std::filesystem::path& path, const std::vector<std::string>& header,
                const std::vector<Sample>& samples, bool coords) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
    out << '\n';
    for (const auto& s : samples) {
        const auto& v = coords ? s.coords : s.params;
        for (std::size_t j = 0; j < v.size(); ++j) {
            if (j) out << ',';
            out << csv::format(v[j]);
        }
        out << '\n';
    }
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
    std::filesystem::create_directories(dir);
    const auto k = ds.k(), m = ds.m();

    std::vector<std::string> phead, chead;
    for (std::size_t j = 0; j < k; ++j) phead.push_back("p" + std::to_string(j + 1));
    for (const char* axis : {"x", "y", "z"})
        for (std::size_t i = 0; i < m; ++i) chead.push_back(axis + std::to_string(i));
    write_rows(dir / "params.csv", phead, ds.samples, false);
    write_rows(dir / "coords.csv", chead, ds.samples, true);

    {
        std::ofstream out(dir / "labels.csv");
        if (!out) throw std::runtime_error("cannot write labels.csv");
        out << "label\n";
        for (const auto& s : ds.samples) out << to_string(s.label) << '\n';
    }
    write_mesh_csv(dir / "mesh.csv", ds.base_mesh);

    const auto counts = ds.class_counts();
    nlohmann::ordered_json meta;
    meta["k"] = k;
    meta["m"] = m;
    meta["d"] = 3 * m;
    meta["n"] = ds.size();
    meta["seed"] = ds.seed;
    meta["class_counts"] = {{"good", counts[0]}, {"defect", counts[1]}, {"cracked", counts[2]}};
    meta["generator_config"] = to_json(ds.config);
    meta["note"] = "synthetic surrogate data; all generator constants are invented";
    std::ofstream out(dir / "meta.json");
    if (!out) throw std::runtime_error("cannot write meta.json");
    out << meta.dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const auto meta_path = dir / "meta.json";
    std::ifstream in(meta_path);
    if (!in) throw std::runtime_error("cannot open " + meta_path.string());
    const auto meta = nlohmann::json::parse(in);

    Dataset ds;
    ds.config = generator_config_from_json(meta.at("generator_config"));
    ds.seed = meta.at("seed").get<std::uint64_t>();
    ds.base_mesh = read_mesh_csv(dir / "mesh.csv");
    const auto k = meta.at("k").get<std::size_t>();
    const auto n = meta.at("n").get<std::size_t>();
    const auto d = meta.at("d").get<std::size_t>();
    if (d != 3 * ds.base_mesh.size()) throw std::runtime_error("dataset: meta d disagrees with mesh.csv");

    auto params = csv::read_numeric(dir / "params.csv");
    auto coords = csv::read_numeric(dir / "coords.csv");
    const auto labels = csv::read(dir / "labels.csv");
    if (params.size() != n || coords.size() != n || labels.rows.size() != n)
        throw std::runtime_error("dataset: row counts disagree with meta.json n=" + std::to_string(n));
    ds.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (params[i].size() != k || coords[i].size() != d) throw std::runtime_error("dataset: column count mismatch");
        ds.samples[i].params = std::move(params[i]);
        ds.samples[i].coords = std::move(coords[i]);
        ds.samples[i].label = cup_class_from_string(labels.rows[i].at(0));
    }
    return ds;
}

}  // namespace cupnet
