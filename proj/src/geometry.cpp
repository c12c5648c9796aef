#include "cupnet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include "cupnet/csv.hpp"

namespace cupnet {

Mesh::Mesh(std::vector<Point3> points) : points_(std::move(points)) {
    if (points_.empty()) throw std::invalid_argument("mesh: at least one point required");
    for (std::size_t i = 0; i < points_.size(); ++i) {
        for (double c : points_[i]) {
            if (!std::isfinite(c)) throw std::invalid_argument("mesh: non-finite coordinate at point " + std::to_string(i));
        }
    }
}

std::vector<double> Mesh::flatten() const {
    const auto m = points_.size();
    std::vector<double> flat(3 * m);
    for (std::size_t i = 0; i < m; ++i) {
        flat[i] = points_[i][0];
        flat[m + i] = points_[i][1];
        flat[2 * m + i] = points_[i][2];
    }
    return flat;
}

Mesh Mesh::from_flat(std::span<const double> coords) {
    if (coords.empty() || coords.size() % 3 != 0)
        throw std::invalid_argument("mesh: flattened length " + std::to_string(coords.size()) + " is not a positive multiple of 3");
    const auto m = coords.size() / 3;
    std::vector<Point3> pts(m);
    for (std::size_t i = 0; i < m; ++i) pts[i] = {coords[i], coords[m + i], coords[2 * m + i]};
    return Mesh(std::move(pts));
}

DistanceMatrix::DistanceMatrix(std::size_t m, std::vector<double> entries) : m_(m), entries_(std::move(entries)) {
    if (entries_.size() != m_ * m_) throw std::invalid_argument("distance matrix: size mismatch");
}

double DistanceMatrix::max() const {
    return entries_.empty() ? 0.0 : *std::max_element(entries_.begin(), entries_.end());
}

PruneMask::PruneMask(std::size_t m, double alpha, std::vector<std::size_t> row_start, std::vector<std::size_t> col_index)
    : m_(m), alpha_(alpha), row_start_(std::move(row_start)), col_index_(std::move(col_index)) {
    if (row_start_.size() != m_ + 1 || row_start_.front() != 0 || row_start_.back() != col_index_.size())
        throw std::invalid_argument("prune mask: malformed row index");
    for (std::size_t i = 0; i < m_; ++i) {
        if (row_start_[i] > row_start_[i + 1]) throw std::invalid_argument("prune mask: decreasing row index");
        const auto r = row(i);
        for (std::size_t n = 0; n < r.size(); ++n) {
            if (r[n] >= m_ || (n > 0 && r[n - 1] >= r[n]))
                throw std::invalid_argument("prune mask: row " + std::to_string(i) + " columns not strictly ascending in range");
        }
    }
}

bool PruneMask::contains(std::size_t i, std::size_t j) const {
    const auto r = row(i);
    return std::binary_search(r.begin(), r.end(), j);
}

std::vector<double> PruneMask::to_dense() const {
    std::vector<double> dense(m_ * m_, 0.0);
    for (std::size_t i = 0; i < m_; ++i)
        for (auto j : row(i)) dense[i * m_ + j] = 1.0;
    return dense;
}

DistanceMatrix pairwise_distances(const Mesh& mesh) {
    const auto m = mesh.size();
    if (m == 0) throw std::invalid_argument("pairwise_distances: empty mesh");
    for (std::size_t i = 0; i < m; ++i)
        for (double c : mesh[i])
            if (!std::isfinite(c)) throw std::invalid_argument("pairwise_distances: non-finite coordinate at point " + std::to_string(i));

    std::vector<double> d(m * m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const auto& a = mesh[i];
        for (std::size_t j = i + 1; j < m; ++j) {
            const auto& b = mesh[j];
            const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
            const double v = std::sqrt(dx * dx + dy * dy + dz * dz);
            d[i * m + j] = v;
            d[j * m + i] = v;
        }
    }
    return DistanceMatrix(m, std::move(d));
}

PruneMask build_mask(const DistanceMatrix& dist, double alpha) {
    if (!(alpha >= 0.0)) throw std::invalid_argument("build_mask: alpha must be >= 0");
    const auto m = dist.size();
    std::vector<std::size_t> row_start(m + 1, 0);
    std::vector<std::size_t> cols;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j)
            if (dist(i, j) <= alpha) cols.push_back(j);
        row_start[i + 1] = cols.size();
    }
    return PruneMask(m, alpha, std::move(row_start), std::move(cols));
}

std::size_t mask_count(const PruneMask& mask) noexcept { return mask.nonzeros(); }

Mesh reference_mesh(std::span<const std::vector<double>> coords) {
    if (coords.empty()) throw std::invalid_argument("reference_mesh: no samples");
    const auto d = coords.front().size();
    if (d == 0 || d % 3 != 0) throw std::invalid_argument("reference_mesh: sample length is not a positive multiple of 3");
    std::vector<double> mean(d, 0.0);
    for (const auto& c : coords) {
        if (c.size() != d) throw std::invalid_argument("reference_mesh: samples differ in length");
        for (std::size_t i = 0; i < d; ++i) mean[i] += c[i];
    }
    const double inv = 1.0 / static_cast<double>(coords.size());
    for (auto& v : mean) v *= inv;
    return Mesh::from_flat(mean);
}

std::vector<double> point_distances(std::span<const double> coords, const Mesh& reference) {
    const auto m = reference.size();
    if (coords.size() != 3 * m)
        throw std::invalid_argument("point_distances: expected " + std::to_string(3 * m) + " coordinates, got " +
                                    std::to_string(coords.size()));
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double dx = coords[i] - reference[i][0];
        const double dy = coords[m + i] - reference[i][1];
        const double dz = coords[2 * m + i] - reference[i][2];
        out[i] = std::sqrt(dx * dx + dy * dy + dz * dz);
    }
    return out;
}

Mesh read_mesh_csv(const std::filesystem::path& path) {
    std::vector<std::string> header;
    const auto rows = csv::read_numeric(path, &header);
    if (header != std::vector<std::string>{"x", "y", "z"})
        throw std::runtime_error(path.string() + ": expected header x,y,z");
    std::vector<Point3> pts;
    pts.reserve(rows.size());
    for (const auto& r : rows) pts.push_back({r[0], r[1], r[2]});
    return Mesh(std::move(pts));
}

void write_mesh_csv(const std::filesystem::path& path, const Mesh& mesh) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "x,y,z\n";
    for (const auto& p : mesh.points()) out << csv::format(p[0]) << ',' << csv::format(p[1]) << ',' << csv::format(p[2]) << '\n';
}

void write_mask_csv(const std::filesystem::path& path, const PruneMask& mask) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "i,j\n";
    for (std::size_t i = 0; i < mask.size(); ++i)
        for (auto j : mask.row(i)) out << i << ',' << j << '\n';
}

}  // namespace cupnet
