#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace cupnet {

using Point3 = std::array<double, 3>;

/// Ordered point set of the undeformed geometry. Point i maps to positions
/// i, m+i and 2m+i of a flattened coordinate vector (x-block, y-block, z-block).
class Mesh {
public:
    Mesh() = default;
    explicit Mesh(std::vector<Point3> points);

    std::size_t size() const noexcept { return points_.size(); }
    const std::vector<Point3>& points() const noexcept { return points_; }
    const Point3& operator[](std::size_t i) const { return points_[i]; }

    /// Flattened d = 3m vector in x/y/z block order.
    std::vector<double> flatten() const;
    static Mesh from_flat(std::span<const double> coords);

private:
    std::vector<Point3> points_;
};

/// Dense symmetric m x m matrix of Euclidean distances, row-major.
class DistanceMatrix {
public:
    DistanceMatrix() = default;
    DistanceMatrix(std::size_t m, std::vector<double> entries);

    std::size_t size() const noexcept { return m_; }
    double operator()(std::size_t i, std::size_t j) const { return entries_[i * m_ + j]; }
    double max() const;

private:
    std::size_t m_ = 0;
    std::vector<double> entries_;
};

/// Binary pruning mask C(alpha) in row-compressed form. Row i lists, in
/// ascending order, every column j with D_ij <= alpha. The structure is
/// symmetric, so it is simultaneously the column-compressed layout.
class PruneMask {
public:
    PruneMask() = default;
    PruneMask(std::size_t m, double alpha, std::vector<std::size_t> row_start, std::vector<std::size_t> col_index);

    std::size_t size() const noexcept { return m_; }
    double alpha() const noexcept { return alpha_; }
    std::size_t nonzeros() const noexcept { return col_index_.size(); }

    std::span<const std::size_t> row_start() const noexcept { return row_start_; }
    std::span<const std::size_t> col_index() const noexcept { return col_index_; }
    std::span<const std::size_t> row(std::size_t i) const {
        return std::span<const std::size_t>(col_index_).subspan(row_start_[i], row_start_[i + 1] - row_start_[i]);
    }
    std::size_t row_degree(std::size_t i) const { return row_start_[i + 1] - row_start_[i]; }
    bool contains(std::size_t i, std::size_t j) const;

    /// Dense 0/1 expansion, row-major. Test and diagnostic use only.
    std::vector<double> to_dense() const;

private:
    std::size_t m_ = 0;
    double alpha_ = 0.0;
    std::vector<std::size_t> row_start_;
    std::vector<std::size_t> col_index_;
};

DistanceMatrix pairwise_distances(const Mesh& mesh);

/// Keeps (i, j) iff D_ij <= alpha. The boundary is inclusive.
PruneMask build_mask(const DistanceMatrix& dist, double alpha);

std::size_t mask_count(const PruneMask& mask) noexcept;

/// Per-point mean of a set of flattened meshes (the good-class reference).
Mesh reference_mesh(std::span<const std::vector<double>> coords);

/// Index-matched Euclidean distance of every point of `coords` to `reference`.
std::vector<double> point_distances(std::span<const double> coords, const Mesh& reference);

/// Mesh CSV: header `x,y,z`, one row per point.
Mesh read_mesh_csv(const std::filesystem::path& path);
void write_mesh_csv(const std::filesystem::path& path, const Mesh& mesh);

/// Nonzeros as `i,j` rows in lexicographic order.
void write_mask_csv(const std::filesystem::path& path, const PruneMask& mask);

}  // namespace cupnet
