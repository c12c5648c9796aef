#pragma once

// Independent reference computations used only by tests. Nothing here calls
// the sparse kernels, the Eigen batch path or the closed-form width solver.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "cupnet/network.hpp"
#include "cupnet/rng.hpp"

namespace oracle {

using Vec = std::vector<double>;

/// Parameter counts by plain summation over layer shapes.
inline std::int64_t count_cup_by_layers(std::int64_t k, std::int64_t m, std::int64_t h, std::int64_t c) {
    const std::int64_t d = 3 * m;
    std::int64_t n = k * d + d;  // frame
    for (std::int64_t depth = 0; depth < h; ++depth)
        for (int seg = 0; seg < 3; ++seg) n += c + m;
    for (int seg = 0; seg < 3; ++seg) n += m * m + m;
    return n;
}

inline std::int64_t count_ref_by_layers(std::int64_t k, std::int64_t d, std::int64_t h, std::int64_t s) {
    std::int64_t n = k * s + s;
    for (std::int64_t depth = 0; depth < h; ++depth) n += s * s + s;
    return n + s * d + d;
}

/// Brute-force scan for the smallest s with n_ref(s) >= n_cup.
inline std::int64_t scan_s(std::int64_t k, std::int64_t d, std::int64_t h, std::int64_t n_cup) {
    std::int64_t s = 1;
    while (count_ref_by_layers(k, d, h, s) < n_cup) ++s;
    return s;
}

/// Dense matrix (in x out, row-major) of a layer, zero outside the mask.
inline Vec dense_weights(const cupnet::Network& net, const cupnet::Layer& l) {
    Vec W(l.in_size * l.out_size, 0.0);
    const auto w = net.weights(l);
    if (l.kind == cupnet::LayerKind::dense) {
        for (std::size_t n = 0; n < W.size(); ++n) W[n] = w[n];
        return W;
    }
    const auto& mask = *net.mask();
    std::size_t n = 0;
    for (std::size_t i = 0; i < mask.size(); ++i)
        for (auto j : mask.row(i)) W[i * l.out_size + j] = w[n++];
    return W;
}

/// Naive forward over zero-filled dense matrices. `drop`, when given, holds
/// one multiplier vector per block (empty for blocks without dropout).
inline Vec forward(const cupnet::Network& net, const Vec& x, const std::vector<Vec>* drop = nullptr) {
    Vec cur = x;
    const auto& blocks = net.blocks();
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
        const auto& b = blocks[bi];
        Vec out(b.out_dim, 0.0);
        for (const auto& l : b.layers) {
            const auto W = dense_weights(net, l);
            const auto bias = net.biases(l);
            for (std::size_t j = 0; j < l.out_size; ++j) {
                double acc = bias[j];
                for (std::size_t i = 0; i < l.in_size; ++i) acc += W[i * l.out_size + j] * cur[l.in_offset + i];
                out[l.out_offset + j] = acc;
            }
        }
        if (b.activation == cupnet::Activation::relu)
            for (auto& v : out) v = std::max(v, 0.0);
        if (drop && !(*drop)[bi].empty())
            for (std::size_t j = 0; j < out.size(); ++j) out[j] *= (*drop)[bi][j];
        cur = std::move(out);
    }
    return cur;
}

/// Central finite difference of f at every coordinate of `params`.
inline Vec central_differences(std::vector<double>& params, const std::function<double()>& f, double step) {
    Vec g(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double orig = params[i];
        params[i] = orig + step;
        const double up = f();
        params[i] = orig - step;
        const double down = f();
        params[i] = orig;
        g[i] = (up - down) / (2.0 * step);
    }
    return g;
}

/// Random point cloud with coordinates in [0, scale)^3.
inline std::vector<cupnet::Point3> random_points(std::size_t m, double scale, cupnet::Rng& rng) {
    std::vector<cupnet::Point3> pts(m);
    for (auto& p : pts) p = {rng.uniform(0.0, scale), rng.uniform(0.0, scale), rng.uniform(0.0, scale)};
    return pts;
}

}  // namespace oracle
