#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "cupnet/geometry.hpp"

namespace cupnet {

class Rng;

/// Row-major batch matrix; one sample per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { relu, linear };
enum class LayerKind { dense, masked };
enum class ArchKind { cupnet, regnet };

std::string_view to_string(ArchKind kind) noexcept;
ArchKind arch_kind_from_string(std::string_view s);

struct ArchConfig {
    std::size_t k = 9;
    std::size_t m = 1;
    std::size_t h = 1;
    double alpha = 0.0;       // cupnet
    std::size_t s = 1;        // regnet hidden width
    double dropout_rate = 0.2;

    std::size_t d() const noexcept { return 3 * m; }
    void validate() const;
};

/// One linear map inside a block. Reads `in_size` columns starting at
/// `in_offset` of the block input, writes `out_size` columns starting at
/// `out_offset` of the block output. Dense weights are stored in x out
/// row-major; masked weights are aligned with the mask's row-compressed
/// nonzeros (row = input unit, column = output unit).
struct Layer {
    LayerKind kind = LayerKind::dense;
    std::size_t in_size = 0, out_size = 0;
    std::size_t in_offset = 0, out_offset = 0;
    std::size_t weight_offset = 0, weight_count = 0;
    std::size_t bias_offset = 0;

    std::size_t parameter_count() const noexcept { return weight_count + out_size; }
};

/// A stage of the network: its layers run side by side on disjoint slices,
/// then the activation and (in training) dropout apply to the whole output.
struct Block {
    std::size_t in_dim = 0, out_dim = 0;
    Activation activation = Activation::relu;
    bool dropout = false;
    std::vector<Layer> layers;
};

class Network {
public:
    Network(ArchKind kind, ArchConfig cfg, std::shared_ptr<const PruneMask> mask);

    ArchKind kind() const noexcept { return kind_; }
    const ArchConfig& config() const noexcept { return cfg_; }
    const std::vector<Block>& blocks() const noexcept { return blocks_; }
    const PruneMask* mask() const noexcept { return mask_.get(); }
    std::shared_ptr<const PruneMask> shared_mask() const noexcept { return mask_; }

    std::size_t parameter_count() const noexcept { return params_.size(); }
    std::span<const double> params() const noexcept { return params_; }
    /// Invalidates every ForwardCache taken before the call.
    std::span<double> mutable_params() noexcept {
        ++generation_;
        return params_;
    }
    std::uint64_t generation() const noexcept { return generation_; }

    std::span<const double> weights(const Layer& l) const { return std::span<const double>(params_).subspan(l.weight_offset, l.weight_count); }
    std::span<const double> biases(const Layer& l) const { return std::span<const double>(params_).subspan(l.bias_offset, l.out_size); }
    std::span<double> layer_params(const Layer& l) {
        ++generation_;
        return std::span<double>(params_).subspan(l.weight_offset, l.parameter_count());
    }

    std::size_t input_size() const noexcept { return cfg_.k; }
    std::size_t output_size() const noexcept { return cfg_.d(); }

    // builder use
    void add_block(Block block);

private:
    ArchKind kind_;
    ArchConfig cfg_;
    std::shared_ptr<const PruneMask> mask_;
    std::vector<Block> blocks_;
    std::vector<double> params_;
    std::uint64_t generation_ = 0;
};

// --- parameter counting -------------------------------------------------

/// (k d + d) + 3 h (c + m) + 3 (m^2 + m)
std::int64_t param_count_cup(std::int64_t k, std::int64_t d, std::int64_t m, std::int64_t h, std::int64_t c_alpha);
/// (k s + s) + h (s^2 + s) + (s d + d)
std::int64_t param_count_ref(std::int64_t k, std::int64_t d, std::int64_t h, std::int64_t s);
/// Smallest width s >= 1 whose reference network has at least n_cup
/// parameters: ceiling of the positive root of h s^2 + u s + d - n_cup = 0,
/// u = k + h + d + 1, corrected by exact integer evaluation.
std::int64_t solve_s(std::int64_t k, std::int64_t d, std::int64_t h, std::int64_t n_cup);

// --- builders -------------------------------------------------------------

/// Frame k->d (relu, dropout), h masked blocks of three m->m segment maps
/// (relu, dropout), three dense m->m segment output maps (linear).
Network build_cupnet(const ArchConfig& cfg, std::shared_ptr<const PruneMask> mask, std::uint64_t init_seed);

/// k->s, h x (s->s), s->d; relu + dropout on every inner layer, linear output.
Network build_regnet(const ArchConfig& cfg, std::uint64_t init_seed);

// --- forward --------------------------------------------------------------

/// A(M^T input + b) where M carries `values` at the mask nonzeros.
std::vector<double> masked_forward(const PruneMask& mask, std::span<const double> values, std::span<const double> bias,
                                   std::span<const double> input, Activation act);

/// Inverted-dropout multipliers (0 or 1/keep) for every block with dropout.
struct DropoutMasks {
    std::vector<Matrix> per_block;  // empty matrix for blocks without dropout
};

DropoutMasks draw_dropout_masks(const Network& net, std::size_t batch, double rate, Rng& rng);

struct ForwardCache {
    const Network* net = nullptr;
    std::uint64_t generation = 0;
    std::vector<Matrix> inputs;       // input of each block
    std::vector<Matrix> pre;          // pre-activation of each block
    std::vector<Matrix> dropout;      // multipliers, empty when not applied
    Matrix output;
};

/// Batched pass. With `masks` the network runs in training mode; without it
/// the pass is deterministic and dropout-free.
Matrix forward_batch(const Network& net, const Matrix& inputs, const DropoutMasks* masks = nullptr, ForwardCache* cache = nullptr);

/// Single-sample pass. Training mode draws fresh dropout masks from `rng`.
std::vector<double> forward(const Network& net, std::span<const double> p, bool train_mode = false, Rng* rng = nullptr);

// --- checkpoints ----------------------------------------------------------

void save_checkpoint(const std::filesystem::path& dir, const Network& net, std::uint64_t init_seed);
Network load_checkpoint(const std::filesystem::path& dir);

}  // namespace cupnet
