#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "cupnet/network.hpp"
#include "cupnet/synthcup.hpp"

namespace cupnet {

/// Column-wise standardization fitted on a training split. Zero standard
/// deviations are replaced by 1.
struct Standardizer {
    Eigen::RowVectorXd input_mean, input_std;
    Eigen::RowVectorXd output_mean, output_std;

    static Standardizer fit(const Matrix& inputs, const Matrix& outputs);

    Matrix transform_inputs(const Matrix& x) const;
    Matrix transform_outputs(const Matrix& y) const;
    Matrix inverse_outputs(const Matrix& y) const;
    Matrix inverse_inputs(const Matrix& x) const;
};

struct TrainConfig {
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::size_t batch_size = 32;
    std::size_t epochs = 200;
    std::uint64_t seed = 0;
    double dropout_rate = 0.2;

    void validate() const;
};

struct OptimizerState {
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::uint64_t step = 0;

    explicit OptimizerState(std::size_t n = 0) : first_moment(n, 0.0), second_moment(n, 0.0) {}
};

/// Mean over samples and outputs of the squared error.
double mse_loss(const Matrix& pred, const Matrix& target);

/// Exact gradient of mse_loss(cache.output, target) with respect to every
/// trainable parameter, laid out like Network::params(). The cache must come
/// from forward_batch on the same network with no parameter change since.
std::vector<double> backward(const Network& net, const ForwardCache& cache, const Matrix& target);

/// One bias-corrected Adam update in place.
void adam_step(std::span<double> params, std::span<const double> grads, OptimizerState& state, const TrainConfig& cfg);

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Per-class test counts round(count * test_fraction), then adjusted one at
/// a time (largest rounding residual first) to hit round(n * test_fraction).
Split stratified_split(std::span<const CupClass> labels, double test_fraction, std::uint64_t seed);

/// Uniform average over outputs of 1 - SS_res / SS_tot. An output whose
/// targets are constant counts as 1 when predicted exactly and is left out
/// of the average otherwise.
double r2_score(const Matrix& pred, const Matrix& target);

struct TrainHistory {
    std::vector<double> train_loss;  // per epoch
    std::optional<double> test_r2;
};

struct TrainData {
    Matrix train_x, train_y;
    Matrix test_x, test_y;  // may be empty
};

/// Mini-batch Adam on standardized data; one seeded stream drives shuffling
/// and dropout. Throws std::runtime_error on a non-finite loss.
TrainHistory train(Network& net, const TrainData& data, const TrainConfig& cfg);

/// Rows of the dataset selected by `indices`, as (params, coords) matrices.
std::pair<Matrix, Matrix> gather(const Dataset& ds, std::span<const std::size_t> indices);

/// Split, fit the standardizer on the training rows and standardize both parts.
TrainData prepare(const Dataset& ds, const Split& split, Standardizer* standardizer = nullptr);

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history);

}  // namespace cupnet
