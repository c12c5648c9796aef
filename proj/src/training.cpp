#include "cupnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>

#include "cupnet/csv.hpp"
#include "cupnet/rng.hpp"

namespace cupnet {

// --- standardization ------------------------------------------------------

namespace {

void column_stats(const Matrix& x, Eigen::RowVectorXd& mean, Eigen::RowVectorXd& sd) {
    if (x.rows() < 1) throw std::invalid_argument("standardizer: empty training split");
    mean = x.colwise().mean();
    sd.resize(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double var = (x.col(j).array() - mean(j)).square().sum() / static_cast<double>(x.rows());
        const double s = std::sqrt(var);
        sd(j) = s > 0.0 ? s : 1.0;
    }
}

}  // namespace

Standardizer Standardizer::fit(const Matrix& inputs, const Matrix& outputs) {
    if (inputs.rows() != outputs.rows()) throw std::invalid_argument("standardizer: row counts differ");
    Standardizer s;
    column_stats(inputs, s.input_mean, s.input_std);
    column_stats(outputs, s.output_mean, s.output_std);
    return s;
}

Matrix Standardizer::transform_inputs(const Matrix& x) const {
    return (x.rowwise() - input_mean).array().rowwise() / input_std.array();
}

Matrix Standardizer::transform_outputs(const Matrix& y) const {
    return (y.rowwise() - output_mean).array().rowwise() / output_std.array();
}

Matrix Standardizer::inverse_outputs(const Matrix& y) const {
    Matrix out = y.array().rowwise() * output_std.array();
    out.rowwise() += output_mean;
    return out;
}

Matrix Standardizer::inverse_inputs(const Matrix& x) const {
    Matrix out = x.array().rowwise() * input_std.array();
    out.rowwise() += input_mean;
    return out;
}

// --- loss / gradient ------------------------------------------------------

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("training: learning_rate must be > 0");
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0))
        throw std::invalid_argument("training: Adam betas must lie in (0, 1)");
    if (!(adam_epsilon > 0.0)) throw std::invalid_argument("training: adam_epsilon must be > 0");
    if (batch_size < 1) throw std::invalid_argument("training: batch_size must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw std::invalid_argument("training: dropout_rate must be in [0, 1)");
}

double mse_loss(const Matrix& pred, const Matrix& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw std::invalid_argument("mse_loss: shape mismatch");
    if (pred.size() == 0) throw std::invalid_argument("mse_loss: empty batch");
    return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

std::vector<double> backward(const Network& net, const ForwardCache& cache, const Matrix& target) {
    if (cache.net != &net || cache.generation != net.generation())
        throw std::logic_error("backward: forward cache is stale or belongs to another network");
    const auto& blocks = net.blocks();
    if (cache.pre.size() != blocks.size()) throw std::logic_error("backward: forward cache is incomplete");
    if (target.rows() != cache.output.rows() || target.cols() != cache.output.cols())
        throw std::invalid_argument("backward: target shape does not match the cached batch");

    std::vector<double> grad(net.parameter_count(), 0.0);
    const auto params = net.params();
    Matrix delta = (cache.output - target) * (2.0 / static_cast<double>(target.size()));

    for (std::size_t bi = blocks.size(); bi-- > 0;) {
        const auto& block = blocks[bi];
        if (cache.dropout[bi].size() != 0) delta.array() *= cache.dropout[bi].array();
        if (block.activation == Activation::relu) delta.array() *= (cache.pre[bi].array() > 0.0).cast<double>();

        const Matrix& in = cache.inputs[bi];
        const bool need_input_grad = bi > 0;
        Matrix delta_in;
        if (need_input_grad) delta_in = Matrix::Zero(in.rows(), in.cols());

        for (const auto& l : block.layers) {
            const auto io = static_cast<Eigen::Index>(l.in_offset), oo = static_cast<Eigen::Index>(l.out_offset);
            const auto isz = static_cast<Eigen::Index>(l.in_size), osz = static_cast<Eigen::Index>(l.out_size);
            Eigen::Map<Eigen::RowVectorXd> gb(grad.data() + l.bias_offset, osz);
            gb = delta.middleCols(oo, osz).colwise().sum();

            if (l.kind == LayerKind::dense) {
                Eigen::Map<Matrix> gW(grad.data() + l.weight_offset, isz, osz);
                Eigen::Map<const Matrix> W(params.data() + l.weight_offset, isz, osz);
                gW.noalias() = in.middleCols(io, isz).transpose() * delta.middleCols(oo, osz);
                if (need_input_grad) delta_in.middleCols(io, isz).noalias() += delta.middleCols(oo, osz) * W.transpose();
                continue;
            }

            // dL/dW_ij = sum_r in(r, i) * delta(r, j), only at stored positions.
            const auto& mask = *net.mask();
            const auto rs = mask.row_start();
            const auto cols = mask.col_index();
            const double* w = params.data() + l.weight_offset;
            double* gw = grad.data() + l.weight_offset;
            for (Eigen::Index r = 0; r < in.rows(); ++r) {
                const double* x = in.row(r).data() + io;
                const double* dy = delta.row(r).data() + oo;
                double* dx = need_input_grad ? delta_in.row(r).data() + io : nullptr;
                for (std::size_t i = 0; i < l.in_size; ++i) {
                    const double xi = x[i];
                    double acc = 0.0;
                    for (std::size_t n = rs[i]; n < rs[i + 1]; ++n) {
                        const double g = dy[cols[n]];
                        gw[n] += xi * g;
                        acc += w[n] * g;
                    }
                    if (dx) dx[i] += acc;
                }
            }
        }
        if (need_input_grad) delta = std::move(delta_in);
    }
    return grad;
}

void adam_step(std::span<double> params, std::span<const double> grads, OptimizerState& state, const TrainConfig& cfg) {
    const auto n = params.size();
    if (grads.size() != n || state.first_moment.size() != n || state.second_moment.size() != n)
        throw std::invalid_argument("adam_step: parameter, gradient and state layouts differ");
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(grads[i])) throw std::runtime_error("adam_step: non-finite gradient at parameter " + std::to_string(i));

    ++state.step;
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grads[i];
        double& m = state.first_moment[i];
        double& v = state.second_moment[i];
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        const double mhat = m / c1;
        const double vhat = v / c2;
        params[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_epsilon);
    }
}

// --- data handling ----------------------------------------------------------

Split stratified_split(std::span<const CupClass> labels, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw std::invalid_argument("stratified_split: test_fraction must be in (0, 1)");
    std::array<std::vector<std::size_t>, 3> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(i);
    for (auto c : kAllClasses)
        if (by_class[static_cast<std::size_t>(c)].empty())
            throw std::invalid_argument("stratified_split: class '" + std::string(to_string(c)) + "' has no samples");

    const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(labels.size()) * test_fraction));
    std::array<std::size_t, 3> take{};
    std::array<double, 3> residual{};
    std::size_t total = 0;
    for (std::size_t c = 0; c < 3; ++c) {
        const double exact = static_cast<double>(by_class[c].size()) * test_fraction;
        take[c] = static_cast<std::size_t>(std::llround(exact));
        residual[c] = exact - static_cast<double>(take[c]);
        total += take[c];
    }
    // Nudge the class whose rounding moved furthest from its exact share.
    while (total != target) {
        std::size_t best = 3;
        for (std::size_t c = 0; c < 3; ++c) {
            const bool can = total < target ? take[c] < by_class[c].size() : take[c] > 0;
            if (!can) continue;
            const bool better = best == 3 || (total < target ? residual[c] > residual[best] : residual[c] < residual[best]);
            if (better) best = c;
        }
        if (best == 3) throw std::logic_error("stratified_split: cannot reach the target test size");
        if (total < target) {
            ++take[best];
            residual[best] -= 1.0;
            ++total;
        } else {
            --take[best];
            residual[best] += 1.0;
            --total;
        }
    }

    Rng rng(seed);
    Split split;
    for (std::size_t c = 0; c < 3; ++c) {
        auto idx = by_class[c];
        rng.shuffle(idx.begin(), idx.end());
        split.test.insert(split.test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take[c]));
        split.train.insert(split.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(take[c]), idx.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

double r2_score(const Matrix& pred, const Matrix& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw std::invalid_argument("r2_score: shape mismatch");
    if (target.rows() < 2) throw std::invalid_argument("r2_score: at least two samples required");
    double sum = 0.0;
    std::size_t counted = 0;
    for (Eigen::Index j = 0; j < target.cols(); ++j) {
        const double mean = target.col(j).mean();
        const double ss_tot = (target.col(j).array() - mean).square().sum();
        const double ss_res = (target.col(j) - pred.col(j)).squaredNorm();
        if (ss_tot == 0.0) {
            if (ss_res == 0.0) {
                sum += 1.0;
                ++counted;
            }
            continue;
        }
        sum += 1.0 - ss_res / ss_tot;
        ++counted;
    }
    if (counted == 0) throw std::invalid_argument("r2_score: no output has variance");
    return sum / static_cast<double>(counted);
}

std::pair<Matrix, Matrix> gather(const Dataset& ds, std::span<const std::size_t> indices) {
    const auto k = static_cast<Eigen::Index>(ds.k()), d = static_cast<Eigen::Index>(ds.d());
    Matrix x(static_cast<Eigen::Index>(indices.size()), k), y(static_cast<Eigen::Index>(indices.size()), d);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto& s = ds.samples.at(indices[r]);
        const auto row = static_cast<Eigen::Index>(r);
        x.row(row) = Eigen::Map<const Eigen::RowVectorXd>(s.params.data(), k);
        y.row(row) = Eigen::Map<const Eigen::RowVectorXd>(s.coords.data(), d);
    }
    return {std::move(x), std::move(y)};
}

TrainData prepare(const Dataset& ds, const Split& split, Standardizer* standardizer) {
    auto [tx, ty] = gather(ds, split.train);
    auto [vx, vy] = gather(ds, split.test);
    const auto st = Standardizer::fit(tx, ty);
    TrainData data{st.transform_inputs(tx), st.transform_outputs(ty), st.transform_inputs(vx), st.transform_outputs(vy)};
    if (standardizer) *standardizer = st;
    return data;
}

// --- training loop ----------------------------------------------------------

TrainHistory train(Network& net, const TrainData& data, const TrainConfig& cfg) {
    cfg.validate();
    const auto n = static_cast<std::size_t>(data.train_x.rows());
    if (n == 0) throw std::invalid_argument("train: empty training set");
    if (data.train_y.rows() != data.train_x.rows()) throw std::invalid_argument("train: inputs and targets differ in length");

    TrainHistory history;
    Rng rng(cfg.seed);
    OptimizerState state(net.parameter_count());
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    Matrix bx, by;
    ForwardCache cache;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        double loss_sum = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_index) {
            const auto len = std::min(cfg.batch_size, n - start);
            bx.resize(static_cast<Eigen::Index>(len), data.train_x.cols());
            by.resize(static_cast<Eigen::Index>(len), data.train_y.cols());
            for (std::size_t r = 0; r < len; ++r) {
                bx.row(static_cast<Eigen::Index>(r)) = data.train_x.row(static_cast<Eigen::Index>(order[start + r]));
                by.row(static_cast<Eigen::Index>(r)) = data.train_y.row(static_cast<Eigen::Index>(order[start + r]));
            }
            const auto masks = draw_dropout_masks(net, len, cfg.dropout_rate, rng);
            Matrix pred;
            try {
                pred = forward_batch(net, bx, &masks, &cache);
            } catch (const std::runtime_error& e) {
                throw std::runtime_error("train: diverged at epoch " + std::to_string(epoch) + " batch " +
                                         std::to_string(batch_index) + ": " + e.what());
            }
            const double loss = mse_loss(pred, by);
            if (!std::isfinite(loss))
                throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_index));
            loss_sum += loss * static_cast<double>(len);
            const auto grad = backward(net, cache, by);
            adam_step(net.mutable_params(), grad, state, cfg);
        }
        history.train_loss.push_back(loss_sum / static_cast<double>(n));
    }

    if (data.test_x.rows() >= 2) history.test_r2 = r2_score(forward_batch(net, data.test_x), data.test_y);
    return history;
}

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "epoch,train_loss,val_r2\n";
    for (std::size_t e = 0; e < history.train_loss.size(); ++e) {
        out << e + 1 << ',' << csv::format(history.train_loss[e]) << ',';
        if (e + 1 == history.train_loss.size() && history.test_r2) out << csv::format(*history.test_r2);
        out << '\n';
    }
}

}  // namespace cupnet
