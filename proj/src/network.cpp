#include "cupnet/network.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "cupnet/rng.hpp"

namespace cupnet {

std::string_view to_string(ArchKind kind) noexcept { return kind == ArchKind::cupnet ? "cupnet" : "regnet"; }

ArchKind arch_kind_from_string(std::string_view s) {
    if (s == "cupnet") return ArchKind::cupnet;
    if (s == "regnet") return ArchKind::regnet;
    throw std::invalid_argument("unknown architecture '" + std::string(s) + "' (expected cupnet or regnet)");
}

void ArchConfig::validate() const {
    if (k < 1 || m < 1) throw std::invalid_argument("architecture: k and m must be >= 1");
    if (h < 1) throw std::invalid_argument("architecture: h must be >= 1");
    if (s < 1) throw std::invalid_argument("architecture: s must be >= 1");
    if (!(alpha >= 0.0)) throw std::invalid_argument("architecture: alpha must be >= 0");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw std::invalid_argument("architecture: dropout_rate must be in [0, 1)");
}

Network::Network(ArchKind kind, ArchConfig cfg, std::shared_ptr<const PruneMask> mask)
    : kind_(kind), cfg_(cfg), mask_(std::move(mask)) {
    cfg_.validate();
    if (kind_ == ArchKind::cupnet) {
        if (!mask_) throw std::invalid_argument("cupnet requires a prune mask");
        if (mask_->size() != cfg_.m)
            throw std::invalid_argument("cupnet: mask dimension " + std::to_string(mask_->size()) + " != m = " + std::to_string(cfg_.m));
    }
}

void Network::add_block(Block block) {
    for (auto& l : block.layers) {
        if (l.in_offset + l.in_size > block.in_dim || l.out_offset + l.out_size > block.out_dim)
            throw std::invalid_argument("network: layer slice outside block");
        if (l.kind == LayerKind::masked) {
            if (!mask_ || l.in_size != mask_->size() || l.out_size != mask_->size())
                throw std::invalid_argument("network: masked layer does not match the prune mask");
            l.weight_count = mask_->nonzeros();
        } else {
            l.weight_count = l.in_size * l.out_size;
        }
        l.weight_offset = params_.size();
        l.bias_offset = l.weight_offset + l.weight_count;
        params_.resize(params_.size() + l.parameter_count(), 0.0);
    }
    if (!blocks_.empty() && blocks_.back().out_dim != block.in_dim) throw std::invalid_argument("network: block dimensions do not chain");
    blocks_.push_back(std::move(block));
    ++generation_;
}

// --- parameter counting -------------------------------------------------

namespace {

std::int64_t mul(std::int64_t a, std::int64_t b) {
    std::int64_t r;
    if (__builtin_mul_overflow(a, b, &r)) throw std::overflow_error("parameter count overflows 64-bit integer");
    return r;
}

std::int64_t add(std::int64_t a, std::int64_t b) {
    std::int64_t r;
    if (__builtin_add_overflow(a, b, &r)) throw std::overflow_error("parameter count overflows 64-bit integer");
    return r;
}

}  // namespace

std::int64_t param_count_cup(std::int64_t k, std::int64_t d, std::int64_t m, std::int64_t h, std::int64_t c_alpha) {
    if (k < 1 || d < 1 || m < 1 || h < 1) throw std::invalid_argument("param_count_cup: k, d, m, h must be >= 1");
    if (d != 3 * m) throw std::invalid_argument("param_count_cup: d must equal 3m");
    if (c_alpha < m || c_alpha > mul(m, m))
        throw std::invalid_argument("param_count_cup: c(alpha) = " + std::to_string(c_alpha) + " outside [m, m^2]");
    const auto frame = add(mul(k, d), d);
    const auto masked = mul(mul(3, h), add(c_alpha, m));
    const auto output = mul(3, add(mul(m, m), m));
    return add(add(frame, masked), output);
}

std::int64_t param_count_ref(std::int64_t k, std::int64_t d, std::int64_t h, std::int64_t s) {
    if (k < 1 || d < 1 || h < 1 || s < 1) throw std::invalid_argument("param_count_ref: k, d, h, s must be >= 1");
    const auto first = add(mul(k, s), s);
    const auto hidden = mul(h, add(mul(s, s), s));
    const auto last = add(mul(s, d), d);
    return add(add(first, hidden), last);
}

std::int64_t solve_s(std::int64_t k, std::int64_t d, std::int64_t h, std::int64_t n_cup) {
    if (k < 1 || d < 1 || h < 1) throw std::invalid_argument("solve_s: k, d, h must be >= 1");
    if (n_cup <= d) throw std::invalid_argument("solve_s: n_cup must exceed d");
    const long double u = static_cast<long double>(k + h + d + 1);
    const long double radicand = u * u - 4.0L * h * (static_cast<long double>(d) - static_cast<long double>(n_cup));
    if (radicand < 0.0L) throw std::logic_error("solve_s: negative discriminant (internal error)");
    const long double root = (-u + std::sqrt(radicand)) / (2.0L * h);
    auto s = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(root)));
    // The closed form is evaluated in floating point; settle the ceiling exactly.
    while (s > 1 && param_count_ref(k, d, h, s - 1) >= n_cup) --s;
    while (param_count_ref(k, d, h, s) < n_cup) ++s;
    return s;
}

// --- builders -------------------------------------------------------------

namespace {

void init_dense(std::span<double> w, std::size_t in, Rng& rng) {
    const double lim = std::sqrt(6.0 / static_cast<double>(in));
    for (auto& v : w) v = rng.uniform(-lim, lim);
}

void init_masked(std::span<double> w, const PruneMask& mask, Rng& rng) {
    // Fan-in of output unit j is its mask degree; symmetry makes that the
    // length of row j.
    std::size_t n = 0;
    for (std::size_t i = 0; i < mask.size(); ++i)
        for (auto j : mask.row(i)) {
            const double lim = std::sqrt(6.0 / static_cast<double>(mask.row_degree(j)));
            w[n++] = rng.uniform(-lim, lim);
        }
}

void initialize(Network& net, std::uint64_t seed) {
    std::uint64_t index = 0;
    for (const auto& block : net.blocks()) {
        for (const auto& layer : block.layers) {
            Rng rng(derive_seed(seed, {index++}));
            auto p = net.layer_params(layer);
            auto w = p.first(layer.weight_count);
            if (layer.kind == LayerKind::dense)
                init_dense(w, layer.in_size, rng);
            else
                init_masked(w, *net.mask(), rng);
            std::fill(p.begin() + static_cast<std::ptrdiff_t>(layer.weight_count), p.end(), 0.0);
        }
    }
}

Layer dense_layer(std::size_t in, std::size_t out, std::size_t in_off = 0, std::size_t out_off = 0) {
    Layer l;
    l.kind = LayerKind::dense;
    l.in_size = in;
    l.out_size = out;
    l.in_offset = in_off;
    l.out_offset = out_off;
    return l;
}

}  // namespace

Network build_cupnet(const ArchConfig& cfg, std::shared_ptr<const PruneMask> mask, std::uint64_t init_seed) {
    Network net(ArchKind::cupnet, cfg, std::move(mask));
    const auto k = cfg.k, m = cfg.m, d = cfg.d();

    net.add_block(Block{k, d, Activation::relu, true, {dense_layer(k, d)}});
    for (std::size_t depth = 0; depth < cfg.h; ++depth) {
        Block b{d, d, Activation::relu, true, {}};
        for (std::size_t seg = 0; seg < 3; ++seg) {
            Layer l;
            l.kind = LayerKind::masked;
            l.in_size = l.out_size = m;
            l.in_offset = l.out_offset = seg * m;
            b.layers.push_back(l);
        }
        net.add_block(std::move(b));
    }
    Block out{d, d, Activation::linear, false, {}};
    for (std::size_t seg = 0; seg < 3; ++seg) out.layers.push_back(dense_layer(m, m, seg * m, seg * m));
    net.add_block(std::move(out));

    initialize(net, init_seed);
    return net;
}

Network build_regnet(const ArchConfig& cfg, std::uint64_t init_seed) {
    Network net(ArchKind::regnet, cfg, nullptr);
    const auto k = cfg.k, s = cfg.s, d = cfg.d();
    net.add_block(Block{k, s, Activation::relu, true, {dense_layer(k, s)}});
    for (std::size_t depth = 0; depth < cfg.h; ++depth) net.add_block(Block{s, s, Activation::relu, true, {dense_layer(s, s)}});
    net.add_block(Block{s, d, Activation::linear, false, {dense_layer(s, d)}});
    initialize(net, init_seed);
    return net;
}

// --- forward --------------------------------------------------------------

std::vector<double> masked_forward(const PruneMask& mask, std::span<const double> values, std::span<const double> bias,
                                   std::span<const double> input, Activation act) {
    const auto m = mask.size();
    if (values.size() != mask.nonzeros())
        throw std::invalid_argument("masked_forward: " + std::to_string(values.size()) + " weights for " +
                                    std::to_string(mask.nonzeros()) + " mask nonzeros");
    if (bias.size() != m || input.size() != m) throw std::invalid_argument("masked_forward: dimension mismatch");

    std::vector<double> out(bias.begin(), bias.end());
    const auto rs = mask.row_start();
    const auto cols = mask.col_index();
    for (std::size_t i = 0; i < m; ++i) {
        const double x = input[i];
        for (std::size_t n = rs[i]; n < rs[i + 1]; ++n) out[cols[n]] += values[n] * x;
    }
    if (act == Activation::relu)
        for (auto& v : out) v = v > 0.0 ? v : 0.0;
    return out;
}

DropoutMasks draw_dropout_masks(const Network& net, std::size_t batch, double rate, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
    const double keep = 1.0 - rate;
    const double scale = 1.0 / keep;
    DropoutMasks masks;
    masks.per_block.reserve(net.blocks().size());
    for (const auto& b : net.blocks()) {
        Matrix mk;
        if (b.dropout) {
            mk.resize(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(b.out_dim));
            double* p = mk.data();
            for (Eigen::Index n = 0; n < mk.size(); ++n) p[n] = rng.uniform() < keep ? scale : 0.0;
        }
        masks.per_block.push_back(std::move(mk));
    }
    return masks;
}

namespace {

using ConstMap = Eigen::Map<const Matrix>;

void apply_layer(const Network& net, const Layer& l, const Matrix& in, Matrix& out) {
    const auto rows = in.rows();
    const auto w = net.weights(l);
    const auto b = net.biases(l);
    const auto io = static_cast<Eigen::Index>(l.in_offset), oo = static_cast<Eigen::Index>(l.out_offset);
    const auto isz = static_cast<Eigen::Index>(l.in_size), osz = static_cast<Eigen::Index>(l.out_size);
    Eigen::Map<const Eigen::RowVectorXd> bias(b.data(), osz);

    if (l.kind == LayerKind::dense) {
        ConstMap W(w.data(), isz, osz);
        out.middleCols(oo, osz).noalias() = in.middleCols(io, isz) * W;
        out.middleCols(oo, osz).rowwise() += bias;
        return;
    }
    const auto& mask = *net.mask();
    const auto rs = mask.row_start();
    const auto cols = mask.col_index();
    for (Eigen::Index r = 0; r < rows; ++r) {
        const double* x = in.row(r).data() + io;
        double* y = out.row(r).data() + oo;
        for (Eigen::Index j = 0; j < osz; ++j) y[j] = b[static_cast<std::size_t>(j)];
        for (std::size_t i = 0; i < l.in_size; ++i) {
            const double xi = x[i];
            if (xi == 0.0) continue;
            for (std::size_t n = rs[i]; n < rs[i + 1]; ++n) y[cols[n]] += w[n] * xi;
        }
    }
}

}  // namespace

Matrix forward_batch(const Network& net, const Matrix& inputs, const DropoutMasks* masks, ForwardCache* cache) {
    if (inputs.cols() != static_cast<Eigen::Index>(net.input_size()))
        throw std::invalid_argument("forward: expected " + std::to_string(net.input_size()) + " inputs, got " +
                                    std::to_string(inputs.cols()));
    if (!inputs.allFinite()) throw std::invalid_argument("forward: non-finite input");
    const auto& blocks = net.blocks();
    if (masks && masks->per_block.size() != blocks.size()) throw std::invalid_argument("forward: dropout masks do not match network");

    if (cache) {
        cache->net = &net;
        cache->generation = net.generation();
        cache->inputs.assign(blocks.size(), Matrix());
        cache->pre.assign(blocks.size(), Matrix());
        cache->dropout.assign(blocks.size(), Matrix());
    }

    Matrix current = inputs;
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
        const auto& block = blocks[bi];
        Matrix z(current.rows(), static_cast<Eigen::Index>(block.out_dim));
        for (const auto& layer : block.layers) apply_layer(net, layer, current, z);
        if (!z.allFinite()) throw std::runtime_error("forward: non-finite activation in block " + std::to_string(bi));

        Matrix a = block.activation == Activation::relu ? Matrix(z.cwiseMax(0.0)) : z;
        const Matrix* drop = nullptr;
        if (masks && block.dropout) {
            drop = &masks->per_block[bi];
            if (drop->rows() != a.rows() || drop->cols() != a.cols())
                throw std::invalid_argument("forward: dropout mask shape mismatch in block " + std::to_string(bi));
            a.array() *= drop->array();
        }
        if (cache) {
            cache->inputs[bi] = std::move(current);
            cache->pre[bi] = std::move(z);
            if (drop) cache->dropout[bi] = *drop;
        }
        current = std::move(a);
    }
    if (cache) cache->output = current;
    return current;
}

std::vector<double> forward(const Network& net, std::span<const double> p, bool train_mode, Rng* rng) {
    Matrix x = Eigen::Map<const Matrix>(p.data(), 1, static_cast<Eigen::Index>(p.size()));
    Matrix y;
    if (train_mode) {
        if (!rng) throw std::invalid_argument("forward: training mode needs a random stream");
        const auto masks = draw_dropout_masks(net, 1, net.config().dropout_rate, *rng);
        y = forward_batch(net, x, &masks);
    } else {
        y = forward_batch(net, x);
    }
    return std::vector<double>(y.data(), y.data() + y.size());
}

// --- checkpoints ----------------------------------------------------------

namespace {

template <class T>
void write_le(std::ofstream& out, std::span<const T> values) {
    static_assert(sizeof(T) == 8);
    for (T v : values) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
        out.write(reinterpret_cast<const char*>(&bits), 8);
    }
}

template <class T>
std::vector<T> read_le(const std::filesystem::path& path, std::size_t expected) {
    static_assert(sizeof(T) == 8);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != expected * 8)
        throw std::runtime_error(path.string() + ": expected " + std::to_string(expected * 8) + " bytes, found " + std::to_string(bytes));
    in.seekg(0);
    std::vector<T> values(expected);
    for (auto& v : values) {
        std::uint64_t bits;
        in.read(reinterpret_cast<char*>(&bits), 8);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
        std::memcpy(&v, &bits, 8);
    }
    return values;
}

std::string layer_file(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "layer_%03zu.bin", index);
    return buf;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const Network& net, std::uint64_t init_seed) {
    std::filesystem::create_directories(dir);
    const auto& cfg = net.config();
    nlohmann::ordered_json meta;
    meta["architecture"] = to_string(net.kind());
    meta["config"] = {{"k", cfg.k}, {"m", cfg.m}, {"d", cfg.d()}, {"h", cfg.h},
                      {"alpha", cfg.alpha}, {"s", cfg.s}, {"dropout_rate", cfg.dropout_rate}};
    meta["init_seed"] = init_seed;
    meta["parameter_count"] = net.parameter_count();
    meta["byte_order"] = "little";
    auto layers = nlohmann::ordered_json::array();
    std::size_t index = 0;
    for (const auto& block : net.blocks()) {
        for (const auto& l : block.layers) {
            const auto file = layer_file(index++);
            std::ofstream out(dir / file, std::ios::binary);
            if (!out) throw std::runtime_error("cannot write " + (dir / file).string());
            write_le<double>(out, net.params().subspan(l.weight_offset, l.parameter_count()));
            layers.push_back({{"file", file},
                              {"kind", l.kind == LayerKind::dense ? "dense" : "masked"},
                              {"in", l.in_size},
                              {"out", l.out_size},
                              {"weights", l.weight_count},
                              {"biases", l.out_size}});
        }
    }
    meta["layers"] = layers;
    if (const auto* mask = net.mask()) {
        std::ofstream out(dir / "mask_row_start.bin", std::ios::binary);
        std::vector<std::uint64_t> rs(mask->row_start().begin(), mask->row_start().end());
        write_le<std::uint64_t>(out, rs);
        std::ofstream out2(dir / "mask_col_index.bin", std::ios::binary);
        std::vector<std::uint64_t> ci(mask->col_index().begin(), mask->col_index().end());
        write_le<std::uint64_t>(out2, ci);
        meta["mask"] = {{"m", mask->size()}, {"alpha", mask->alpha()}, {"nonzeros", mask->nonzeros()}};
    }
    std::ofstream out(dir / "meta.json");
    if (!out) throw std::runtime_error("cannot write checkpoint meta.json");
    out << meta.dump(2) << '\n';
}

Network load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream in(dir / "meta.json");
    if (!in) throw std::runtime_error("cannot open " + (dir / "meta.json").string());
    const auto meta = nlohmann::json::parse(in);
    const auto kind = arch_kind_from_string(meta.at("architecture").get<std::string>());
    const auto& c = meta.at("config");
    ArchConfig cfg;
    cfg.k = c.at("k").get<std::size_t>();
    cfg.m = c.at("m").get<std::size_t>();
    cfg.h = c.at("h").get<std::size_t>();
    cfg.alpha = c.at("alpha").get<double>();
    cfg.s = c.at("s").get<std::size_t>();
    cfg.dropout_rate = c.at("dropout_rate").get<double>();
    const auto seed = meta.at("init_seed").get<std::uint64_t>();

    Network net = [&] {
        if (kind == ArchKind::regnet) return build_regnet(cfg, seed);
        const auto& mm = meta.at("mask");
        const auto m = mm.at("m").get<std::size_t>();
        const auto nnz = mm.at("nonzeros").get<std::size_t>();
        auto rs64 = read_le<std::uint64_t>(dir / "mask_row_start.bin", m + 1);
        auto ci64 = read_le<std::uint64_t>(dir / "mask_col_index.bin", nnz);
        auto mask = std::make_shared<PruneMask>(m, mm.at("alpha").get<double>(), std::vector<std::size_t>(rs64.begin(), rs64.end()),
                                                std::vector<std::size_t>(ci64.begin(), ci64.end()));
        return build_cupnet(cfg, std::move(mask), seed);
    }();

    const auto& layers = meta.at("layers");
    std::size_t index = 0;
    for (const auto& block : net.blocks()) {
        for (const auto& l : block.layers) {
            if (index >= layers.size()) throw std::runtime_error("checkpoint: too few layers in meta.json");
            const auto values = read_le<double>(dir / layers[index].at("file").get<std::string>(), l.parameter_count());
            auto dst = net.layer_params(l);
            std::copy(values.begin(), values.end(), dst.begin());
            ++index;
        }
    }
    if (index != layers.size()) throw std::runtime_error("checkpoint: layer count mismatch");
    if (meta.at("parameter_count").get<std::size_t>() != net.parameter_count())
        throw std::runtime_error("checkpoint: parameter count mismatch");
    return net;
}

}  // namespace cupnet
