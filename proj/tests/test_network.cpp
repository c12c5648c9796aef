#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "cupnet/geometry.hpp"
#include "cupnet/network.hpp"
#include "cupnet/rng.hpp"
#include "oracles.hpp"

using namespace cupnet;

namespace {

std::shared_ptr<const PruneMask> random_mask(std::size_t m, double alpha, std::uint64_t seed) {
    Rng rng(seed);
    const Mesh mesh(oracle::random_points(m, 4.0, rng));
    return std::make_shared<const PruneMask>(build_mask(pairwise_distances(mesh), alpha));
}

std::shared_ptr<const PruneMask> two_point_mask(double alpha) {
    return std::make_shared<const PruneMask>(build_mask(pairwise_distances(Mesh({{0, 0, 0}, {1, 0, 0}})), alpha));
}

Matrix random_batch(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix x(rows, cols);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-2.0, 2.0);
    return x;
}

void randomize_params(Network& net, Rng& rng) {
    for (auto& v : net.mutable_params()) v = rng.uniform(-0.5, 0.5);
}

}  // namespace

TEST_CASE("masked_forward small example") {
    const auto D = pairwise_distances(Mesh({{0, 0, 0}, {1, 0, 0}}));
    const auto diag = build_mask(D, 0.5);
    const std::vector<double> values{1.0, 1.0};
    const std::vector<double> bias{0.5, -3.0};
    const std::vector<double> input{1.0, 2.0};
    const auto out = masked_forward(diag, values, bias, input, Activation::relu);
    CHECK(out == std::vector<double>{1.5, 0.0});
    const auto lin = masked_forward(diag, values, bias, input, Activation::linear);
    CHECK(lin == std::vector<double>{1.5, -1.0});

    const auto full = build_mask(D, 1.0);
    // row-major over (input, output): W00, W01, W10, W11
    const std::vector<double> w{1.0, 2.0, 3.0, 4.0};
    const auto o = masked_forward(full, w, std::vector<double>{0.0, 0.0}, input, Activation::linear);
    CHECK(o == std::vector<double>{7.0, 10.0});
}

TEST_CASE("masked_forward matches the dense oracle") {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const auto m = 1 + rng.below(30);
        const auto mask = random_mask(m, rng.uniform(0.0, 6.0), rng.next_u64());
        std::vector<double> w(mask->nonzeros()), b(m), x(m);
        for (auto& v : w) v = rng.uniform(-1, 1);
        for (auto& v : b) v = rng.uniform(-1, 1);
        for (auto& v : x) v = rng.uniform(-1, 1);
        const auto act = trial % 2 ? Activation::relu : Activation::linear;
        const auto got = masked_forward(*mask, w, b, x, act);

        std::vector<double> dense(m * m, 0.0);
        std::size_t n = 0;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j)
                if (mask->contains(i, j)) dense[i * m + j] = w[n++];
        for (std::size_t j = 0; j < m; ++j) {
            double acc = b[j];
            for (std::size_t i = 0; i < m; ++i) acc += dense[i * m + j] * x[i];
            if (act == Activation::relu) acc = std::max(acc, 0.0);
            CHECK(got[j] == doctest::Approx(acc).epsilon(1e-12).scale(1.0));
        }
    }
}

TEST_CASE("parameter counts") {
    CHECK(param_count_cup(1, 6, 2, 1, 2) == 42);
    CHECK(oracle::count_cup_by_layers(1, 2, 1, 2) == 42);
    CHECK(param_count_cup(1, 6, 2, 1, 4) == 48);
    CHECK(param_count_cup(9, 5937, 1979, 1, 3916441) == 23569890);
    CHECK(param_count_cup(9, 5937, 1979, 2, 75241) == 12277950);
    CHECK(oracle::count_cup_by_layers(9, 1979, 2, 75241) == 12277950);
    CHECK(param_count_ref(1, 6, 1, 1) == 16);
    CHECK(oracle::count_ref_by_layers(1, 6, 1, 1) == 16);
    CHECK(param_count_ref(9, 5937, 3, 2560) == 34898737);
    CHECK(param_count_ref(9, 5937, 3, 2559) == 34877430);
    CHECK(param_count_cup(9, 5937, 1979, 7, 75241) == 12277950 + 5 * 3 * (75241 + 1979));

    CHECK_THROWS_AS(param_count_cup(9, 10, 3, 1, 9), std::invalid_argument);
    CHECK_THROWS_AS(param_count_cup(9, 9, 3, 1, 2), std::invalid_argument);
    CHECK_THROWS_AS(param_count_cup(9, 9, 3, 1, 10), std::invalid_argument);
    CHECK_THROWS_AS(param_count_ref(9, 9, 1, 0), std::invalid_argument);

    Rng rng(4);
    for (int t = 0; t < 300; ++t) {
        const std::int64_t k = 1 + rng.below(20), m = 1 + rng.below(60), h = 1 + rng.below(8);
        const std::int64_t c = m + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(m * m - m + 1)));
        CHECK(param_count_cup(k, 3 * m, m, h, c) == oracle::count_cup_by_layers(k, m, h, c));
        const std::int64_t s = 1 + rng.below(500);
        CHECK(param_count_ref(k, 3 * m, h, s) == oracle::count_ref_by_layers(k, 3 * m, h, s));
    }
}

TEST_CASE("solve_s") {
    CHECK(solve_s(9, 5937, 3, 34877431) == 2560);
    CHECK(solve_s(9, 5937, 3, 34898737) == 2560);
    CHECK(solve_s(9, 5937, 3, 34898738) == 2561);
    CHECK(solve_s(9, 5937, 2, 12277950) == oracle::scan_s(9, 5937, 2, 12277950));
    // n_cup = d + u + h is exactly n_ref(1)
    const std::int64_t k = 9, d = 30, h = 3, u = k + h + d + 1;
    CHECK(solve_s(k, d, h, d + u + h) == 1);
    CHECK_THROWS_AS(solve_s(k, d, h, d), std::invalid_argument);

    Rng rng(17);
    for (int t = 0; t < 500; ++t) {
        const std::int64_t kk = 1 + rng.below(12), dd = 3 * (1 + rng.below(80)), hh = 1 + rng.below(7);
        const std::int64_t n = dd + 1 + static_cast<std::int64_t>(rng.below(2000000));
        const auto s = solve_s(kk, dd, hh, n);
        CHECK(s == oracle::scan_s(kk, dd, hh, n));
        CHECK(param_count_ref(kk, dd, hh, s) >= n);
        if (s > 1) CHECK(param_count_ref(kk, dd, hh, s - 1) < n);
    }
}

TEST_CASE("builders enumerate the documented layers") {
    ArchConfig cfg;
    cfg.k = 1;
    cfg.m = 2;
    cfg.h = 1;
    cfg.alpha = 1.0;
    const auto cup = build_cupnet(cfg, two_point_mask(0.5), 1);
    CHECK(cup.parameter_count() == 42);
    CHECK(build_cupnet(cfg, two_point_mask(1.0), 1).parameter_count() == 48);
    REQUIRE(cup.blocks().size() == 3);
    CHECK(cup.blocks()[0].layers.size() == 1);
    CHECK(cup.blocks()[0].dropout);
    CHECK(cup.blocks()[1].layers.size() == 3);
    CHECK(cup.blocks()[1].layers[0].kind == LayerKind::masked);
    CHECK(cup.blocks()[2].layers.size() == 3);
    CHECK(cup.blocks()[2].activation == Activation::linear);
    CHECK_FALSE(cup.blocks()[2].dropout);
    for (std::size_t seg = 0; seg < 3; ++seg) {
        CHECK(cup.blocks()[1].layers[seg].in_offset == 2 * seg);
        CHECK(cup.blocks()[2].layers[seg].out_offset == 2 * seg);
    }

    ArchConfig r;
    r.k = 1;
    r.m = 2;
    r.h = 1;
    r.s = 1;
    CHECK(build_regnet(r, 1).parameter_count() == 16);

    ArchConfig deep = cfg;
    deep.h = 4;
    CHECK(build_cupnet(deep, two_point_mask(1.0), 1).parameter_count() ==
          static_cast<std::size_t>(oracle::count_cup_by_layers(1, 2, 4, 4)));

    CHECK_THROWS_AS(build_cupnet(cfg, nullptr, 1), std::invalid_argument);
    CHECK_THROWS_AS(build_cupnet(cfg, random_mask(3, 1.0, 1), 1), std::invalid_argument);
}

TEST_CASE("initialization is seeded and bounded by fan-in") {
    ArchConfig cfg;
    cfg.k = 4;
    cfg.m = 12;
    cfg.h = 2;
    const auto mask = random_mask(12, 2.0, 5);
    const auto a = build_cupnet(cfg, mask, 9);
    const auto b = build_cupnet(cfg, mask, 9);
    const auto c = build_cupnet(cfg, mask, 10);
    CHECK(std::ranges::equal(a.params(), b.params()));
    CHECK_FALSE(std::ranges::equal(a.params(), c.params()));

    for (const auto& blk : a.blocks())
        for (const auto& l : blk.layers) {
            for (double v : a.biases(l)) CHECK(v == 0.0);
            const auto w = a.weights(l);
            if (l.kind == LayerKind::dense) {
                const double lim = std::sqrt(6.0 / static_cast<double>(l.in_size));
                for (double v : w) CHECK(std::abs(v) <= lim);
            } else {
                std::size_t n = 0;
                for (std::size_t i = 0; i < mask->size(); ++i)
                    for (auto j : mask->row(i)) {
                        const double lim = std::sqrt(6.0 / static_cast<double>(mask->row_degree(j)));
                        CHECK(std::abs(w[n++]) <= lim);
                    }
            }
        }
}

TEST_CASE("batched forward agrees with the dense oracle") {
    Rng rng(123);
    for (int trial = 0; trial < 12; ++trial) {
        ArchConfig cfg;
        cfg.k = 1 + rng.below(6);
        cfg.m = 1 + rng.below(10);
        cfg.h = 1 + rng.below(3);
        cfg.s = 1 + rng.below(20);
        const auto mask = random_mask(cfg.m, rng.uniform(0, 5), rng.next_u64());
        auto net = trial % 2 ? build_cupnet(cfg, mask, trial) : build_regnet(cfg, trial);
        randomize_params(net, rng);
        const auto X = random_batch(7, cfg.k, rng);
        const auto Y = forward_batch(net, X);
        for (Eigen::Index r = 0; r < X.rows(); ++r) {
            const std::vector<double> x(X.row(r).data(), X.row(r).data() + cfg.k);
            const auto ref = oracle::forward(net, x);
            const auto single = forward(net, x);
            for (std::size_t j = 0; j < ref.size(); ++j) {
                CHECK(Y(r, j) == doctest::Approx(ref[j]).epsilon(1e-12).scale(1.0));
                CHECK(single[j] == doctest::Approx(Y(r, j)).epsilon(1e-12).scale(1.0));
            }
        }

        // training mode with fixed masks
        Rng drop_rng(trial);
        const auto masks = draw_dropout_masks(net, 7, 0.2, drop_rng);
        const auto Yt = forward_batch(net, X, &masks);
        for (Eigen::Index r = 0; r < X.rows(); ++r) {
            std::vector<oracle::Vec> drop;
            for (const auto& mk : masks.per_block) {
                if (mk.size() == 0) {
                    drop.emplace_back();
                    continue;
                }
                drop.emplace_back(mk.row(r).data(), mk.row(r).data() + mk.cols());
            }
            const std::vector<double> x(X.row(r).data(), X.row(r).data() + cfg.k);
            const auto ref = oracle::forward(net, x, &drop);
            for (std::size_t j = 0; j < ref.size(); ++j) CHECK(Yt(r, j) == doctest::Approx(ref[j]).epsilon(1e-12).scale(1.0));
        }
    }
}

TEST_CASE("unpruned mask matches per-segment dense layers") {
    Rng rng(8);
    const std::size_t m = 6;
    const Mesh mesh(oracle::random_points(m, 1.0, rng));
    const auto D = pairwise_distances(mesh);
    ArchConfig cfg;
    cfg.k = 3;
    cfg.m = m;
    cfg.h = 2;
    auto net = build_cupnet(cfg, std::make_shared<const PruneMask>(build_mask(D, D.max())), 3);
    CHECK(net.mask()->nonzeros() == m * m);
    randomize_params(net, rng);

    // Rebuild each masked block by hand as three full m x m products.
    const auto X = random_batch(5, 3, rng);
    const auto got = forward_batch(net, X);
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        std::vector<double> cur(X.row(r).data(), X.row(r).data() + 3);
        for (const auto& blk : net.blocks()) {
            std::vector<double> out(blk.out_dim);
            for (const auto& l : blk.layers) {
                const auto w = net.weights(l);
                const auto b = net.biases(l);
                for (std::size_t j = 0; j < l.out_size; ++j) {
                    double acc = b[j];
                    for (std::size_t i = 0; i < l.in_size; ++i) acc += w[i * l.out_size + j] * cur[l.in_offset + i];
                    out[l.out_offset + j] = acc;
                }
            }
            if (blk.activation == Activation::relu)
                for (auto& v : out) v = std::max(v, 0.0);
            cur = out;
        }
        for (std::size_t j = 0; j < cur.size(); ++j) CHECK(got(r, j) == doctest::Approx(cur[j]).epsilon(1e-12).scale(1.0));
    }
}

TEST_CASE("zero weights give the output bias") {
    ArchConfig cfg;
    cfg.k = 2;
    cfg.m = 3;
    cfg.h = 1;
    auto net = build_cupnet(cfg, random_mask(3, 2.0, 1), 1);
    auto params = net.mutable_params();
    std::fill(params.begin(), params.end(), 0.0);
    const auto& out_block = net.blocks().back();
    for (const auto& l : out_block.layers) {
        auto lp = net.layer_params(l);
        for (std::size_t j = 0; j < l.out_size; ++j) lp[l.weight_count + j] = static_cast<double>(l.out_offset + j) - 4.0;
    }
    const auto y = forward(net, std::vector<double>{0.3, -7.0});
    for (std::size_t j = 0; j < y.size(); ++j) CHECK(y[j] == static_cast<double>(j) - 4.0);
}

TEST_CASE("evaluation is deterministic and training mode is seeded") {
    ArchConfig cfg;
    cfg.k = 3;
    cfg.m = 5;
    cfg.h = 2;
    const auto net = build_cupnet(cfg, random_mask(5, 2.0, 4), 6);
    const std::vector<double> p{0.1, -0.4, 0.9};
    CHECK(forward(net, p) == forward(net, p));
    Rng a(5), b(5);
    CHECK(forward(net, p, true, &a) == forward(net, p, true, &b));
    CHECK_THROWS_AS(forward(net, std::vector<double>{1.0}), std::invalid_argument);
    CHECK_THROWS(forward(net, p, true, nullptr));
}

TEST_CASE("non-finite activations name the block") {
    ArchConfig cfg;
    cfg.k = 1;
    cfg.m = 1;
    cfg.h = 1;
    cfg.s = 3;
    auto net = build_regnet(cfg, 1);
    net.mutable_params()[0] = 1e308;
    try {
        forward(net, std::vector<double>{1e308});
        FAIL("expected failure");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("block 0") != std::string::npos);
    }
}

TEST_CASE("checkpoint round trip is bit exact") {
    const auto dir = std::filesystem::temp_directory_path() / "cupnet_test_ckpt";
    std::filesystem::remove_all(dir);
    Rng rng(2);
    ArchConfig cfg;
    cfg.k = 4;
    cfg.m = 7;
    cfg.h = 3;
    cfg.alpha = 1.5;
    const auto mask = random_mask(7, 1.5, 3);
    auto net = build_cupnet(cfg, mask, 77);
    randomize_params(net, rng);
    save_checkpoint(dir, net, 77);
    const auto back = load_checkpoint(dir);
    CHECK(back.kind() == ArchKind::cupnet);
    CHECK(std::ranges::equal(back.params(), net.params()));
    CHECK(std::ranges::equal(back.mask()->row_start(), mask->row_start()));
    CHECK(std::ranges::equal(back.mask()->col_index(), mask->col_index()));
    const auto X = random_batch(4, 4, rng);
    CHECK(forward_batch(back, X) == forward_batch(net, X));

    ArchConfig r = cfg;
    r.s = 11;
    auto reg = build_regnet(r, 5);
    randomize_params(reg, rng);
    const auto dir2 = dir / "reg";
    save_checkpoint(dir2, reg, 5);
    const auto reg_back = load_checkpoint(dir2);
    CHECK(reg_back.kind() == ArchKind::regnet);
    CHECK(std::ranges::equal(reg_back.params(), reg.params()));
    CHECK_THROWS(load_checkpoint(dir / "missing"));
}

TEST_CASE("pruned positions have no parameter") {
    Rng rng(21);
    ArchConfig cfg;
    cfg.k = 2;
    cfg.m = 9;
    cfg.h = 2;
    const auto mask = random_mask(9, 1.5, 8);
    REQUIRE(mask->nonzeros() < 81);
    auto net = build_cupnet(cfg, mask, 4);
    randomize_params(net, rng);
    const auto c = static_cast<std::size_t>(mask_count(*mask));
    CHECK(net.parameter_count() == 3 * cfg.h * (c + cfg.m) + (cfg.k * cfg.d() + cfg.d()) + 3 * (cfg.m * cfg.m + cfg.m));

    // In a dense copy a pruned entry does carry influence once it is nonzero.
    const auto& l = net.blocks()[1].layers[0];
    auto W = oracle::dense_weights(net, l);
    const std::vector<double> x{0.4, -0.9};
    const auto& frame = net.blocks()[0].layers[0];
    std::vector<double> hidden(frame.out_size);
    const auto fw = net.weights(frame);
    const auto fb = net.biases(frame);
    for (std::size_t j = 0; j < hidden.size(); ++j) {
        double acc = fb[j];
        for (std::size_t i = 0; i < 2; ++i) acc += fw[i * frame.out_size + j] * x[i];
        hidden[j] = std::max(acc, 0.0);
    }
    std::size_t pi = 9, pj = 9;
    for (std::size_t i = 0; i < 9 && pi == 9; ++i)
        for (std::size_t j = 0; j < 9; ++j)
            if (hidden[i] != 0.0 && !mask->contains(i, j)) {
                pi = i;
                pj = j;
                break;
            }
    REQUIRE(pi < 9);
    auto apply = [&](const std::vector<double>& w) {
        double acc = 0.0;
        for (std::size_t i = 0; i < 9; ++i) acc += w[i * 9 + pj] * hidden[i];
        return acc;
    };
    const double before = apply(W);
    W[pi * 9 + pj] = 1.0;
    CHECK(apply(W) != before);
}
