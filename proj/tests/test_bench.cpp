#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cupnet/bench.hpp"
#include "cupnet/config.hpp"
#include "cupnet/csv.hpp"

using namespace cupnet;

namespace {

Dataset tiny_dataset() {
    GeneratorConfig cfg;
    cfg.radial_count = 3;
    cfg.angular_count = 3;
    cfg.outer_radius = 50.0;
    return sample_dataset(cfg, 80, 4);
}

BenchPlan tiny_plan() {
    BenchPlan plan;
    plan.h_values = {1, 2};
    plan.alpha_values = {10.0, 60.0};
    plan.runs = 2;
    plan.train.epochs = 2;
    plan.train.batch_size = 16;
    plan.master_seed = 3;
    plan.jobs = 2;
    return plan;
}

bool has_all_classes(const Dataset& ds) {
    const auto c = ds.class_counts();
    return c[0] > 0 && c[1] > 0 && c[2] > 0;
}

}  // namespace

TEST_CASE("run seeds pair architectures on the same split") {
    for (std::size_t run = 0; run < 5; ++run) {
        const auto a = derive_run_seeds(9, 2, 5.0, ArchKind::cupnet, run);
        const auto b = derive_run_seeds(9, 2, 5.0, ArchKind::regnet, run);
        CHECK(a.split == b.split);
        CHECK(a.init != b.init);
        CHECK(a.train != b.train);
        CHECK(a.split != derive_run_seeds(9, 2, 5.0, ArchKind::cupnet, run + 1).split);
    }
    CHECK(derive_run_seeds(9, 2, 5.0, ArchKind::cupnet, 0).split != derive_run_seeds(10, 2, 5.0, ArchKind::cupnet, 0).split);
}

TEST_CASE("cell shape satisfies parameter parity") {
    const auto ds = tiny_dataset();
    const auto mask = build_mask(pairwise_distances(ds.base_mesh), 30.0);
    for (std::size_t h = 1; h <= 4; ++h) {
        const auto shape = cell_shape(ds.k(), ds.m(), h, mask);
        const auto K = static_cast<std::int64_t>(ds.k()), D = static_cast<std::int64_t>(ds.d());
        CHECK(shape.n_ref >= shape.n_cup);
        CHECK(shape.n_ref - shape.n_cup < param_count_ref(K, D, static_cast<std::int64_t>(h), shape.s) -
                                              (shape.s > 1 ? param_count_ref(K, D, static_cast<std::int64_t>(h), shape.s - 1) : 0));
    }
}

TEST_CASE("aggregate statistics") {
    BenchReport report;
    report.plan = tiny_plan();
    CellRecord two;
    two.alpha = 1.0;
    two.runs = {{true, 0.8, ""}, {true, 0.9, ""}, {false, 0.0, "boom"}};
    CellRecord one;
    one.arch = ArchKind::regnet;
    one.alpha = 1.0;
    one.runs = {{true, 0.95, ""}};
    CellRecord none;
    none.alpha = 2.0;
    none.runs = {{false, 0.0, "x"}};
    report.cells = {two, one, none};
    aggregate(report);

    const auto& a = report.cells[0];
    CHECK(a.completed == 2);
    CHECK(a.failed == 1);
    CHECK(a.mean == doctest::Approx(0.85));
    CHECK(a.stddev == doctest::Approx(std::sqrt(0.005)));
    CHECK_FALSE(a.degenerate_std);
    CHECK_FALSE(a.best_in_column);

    const auto& b = report.cells[1];
    CHECK(b.mean == 0.95);
    CHECK(b.stddev == 0.0);
    CHECK(b.degenerate_std);
    CHECK(b.best_in_column);

    CHECK(report.cells[2].completed == 0);
    CHECK_FALSE(report.cells[2].best_in_column);
}

TEST_CASE("single run cell equals a direct train and score") {
    const auto ds = tiny_dataset();
    REQUIRE(has_all_classes(ds));
    auto plan = tiny_plan();
    plan.runs = 1;
    const auto mask = std::make_shared<const PruneMask>(build_mask(pairwise_distances(ds.base_mesh), 10.0));
    const auto shape = cell_shape(ds.k(), ds.m(), 1, *mask);
    const auto cell = run_cell(ds, plan, 1, 10.0, ArchKind::cupnet, mask);
    REQUIRE(cell.size() == 1);
    REQUIRE(cell[0].ok);

    // same run composed from the public pieces
    const auto seeds = derive_run_seeds(plan.master_seed, 1, 10.0, ArchKind::cupnet, 0);
    std::vector<CupClass> labels;
    for (const auto& s : ds.samples) labels.push_back(s.label);
    const auto data = prepare(ds, stratified_split(labels, plan.test_fraction, seeds.split));
    ArchConfig cfg;
    cfg.k = ds.k();
    cfg.m = ds.m();
    cfg.h = 1;
    cfg.alpha = 10.0;
    cfg.s = static_cast<std::size_t>(shape.s);
    auto net = build_cupnet(cfg, mask, seeds.init);
    TrainConfig tc = plan.train;
    tc.seed = seeds.train;
    const auto hist = train(net, data, tc);
    CHECK(cell[0].r2 == *hist.test_r2);

    BenchReport report;
    report.plan = plan;
    CellRecord rec;
    rec.runs = cell;
    report.cells = {rec};
    aggregate(report);
    CHECK(report.cells[0].mean == cell[0].r2);
    CHECK(report.cells[0].stddev == 0.0);
}

TEST_CASE("bench is reproducible and the emitters agree") {
    const auto ds = tiny_dataset();
    const auto plan = tiny_plan();
    auto a = run_bench(ds, plan);
    auto b = run_bench(ds, plan);
    auto serial = plan;
    serial.jobs = 1;
    auto c = run_bench(ds, serial);
    CHECK(emit_csv(a) == emit_csv(b));
    CHECK(emit_csv(a) == emit_csv(c));
    CHECK(emit_markdown(a) == emit_markdown(c));
    CHECK(a.cells.size() == 2 * 2 * 2);

    // every cell of the markdown grid carries the summary mean at 3 decimals
    const auto md = emit_markdown(a);
    for (const auto& cell : a.cells) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.3f ± %.3f", cell.mean, cell.stddev);
        CHECK(md.find(buf) != std::string::npos);
    }

    // long CSV: one row per run, and the per-cell means reproduce the summary
    std::istringstream in(emit_csv(a));
    std::string line;
    std::getline(in, line);
    CHECK(line == "architecture,h,alpha,s,n_cup,n_ref,run,r2");
    std::size_t rows = 0;
    std::map<std::tuple<std::string, std::size_t, double>, std::vector<double>> by_cell;
    while (std::getline(in, line)) {
        const auto f = csv::split_line(line);
        REQUIRE(f.size() == 8);
        by_cell[{f[0], static_cast<std::size_t>(csv::parse_int(f[1])), csv::parse_double(f[2])}].push_back(csv::parse_double(f[7]));
        ++rows;
    }
    CHECK(rows == 2 * 2 * 2 * plan.runs);
    for (const auto& cell : a.cells) {
        const auto& v = by_cell[{std::string(to_string(cell.arch)), cell.h, cell.alpha}];
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        CHECK(mean == doctest::Approx(cell.mean).epsilon(1e-15));
    }

    const auto dir = std::filesystem::temp_directory_path() / "cupnet_test_bench";
    std::filesystem::remove_all(dir);
    write_report(dir, a);
    for (const char* f : {"report.csv", "summary.csv", "report.md", "meta.json"}) CHECK(std::filesystem::exists(dir / f));
    std::ifstream meta(dir / "meta.json");
    const auto j = nlohmann::json::parse(meta);
    CHECK(j.at("master_seed").get<std::uint64_t>() == 3);
}

TEST_CASE("bench plan validation") {
    auto plan = tiny_plan();
    plan.runs = 0;
    CHECK_THROWS_AS(plan.validate(), std::invalid_argument);
    plan = tiny_plan();
    plan.alpha_values.clear();
    CHECK_THROWS_AS(plan.validate(), std::invalid_argument);
    plan = tiny_plan();
    plan.test_fraction = 1.0;
    CHECK_THROWS_AS(plan.validate(), std::invalid_argument);
}

TEST_CASE("config merge and strict keys") {
    const auto base = CliConfig{};
    auto merged = merge_config(base, nlohmann::json::parse(R"({"training": {"epochs": 7}, "bench": {"alpha_values": [1.5]}})"));
    CHECK(merged.training.config.epochs == 7);
    CHECK(merged.training.config.batch_size == base.training.config.batch_size);
    CHECK(merged.bench.alpha_values == std::vector<double>{1.5});
    CHECK(merged.bench.h_values == base.bench.h_values);

    merged = merge_config(base, nlohmann::json::parse(R"({"generator": {"n": 12, "seed": 4, "t_good": 3.0}})"));
    CHECK(merged.generator.n == 12);
    CHECK(merged.generator.seed == 4);
    CHECK(merged.generator.config.t_good == 3.0);

    CHECK_THROWS(merge_config(base, nlohmann::json::parse(R"({"trainin": {}})")));
    CHECK_THROWS(merge_config(base, nlohmann::json::parse(R"({"training": {"epoch": 3}})")));
    CHECK_THROWS(merge_config(base, nlohmann::json::parse(R"({"architecture": {"arch": "mlp"}})")));
    CHECK_THROWS(merge_config(base, nlohmann::json::parse(R"({"generator": {"gain": 1}})")));

    // the emitted effective config reads back to itself
    const auto round = merge_config(CliConfig{}, nlohmann::json::parse(to_json(merged).dump()));
    CHECK(to_json(round) == to_json(merged));
}
