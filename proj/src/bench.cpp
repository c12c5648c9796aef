#include "cupnet/bench.hpp"

#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "cupnet/config.hpp"
#include "cupnet/csv.hpp"
#include "cupnet/rng.hpp"

namespace cupnet {

void BenchPlan::validate() const {
    if (runs < 1) throw std::invalid_argument("bench: runs must be >= 1");
    if (h_values.empty() || alpha_values.empty() || architectures.empty()) throw std::invalid_argument("bench: empty grid");
    for (auto h : h_values)
        if (h < 1) throw std::invalid_argument("bench: h values must be >= 1");
    for (auto a : alpha_values)
        if (!(a >= 0.0)) throw std::invalid_argument("bench: alpha values must be >= 0");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw std::invalid_argument("bench: test_fraction must be in (0, 1)");
    train.validate();
}

RunSeeds derive_run_seeds(std::uint64_t master, std::size_t h, double alpha, ArchKind arch, std::size_t run) {
    const auto a = std::bit_cast<std::uint64_t>(alpha);
    const auto kind = static_cast<std::uint64_t>(arch);
    return RunSeeds{
        derive_seed(master, {0x5u, h, a, run}),
        derive_seed(master, {0x1u, h, a, kind, run}),
        derive_seed(master, {0x7u, h, a, kind, run}),
    };
}

CellShape cell_shape(std::size_t k, std::size_t m, std::size_t h, const PruneMask& mask) {
    CellShape shape;
    const auto K = static_cast<std::int64_t>(k), M = static_cast<std::int64_t>(m), H = static_cast<std::int64_t>(h);
    shape.c_alpha = mask_count(mask);
    shape.n_cup = param_count_cup(K, 3 * M, M, H, static_cast<std::int64_t>(shape.c_alpha));
    shape.s = solve_s(K, 3 * M, H, shape.n_cup);
    shape.n_ref = param_count_ref(K, 3 * M, H, shape.s);
    return shape;
}

RunResult run_single(const Dataset& ds, const BenchPlan& plan, std::size_t h, double alpha, ArchKind arch,
                     std::shared_ptr<const PruneMask> mask, const CellShape& shape, std::size_t run) {
    const auto seeds = derive_run_seeds(plan.master_seed, h, alpha, arch, run);
    RunResult result;
    try {
        std::vector<CupClass> labels;
        labels.reserve(ds.size());
        for (const auto& s : ds.samples) labels.push_back(s.label);
        const auto split = stratified_split(labels, plan.test_fraction, seeds.split);
        const auto data = prepare(ds, split);

        ArchConfig cfg;
        cfg.k = ds.k();
        cfg.m = ds.m();
        cfg.h = h;
        cfg.alpha = alpha;
        cfg.s = static_cast<std::size_t>(shape.s);
        cfg.dropout_rate = plan.train.dropout_rate;
        Network net = arch == ArchKind::cupnet ? build_cupnet(cfg, std::move(mask), seeds.init) : build_regnet(cfg, seeds.init);

        TrainConfig tc = plan.train;
        tc.seed = seeds.train;
        const auto history = train(net, data, tc);
        if (!history.test_r2) throw std::runtime_error("test split too small to score");
        result.ok = true;
        result.r2 = *history.test_r2;
    } catch (const std::exception& e) {
        result.ok = false;
        result.error = e.what();
    }
    return result;
}

std::vector<RunResult> run_cell(const Dataset& ds, const BenchPlan& plan, std::size_t h, double alpha, ArchKind arch,
                                std::shared_ptr<const PruneMask> mask) {
    const auto shape = cell_shape(ds.k(), ds.m(), h, *mask);
    std::vector<RunResult> runs;
    for (std::size_t r = 0; r < plan.runs; ++r) runs.push_back(run_single(ds, plan, h, alpha, arch, mask, shape, r));
    return runs;
}

BenchReport run_bench(const Dataset& ds, const BenchPlan& plan) {
    plan.validate();
    const auto t0 = std::chrono::steady_clock::now();
    BenchReport report;
    report.plan = plan;
    report.k = ds.k();
    report.m = ds.m();
    report.n = ds.size();

    // One mask per alpha, shared by every cell and run.
    const auto dist = pairwise_distances(ds.base_mesh);
    std::map<double, std::shared_ptr<const PruneMask>> masks;
    for (auto a : plan.alpha_values) masks.emplace(a, std::make_shared<const PruneMask>(build_mask(dist, a)));

    for (auto arch : plan.architectures)
        for (auto h : plan.h_values)
            for (auto a : plan.alpha_values) {
                CellRecord cell;
                cell.arch = arch;
                cell.h = h;
                cell.alpha = a;
                cell.shape = cell_shape(ds.k(), ds.m(), h, *masks.at(a));
                cell.runs.resize(plan.runs);
                report.cells.push_back(std::move(cell));
            }

    const std::size_t total = report.cells.size() * plan.runs;
    std::size_t workers = plan.jobs ? plan.jobs : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, total);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t job = next++; job < total; job = next++) {
            auto& cell = report.cells[job / plan.runs];
            const auto run = job % plan.runs;
            cell.runs[run] = run_single(ds, plan, cell.h, cell.alpha, cell.arch, masks.at(cell.alpha), cell.shape, run);
        }
    };
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    }

    aggregate(report);
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

void aggregate(BenchReport& report) {
    for (auto& cell : report.cells) {
        std::vector<double> ok;
        for (const auto& r : cell.runs)
            if (r.ok) ok.push_back(r.r2);
        cell.completed = ok.size();
        cell.failed = cell.runs.size() - ok.size();
        cell.best_in_column = false;
        if (ok.empty()) {
            cell.mean = std::nan("");
            cell.stddev = std::nan("");
            cell.degenerate_std = true;
            continue;
        }
        double sum = 0.0;
        for (double v : ok) sum += v;
        cell.mean = sum / static_cast<double>(ok.size());
        if (ok.size() < 2) {
            cell.stddev = 0.0;
            cell.degenerate_std = true;
        } else {
            double ss = 0.0;
            for (double v : ok) ss += (v - cell.mean) * (v - cell.mean);
            cell.stddev = std::sqrt(ss / static_cast<double>(ok.size() - 1));
            cell.degenerate_std = false;
        }
    }
    std::map<double, CellRecord*> best;
    for (auto& cell : report.cells) {
        if (cell.completed == 0) continue;
        auto& b = best[cell.alpha];
        if (!b || cell.mean > b->mean) b = &cell;
    }
    for (auto& [alpha, cell] : best) cell->best_in_column = true;
}

namespace {

std::string fixed3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

}  // namespace

std::string emit_csv(const BenchReport& report) {
    std::ostringstream out;
    out << "architecture,h,alpha,s,n_cup,n_ref,run,r2\n";
    for (const auto& cell : report.cells) {
        for (std::size_t r = 0; r < cell.runs.size(); ++r) {
            out << to_string(cell.arch) << ',' << cell.h << ',' << csv::format(cell.alpha) << ',' << cell.shape.s << ','
                << cell.shape.n_cup << ',' << cell.shape.n_ref << ',' << r << ','
                << (cell.runs[r].ok ? csv::format(cell.runs[r].r2) : std::string("nan")) << '\n';
        }
    }
    return out.str();
}

std::string emit_summary_csv(const BenchReport& report) {
    std::ostringstream out;
    out << "architecture,h,alpha,c_alpha,s,n_cup,n_ref,params,runs,failed,mean_r2,std_r2,std_flag,best_in_column\n";
    for (const auto& c : report.cells) {
        const auto params = c.arch == ArchKind::cupnet ? c.shape.n_cup : c.shape.n_ref;
        out << to_string(c.arch) << ',' << c.h << ',' << csv::format(c.alpha) << ',' << c.shape.c_alpha << ',' << c.shape.s << ','
            << c.shape.n_cup << ',' << c.shape.n_ref << ',' << params << ',' << c.completed << ',' << c.failed << ','
            << (c.completed ? csv::format(c.mean) : "nan") << ',' << (c.completed ? csv::format(c.stddev) : "nan") << ','
            << (c.degenerate_std ? "degenerate" : "") << ',' << (c.best_in_column ? 1 : 0) << '\n';
    }
    return out.str();
}

std::string emit_markdown(const BenchReport& report) {
    const auto& plan = report.plan;
    std::ostringstream out;
    out << "# Benchmark report\n\n";
    out << "R² mean ± sample standard deviation (n−1) over " << plan.runs << " runs per cell; "
        << "k=" << report.k << ", m=" << report.m << ", n=" << report.n << ", master seed " << plan.master_seed << ".\n";
    out << "Bold marks the best mean in each column. † marks a cell with fewer than two completed runs (std reported as 0).\n\n";

    out << "| network |";
    for (auto a : plan.alpha_values) out << " α=" << csv::format(a) << " |";
    out << "\n|---|";
    for (std::size_t i = 0; i < plan.alpha_values.size(); ++i) out << "---|";
    out << '\n';

    auto find = [&](ArchKind arch, std::size_t h, double a) -> const CellRecord* {
        for (const auto& c : report.cells)
            if (c.arch == arch && c.h == h && c.alpha == a) return &c;
        return nullptr;
    };
    for (auto h : plan.h_values) {
        for (auto arch : plan.architectures) {
            out << "| " << to_string(arch) << " (h=" << h << ") |";
            for (auto a : plan.alpha_values) {
                const auto* c = find(arch, h, a);
                if (!c || c->completed == 0) {
                    out << " failed |";
                    continue;
                }
                std::string cell = fixed3(c->mean) + " ± " + fixed3(c->stddev);
                if (c->best_in_column) cell = "**" + cell + "**";
                if (c->degenerate_std) cell += " †";
                if (c->failed) cell += " (" + std::to_string(c->failed) + " failed)";
                out << ' ' << cell << " |";
            }
            out << '\n';
        }
    }

    out << "\n## Trainable parameters\n\n| network |";
    for (auto a : plan.alpha_values) out << " α=" << csv::format(a) << " |";
    out << "\n|---|";
    for (std::size_t i = 0; i < plan.alpha_values.size(); ++i) out << "---|";
    out << '\n';
    for (auto h : plan.h_values) {
        for (auto arch : plan.architectures) {
            out << "| " << to_string(arch) << " (h=" << h << ") |";
            for (auto a : plan.alpha_values) {
                const auto* c = find(arch, h, a);
                if (!c) {
                    out << " |";
                    continue;
                }
                if (arch == ArchKind::cupnet)
                    out << ' ' << c->shape.n_cup << " (c=" << c->shape.c_alpha << ") |";
                else
                    out << ' ' << c->shape.n_ref << " (s=" << c->shape.s << ") |";
            }
            out << '\n';
        }
    }
    return out.str();
}

void write_report(const std::filesystem::path& dir, const BenchReport& report) {
    std::filesystem::create_directories(dir);
    auto write = [&](const char* name, const std::string& text) {
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
        out << text;
    };
    write("report.csv", emit_csv(report));
    write("summary.csv", emit_summary_csv(report));
    write("report.md", emit_markdown(report));

    nlohmann::ordered_json meta;
    meta["plan"] = to_json(report.plan);
    meta["master_seed"] = report.plan.master_seed;
    meta["dataset"] = {{"k", report.k}, {"m", report.m}, {"n", report.n}};
    meta["std_convention"] = "sample (n-1); 0 with a degenerate flag when fewer than two runs completed";
    auto failures = nlohmann::ordered_json::array();
    for (const auto& c : report.cells)
        for (std::size_t r = 0; r < c.runs.size(); ++r)
            if (!c.runs[r].ok)
                failures.push_back({{"architecture", to_string(c.arch)}, {"h", c.h}, {"alpha", c.alpha}, {"run", r}, {"error", c.runs[r].error}});
    meta["failures"] = failures;
    meta["wall_seconds"] = report.wall_seconds;
    write("meta.json", meta.dump(2) + "\n");
}

}  // namespace cupnet
