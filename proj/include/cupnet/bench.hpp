#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "cupnet/network.hpp"
#include "cupnet/synthcup.hpp"
#include "cupnet/training.hpp"

namespace cupnet {

struct BenchPlan {
    std::vector<std::size_t> h_values{1, 2, 3, 4, 5, 6, 7};
    std::vector<double> alpha_values{1.0, 2.5, 5.0, 10.0, 25.0, 50.0};
    std::size_t runs = 10;
    double test_fraction = 0.1;
    TrainConfig train;
    std::vector<ArchKind> architectures{ArchKind::cupnet, ArchKind::regnet};
    std::uint64_t master_seed = 0;
    std::size_t jobs = 0;  // 0: one worker per hardware thread

    void validate() const;
};

struct RunSeeds {
    std::uint64_t split = 0;
    std::uint64_t init = 0;
    std::uint64_t train = 0;
};

/// The split seed ignores the architecture so that cupnet and regnet are
/// compared on identical train/test partitions.
RunSeeds derive_run_seeds(std::uint64_t master, std::size_t h, double alpha, ArchKind arch, std::size_t run);

struct RunResult {
    bool ok = false;
    double r2 = 0.0;
    std::string error;
};

/// Per-(architecture, h, alpha) sizing shared by every run of a cell.
struct CellShape {
    std::size_t c_alpha = 0;
    std::int64_t n_cup = 0;
    std::int64_t s = 0;
    std::int64_t n_ref = 0;
};

CellShape cell_shape(std::size_t k, std::size_t m, std::size_t h, const PruneMask& mask);

struct CellRecord {
    ArchKind arch = ArchKind::cupnet;
    std::size_t h = 1;
    double alpha = 0.0;
    CellShape shape;
    std::vector<RunResult> runs;

    // filled by aggregate()
    std::size_t completed = 0;
    std::size_t failed = 0;
    double mean = 0.0;
    double stddev = 0.0;  // sample (n - 1); 0 when fewer than two runs completed
    bool degenerate_std = false;
    bool best_in_column = false;
};

struct BenchReport {
    BenchPlan plan;
    std::size_t k = 0, m = 0, n = 0;
    std::vector<CellRecord> cells;
    double wall_seconds = 0.0;
};

/// Trains and scores one run of a cell.
RunResult run_single(const Dataset& ds, const BenchPlan& plan, std::size_t h, double alpha, ArchKind arch,
                     std::shared_ptr<const PruneMask> mask, const CellShape& shape, std::size_t run);

/// All runs of one cell, sequentially.
std::vector<RunResult> run_cell(const Dataset& ds, const BenchPlan& plan, std::size_t h, double alpha, ArchKind arch,
                                std::shared_ptr<const PruneMask> mask);

/// Full grid. Runs are scheduled on a worker pool; results are keyed by
/// (cell, run), so the report does not depend on scheduling.
BenchReport run_bench(const Dataset& ds, const BenchPlan& plan);

void aggregate(BenchReport& report);

/// Long format: architecture,h,alpha,s,n_cup,n_ref,run,r2 (failed runs: nan).
std::string emit_csv(const BenchReport& report);
/// One row per cell with mean, std and the best-in-column flag.
std::string emit_summary_csv(const BenchReport& report);
/// Grid with one row per (architecture, h) and one column per alpha.
std::string emit_markdown(const BenchReport& report);

/// report.csv, summary.csv, report.md, meta.json.
void write_report(const std::filesystem::path& dir, const BenchReport& report);

}  // namespace cupnet
