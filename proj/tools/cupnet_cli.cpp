// cupnet command-line tool: dataset generation, mask inspection, parameter
// parity, training and grid benchmarks.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cupnet/bench.hpp"
#include "cupnet/config.hpp"
#include "cupnet/csv.hpp"
#include "cupnet/geometry.hpp"
#include "cupnet/network.hpp"
#include "cupnet/rng.hpp"
#include "cupnet/synthcup.hpp"
#include "cupnet/training.hpp"

namespace fs = std::filesystem;
using namespace cupnet;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void write_effective_config(const fs::path& dir, const CliConfig& cfg) {
    fs::create_directories(dir);
    std::ofstream out(dir / "config.json");
    if (!out) throw std::runtime_error("cannot write " + (dir / "config.json").string());
    out << to_json(cfg).dump(2) << '\n';
}

CliConfig base_config(const std::string& config_path) {
    if (config_path.empty()) return CliConfig{};
    if (!fs::exists(config_path)) throw UsageError("config file not found: " + config_path);
    try {
        return load_config(config_path);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
}

/// Flags given on the command line win over the config file.
template <class T>
void override_if(const CLI::Option* opt, const T& value, T& target) {
    if (opt->count() > 0) target = value;
}

std::shared_ptr<const PruneMask> mask_for(const Mesh& mesh, double alpha) {
    return std::make_shared<const PruneMask>(build_mask(pairwise_distances(mesh), alpha));
}

// --- gen ---------------------------------------------------------------------

struct GenArgs {
    std::string out, config;
    std::size_t n = CliConfig{}.generator.n;
    std::uint64_t seed = CliConfig{}.generator.seed;
    CLI::Option *n_opt = nullptr, *seed_opt = nullptr;
};

int cmd_gen(const GenArgs& a) {
    auto cfg = base_config(a.config);
    override_if(a.n_opt, a.n, cfg.generator.n);
    override_if(a.seed_opt, a.seed, cfg.generator.seed);

    const auto ds = sample_dataset(cfg.generator.config, cfg.generator.n, cfg.generator.seed);
    save_dataset(a.out, ds);
    write_effective_config(a.out, cfg);
    const auto counts = ds.class_counts();
    std::printf("wrote %zu samples (k=%zu, m=%zu, d=%zu) to %s\n", ds.size(), ds.k(), ds.m(), ds.d(), a.out.c_str());
    std::printf("classes: good=%zu defect=%zu cracked=%zu\n", counts[0], counts[1], counts[2]);
    return 0;
}

// --- mask --------------------------------------------------------------------

struct MaskArgs {
    std::string mesh, exp, config;
    double alpha = 0.0;
    std::uint64_t seed = 0;
};

int cmd_mask(const MaskArgs& a) {
    base_config(a.config);  // validated for uniformity, nothing in it applies here
    const auto mesh = read_mesh_csv(a.mesh);
    const auto mask = build_mask(pairwise_distances(mesh), a.alpha);
    const auto m = mask.size();
    std::size_t lo = std::numeric_limits<std::size_t>::max(), hi = 0;
    for (std::size_t i = 0; i < m; ++i) {
        lo = std::min(lo, mask.row_degree(i));
        hi = std::max(hi, mask.row_degree(i));
    }
    std::printf("m=%zu\n", m);
    std::printf("alpha=%s\n", csv::format(a.alpha).c_str());
    std::printf("c=%zu\n", mask_count(mask));
    std::printf("density=%.6f\n", static_cast<double>(mask_count(mask)) / static_cast<double>(m * m));
    std::printf("row_degree_min=%zu\n", lo);
    std::printf("row_degree_max=%zu\n", hi);
    if (!a.exp.empty()) {
        write_mask_csv(a.exp, mask);
        std::printf("exported nonzeros to %s\n", a.exp.c_str());
    }
    return 0;
}

// --- parity ------------------------------------------------------------------

struct ParityArgs {
    std::string mesh, config;
    double alpha = 0.0;
    std::size_t h = 1, k = 9, m = 0, c = 0;
    std::uint64_t seed = 0;
    CLI::Option *h_opt = nullptr, *k_opt = nullptr, *alpha_opt = nullptr;
};

int cmd_parity(const ParityArgs& a) {
    auto cfg = base_config(a.config);
    std::size_t h = cfg.architecture.h, k = 9;
    double alpha = cfg.architecture.alpha;
    override_if(a.h_opt, a.h, h);
    override_if(a.k_opt, a.k, k);
    override_if(a.alpha_opt, a.alpha, alpha);

    std::size_t m = 0, c = 0;
    if (!a.mesh.empty()) {
        const auto mesh = read_mesh_csv(a.mesh);
        m = mesh.size();
        c = mask_count(build_mask(pairwise_distances(mesh), alpha));
    } else {
        if (a.m == 0 || a.c == 0) throw UsageError("parity needs --mesh, or both --m and --c");
        m = a.m;
        c = a.c;
    }
    const auto K = static_cast<std::int64_t>(k), M = static_cast<std::int64_t>(m), H = static_cast<std::int64_t>(h);
    const auto d = 3 * M;
    const auto n_cup = param_count_cup(K, d, M, H, static_cast<std::int64_t>(c));
    const auto s = solve_s(K, d, H, n_cup);
    const auto n_ref = param_count_ref(K, d, H, s);
    const double u = static_cast<double>(K + H + d + 1);
    const double root = (-u + std::sqrt(u * u - 4.0 * static_cast<double>(H) * static_cast<double>(d - n_cup))) / (2.0 * static_cast<double>(H));

    std::printf("k=%zu m=%zu d=%lld h=%zu\n", k, m, static_cast<long long>(d), h);
    if (!a.mesh.empty()) std::printf("alpha=%s\n", csv::format(alpha).c_str());
    std::printf("c=%zu\n", c);
    std::printf("n_cup=%lld\n", static_cast<long long>(n_cup));
    std::printf("s_root=%.6f\n", root);
    std::printf("s=%lld\n", static_cast<long long>(s));
    std::printf("n_ref=%lld\n", static_cast<long long>(n_ref));
    std::printf("gap=%lld\n", static_cast<long long>(n_ref - n_cup));
    return 0;
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
    std::string data, out, config, arch = "cupnet";
    std::size_t h = 2, s = 0, epochs = 200, batch = 32;
    double alpha = 5.0, lr = 1e-3, dropout = 0.2, test_fraction = 0.1;
    std::uint64_t seed = 0;
    CLI::Option *arch_opt{}, *h_opt{}, *s_opt{}, *alpha_opt{}, *epochs_opt{}, *batch_opt{}, *lr_opt{}, *dropout_opt{},
        *tf_opt{}, *seed_opt{};
};

int cmd_train(const TrainArgs& a) {
    auto cfg = base_config(a.config);
    if (a.arch_opt->count()) {
        try {
            cfg.architecture.kind = arch_kind_from_string(a.arch);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }
    override_if(a.h_opt, a.h, cfg.architecture.h);
    override_if(a.s_opt, a.s, cfg.architecture.s);
    override_if(a.alpha_opt, a.alpha, cfg.architecture.alpha);
    override_if(a.dropout_opt, a.dropout, cfg.architecture.dropout_rate);
    override_if(a.epochs_opt, a.epochs, cfg.training.config.epochs);
    override_if(a.batch_opt, a.batch, cfg.training.config.batch_size);
    override_if(a.lr_opt, a.lr, cfg.training.config.learning_rate);
    override_if(a.tf_opt, a.test_fraction, cfg.training.test_fraction);
    override_if(a.seed_opt, a.seed, cfg.training.config.seed);
    cfg.training.config.dropout_rate = cfg.architecture.dropout_rate;

    if (!fs::exists(fs::path(a.data) / "meta.json")) throw std::runtime_error("no dataset at " + a.data + " (meta.json missing)");
    const auto ds = load_dataset(a.data);

    ArchConfig arch;
    arch.k = ds.k();
    arch.m = ds.m();
    arch.h = cfg.architecture.h;
    arch.alpha = cfg.architecture.alpha;
    arch.dropout_rate = cfg.architecture.dropout_rate;
    auto mask = mask_for(ds.base_mesh, arch.alpha);
    const auto shape = cell_shape(arch.k, arch.m, arch.h, *mask);
    arch.s = cfg.architecture.s ? cfg.architecture.s : static_cast<std::size_t>(shape.s);

    const std::uint64_t seed = cfg.training.config.seed;
    const auto split_seed = derive_seed(seed, {1});
    const auto init_seed = derive_seed(seed, {2});
    std::vector<CupClass> labels;
    for (const auto& s : ds.samples) labels.push_back(s.label);
    const auto split = stratified_split(labels, cfg.training.test_fraction, split_seed);
    const auto data = prepare(ds, split);

    Network net = cfg.architecture.kind == ArchKind::cupnet ? build_cupnet(arch, mask, init_seed) : build_regnet(arch, init_seed);
    TrainConfig tc = cfg.training.config;
    tc.seed = derive_seed(seed, {3});
    std::printf("%s: h=%zu alpha=%s s=%zu parameters=%zu train=%zu test=%zu\n", std::string(to_string(net.kind())).c_str(), arch.h,
                csv::format(arch.alpha).c_str(), arch.s, net.parameter_count(), split.train.size(), split.test.size());

    const auto history = train(net, data, tc);

    const fs::path out(a.out);
    fs::create_directories(out);
    save_checkpoint(out / "checkpoint", net, init_seed);
    write_history_csv(out / "history.csv", history);
    write_effective_config(out, cfg);
    nlohmann::ordered_json metrics;
    metrics["architecture"] = to_string(net.kind());
    metrics["h"] = arch.h;
    metrics["alpha"] = arch.alpha;
    metrics["s"] = arch.s;
    metrics["parameters"] = net.parameter_count();
    metrics["n_cup"] = shape.n_cup;
    metrics["n_ref"] = param_count_ref(static_cast<std::int64_t>(arch.k), static_cast<std::int64_t>(arch.d()),
                                       static_cast<std::int64_t>(arch.h), static_cast<std::int64_t>(arch.s));
    metrics["final_train_loss"] = history.train_loss.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(history.train_loss.back());
    metrics["test_r2"] = history.test_r2 ? nlohmann::ordered_json(*history.test_r2) : nlohmann::ordered_json(nullptr);
    std::ofstream(out / "metrics.json") << metrics.dump(2) << '\n';

    if (history.test_r2) std::printf("test R2=%.6f\n", *history.test_r2);
    return 0;
}

// --- bench -------------------------------------------------------------------

struct BenchArgs {
    std::string data, out, config;
    std::vector<std::size_t> h_values;
    std::vector<double> alpha_values;
    std::vector<std::string> archs;
    std::size_t runs = 10, epochs = 200, jobs = 0, batch = 32;
    double lr = 1e-3, test_fraction = 0.1;
    std::uint64_t seed = 0;
    CLI::Option *h_opt{}, *alpha_opt{}, *arch_opt{}, *runs_opt{}, *epochs_opt{}, *jobs_opt{}, *batch_opt{}, *lr_opt{}, *tf_opt{},
        *seed_opt{};
};

int cmd_bench(const BenchArgs& a) {
    auto cfg = base_config(a.config);
    override_if(a.h_opt, a.h_values, cfg.bench.h_values);
    override_if(a.alpha_opt, a.alpha_values, cfg.bench.alpha_values);
    if (a.arch_opt->count()) {
        cfg.bench.architectures.clear();
        try {
            for (const auto& s : a.archs) cfg.bench.architectures.push_back(arch_kind_from_string(s));
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }
    override_if(a.runs_opt, a.runs, cfg.bench.runs);
    override_if(a.jobs_opt, a.jobs, cfg.bench.jobs);
    override_if(a.tf_opt, a.test_fraction, cfg.bench.test_fraction);
    override_if(a.seed_opt, a.seed, cfg.bench.master_seed);
    override_if(a.epochs_opt, a.epochs, cfg.training.config.epochs);
    override_if(a.batch_opt, a.batch, cfg.training.config.batch_size);
    override_if(a.lr_opt, a.lr, cfg.training.config.learning_rate);

    if (!fs::exists(fs::path(a.data) / "meta.json")) throw std::runtime_error("no dataset at " + a.data + " (meta.json missing)");
    const auto ds = load_dataset(a.data);

    BenchPlan plan = cfg.bench;
    plan.train = cfg.training.config;
    try {
        plan.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    std::printf("bench: %zu architectures x %zu depths x %zu thresholds x %zu runs\n", plan.architectures.size(), plan.h_values.size(),
                plan.alpha_values.size(), plan.runs);
    const auto report = run_bench(ds, plan);
    write_report(a.out, report);
    write_effective_config(a.out, cfg);
    std::cout << emit_markdown(report);
    std::size_t failed = 0;
    for (const auto& c : report.cells) failed += c.failed;
    if (failed) std::printf("%zu run(s) failed; see %s/meta.json\n", failed, a.out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cupnet: geometry-pruned networks for mesh-valued regression"};
    app.require_subcommand(1);
    app.set_help_flag("--help", "Print this help message and exit");
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    const CliConfig defaults;

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "Generate a synthetic cup dataset");
    g->add_option("--out", gen.out, "Output directory")->required();
    gen.n_opt = g->add_option("--n", gen.n, "Number of samples")->capture_default_str();
    gen.seed_opt = g->add_option("--seed", gen.seed, "Master seed")->capture_default_str();
    g->add_option("--config", gen.config, "JSON config file (flags override it)");

    MaskArgs mask;
    auto* mk = app.add_subcommand("mask", "Build the pruning mask of a mesh and print its statistics");
    mk->add_option("--mesh", mask.mesh, "Mesh CSV (x,y,z)")->required();
    mk->add_option("--alpha", mask.alpha, "Pruning threshold")->required()->check(CLI::NonNegativeNumber);
    mk->add_option("--export", mask.exp, "Write nonzeros as i,j CSV");
    mk->add_option("--seed", mask.seed, "Accepted for uniformity; unused")->capture_default_str();
    mk->add_option("--config", mask.config, "JSON config file");

    ParityArgs par;
    auto* pa = app.add_subcommand("parity", "Parameter counts of cupnet and the width-matched regnet");
    pa->add_option("--mesh", par.mesh, "Mesh CSV (x,y,z)");
    par.alpha_opt = pa->add_option("--alpha", par.alpha, "Pruning threshold")->check(CLI::NonNegativeNumber)->default_str(csv::format(defaults.architecture.alpha));
    par.h_opt = pa->add_option("--h", par.h, "Depth")->check(CLI::PositiveNumber)->default_str(std::to_string(defaults.architecture.h));
    par.k_opt = pa->add_option("--k", par.k, "Input size")->check(CLI::PositiveNumber)->capture_default_str();
    pa->add_option("--m", par.m, "Point count (with --c, instead of --mesh)");
    pa->add_option("--c", par.c, "Mask nonzero count c(alpha) (with --m, instead of --mesh)");
    pa->add_option("--seed", par.seed, "Accepted for uniformity; unused")->capture_default_str();
    pa->add_option("--config", par.config, "JSON config file");

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train one network on a dataset directory");
    t->add_option("--data", tr.data, "Dataset directory")->required();
    t->add_option("--out", tr.out, "Output directory")->required();
    tr.arch_opt = t->add_option("--arch", tr.arch, "cupnet or regnet")->capture_default_str();
    tr.h_opt = t->add_option("--h", tr.h, "Depth")->check(CLI::PositiveNumber)->capture_default_str();
    tr.alpha_opt = t->add_option("--alpha", tr.alpha, "Pruning threshold")->check(CLI::NonNegativeNumber)->capture_default_str();
    tr.s_opt = t->add_option("--s", tr.s, "Regnet width (0: parameter parity)")->capture_default_str();
    tr.epochs_opt = t->add_option("--epochs", tr.epochs, "Epochs")->capture_default_str();
    tr.batch_opt = t->add_option("--batch-size", tr.batch, "Mini-batch size")->check(CLI::PositiveNumber)->capture_default_str();
    tr.lr_opt = t->add_option("--lr", tr.lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
    tr.dropout_opt = t->add_option("--dropout", tr.dropout, "Dropout rate")->check(CLI::Range(0.0, 0.999999))->capture_default_str();
    tr.tf_opt = t->add_option("--test-fraction", tr.test_fraction, "Stratified test fraction")->capture_default_str();
    tr.seed_opt = t->add_option("--seed", tr.seed, "Run seed (split, init, shuffling, dropout)")->capture_default_str();
    t->add_option("--config", tr.config, "JSON config file (flags override it)");

    BenchArgs be;
    be.h_values = defaults.bench.h_values;
    be.alpha_values = defaults.bench.alpha_values;
    be.archs = {"cupnet", "regnet"};
    auto* b = app.add_subcommand("bench", "Run the (h x alpha) benchmark grid");
    b->add_option("--data", be.data, "Dataset directory")->required();
    b->add_option("--out", be.out, "Report directory")->required();
    be.h_opt = b->add_option("--h-values", be.h_values, "Depth grid")->delimiter(',')->capture_default_str();
    be.alpha_opt = b->add_option("--alpha-values", be.alpha_values, "Threshold grid")->delimiter(',')->capture_default_str();
    be.arch_opt = b->add_option("--archs", be.archs, "Architectures")->delimiter(',')->capture_default_str();
    be.runs_opt = b->add_option("--runs", be.runs, "Runs per cell")->check(CLI::PositiveNumber)->capture_default_str();
    be.epochs_opt = b->add_option("--epochs", be.epochs, "Epochs per run")->capture_default_str();
    be.batch_opt = b->add_option("--batch-size", be.batch, "Mini-batch size")->check(CLI::PositiveNumber)->capture_default_str();
    be.lr_opt = b->add_option("--lr", be.lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
    be.tf_opt = b->add_option("--test-fraction", be.test_fraction, "Stratified test fraction")->capture_default_str();
    be.jobs_opt = b->add_option("--jobs", be.jobs, "Worker threads (0: all processors)")->capture_default_str();
    be.seed_opt = b->add_option("--seed", be.seed, "Master seed")->capture_default_str();
    b->add_option("--config", be.config, "JSON config file (flags override it)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*g) return cmd_gen(gen);
        if (*mk) return cmd_mask(mask);
        if (*pa) return cmd_parity(par);
        if (*t) return cmd_train(tr);
        if (*b) return cmd_bench(be);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
