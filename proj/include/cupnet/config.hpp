#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "cupnet/bench.hpp"
#include "cupnet/network.hpp"
#include "cupnet/synthcup.hpp"
#include "cupnet/training.hpp"

namespace cupnet {

struct GeneratorSection {
    GeneratorConfig config;
    std::size_t n = 2000;
    std::uint64_t seed = 0;
};

struct ArchitectureSection {
    ArchKind kind = ArchKind::cupnet;
    std::size_t h = 2;
    double alpha = 5.0;
    std::size_t s = 0;  // 0: derive from parameter parity with the cupnet at (h, alpha)
    double dropout_rate = 0.2;
};

struct TrainingSection {
    TrainConfig config;
    double test_fraction = 0.1;
};

/// Effective configuration of a CLI run. Sections: generator, architecture,
/// training, bench. Unknown keys are rejected at every level.
struct CliConfig {
    GeneratorSection generator;
    ArchitectureSection architecture;
    TrainingSection training;
    BenchPlan bench;
};

nlohmann::ordered_json to_json(const GeneratorConfig& cfg);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);

nlohmann::ordered_json to_json(const TrainConfig& cfg);
nlohmann::ordered_json to_json(const BenchPlan& plan);
nlohmann::ordered_json to_json(const CliConfig& cfg);

/// Overlays `j` onto `base`; keys absent from `j` keep their current value.
CliConfig merge_config(CliConfig base, const nlohmann::json& j);
CliConfig load_config(const std::filesystem::path& path);

}  // namespace cupnet
