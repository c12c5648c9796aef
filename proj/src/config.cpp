#include "cupnet/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace cupnet {

namespace {

using json = nlohmann::json;

/// Reads known keys out of a JSON object and rejects everything else.
class Strict {
public:
    Strict(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw std::invalid_argument("config: '" + where_ + "' must be an object");
    }
    void done() const {
        for (const auto& [key, value] : j_.items())
            if (!seen_.count(key)) throw std::invalid_argument("config: unknown key '" + where_ + "." + key + "'");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw std::invalid_argument("config: bad value for '" + where_ + "." + key + "': " + e.what());
        }
    }

    const json* sub(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    const std::string& where() const { return where_; }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

void read_generator(const json& j, GeneratorConfig& c, const std::string& where) {
    Strict r(j, where);
    r.get("radial_count", c.radial_count);
    r.get("angular_count", c.angular_count);
    r.get("outer_radius", c.outer_radius);
    if (const auto* ranges = r.sub("param_ranges")) {
        if (!ranges->is_array()) throw std::invalid_argument("config: " + where + ".param_ranges must be an array");
        c.param_ranges.clear();
        for (const auto& item : *ranges) {
            if (!item.is_array() || item.size() != 2) throw std::invalid_argument("config: param_ranges entries are [lo, hi] pairs");
            c.param_ranges.push_back({item[0].get<double>(), item[1].get<double>()});
        }
    }
    r.get("punch_radius", c.punch_radius);
    r.get("die_width", c.die_width);
    r.get("depth_gain", c.depth_gain);
    r.get("draw_in_gain", c.draw_in_gain);
    r.get("earing_gain", c.earing_gain);
    r.get("tilt_gain", c.tilt_gain);
    r.get("flare_gain", c.flare_gain);
    r.get("perturb_gain", c.perturb_gain);
    r.get("crack_threshold", c.crack_threshold);
    r.get("crack_gain", c.crack_gain);
    r.get("crack_sector_center", c.crack_sector_center);
    r.get("crack_sector_half_width", c.crack_sector_half_width);
    r.get("t_good", c.t_good);
    r.get("t_crack", c.t_crack);
    r.done();
}

void read_train(Strict& r, TrainConfig& c) {
    r.get("learning_rate", c.learning_rate);
    r.get("adam_beta1", c.adam_beta1);
    r.get("adam_beta2", c.adam_beta2);
    r.get("adam_epsilon", c.adam_epsilon);
    r.get("batch_size", c.batch_size);
    r.get("epochs", c.epochs);
    r.get("seed", c.seed);
    r.get("dropout_rate", c.dropout_rate);
}

std::vector<ArchKind> arch_list(const json& j) {
    std::vector<ArchKind> out;
    for (const auto& s : j) out.push_back(arch_kind_from_string(s.get<std::string>()));
    return out;
}

}  // namespace

nlohmann::ordered_json to_json(const GeneratorConfig& c) {
    nlohmann::ordered_json j;
    j["radial_count"] = c.radial_count;
    j["angular_count"] = c.angular_count;
    j["outer_radius"] = c.outer_radius;
    auto ranges = nlohmann::ordered_json::array();
    for (const auto& r : c.param_ranges) ranges.push_back({r.lo, r.hi});
    j["param_ranges"] = ranges;
    j["punch_radius"] = c.punch_radius;
    j["die_width"] = c.die_width;
    j["depth_gain"] = c.depth_gain;
    j["draw_in_gain"] = c.draw_in_gain;
    j["earing_gain"] = c.earing_gain;
    j["tilt_gain"] = c.tilt_gain;
    j["flare_gain"] = c.flare_gain;
    j["perturb_gain"] = c.perturb_gain;
    j["crack_threshold"] = c.crack_threshold;
    j["crack_gain"] = c.crack_gain;
    j["crack_sector_center"] = c.crack_sector_center;
    j["crack_sector_half_width"] = c.crack_sector_half_width;
    j["t_good"] = c.t_good;
    j["t_crack"] = c.t_crack;
    return j;
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
    GeneratorConfig c;
    read_generator(j, c, "generator_config");
    c.validate();
    return c;
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
    nlohmann::ordered_json j;
    j["learning_rate"] = c.learning_rate;
    j["adam_beta1"] = c.adam_beta1;
    j["adam_beta2"] = c.adam_beta2;
    j["adam_epsilon"] = c.adam_epsilon;
    j["batch_size"] = c.batch_size;
    j["epochs"] = c.epochs;
    j["seed"] = c.seed;
    j["dropout_rate"] = c.dropout_rate;
    return j;
}

nlohmann::ordered_json to_json(const BenchPlan& p) {
    nlohmann::ordered_json j;
    j["h_values"] = p.h_values;
    j["alpha_values"] = p.alpha_values;
    j["runs"] = p.runs;
    j["test_fraction"] = p.test_fraction;
    auto archs = nlohmann::ordered_json::array();
    for (auto a : p.architectures) archs.push_back(std::string(to_string(a)));
    j["architectures"] = archs;
    j["master_seed"] = p.master_seed;
    j["jobs"] = p.jobs;
    j["train"] = to_json(p.train);
    return j;
}

nlohmann::ordered_json to_json(const CliConfig& c) {
    nlohmann::ordered_json j;
    auto gen = to_json(c.generator.config);
    gen["n"] = c.generator.n;
    gen["seed"] = c.generator.seed;
    j["generator"] = gen;
    j["architecture"] = {{"arch", std::string(to_string(c.architecture.kind))},
                         {"h", c.architecture.h},
                         {"alpha", c.architecture.alpha},
                         {"s", c.architecture.s},
                         {"dropout_rate", c.architecture.dropout_rate}};
    auto tr = to_json(c.training.config);
    tr["test_fraction"] = c.training.test_fraction;
    j["training"] = tr;
    auto bench = to_json(c.bench);
    bench.erase("train");  // bench runs use the training section
    j["bench"] = bench;
    return j;
}

CliConfig merge_config(CliConfig c, const nlohmann::json& j) {
    Strict root(j, "config");
    if (const auto* g = root.sub("generator")) {
        // n and seed sit beside the generator constants
        json constants = *g;
        if (constants.contains("n")) c.generator.n = constants.at("n").get<std::size_t>();
        if (constants.contains("seed")) c.generator.seed = constants.at("seed").get<std::uint64_t>();
        constants.erase("n");
        constants.erase("seed");
        read_generator(constants, c.generator.config, "generator");
    }
    if (const auto* a = root.sub("architecture")) {
        Strict r(*a, "architecture");
        std::string arch(to_string(c.architecture.kind));
        r.get("arch", arch);
        c.architecture.kind = arch_kind_from_string(arch);
        r.get("h", c.architecture.h);
        r.get("alpha", c.architecture.alpha);
        r.get("s", c.architecture.s);
        r.get("dropout_rate", c.architecture.dropout_rate);
        r.done();
    }
    if (const auto* t = root.sub("training")) {
        Strict r(*t, "training");
        read_train(r, c.training.config);
        r.get("test_fraction", c.training.test_fraction);
        r.done();
    }
    if (const auto* b = root.sub("bench")) {
        Strict r(*b, "bench");
        r.get("h_values", c.bench.h_values);
        r.get("alpha_values", c.bench.alpha_values);
        r.get("runs", c.bench.runs);
        r.get("test_fraction", c.bench.test_fraction);
        if (const auto* archs = r.sub("architectures")) c.bench.architectures = arch_list(*archs);
        r.get("master_seed", c.bench.master_seed);
        r.get("jobs", c.bench.jobs);
        r.done();
    }
    root.done();
    return c;
}

CliConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("config " + path.string() + ": " + e.what());
    }
    return merge_config(CliConfig{}, j);
}

}  // namespace cupnet
