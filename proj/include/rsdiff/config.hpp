#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rsdiff/error_analysis.hpp"
#include "rsdiff/errors.hpp"
#include "rsdiff/net.hpp"
#include "rsdiff/rng.hpp"
#include "rsdiff/tasks.hpp"
#include "rsdiff/training.hpp"

namespace rsdiff {

// Flat key=value run configuration with sections [diffusion] [net] [train]
// [task] [io]. Every key has a default; unknown sections or keys are errors;
// parse -> serialize -> parse is idempotent.
struct RunConfig {
    // [diffusion]
    int T = 15;
    double kappa = 1.0;
    double power = 2.0;
    // [net]
    int base_channels = 16;
    int depth = 2;
    int kernel = 3;
    // [train]
    TrainMode mode = TrainMode::Traditional;
    std::int64_t steps = 5000;
    int batch_size = 4;
    double max_lr = 1e-4;
    double ema_decay = 0.999;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 1;
    std::string t_sampling = "uniform";
    bool stochastic_chain = true;
    bool chain_use_ema = false;
    // [task]
    TaskKind task_kind = TaskKind::Denoise;
    double noise_sigma = 50.0;
    double blur_sigma = 1.5;
    int image_size = 32;
    int channels = 1;
    int count = 8;
    PatternKind pattern = PatternKind::Blobs;
    // [io]
    std::string out_dir = "runs/run";
    std::int64_t checkpoint_every = 1000;
    std::int64_t report_every = 0;  // 0 disables periodic reports

    NetConfig net_config() const { return NetConfig{channels, base_channels, depth, kernel}; }
    OptimConfig optim_config() const {
        OptimConfig oc;
        oc.max_lr = max_lr;
        oc.total_steps = steps;
        oc.ema_decay = ema_decay;
        oc.adam_beta1 = adam_beta1;
        oc.adam_beta2 = adam_beta2;
        oc.adam_eps = adam_eps;
        oc.batch_size = batch_size;
        return oc;
    }
    DiffusionSchedule schedule() const { return make_schedule(T, kappa, power); }
    TaskSpec task_spec() const {
        TaskSpec t;
        t.kind = task_kind;
        t.noise_sigma = noise_sigma;
        t.blur_sigma = blur_sigma;
        t.image_size = image_size;
        t.channels = channels;
        t.count = count;
        t.seed = derive_seed(seed, "dataset");
        t.pattern = pattern;
        return t;
    }
    StepOptions step_options() const { return StepOptions{stochastic_chain, chain_use_ema}; }

    void validate() const {
        if (steps < 1) throw ConfigError("train.steps must be >= 1");
        if (t_sampling != "uniform")
            throw ConfigError("train.t_sampling: only 'uniform' is supported");
        net_config().validate();
        optim_config().validate();
        schedule();       // throws on bad T/kappa/power
        task_spec().validate();
        const int div = 1 << depth;
        if (image_size % div != 0)
            throw ConfigError("task.image_size must be divisible by 2^net.depth = " +
                              std::to_string(div));
    }
};

namespace cfgdetail {

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': cannot parse '" + v + "' as a number");
    }
}

inline std::int64_t parse_int(const std::string& key, const std::string& v) {
    std::int64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw ConfigError("config key '" + key + "': cannot parse '" + v + "' as an integer");
    return out;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw ConfigError("config key '" + key + "': cannot parse '" + v +
                          "' as an unsigned integer");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError("config key '" + key + "': expected true|false, got '" + v + "'");
}

}  // namespace cfgdetail

inline RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = cfgdetail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": malformed section header '" + line + "'");
            section = line.substr(1, line.size() - 2);
            if (section != "diffusion" && section != "net" && section != "train" &&
                section != "task" && section != "io")
                throw ConfigError("config line " + std::to_string(lineno) + ": unknown section [" +
                                  section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = cfgdetail::trim(line.substr(0, eq));
        const std::string val = cfgdetail::trim(line.substr(eq + 1));
        const std::string qual = section + "." + key;
        using namespace cfgdetail;

        if (qual == "diffusion.T") cfg.T = static_cast<int>(parse_int(qual, val));
        else if (qual == "diffusion.kappa") cfg.kappa = parse_double(qual, val);
        else if (qual == "diffusion.power") cfg.power = parse_double(qual, val);
        else if (qual == "net.base_channels") cfg.base_channels = static_cast<int>(parse_int(qual, val));
        else if (qual == "net.depth") cfg.depth = static_cast<int>(parse_int(qual, val));
        else if (qual == "net.kernel") cfg.kernel = static_cast<int>(parse_int(qual, val));
        else if (qual == "train.mode") cfg.mode = parse_train_mode(val);
        else if (qual == "train.steps") cfg.steps = parse_int(qual, val);
        else if (qual == "train.batch_size") cfg.batch_size = static_cast<int>(parse_int(qual, val));
        else if (qual == "train.max_lr") cfg.max_lr = parse_double(qual, val);
        else if (qual == "train.ema_decay") cfg.ema_decay = parse_double(qual, val);
        else if (qual == "train.adam_beta1") cfg.adam_beta1 = parse_double(qual, val);
        else if (qual == "train.adam_beta2") cfg.adam_beta2 = parse_double(qual, val);
        else if (qual == "train.adam_eps") cfg.adam_eps = parse_double(qual, val);
        else if (qual == "train.seed") cfg.seed = parse_u64(qual, val);
        else if (qual == "train.t_sampling") cfg.t_sampling = val;
        else if (qual == "train.stochastic_chain") cfg.stochastic_chain = parse_bool(qual, val);
        else if (qual == "train.chain_use_ema") cfg.chain_use_ema = parse_bool(qual, val);
        else if (qual == "task.kind") cfg.task_kind = parse_task_kind(val);
        else if (qual == "task.noise_sigma") cfg.noise_sigma = parse_double(qual, val);
        else if (qual == "task.blur_sigma") cfg.blur_sigma = parse_double(qual, val);
        else if (qual == "task.image_size") cfg.image_size = static_cast<int>(parse_int(qual, val));
        else if (qual == "task.channels") cfg.channels = static_cast<int>(parse_int(qual, val));
        else if (qual == "task.count") cfg.count = static_cast<int>(parse_int(qual, val));
        else if (qual == "task.pattern") cfg.pattern = parse_pattern_kind(val);
        else if (qual == "io.out_dir") cfg.out_dir = val;
        else if (qual == "io.checkpoint_every") cfg.checkpoint_every = parse_int(qual, val);
        else if (qual == "io.report_every") cfg.report_every = parse_int(qual, val);
        else
            throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + qual +
                              "'");
    }
    return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("load_config: cannot open " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

inline std::string serialize_config(const RunConfig& c) {
    using cfgdetail::fmt_double;
    std::ostringstream os;
    os << "[diffusion]\n"
       << "T = " << c.T << "\n"
       << "kappa = " << fmt_double(c.kappa) << "\n"
       << "power = " << fmt_double(c.power) << "\n\n"
       << "[net]\n"
       << "base_channels = " << c.base_channels << "\n"
       << "depth = " << c.depth << "\n"
       << "kernel = " << c.kernel << "\n\n"
       << "[train]\n"
       << "mode = " << to_string(c.mode) << "\n"
       << "steps = " << c.steps << "\n"
       << "batch_size = " << c.batch_size << "\n"
       << "max_lr = " << fmt_double(c.max_lr) << "\n"
       << "ema_decay = " << fmt_double(c.ema_decay) << "\n"
       << "adam_beta1 = " << fmt_double(c.adam_beta1) << "\n"
       << "adam_beta2 = " << fmt_double(c.adam_beta2) << "\n"
       << "adam_eps = " << fmt_double(c.adam_eps) << "\n"
       << "seed = " << c.seed << "\n"
       << "t_sampling = " << c.t_sampling << "\n"
       << "stochastic_chain = " << (c.stochastic_chain ? "true" : "false") << "\n"
       << "chain_use_ema = " << (c.chain_use_ema ? "true" : "false") << "\n\n"
       << "[task]\n"
       << "kind = " << to_string(c.task_kind) << "\n"
       << "noise_sigma = " << fmt_double(c.noise_sigma) << "\n"
       << "blur_sigma = " << fmt_double(c.blur_sigma) << "\n"
       << "image_size = " << c.image_size << "\n"
       << "channels = " << c.channels << "\n"
       << "count = " << c.count << "\n"
       << "pattern = " << to_string(c.pattern) << "\n\n"
       << "[io]\n"
       << "out_dir = " << c.out_dir << "\n"
       << "checkpoint_every = " << c.checkpoint_every << "\n"
       << "report_every = " << c.report_every << "\n";
    return os.str();
}

// Hash of everything except [io]; stored in checkpoints so a resume against a
// different experiment is refused (unless forced).
inline std::string config_hash(const RunConfig& c) {
    RunConfig stripped = c;
    stripped.out_dir = "";
    stripped.checkpoint_every = 0;
    stripped.report_every = 0;
    std::string text = serialize_config(stripped);
    const auto io_pos = text.find("[io]");
    text = text.substr(0, io_pos);
    const std::uint64_t h = rngdetail::fnv1a(text);
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace rsdiff
