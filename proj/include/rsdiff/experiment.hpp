#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsdiff/checkpoint.hpp"
#include "rsdiff/config.hpp"
#include "rsdiff/error_analysis.hpp"
#include "rsdiff/metrics.hpp"
#include "rsdiff/report_io.hpp"
#include "rsdiff/tasks.hpp"
#include "rsdiff/training.hpp"

namespace rsdiff {

// Drivers behind the CLI subcommands. Everything here is also used directly
// by the test suites, so the command-line layer stays a thin shell.

inline std::vector<RestorationPair> dataset_from_config(const RunConfig& cfg) {
    return make_dataset(cfg.task_spec());
}

struct DatasetManifest {
    TaskSpec spec;
    std::vector<std::filesystem::path> x0_paths;
    std::vector<std::filesystem::path> y0_paths;
};

inline void write_dataset(const std::filesystem::path& dir,
                          const std::vector<RestorationPair>& pairs, const TaskSpec& spec) {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["task"] = {{"kind", to_string(spec.kind)},   {"noise_sigma", spec.noise_sigma},
                 {"blur_sigma", spec.blur_sigma},  {"image_size", spec.image_size},
                 {"channels", spec.channels},      {"count", spec.count},
                 {"seed", spec.seed},              {"pattern", to_string(spec.pattern)}};
    nlohmann::json items = nlohmann::json::array();
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const std::string x0_name = "item" + std::to_string(i) + "_x0.ctns";
        const std::string y0_name = "item" + std::to_string(i) + "_y0.ctns";
        save_ctns(dir / x0_name, pairs[i].x0);
        save_ctns(dir / y0_name, pairs[i].y0);
        items.push_back({{"x0", x0_name}, {"y0", y0_name}});
    }
    j["items"] = items;
    repdetail::atomic_write(dir / "manifest.json", j.dump(2) + "\n");
}

inline std::vector<RestorationPair> load_dataset(const std::filesystem::path& manifest_path) {
    std::ifstream is(manifest_path);
    if (!is) throw IoError("load_dataset: cannot open " + manifest_path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(manifest_path.string() + ": bad manifest: " + e.what());
    }
    const std::filesystem::path dir = manifest_path.parent_path();
    std::vector<RestorationPair> pairs;
    try {
        const std::string task = j.at("task").at("kind").get<std::string>();
        for (const auto& item : j.at("items")) {
            RestorationPair p;
            p.x0 = load_ctns(dir / item.at("x0").get<std::string>());
            p.y0 = load_ctns(dir / item.at("y0").get<std::string>());
            p.task = task;
            p.validate();
            pairs.push_back(std::move(p));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(manifest_path.string() + ": incomplete manifest: " + e.what());
    }
    if (pairs.empty()) throw ParseError(manifest_path.string() + ": manifest lists no items");
    return pairs;
}

// ---------------------------------------------------------------------------
// Training driver
// ---------------------------------------------------------------------------

struct TrainOutcome {
    TrainerState state;
    std::vector<TrainLogEntry> log;
    std::filesystem::path final_checkpoint;
};

inline std::string loss_csv(const std::vector<TrainLogEntry>& log) {
    std::ostringstream os;
    os << "step,mode,t_values,loss,lr\n";
    for (const auto& e : log) {
        os << e.step << "," << e.mode << ",";
        for (std::size_t i = 0; i < e.ts.size(); ++i) os << (i ? ";" : "") << e.ts[i];
        os << "," << repdetail::fmt(e.loss) << "," << repdetail::fmt(e.lr) << "\n";
    }
    return os.str();
}

inline std::string timing_csv(const std::vector<TrainLogEntry>& log) {
    std::ostringstream os;
    os << "step,seconds\n";
    char buf[40];
    for (const auto& e : log) {
        std::snprintf(buf, sizeof(buf), "%.6f", e.seconds);
        os << e.step << "," << buf << "\n";
    }
    return os.str();
}

inline TrainerState fresh_trainer(const RunConfig& cfg) {
    TrainerState st;
    RngState init_rng = seeded_rng(derive_seed(cfg.seed, "init"));
    st.params = net_init<float>(cfg.net_config(), init_rng);
    st.schedule = cfg.schedule();
    st.optim = cfg.optim_config();
    st.mode = cfg.mode;
    st.step_opts = cfg.step_options();
    st.run_seed = cfg.seed;
    return st;
}

inline CheckpointMeta meta_for(const RunConfig& cfg, const TrainerState& st) {
    CheckpointMeta m;
    m.net = cfg.net_config();
    m.T = cfg.T;
    m.kappa = cfg.kappa;
    m.power = cfg.power;
    m.train_hash = config_hash(cfg);
    m.mode = to_string(st.mode);
    m.step = st.params.step;
    m.seed = cfg.seed;
    return m;
}

// Runs (or resumes) training, writing loss.csv, timing.csv, and periodic plus
// final checkpoints under cfg.out_dir. The loss CSV holds only deterministic
// columns; wall-clock goes to the timing file.
inline TrainOutcome run_training(const RunConfig& cfg,
                                 const std::optional<std::filesystem::path>& resume = {},
                                 bool force = false) {
    cfg.validate();
    const std::filesystem::path out_dir(cfg.out_dir);
    std::filesystem::create_directories(out_dir);

    TrainerState st = fresh_trainer(cfg);
    if (resume) {
        LoadedCheckpoint lc = load_checkpoint(*resume);
        const std::string expect = config_hash(cfg);
        if (lc.meta.train_hash != expect && !force)
            throw ConfigError("resume refused: checkpoint hash " + lc.meta.train_hash +
                              " does not match config hash " + expect + " (use --force to override)");
        st.params = std::move(lc.params);
    }
    if (st.params.step >= cfg.steps)
        throw ConfigError("nothing to do: checkpoint already at step " +
                          std::to_string(st.params.step) + " of " + std::to_string(cfg.steps));

    const std::vector<RestorationPair> dataset = dataset_from_config(cfg);

    StepCallback<float> on_step = [&](const TrainerState& s, std::int64_t done) {
        if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < cfg.steps)
            save_checkpoint(out_dir / ("ckpt_" + std::to_string(done) + ".cdif"), s.params,
                            meta_for(cfg, s));
        if (cfg.report_every > 0 && done % cfg.report_every == 0 && done < cfg.steps) {
            ErrorReport r = error_report<float>(make_denoiser(s.params, /*use_ema=*/true), dataset,
                                                s.schedule, DivergenceMetric::KLDiagGaussian,
                                                AnalysisBudget{}, derive_seed(cfg.seed, "report"),
                                                to_string(s.mode));
            write_report(out_dir / ("report_" + std::to_string(done) + ".csv"), r);
        }
    };

    TrainOutcome out;
    out.log = train_loop(st, dataset, cfg.steps, on_step);
    out.final_checkpoint = out_dir / "ckpt_final.cdif";
    save_checkpoint(out.final_checkpoint, st.params, meta_for(cfg, st));
    repdetail::atomic_write(out_dir / "loss.csv", loss_csv(out.log));
    repdetail::atomic_write(out_dir / "timing.csv", timing_csv(out.log));
    out.state = std::move(st);
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation / restoration
// ---------------------------------------------------------------------------

// Restores every pair with the backward sampler and scores PSNR/SSIM against
// the ground truth.
inline MetricResult evaluate(const DenoiserFn<float>& f, const std::vector<RestorationPair>& pairs,
                             const DiffusionSchedule& s, std::uint64_t seed,
                             bool stochastic = true) {
    MetricResult r;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        RngState rng = seeded_rng(derive_seed(seed, "eval", i));
        Tensorf restored =
            backward_chain(f, s, pairs[i].y0, rng, /*t_stop=*/0, stochastic).final;
        restored.clamp(0.0f, 1.0f);
        r.per_image_psnr.push_back(psnr(restored, pairs[i].x0));
        r.per_image_ssim.push_back(ssim(restored, pairs[i].x0));
    }
    for (double v : r.per_image_psnr) r.psnr_mean += v;
    for (double v : r.per_image_ssim) r.ssim_mean += v;
    r.psnr_mean /= static_cast<double>(r.per_image_psnr.size());
    r.ssim_mean /= static_cast<double>(r.per_image_ssim.size());
    return r;
}

inline void write_metrics_json(const std::filesystem::path& path, const MetricResult& r,
                               const std::string& task, const std::string& mode,
                               std::uint64_t seed) {
    nlohmann::json j;
    j["task"] = task;
    j["mode"] = mode;
    j["psnr_mean"] = r.psnr_mean;
    j["ssim_mean"] = r.ssim_mean;
    nlohmann::json per = nlohmann::json::array();
    for (std::size_t i = 0; i < r.per_image_psnr.size(); ++i)
        per.push_back({{"psnr", r.per_image_psnr[i]}, {"ssim", r.per_image_ssim[i]}});
    j["per_image"] = per;
    j["seed"] = seed;
    repdetail::atomic_write(path, j.dump(2) + "\n");
}

}  // namespace rsdiff
