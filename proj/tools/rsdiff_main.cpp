// Command-line front end: dataset generation, training, restoration,
// evaluation, and per-iteration error analysis for the residual-shifting
// diffusion trainer.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rsdiff/experiment.hpp"

namespace {

using namespace rsdiff;

int cmd_gen_data(const std::string& config_path, const std::string& out_override) {
    RunConfig cfg = load_config(config_path);
    cfg.validate();
    const std::filesystem::path dir =
        out_override.empty() ? std::filesystem::path(cfg.out_dir) / "data"
                             : std::filesystem::path(out_override);
    const TaskSpec spec = cfg.task_spec();
    write_dataset(dir, make_dataset(spec), spec);
    std::cout << "wrote " << spec.count << " pairs to " << (dir / "manifest.json").string()
              << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& mode_override,
              const std::string& resume_path, bool force) {
    RunConfig cfg = load_config(config_path);
    if (!mode_override.empty()) cfg.mode = parse_train_mode(mode_override);
    cfg.validate();
    std::optional<std::filesystem::path> resume;
    if (!resume_path.empty()) resume = resume_path;
    TrainOutcome out = run_training(cfg, resume, force);
    std::cout << "trained " << out.log.size() << " steps (" << to_string(out.state.mode)
              << "), final loss " << (out.log.empty() ? 0.0 : out.log.back().loss) << "\n"
              << "checkpoint: " << out.final_checkpoint.string() << "\n";
    return 0;
}

int cmd_sample(const std::string& ckpt_path, const std::string& input_path,
               const std::string& out_path, std::uint64_t seed, bool mean_only,
               const std::string& oracle_gt) {
    LoadedCheckpoint lc = load_checkpoint(ckpt_path);
    DiffusionSchedule s = make_schedule(lc.meta.T, lc.meta.kappa, lc.meta.power);
    Tensorf y0 = load_image(input_path);

    DenoiserFn<float> f;
    RestorationPair oracle_pair;
    if (!oracle_gt.empty()) {
        // Test hook: replace the net with the exact per-iteration target and
        // silence the sampler (the kappa -> 0 limit), so the output must
        // reproduce the supplied ground truth bit-exactly.
        oracle_pair.x0 = load_image(oracle_gt);
        oracle_pair.y0 = y0;
        oracle_pair.validate();
        s.kappa = 0.0;
        f = [&oracle_pair, &s](const Tensorf&, const Tensorf&, double t_norm) {
            return gt_at(oracle_pair, s, static_cast<int>(std::lround(t_norm * s.T)));
        };
    } else {
        f = make_denoiser(lc.params, /*use_ema=*/true);
    }

    RngState rng = seeded_rng(derive_seed(seed, "sample"));
    Tensorf restored = backward_chain(f, s, y0, rng, /*t_stop=*/0, !mean_only).final;
    if (!restored.all_finite()) throw NumericError("sample: non-finite restoration output");
    if (oracle_gt.empty()) restored.clamp(0.0f, 1.0f);
    save_image(out_path, restored);
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& manifest_path,
             const std::string& out_path, std::uint64_t seed) {
    LoadedCheckpoint lc = load_checkpoint(ckpt_path);
    const DiffusionSchedule s = make_schedule(lc.meta.T, lc.meta.kappa, lc.meta.power);
    const std::vector<RestorationPair> pairs = load_dataset(manifest_path);
    MetricResult r = evaluate(make_denoiser(lc.params, /*use_ema=*/true), pairs, s, seed);
    if (!std::isfinite(r.psnr_mean) || !std::isfinite(r.ssim_mean))
        throw NumericError("eval: non-finite metric");
    write_metrics_json(out_path, r, pairs.front().task, lc.meta.mode, seed);
    std::cout << "psnr " << r.psnr_mean << " dB, ssim " << r.ssim_mean << " over "
              << pairs.size() << " images\n";
    return 0;
}

int cmd_analyze(const std::string& ckpt_path, const std::string& manifest_path,
                const std::string& metric_name, const std::string& out_path, int samples,
                int items, std::uint64_t seed, bool raw_weights) {
    LoadedCheckpoint lc = load_checkpoint(ckpt_path);
    const DiffusionSchedule s = make_schedule(lc.meta.T, lc.meta.kappa, lc.meta.power);
    const std::vector<RestorationPair> pairs = load_dataset(manifest_path);
    AnalysisBudget budget;
    budget.samples_per_item = samples;
    budget.item_cap = items;
    ErrorReport r = error_report<float>(make_denoiser(lc.params, !raw_weights), pairs, s,
                                        parse_metric(metric_name), budget,
                                        derive_seed(seed, "analyze"), lc.meta.mode);
    for (double v : r.cumulative)
        if (!std::isfinite(v)) throw NumericError("analyze: non-finite divergence");
    write_report(out_path, r);
    std::cout << "wrote " << out_path << " (cumulative at t=1: " << r.cumulative.front()
              << ")\n";
    return 0;
}

int cmd_compare(const std::vector<std::string>& reports, const std::string& out_path) {
    const ErrorReport a = read_report_csv(reports[0]);
    const ErrorReport b = read_report_csv(reports[1]);
    repdetail::atomic_write(out_path, compare_reports_csv(a, b));
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rsdiff: residual-shifting diffusion restoration trainer and error analyzer"};
    app.require_subcommand(1);

    std::string config_path, mode_override, resume_path, out_override;
    std::string ckpt_path, input_path, out_path, oracle_gt, manifest_path, metric_name = "kl";
    std::vector<std::string> reports;
    std::uint64_t seed = 0;
    int samples = 64, items = 16;
    bool force = false, mean_only = false, raw_weights = false;

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset and manifest");
    gen->add_option("--config", config_path, "Run configuration file")->required();
    gen->add_option("--out", out_override, "Output directory (default: <out_dir>/data)");

    auto* train = app.add_subcommand("train", "Train a denoiser");
    train->add_option("--config", config_path, "Run configuration file")->required();
    train->add_option("--mode", mode_override,
                      "Override train.mode (traditional|data-consistent|efficient|"
                      "efficient-noamp|efficient-randamp|nll-reg)");
    train->add_option("--resume", resume_path, "Checkpoint to resume from");
    train->add_flag("--force", force, "Resume even if the config hash differs");

    auto* sample = app.add_subcommand("sample", "Restore one image with the backward sampler");
    sample->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
    sample->add_option("--input", input_path, "Degraded input image (pgm/ppm/ctns)")->required();
    sample->add_option("--out", out_path, "Output image path")->required();
    sample->add_option("--seed", seed, "Sampler seed");
    sample->add_flag("--mean-only", mean_only, "Suppress sampler noise (mean transitions)");
    sample->add_option("--oracle-gt", oracle_gt,
                       "Test hook: use an exact target oracle built from this ground-truth "
                       "image instead of the network, with sampler noise off");

    auto* eval = app.add_subcommand("eval", "PSNR/SSIM of restorations over a dataset");
    eval->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
    eval->add_option("--data", manifest_path, "Dataset manifest.json")->required();
    eval->add_option("--out", out_path, "Metrics JSON path")->required();
    eval->add_option("--seed", seed, "Sampler seed");

    auto* analyze = app.add_subcommand("analyze", "Per-iteration error report");
    analyze->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
    analyze->add_option("--data", manifest_path, "Dataset manifest.json")->required();
    analyze->add_option("--metric", metric_name, "Divergence metric: kl|mse");
    analyze->add_option("--out", out_path, "Report CSV path")->required();
    analyze->add_option("--samples", samples, "Stochastic draws per item per iteration");
    analyze->add_option("--items", items, "Dataset item cap");
    analyze->add_option("--seed", seed, "Analysis seed");
    analyze->add_flag("--raw", raw_weights, "Use raw weights instead of the EMA shadow");

    auto* compare = app.add_subcommand("compare", "Per-iteration difference of two reports");
    compare->add_option("--reports", reports, "Two report CSVs (a b); emits a - b")
        ->expected(2)
        ->required();
    compare->add_option("--out", out_path, "Delta CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(config_path, out_override);
        if (train->parsed()) return cmd_train(config_path, mode_override, resume_path, force);
        if (sample->parsed())
            return cmd_sample(ckpt_path, input_path, out_path, seed, mean_only, oracle_gt);
        if (eval->parsed()) return cmd_eval(ckpt_path, manifest_path, out_path, seed);
        if (analyze->parsed())
            return cmd_analyze(ckpt_path, manifest_path, metric_name, out_path, samples, items,
                               seed, raw_weights);
        if (compare->parsed()) return cmd_compare(reports, out_path);
    } catch (const rsdiff::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "argument error: " << e.what() << "\n";
        return 2;
    } catch (const rsdiff::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 4;
    } catch (const rsdiff::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
