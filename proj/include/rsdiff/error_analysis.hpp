#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rsdiff/diffusion.hpp"
#include "rsdiff/errors.hpp"
#include "rsdiff/net.hpp"

namespace rsdiff {

enum class DivergenceMetric { KLDiagGaussian, MSE };

inline std::string to_string(DivergenceMetric m) {
    return m == DivergenceMetric::KLDiagGaussian ? "kl" : "mse";
}

inline DivergenceMetric parse_metric(const std::string& s) {
    if (s == "kl") return DivergenceMetric::KLDiagGaussian;
    if (s == "mse") return DivergenceMetric::MSE;
    throw ConfigError("unknown divergence metric '" + s + "' (expected kl|mse)");
}

namespace anadetail {

inline constexpr double kVarianceFloor = 1e-6;

// Per-pixel first/second moments over a stream of equally shaped tensors.
struct MomentAccum {
    Shape shape{};
    std::int64_t n = 0;
    std::vector<double> sum;
    std::vector<double> sumsq;

    template <typename T>
    void add(const Tensor<T>& t) {
        if (n == 0) {
            shape = t.shape();
            sum.assign(static_cast<std::size_t>(t.numel()), 0.0);
            sumsq.assign(static_cast<std::size_t>(t.numel()), 0.0);
        } else if (!(t.shape() == shape)) {
            throw std::invalid_argument("divergence: sample shape mismatch " + t.shape().str() +
                                        " vs " + shape.str());
        }
        for (std::int64_t i = 0; i < t.numel(); ++i) {
            const double v = static_cast<double>(t[i]);
            sum[static_cast<std::size_t>(i)] += v;
            sumsq[static_cast<std::size_t>(i)] += v * v;
        }
    }

    double mean_at(std::size_t i) const { return sum[i] / static_cast<double>(n); }
    double var_at(std::size_t i) const {
        const double m = mean_at(i);
        return std::max(sumsq[i] / static_cast<double>(n) - m * m, kVarianceFloor);
    }
};

// Closed-form KL of per-pixel diagonal Gaussians fitted to each side,
// averaged over pixels; or the MSE of the per-pixel means.
inline double divergence_from_moments(DivergenceMetric metric, const MomentAccum& a,
                                      const MomentAccum& b) {
    if (a.n == 0 || b.n == 0) throw std::invalid_argument("divergence: empty sample set");
    if (!(a.shape == b.shape))
        throw std::invalid_argument("divergence: side shapes differ " + a.shape.str() + " vs " +
                                    b.shape.str());
    if (metric == DivergenceMetric::KLDiagGaussian && (a.n < 2 || b.n < 2))
        throw std::invalid_argument("divergence: KL needs >= 2 samples per side");
    const std::size_t npix = a.sum.size();
    double acc = 0.0;
    if (metric == DivergenceMetric::KLDiagGaussian) {
        for (std::size_t i = 0; i < npix; ++i) {
            const double va = a.var_at(i), vb = b.var_at(i);
            const double dm = a.mean_at(i) - b.mean_at(i);
            acc += 0.5 * std::log(vb / va) + (va + dm * dm) / (2.0 * vb) - 0.5;
        }
    } else {
        for (std::size_t i = 0; i < npix; ++i) {
            const double dm = a.mean_at(i) - b.mean_at(i);
            acc += dm * dm;
        }
    }
    return acc / static_cast<double>(npix);
}

}  // namespace anadetail

// D(samples_a, samples_b) under the chosen metric. The sample axis is the
// list index; all tensors must share one shape.
template <typename T>
double divergence(DivergenceMetric metric, const std::vector<Tensor<T>>& samples_a,
                  const std::vector<Tensor<T>>& samples_b) {
    anadetail::MomentAccum a, b;
    for (const auto& t : samples_a) a.add(t);
    for (const auto& t : samples_b) b.add(t);
    return anadetail::divergence_from_moments(metric, a, b);
}

enum class InputSource { Forward, Backward };

struct AnalysisBudget {
    int samples_per_item = 64;  // stochastic draws per dataset item per t
    int item_cap = 16;          // dataset items used by error_report
};

namespace anadetail {

template <typename T>
Tensor<T> source_state(InputSource src, const DenoiserFn<T>& f, const RestorationPairT<T>& pair,
                       const DiffusionSchedule& s, int t, RngState& rng) {
    if (src == InputSource::Forward) return forward_sample(pair, s, t, rng);
    if (t == s.T) return init_xT(pair.y0, s, rng);
    return backward_chain(f, s, pair.y0, rng, t, /*stochastic=*/true).final;
}

}  // namespace anadetail

// Discrepancy of one network application at iteration t against the target
// there, with inputs drawn either from the forward kernel or from backward
// chains (fresh RNG per item and draw).
template <typename T>
double measure_modular(const DenoiserFn<T>& f, const std::vector<RestorationPairT<T>>& dataset,
                       const DiffusionSchedule& s, int t, InputSource source,
                       DivergenceMetric metric, int samples_per_item, std::uint64_t seed) {
    if (dataset.empty()) throw std::invalid_argument("measure_modular: empty dataset");
    s.require_t(t, "measure_modular");
    anadetail::MomentAccum outs, gts;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& pair = dataset[i];
        const Tensor<T> gt = gt_at(pair, s, t);
        for (int k = 0; k < samples_per_item; ++k) {
            RngState rng = seeded_rng(derive_seed(seed, "modular", i, static_cast<std::uint64_t>(k)));
            Tensor<T> x = anadetail::source_state(source, f, pair, s, t, rng);
            outs.add(f(x, pair.y0, static_cast<double>(t) / s.T));
            gts.add(gt);
        }
    }
    return anadetail::divergence_from_moments(metric, outs, gts);
}

// Discrepancy between chain-produced states entering iteration t and forward
// samples at t. At t = T the chain start is the forward sample by definition.
template <typename T>
double measure_input_error(const DenoiserFn<T>& f, const std::vector<RestorationPairT<T>>& dataset,
                           const DiffusionSchedule& s, int t, DivergenceMetric metric,
                           int samples_per_item, std::uint64_t seed) {
    if (dataset.empty()) throw std::invalid_argument("measure_input_error: empty dataset");
    s.require_t(t, "measure_input_error");
    if (t == s.T) return 0.0;
    anadetail::MomentAccum back, forw;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& pair = dataset[i];
        for (int k = 0; k < samples_per_item; ++k) {
            RngState rng = seeded_rng(derive_seed(seed, "input", i, static_cast<std::uint64_t>(k)));
            back.add(backward_chain(f, s, pair.y0, rng, t, /*stochastic=*/true).final);
            forw.add(forward_sample(pair, s, t, rng));
        }
    }
    return anadetail::divergence_from_moments(metric, back, forw);
}

// End-to-end discrepancy: run chains down to t, apply the network once more,
// compare against the target at t. Identical to measure_modular with the
// Backward source.
template <typename T>
double measure_cumulative(const DenoiserFn<T>& f, const std::vector<RestorationPairT<T>>& dataset,
                          const DiffusionSchedule& s, int t, DivergenceMetric metric,
                          int samples_per_item, std::uint64_t seed) {
    return measure_modular(f, dataset, s, t, InputSource::Backward, metric, samples_per_item,
                           derive_seed(seed, "cumulative"));
}

// Per-iteration arrays of the three error notions plus propagation-factor
// estimates. Index 0 holds iteration t = 1.
struct ErrorReport {
    DivergenceMetric metric = DivergenceMetric::KLDiagGaussian;
    int T = 0;
    std::vector<double> modular;
    std::vector<double> input_error;
    std::vector<double> cumulative;
    std::vector<double> mu;
    std::vector<bool> mu_defined;
    int samples_per_t = 0;
    int items = 0;
    std::uint64_t seed = 0;
    std::string mode_label;

    double at(const std::vector<double>& v, int t) const {
        return v[static_cast<std::size_t>(t - 1)];
    }
};

// mu_t = (cumulative_t - modular_t) / cumulative_{t+1}; undefined when the
// denominator vanishes.
struct MuEstimate {
    double value = 0.0;
    bool defined = false;
};

inline MuEstimate estimate_mu(const ErrorReport& r, int t) {
    if (t < 1 || t > r.T - 1)
        throw std::invalid_argument("estimate_mu: t must be in 1..T-1");
    const double denom = r.at(r.cumulative, t + 1);
    if (std::abs(denom) < 1e-9) return {0.0, false};
    return {(r.at(r.cumulative, t) - r.at(r.modular, t)) / denom, true};
}

// Full per-t sweep. One backward-chain pass per (item, draw) serves the input
// and cumulative estimates at every t; the modular (forward-source) estimate
// uses its own draws. Deterministic under the seed.
template <typename T>
ErrorReport error_report(const DenoiserFn<T>& f, const std::vector<RestorationPairT<T>>& dataset,
                         const DiffusionSchedule& s, DivergenceMetric metric,
                         const AnalysisBudget& budget, std::uint64_t seed,
                         const std::string& mode_label = "") {
    if (dataset.empty()) throw std::invalid_argument("error_report: empty dataset");
    const int items = std::min<int>(static_cast<int>(dataset.size()), budget.item_cap);
    const int K = budget.samples_per_item;
    const int T_total = s.T;

    std::vector<anadetail::MomentAccum> mod_out(T_total), gt_side(T_total), chain_state(T_total),
        fwd_state(T_total), chain_out(T_total);

    for (int i = 0; i < items; ++i) {
        const auto& pair = dataset[static_cast<std::size_t>(i)];
        std::vector<Tensor<T>> gts(static_cast<std::size_t>(T_total));
        for (int t = 1; t <= T_total; ++t)
            gts[static_cast<std::size_t>(t - 1)] = gt_at(pair, s, t);

        for (int k = 0; k < K; ++k) {
            // One full backward pass; states and network outputs at every t.
            RngState crng = seeded_rng(derive_seed(seed, "chain", static_cast<std::uint64_t>(i),
                                                   static_cast<std::uint64_t>(k)));
            Tensor<T> x = init_xT(pair.y0, s, crng);
            for (int t = T_total; t >= 1; --t) {
                chain_state[static_cast<std::size_t>(t - 1)].add(x);
                Tensor<T> out = f(x, pair.y0, static_cast<double>(t) / s.T);
                chain_out[static_cast<std::size_t>(t - 1)].add(out);
                const double noise = s.kappa * std::sqrt(s.eta_at(t - 1));
                if (t > 1) {
                    x = std::move(out);
                    if (noise > 0.0) x += normal_sample<T>(crng, x.shape(), 0.0, noise);
                }
            }
            // Forward-source draws for the modular estimate.
            RngState frng = seeded_rng(derive_seed(seed, "forward", static_cast<std::uint64_t>(i),
                                                   static_cast<std::uint64_t>(k)));
            for (int t = 1; t <= T_total; ++t) {
                Tensor<T> xf = forward_sample(pair, s, t, frng);
                fwd_state[static_cast<std::size_t>(t - 1)].add(xf);
                mod_out[static_cast<std::size_t>(t - 1)].add(
                    f(xf, pair.y0, static_cast<double>(t) / s.T));
                gt_side[static_cast<std::size_t>(t - 1)].add(gts[static_cast<std::size_t>(t - 1)]);
            }
        }
    }

    ErrorReport r;
    r.metric = metric;
    r.T = T_total;
    r.samples_per_t = K;
    r.items = items;
    r.seed = seed;
    r.mode_label = mode_label;
    r.modular.resize(static_cast<std::size_t>(T_total));
    r.input_error.resize(static_cast<std::size_t>(T_total));
    r.cumulative.resize(static_cast<std::size_t>(T_total));
    r.mu.assign(static_cast<std::size_t>(T_total), 0.0);
    r.mu_defined.assign(static_cast<std::size_t>(T_total), false);
    for (int t = 1; t <= T_total; ++t) {
        const std::size_t idx = static_cast<std::size_t>(t - 1);
        r.modular[idx] = anadetail::divergence_from_moments(metric, mod_out[idx], gt_side[idx]);
        r.input_error[idx] =
            (t == T_total) ? 0.0
                           : anadetail::divergence_from_moments(metric, chain_state[idx],
                                                                fwd_state[idx]);
        r.cumulative[idx] = anadetail::divergence_from_moments(metric, chain_out[idx], gt_side[idx]);
    }
    for (int t = 1; t <= T_total - 1; ++t) {
        const MuEstimate m = estimate_mu(r, t);
        r.mu[static_cast<std::size_t>(t - 1)] = m.value;
        r.mu_defined[static_cast<std::size_t>(t - 1)] = m.defined;
    }
    return r;
}

}  // namespace rsdiff
