#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rsdiff/diffusion.hpp"
#include "rsdiff/errors.hpp"
#include "rsdiff/net.hpp"

namespace rsdiff {

// The six training modes share one loop, one loss, one optimizer; they differ
// only in how the network input at iteration t is constructed.
enum class TrainMode {
    Traditional,       // input = one-step forward sample x_t
    DataConsistent,    // input = backward-chain state, gradients blocked through the chain
    Efficient,         // input = f(x_{t+1}) + (T-t) * one-step error
    EfficientNoAmp,    // input = f(x_{t+1}), no amplification
    EfficientRandAmp,  // amplification drawn uniformly from 0..T-t
    NllReg,            // forward-target loss plus backward-vs-forward regularizer
};

inline std::string to_string(TrainMode m) {
    switch (m) {
        case TrainMode::Traditional: return "traditional";
        case TrainMode::DataConsistent: return "data-consistent";
        case TrainMode::Efficient: return "efficient";
        case TrainMode::EfficientNoAmp: return "efficient-noamp";
        case TrainMode::EfficientRandAmp: return "efficient-randamp";
        case TrainMode::NllReg: return "nll-reg";
    }
    return "?";
}

inline TrainMode parse_train_mode(const std::string& s) {
    for (TrainMode m : {TrainMode::Traditional, TrainMode::DataConsistent, TrainMode::Efficient,
                        TrainMode::EfficientNoAmp, TrainMode::EfficientRandAmp, TrainMode::NllReg})
        if (to_string(m) == s) return m;
    throw ConfigError("unknown train mode '" + s + "'");
}

// Knobs of the input construction that are not the mode itself.
struct StepOptions {
    bool stochastic_chain = true;  // backward chains sample noise like the test-time sampler
    bool chain_use_ema = false;    // chain inputs come from raw weights by default
};

// One-step error at iteration t: run the net once on a forward sample of
// iteration t+1 and compare with the target there. No gradients flow through
// this computation. Requires t <= T-1.
template <typename T>
struct OneStepError {
    Tensor<T> e;      // f(x_{t+1}) - target_{t+1}
    Tensor<T> f_out;  // f(x_{t+1})
};

template <typename T>
OneStepError<T> one_step_error(const DenoiserFn<T>& f, const RestorationPairT<T>& pair,
                               const DiffusionSchedule& s, int t, RngState& rng) {
    if (t < 1 || t > s.T - 1)
        throw std::invalid_argument("one_step_error: t must be in 1..T-1, got " +
                                    std::to_string(t));
    Tensor<T> x_next = forward_sample(pair, s, t + 1, rng);
    Tensor<T> f_out = f(x_next, pair.y0, static_cast<double>(t + 1) / s.T);
    Tensor<T> e = f_out - gt_at(pair, s, t + 1);
    return {std::move(e), std::move(f_out)};
}

// Input/target pairs produced for one batch item. All modes yield a single
// pair except NllReg, which yields the forward pair and the regularizer pair.
template <typename T>
struct TrainingInput {
    struct Pair {
        Tensor<T> input;
        Tensor<T> target;
        int t;  // iteration the final network application runs at
    };
    std::vector<Pair> pairs;
    // Set in DataConsistent mode: a copy of the chain state the input was
    // taken from, so the train step can report D(x_t_train, x_t_back).
    bool has_chain_ref = false;
    Tensor<T> chain_ref;
};

template <typename T>
TrainingInput<T> make_training_input(TrainMode mode, const DenoiserFn<T>& f,
                                     const RestorationPairT<T>& pair, const DiffusionSchedule& s,
                                     int t, RngState& rng, const StepOptions& opts = {}) {
    s.require_t(t, "make_training_input");
    TrainingInput<T> out;
    const int T_total = s.T;

    auto chain_state_at = [&](int tt) -> Tensor<T> {
        // x_tt produced by the backward process; tt == T is the chain start.
        if (tt == T_total) return init_xT(pair.y0, s, rng);
        return backward_chain(f, s, pair.y0, rng, tt, opts.stochastic_chain).final;
    };

    switch (mode) {
        case TrainMode::Traditional: {
            out.pairs.push_back({forward_sample(pair, s, t, rng), gt_at(pair, s, t), t});
            break;
        }
        case TrainMode::DataConsistent: {
            Tensor<T> x_back = chain_state_at(t);
            out.chain_ref = x_back;
            out.has_chain_ref = true;
            out.pairs.push_back({std::move(x_back), gt_at(pair, s, t), t});
            break;
        }
        case TrainMode::Efficient:
        case TrainMode::EfficientNoAmp:
        case TrainMode::EfficientRandAmp: {
            if (t == T_total) {
                // No iteration T+1 exists; fall back to the one-step input.
                out.pairs.push_back({forward_sample(pair, s, t, rng), gt_at(pair, s, t), t});
                break;
            }
            OneStepError<T> ose = one_step_error(f, pair, s, t, rng);
            std::int64_t lambda = 0;
            if (mode == TrainMode::Efficient) lambda = T_total - t;
            else if (mode == TrainMode::EfficientRandAmp) lambda = next_int(rng, 0, T_total - t);
            Tensor<T> input = std::move(ose.f_out);
            if (lambda != 0) input.add_scaled(ose.e, static_cast<T>(lambda));
            out.pairs.push_back({std::move(input), gt_at(pair, s, t), t});
            break;
        }
        case TrainMode::NllReg: {
            out.pairs.push_back({forward_sample(pair, s, t, rng), gt_at(pair, s, t), t});
            Tensor<T> x_back = chain_state_at(t);
            // Regularizer target: the forward state one iteration later in the
            // chain; at t = 1 that state is exactly x0 (eta_0 = 0).
            Tensor<T> reg_target =
                (t >= 2) ? forward_sample(pair, s, t - 1, rng) : pair.x0;
            out.pairs.push_back({std::move(x_back), std::move(reg_target), t});
            break;
        }
    }
    return out;
}

struct StepStats {
    double loss = 0.0;
    double lr = 0.0;
    std::vector<int> ts;            // sampled iteration per batch item
    double consistency_gap = 0.0;   // max over items of D(x_t_train, x_t_back), DataConsistent only
};

template <typename T>
struct TrainerStateT {
    NetParamsT<T> params;
    DiffusionSchedule schedule;
    OptimConfig optim;
    TrainMode mode = TrainMode::Traditional;
    StepOptions step_opts;
    std::uint64_t run_seed = 0;
};

using TrainerState = TrainerStateT<float>;

// One optimization step over a batch: per item, sample t uniformly from 1..T,
// construct the mode's input, run the network once with gradients, average the
// MSE losses, then Adam + EMA. Only the final network application is inside
// the gradient tape; chain and error construction are evaluation-only.
template <typename T>
StepStats train_step(TrainerStateT<T>& st, const std::vector<const RestorationPairT<T>*>& batch,
                     std::uint64_t step_seed) {
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
    const double lr = cosine_lr(st.params.step, st.optim);
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    DenoiserFn<T> construct_net = make_denoiser(st.params, st.step_opts.chain_use_ema);

    Gradients<T> grads;
    StepStats stats;
    stats.lr = lr;
    double loss_acc = 0.0;

    for (std::size_t i = 0; i < batch.size(); ++i) {
        const RestorationPairT<T>& pair = *batch[i];
        const std::uint64_t item_seed = derive_seed(step_seed, "item", i);
        RngState trng = seeded_rng(derive_seed(item_seed, "t"));
        const int t = static_cast<int>(next_int(trng, 1, st.schedule.T));
        stats.ts.push_back(t);

        RngState crng = seeded_rng(derive_seed(item_seed, "construct"));
        TrainingInput<T> ti =
            make_training_input(st.mode, construct_net, pair, st.schedule, t, crng, st.step_opts);

        for (const auto& pr : ti.pairs) {
            ForwardCache<T> cache;
            Tensor<T> out = net_forward_cached(st.params, pr.input, pair.y0,
                                               static_cast<double>(pr.t) / st.schedule.T, cache);
            loss_acc += mse(out, pr.target) * inv_batch;
            Tensor<T> g = out - pr.target;
            g *= static_cast<T>(2.0 * inv_batch / static_cast<double>(out.numel()));
            net_backward(st.params, cache, g, grads);
        }
        if (ti.has_chain_ref)
            stats.consistency_gap = std::max(stats.consistency_gap,
                                             mse(ti.pairs[0].input, ti.chain_ref));
    }

    if (!std::isfinite(loss_acc))
        throw NumericError("train_step: non-finite loss at step " + std::to_string(st.params.step));
    adam_step(st.params, grads, lr, st.optim);
    ema_update(st.params, st.optim.ema_decay);
    stats.loss = loss_acc;
    return stats;
}

struct TrainLogEntry {
    std::int64_t step = 0;  // 1-based, equal to params.step after the update
    std::string mode;
    std::vector<int> ts;
    double loss = 0.0;
    double lr = 0.0;
    double seconds = 0.0;
    double consistency_gap = 0.0;
};

template <typename T>
using StepCallback = std::function<void(const TrainerStateT<T>&, std::int64_t completed_steps)>;

// Runs train_steps over shuffled minibatches until params.step reaches
// total_steps. Batch composition and all per-step randomness derive from
// (run_seed, step index), so resuming from a checkpoint replays the exact
// same sequence.
template <typename T>
std::vector<TrainLogEntry> train_loop(TrainerStateT<T>& st,
                                      const std::vector<RestorationPairT<T>>& dataset,
                                      std::int64_t total_steps,
                                      const StepCallback<T>& on_step = nullptr) {
    if (dataset.empty()) throw std::invalid_argument("train_loop: empty dataset");
    if (total_steps < 1) throw std::invalid_argument("train_loop: total_steps must be >= 1");
    const std::int64_t n = static_cast<std::int64_t>(dataset.size());
    const std::int64_t batch = st.optim.batch_size;
    const std::int64_t steps_per_epoch = (n + batch - 1) / batch;

    std::vector<TrainLogEntry> log;
    std::vector<std::int64_t> perm(dataset.size());
    std::int64_t perm_epoch = -1;

    while (st.params.step < total_steps) {
        const std::int64_t step_idx = st.params.step;  // 0-based index of this step
        const std::int64_t epoch = step_idx / steps_per_epoch;
        if (epoch != perm_epoch) {
            for (std::int64_t i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
            RngState srng = seeded_rng(derive_seed(st.run_seed, "shuffle",
                                                   static_cast<std::uint64_t>(epoch)));
            for (std::int64_t i = n - 1; i > 0; --i)
                std::swap(perm[static_cast<std::size_t>(i)],
                          perm[static_cast<std::size_t>(next_int(srng, 0, i))]);
            perm_epoch = epoch;
        }
        const std::int64_t in_epoch = step_idx % steps_per_epoch;
        std::vector<const RestorationPairT<T>*> items;
        items.reserve(static_cast<std::size_t>(batch));
        for (std::int64_t j = 0; j < batch; ++j)
            items.push_back(&dataset[static_cast<std::size_t>(
                perm[static_cast<std::size_t>((in_epoch * batch + j) % n)])]);

        const auto t0 = std::chrono::steady_clock::now();
        StepStats stats = train_step(st, items,
                                     derive_seed(st.run_seed, "step",
                                                 static_cast<std::uint64_t>(step_idx)));
        const auto t1 = std::chrono::steady_clock::now();

        TrainLogEntry entry;
        entry.step = st.params.step;
        entry.mode = to_string(st.mode);
        entry.ts = stats.ts;
        entry.loss = stats.loss;
        entry.lr = stats.lr;
        entry.seconds = std::chrono::duration<double>(t1 - t0).count();
        entry.consistency_gap = stats.consistency_gap;
        log.push_back(std::move(entry));

        if (on_step) on_step(st, st.params.step);
    }
    return log;
}

}  // namespace rsdiff
