#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "rsdiff/net.hpp"
#include "rsdiff/tensor.hpp"

namespace rsdiff {

// Residual-shifting schedule: eta_t = (t/T)^p for t = 0..T, so eta_0 = 0,
// eta_T = 1, strictly increasing. kappa scales the Gaussian noise.
struct DiffusionSchedule {
    int T = 15;
    double kappa = 1.0;
    double power = 2.0;
    std::vector<double> eta;  // size T+1

    double eta_at(int t) const { return eta[static_cast<std::size_t>(t)]; }

    void require_t(int t, const char* who) const {
        if (t < 1 || t > T)
            throw std::invalid_argument(std::string(who) + ": t = " + std::to_string(t) +
                                        " outside 1.." + std::to_string(T));
    }
};

inline DiffusionSchedule make_schedule(int T, double kappa, double power = 2.0) {
    if (T < 1) throw std::invalid_argument("make_schedule: T must be >= 1");
    if (kappa <= 0.0) throw std::invalid_argument("make_schedule: kappa must be > 0");
    if (power <= 0.0) throw std::invalid_argument("make_schedule: power must be > 0");
    DiffusionSchedule s;
    s.T = T;
    s.kappa = kappa;
    s.power = power;
    s.eta.resize(static_cast<std::size_t>(T) + 1);
    for (int t = 0; t <= T; ++t)
        s.eta[static_cast<std::size_t>(t)] =
            std::pow(static_cast<double>(t) / static_cast<double>(T), power);
    s.eta[0] = 0.0;
    s.eta[static_cast<std::size_t>(T)] = 1.0;
    return s;
}

// Ground truth x0 plus its degraded observation y0; the residue is y0 - x0.
template <typename T>
struct RestorationPairT {
    Tensor<T> x0;
    Tensor<T> y0;
    std::string task;

    void validate() const { x0.require_shape(y0, "RestorationPair"); }
    Tensor<T> residue() const { return y0 - x0; }
};

using RestorationPair = RestorationPairT<float>;

// Per-iteration training target: x0 + eta_{t-1} * (y0 - x0).
template <typename T>
Tensor<T> gt_at(const RestorationPairT<T>& pair, const DiffusionSchedule& s, int t) {
    s.require_t(t, "gt_at");
    Tensor<T> out = pair.x0;
    out.add_scaled(pair.y0 - pair.x0, static_cast<T>(s.eta_at(t - 1)));
    return out;
}

// One-step corruption: x0 + eta_t * (y0 - x0) + kappa * sqrt(eta_t) * eps.
template <typename T>
Tensor<T> forward_sample(const RestorationPairT<T>& pair, const DiffusionSchedule& s, int t,
                         RngState& rng) {
    s.require_t(t, "forward_sample");
    const double eta = s.eta_at(t);
    Tensor<T> out = pair.x0;
    out.add_scaled(pair.y0 - pair.x0, static_cast<T>(eta));
    const double noise = s.kappa * std::sqrt(eta);
    if (noise > 0.0) out += normal_sample<T>(rng, out.shape(), 0.0, noise);
    return out;
}

// Chain start. eta_T = 1 makes the mean equal y0 regardless of x0.
template <typename T>
Tensor<T> init_xT(const Tensor<T>& y0, const DiffusionSchedule& s, RngState& rng) {
    Tensor<T> out = y0;
    if (s.kappa > 0.0) out += normal_sample<T>(rng, out.shape(), 0.0, s.kappa);
    return out;
}

// One backward transition: mean f(x_t, y0, t/T), noise kappa*sqrt(eta_{t-1}).
// At t = 1, eta_0 = 0 forces a noiseless step — the returned tensor is the
// restoration output.
template <typename T>
Tensor<T> backward_step(const DenoiserFn<T>& f, const DiffusionSchedule& s, const Tensor<T>& x_t,
                        const Tensor<T>& y0, int t, RngState& rng, bool stochastic) {
    s.require_t(t, "backward_step");
    x_t.require_shape(y0, "backward_step");
    Tensor<T> out = f(x_t, y0, static_cast<double>(t) / s.T);
    const double noise = s.kappa * std::sqrt(s.eta_at(t - 1));
    if (stochastic && noise > 0.0) out += normal_sample<T>(rng, out.shape(), 0.0, noise);
    return out;
}

template <typename T>
struct ChainResult {
    Tensor<T> final;                  // x_{t_stop}
    std::vector<Tensor<T>> states;    // post-step states x_{T-1}..x_{t_stop} when kept
};

// Runs the backward process from x_T down to x_{t_stop}.
template <typename T>
ChainResult<T> backward_chain(const DenoiserFn<T>& f, const DiffusionSchedule& s,
                              const Tensor<T>& y0, RngState& rng, int t_stop,
                              bool stochastic = true, bool keep_trajectory = false) {
    if (t_stop < 0 || t_stop >= s.T)
        throw std::invalid_argument("backward_chain: t_stop must be in 0..T-1");
    ChainResult<T> res;
    Tensor<T> x = init_xT(y0, s, rng);
    for (int t = s.T; t > t_stop; --t) {
        x = backward_step(f, s, x, y0, t, rng, stochastic);
        if (keep_trajectory) res.states.push_back(x);
    }
    res.final = std::move(x);
    return res;
}

}  // namespace rsdiff
