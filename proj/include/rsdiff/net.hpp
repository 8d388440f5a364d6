#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rsdiff/errors.hpp"
#include "rsdiff/tensor.hpp"

namespace rsdiff {

// Conditional denoiser: a small conv encoder-decoder with additive skip
// connections. Input is concat(state, condition, iteration map); output has
// the state's shape. The final conv is zero-initialized so the net predicts
// zero before any training step.
struct NetConfig {
    int image_channels = 1;
    int base_channels = 16;
    int depth = 2;  // number of stride-2 stages
    int kernel = 3; // odd

    int input_channels() const { return image_channels * 2 + 1; }

    void validate() const {
        if (image_channels < 1) throw std::invalid_argument("NetConfig: image_channels < 1");
        if (base_channels < 1) throw std::invalid_argument("NetConfig: base_channels < 1");
        if (depth < 1) throw std::invalid_argument("NetConfig: depth < 1");
        if (kernel < 1 || kernel % 2 == 0)
            throw std::invalid_argument("NetConfig: kernel must be odd and >= 1");
    }
};

template <typename T>
struct ParamTensor {
    std::string name;
    Tensor<T> value;
    Tensor<T> ema;     // shadow copy, moved only by ema_update
    Tensor<T> adam_m;
    Tensor<T> adam_v;
};

template <typename T>
struct NetParamsT {
    NetConfig cfg;
    std::vector<ParamTensor<T>> tensors;
    std::int64_t step = 0;

    std::int64_t weight_count() const {
        std::int64_t n = 0;
        for (const auto& p : tensors) n += p.value.numel();
        return n;
    }
};

using NetParams = NetParamsT<float>;

template <typename T>
struct Gradients {
    std::vector<Tensor<T>> g;  // index-aligned with NetParamsT::tensors
};

struct OptimConfig {
    double max_lr = 1e-4;
    std::int64_t total_steps = 1;
    double ema_decay = 0.999;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int batch_size = 4;

    void validate() const {
        if (max_lr <= 0.0) throw std::invalid_argument("OptimConfig: max_lr must be > 0");
        if (ema_decay < 0.0 || ema_decay >= 1.0)
            throw std::invalid_argument("OptimConfig: ema_decay must be in [0,1)");
        if (total_steps < 1) throw std::invalid_argument("OptimConfig: total_steps < 1");
        if (batch_size < 1) throw std::invalid_argument("OptimConfig: batch_size < 1");
    }
};

// ---------------------------------------------------------------------------
// Architecture layout. Weight tensors are stored rank-3 as (c_out, c_in, k*k)
// and biases as (c_out, 1, 1); the flat order below is the single source of
// truth for init, forward, backward, and checkpoints.
// ---------------------------------------------------------------------------

namespace netdetail {

struct ConvRef {
    int w = -1;  // index into NetParamsT::tensors
    int b = -1;
    int c_in = 0;
    int c_out = 0;
    int stride = 1;
};

struct Arch {
    ConvRef stem;
    std::vector<ConvRef> enc;  // enc[i]: level i -> i+1, stride 2
    ConvRef mid;
    std::vector<ConvRef> dec;  // dec[i]: produces level i, applied after 2x upsample
    ConvRef head;
    int kernel = 3;
};

inline Arch layout(const NetConfig& cfg) {
    Arch a;
    a.kernel = cfg.kernel;
    int idx = 0;
    auto conv = [&](int c_in, int c_out, int stride) {
        ConvRef r{idx, idx + 1, c_in, c_out, stride};
        idx += 2;
        return r;
    };
    const int C0 = cfg.base_channels;
    a.stem = conv(cfg.input_channels(), C0, 1);
    for (int i = 0; i < cfg.depth; ++i) a.enc.push_back(conv(C0 << i, C0 << (i + 1), 2));
    const int Cd = C0 << cfg.depth;
    a.mid = conv(Cd, Cd, 1);
    a.dec.resize(cfg.depth);
    for (int i = cfg.depth - 1; i >= 0; --i) a.dec[i] = conv(C0 << (i + 1), C0 << i, 1);
    a.head = conv(C0, cfg.image_channels, 1);
    return a;
}

// out[co] += conv(in, W[co]) with zero padding k/2; accumulates on top of the
// existing contents of out (callers pre-fill with the bias).
template <typename T>
void conv_accum(const Tensor<T>& in, const Tensor<T>& W, int c_in, int c_out, int k, int stride,
                Tensor<T>& out) {
    const int H = in.shape().h, Wd = in.shape().w;
    const int Ho = out.shape().h, Wo = out.shape().w;
    const int pad = k / 2;
    for (int co = 0; co < c_out; ++co) {
        T* __restrict__ orow_base = out.channel(co);
        for (int ci = 0; ci < c_in; ++ci) {
            const T* __restrict__ irow_base = in.channel(ci);
            const T* wrow = W.data() + (static_cast<std::int64_t>(co) * c_in + ci) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const T wv = wrow[ky * k + kx];
                    if (wv == T(0)) continue;
                    const int dy = ky - pad, dx = kx - pad;
                    // valid output x range: 0 <= ox*stride+dx < Wd
                    int ox_lo = 0, ox_hi = Wo - 1;
                    while (ox_lo * stride + dx < 0) ++ox_lo;
                    while (ox_hi >= 0 && ox_hi * stride + dx >= Wd) --ox_hi;
                    for (int oy = 0; oy < Ho; ++oy) {
                        const int iy = oy * stride + dy;
                        if (iy < 0 || iy >= H) continue;
                        T* __restrict__ orow = orow_base + static_cast<std::int64_t>(oy) * Wo;
                        const T* __restrict__ irow =
                            irow_base + static_cast<std::int64_t>(iy) * Wd + dx;
                        if (stride == 1) {
                            for (int ox = ox_lo; ox <= ox_hi; ++ox) orow[ox] += wv * irow[ox];
                        } else {
                            for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                orow[ox] += wv * irow[static_cast<std::int64_t>(ox) * stride];
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
Tensor<T> conv_forward(const Tensor<T>& in, const Tensor<T>& W, const Tensor<T>& b, int c_in,
                       int c_out, int k, int stride) {
    const int Ho = (in.shape().h + 2 * (k / 2) - k) / stride + 1;
    const int Wo = (in.shape().w + 2 * (k / 2) - k) / stride + 1;
    Tensor<T> out(Shape{c_out, Ho, Wo});
    for (int co = 0; co < c_out; ++co) {
        T* p = out.channel(co);
        const T bias = b[static_cast<std::size_t>(co)];
        std::fill(p, p + static_cast<std::size_t>(Ho) * Wo, bias);
    }
    conv_accum(in, W, c_in, c_out, k, stride, out);
    return out;
}

// grad w.r.t. conv input: scatter of gz through the kernel.
template <typename T>
void conv_backward_input(const Tensor<T>& gz, const Tensor<T>& W, int c_in, int c_out, int k,
                         int stride, Tensor<T>& g_in) {
    const int H = g_in.shape().h, Wd = g_in.shape().w;
    const int Ho = gz.shape().h, Wo = gz.shape().w;
    const int pad = k / 2;
    for (int co = 0; co < c_out; ++co) {
        const T* __restrict__ grow_base = gz.channel(co);
        for (int ci = 0; ci < c_in; ++ci) {
            T* __restrict__ irow_base = g_in.channel(ci);
            const T* wrow = W.data() + (static_cast<std::int64_t>(co) * c_in + ci) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const T wv = wrow[ky * k + kx];
                    if (wv == T(0)) continue;
                    const int dy = ky - pad, dx = kx - pad;
                    int ox_lo = 0, ox_hi = Wo - 1;
                    while (ox_lo * stride + dx < 0) ++ox_lo;
                    while (ox_hi >= 0 && ox_hi * stride + dx >= Wd) --ox_hi;
                    for (int oy = 0; oy < Ho; ++oy) {
                        const int iy = oy * stride + dy;
                        if (iy < 0 || iy >= H) continue;
                        const T* __restrict__ grow = grow_base + static_cast<std::int64_t>(oy) * Wo;
                        T* __restrict__ irow =
                            irow_base + static_cast<std::int64_t>(iy) * Wd + dx;
                        if (stride == 1) {
                            for (int ox = ox_lo; ox <= ox_hi; ++ox) irow[ox] += wv * grow[ox];
                        } else {
                            for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                irow[static_cast<std::int64_t>(ox) * stride] += wv * grow[ox];
                        }
                    }
                }
            }
        }
    }
}

// grad w.r.t. conv weights and bias.
template <typename T>
void conv_backward_params(const Tensor<T>& in, const Tensor<T>& gz, int c_in, int c_out, int k,
                          int stride, Tensor<T>& gW, Tensor<T>& gb) {
    const int H = in.shape().h, Wd = in.shape().w;
    const int Ho = gz.shape().h, Wo = gz.shape().w;
    const int pad = k / 2;
    for (int co = 0; co < c_out; ++co) {
        const T* __restrict__ grow_base = gz.channel(co);
        double bacc = 0.0;
        {
            const std::int64_t n = static_cast<std::int64_t>(Ho) * Wo;
            for (std::int64_t i = 0; i < n; ++i) bacc += static_cast<double>(grow_base[i]);
        }
        gb[static_cast<std::size_t>(co)] += static_cast<T>(bacc);
        for (int ci = 0; ci < c_in; ++ci) {
            const T* __restrict__ irow_base = in.channel(ci);
            T* wrow = gW.data() + (static_cast<std::int64_t>(co) * c_in + ci) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const int dy = ky - pad, dx = kx - pad;
                    int ox_lo = 0, ox_hi = Wo - 1;
                    while (ox_lo * stride + dx < 0) ++ox_lo;
                    while (ox_hi >= 0 && ox_hi * stride + dx >= Wd) --ox_hi;
                    double acc = 0.0;
                    for (int oy = 0; oy < Ho; ++oy) {
                        const int iy = oy * stride + dy;
                        if (iy < 0 || iy >= H) continue;
                        const T* __restrict__ grow = grow_base + static_cast<std::int64_t>(oy) * Wo;
                        const T* __restrict__ irow =
                            irow_base + static_cast<std::int64_t>(iy) * Wd + dx;
                        if (stride == 1) {
                            for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                acc += static_cast<double>(grow[ox]) * static_cast<double>(irow[ox]);
                        } else {
                            for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                acc += static_cast<double>(grow[ox]) *
                                       static_cast<double>(irow[static_cast<std::int64_t>(ox) * stride]);
                        }
                    }
                    wrow[ky * k + kx] += static_cast<T>(acc);
                }
            }
        }
    }
}

template <typename T>
Tensor<T> silu(const Tensor<T>& z) {
    Tensor<T> out(z.shape());
    for (std::int64_t i = 0; i < z.numel(); ++i) {
        const T s = T(1) / (T(1) + std::exp(-z[i]));
        out[i] = z[i] * s;
    }
    return out;
}

// g_out * d silu(z)/dz, elementwise.
template <typename T>
Tensor<T> silu_backward(const Tensor<T>& z, const Tensor<T>& g_out) {
    Tensor<T> g(z.shape());
    for (std::int64_t i = 0; i < z.numel(); ++i) {
        const T s = T(1) / (T(1) + std::exp(-z[i]));
        g[i] = g_out[i] * s * (T(1) + z[i] * (T(1) - s));
    }
    return g;
}

template <typename T>
Tensor<T> upsample2(const Tensor<T>& in) {
    const Shape s = in.shape();
    Tensor<T> out(Shape{s.c, s.h * 2, s.w * 2});
    for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < s.h * 2; ++y) {
            const T* irow = in.channel(c) + static_cast<std::int64_t>(y / 2) * s.w;
            T* orow = out.channel(c) + static_cast<std::int64_t>(y) * s.w * 2;
            for (int x = 0; x < s.w * 2; ++x) orow[x] = irow[x / 2];
        }
    return out;
}

template <typename T>
Tensor<T> upsample2_backward(const Tensor<T>& g_out) {
    const Shape s = g_out.shape();
    Tensor<T> g(Shape{s.c, s.h / 2, s.w / 2});
    for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < s.h; ++y) {
            const T* grow = g_out.channel(c) + static_cast<std::int64_t>(y) * s.w;
            T* irow = g.channel(c) + static_cast<std::int64_t>(y / 2) * (s.w / 2);
            for (int x = 0; x < s.w; ++x) irow[x / 2] += grow[x];
        }
    return g;
}

}  // namespace netdetail

template <typename T>
struct ForwardCache {
    bool valid = false;
    Tensor<T> input;                  // concat(state, condition, iteration map)
    Tensor<T> stem_z;
    std::vector<Tensor<T>> acts;      // acts[0..depth], post-activation per level
    std::vector<Tensor<T>> enc_z;     // enc_z[i] is the pre-activation of acts[i+1]
    Tensor<T> mid_z;
    std::vector<Tensor<T>> dec_up;    // per level i: upsampled input to dec conv
    std::vector<Tensor<T>> dec_z;     // per level i: pre-activation incl. skip
    std::vector<Tensor<T>> dec_a;     // per level i: activation (dec_a[0] feeds head)
};

// Fan-in-scaled Gaussian init (std = sqrt(2 / fan_in)); biases zero; the head
// conv is fully zero so the initial prediction is zero. EMA starts equal to
// the weights, Adam moments at zero.
template <typename T = float>
NetParamsT<T> net_init(const NetConfig& cfg, RngState& rng) {
    cfg.validate();
    const auto arch = netdetail::layout(cfg);
    NetParamsT<T> p;
    p.cfg = cfg;

    auto add_conv = [&](const netdetail::ConvRef& r, const std::string& name, bool zero) {
        const int k = cfg.kernel;
        Tensor<T> w(Shape{r.c_out, r.c_in, k * k});
        if (!zero) {
            const double std = std::sqrt(2.0 / (static_cast<double>(k) * k * r.c_in));
            for (std::int64_t i = 0; i < w.numel(); ++i)
                w[i] = static_cast<T>(std * next_normal(rng));
        }
        Tensor<T> b(Shape{r.c_out, 1, 1});
        p.tensors.push_back({name + ".w", w, w, Tensor<T>(w.shape()), Tensor<T>(w.shape())});
        p.tensors.push_back({name + ".b", b, b, Tensor<T>(b.shape()), Tensor<T>(b.shape())});
    };

    add_conv(arch.stem, "stem", false);
    for (std::size_t i = 0; i < arch.enc.size(); ++i)
        add_conv(arch.enc[i], "enc" + std::to_string(i), false);
    add_conv(arch.mid, "mid", false);
    for (int i = static_cast<int>(arch.dec.size()) - 1; i >= 0; --i)
        add_conv(arch.dec[i], "dec" + std::to_string(i), false);
    add_conv(arch.head, "head", true);
    return p;
}

namespace netdetail {

template <typename T>
Tensor<T> concat_inputs(const NetConfig& cfg, const Tensor<T>& x, const Tensor<T>& y,
                        double t_norm) {
    x.require_shape(y, "net_forward");
    if (x.shape().c != cfg.image_channels)
        throw std::invalid_argument("net_forward: state has " + std::to_string(x.shape().c) +
                                    " channels, config expects " +
                                    std::to_string(cfg.image_channels));
    const int H = x.shape().h, W = x.shape().w;
    const int div = 1 << cfg.depth;
    if (H % div != 0 || W % div != 0)
        throw std::invalid_argument("net_forward: spatial dims " + x.shape().str() +
                                    " must be divisible by 2^depth = " + std::to_string(div));
    Tensor<T> in(Shape{cfg.input_channels(), H, W});
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    std::memcpy(in.data(), x.data(), plane * x.shape().c * sizeof(T));
    std::memcpy(in.data() + plane * x.shape().c, y.data(), plane * y.shape().c * sizeof(T));
    T* tmap = in.data() + plane * (x.shape().c + y.shape().c);
    std::fill(tmap, tmap + plane, static_cast<T>(t_norm));
    return in;
}

// Shared forward walk; the cache pointer may be null for plain evaluation.
template <typename T>
Tensor<T> run_forward(const NetParamsT<T>& p, const Tensor<T>& x, const Tensor<T>& y,
                      double t_norm, bool use_ema, ForwardCache<T>* cache) {
    if (t_norm < 0.0 || t_norm > 1.0)
        throw std::invalid_argument("net_forward: t_norm must be in [0,1]");
    const auto arch = layout(p.cfg);
    const int k = p.cfg.kernel;
    auto W = [&](const ConvRef& r) -> const Tensor<T>& {
        return use_ema ? p.tensors[r.w].ema : p.tensors[r.w].value;
    };
    auto B = [&](const ConvRef& r) -> const Tensor<T>& {
        return use_ema ? p.tensors[r.b].ema : p.tensors[r.b].value;
    };

    Tensor<T> in = concat_inputs(p.cfg, x, y, t_norm);
    const int d = p.cfg.depth;

    Tensor<T> stem_z = conv_forward(in, W(arch.stem), B(arch.stem), arch.stem.c_in,
                                    arch.stem.c_out, k, 1);
    std::vector<Tensor<T>> acts(d + 1);
    std::vector<Tensor<T>> enc_z(d);
    acts[0] = silu(stem_z);
    for (int i = 0; i < d; ++i) {
        enc_z[i] = conv_forward(acts[i], W(arch.enc[i]), B(arch.enc[i]), arch.enc[i].c_in,
                                arch.enc[i].c_out, k, 2);
        acts[i + 1] = silu(enc_z[i]);
    }
    Tensor<T> mid_z =
        conv_forward(acts[d], W(arch.mid), B(arch.mid), arch.mid.c_in, arch.mid.c_out, k, 1);
    Tensor<T> cur = silu(mid_z);

    std::vector<Tensor<T>> dec_up(d), dec_z(d), dec_a(d);
    for (int i = d - 1; i >= 0; --i) {
        dec_up[i] = upsample2(cur);
        dec_z[i] = conv_forward(dec_up[i], W(arch.dec[i]), B(arch.dec[i]), arch.dec[i].c_in,
                                arch.dec[i].c_out, k, 1);
        dec_z[i] += acts[i];
        dec_a[i] = silu(dec_z[i]);
        cur = dec_a[i];
    }
    Tensor<T> out = conv_forward(dec_a[0], W(arch.head), B(arch.head), arch.head.c_in,
                                 arch.head.c_out, k, 1);

    if (cache) {
        cache->valid = true;
        cache->input = std::move(in);
        cache->stem_z = std::move(stem_z);
        cache->acts = std::move(acts);
        cache->enc_z = std::move(enc_z);
        cache->mid_z = std::move(mid_z);
        cache->dec_up = std::move(dec_up);
        cache->dec_z = std::move(dec_z);
        cache->dec_a = std::move(dec_a);
    }
    return out;
}

}  // namespace netdetail

// Pure evaluation; never mutates parameters or moments.
template <typename T>
Tensor<T> net_forward(const NetParamsT<T>& p, const Tensor<T>& x, const Tensor<T>& y,
                      double t_norm, bool use_ema = false) {
    return netdetail::run_forward(p, x, y, t_norm, use_ema, static_cast<ForwardCache<T>*>(nullptr));
}

// Forward pass recording activations for a subsequent net_backward. Uses raw
// weights (the trainable path never goes through the EMA shadow).
template <typename T>
Tensor<T> net_forward_cached(const NetParamsT<T>& p, const Tensor<T>& x, const Tensor<T>& y,
                             double t_norm, ForwardCache<T>& cache) {
    return netdetail::run_forward(p, x, y, t_norm, false, &cache);
}

// Exact reverse-mode gradients of a scalar loss w.r.t. every weight, given
// dLoss/dOutput. Accumulates into `grads` (zero-filled on first use).
template <typename T>
void net_backward(const NetParamsT<T>& p, const ForwardCache<T>& cache, const Tensor<T>& g_out,
                  Gradients<T>& grads) {
    if (!cache.valid) throw StateError("net_backward: no cached forward pass");
    const auto arch = netdetail::layout(p.cfg);
    const int k = p.cfg.kernel;
    const int d = p.cfg.depth;
    if (grads.g.empty()) {
        grads.g.reserve(p.tensors.size());
        for (const auto& t : p.tensors) grads.g.emplace_back(t.value.shape());
    }
    auto V = [&](const netdetail::ConvRef& r) -> const Tensor<T>& { return p.tensors[r.w].value; };
    auto backprop_conv = [&](const netdetail::ConvRef& r, const Tensor<T>& in, const Tensor<T>& gz,
                             Tensor<T>* g_in) {
        netdetail::conv_backward_params(in, gz, r.c_in, r.c_out, k, r.stride, grads.g[r.w],
                                        grads.g[r.b]);
        if (g_in) netdetail::conv_backward_input(gz, V(r), r.c_in, r.c_out, k, r.stride, *g_in);
    };

    // head
    Tensor<T> g_cur(cache.dec_a[0].shape());
    backprop_conv(arch.head, cache.dec_a[0], g_out, &g_cur);

    // decoder, reverse of execution order (it ran d-1 .. 0)
    std::vector<Tensor<T>> skip_grad(d);
    for (int i = 0; i < d; ++i) {
        Tensor<T> gz = netdetail::silu_backward(cache.dec_z[i], g_cur);
        skip_grad[i] = gz;  // the skip fed acts[i] directly
        Tensor<T> g_up(cache.dec_up[i].shape());
        backprop_conv(arch.dec[i], cache.dec_up[i], gz, &g_up);
        g_cur = netdetail::upsample2_backward(g_up);
    }

    // mid
    Tensor<T> gz_mid = netdetail::silu_backward(cache.mid_z, g_cur);
    Tensor<T> g_acts(cache.acts[d].shape());
    backprop_conv(arch.mid, cache.acts[d], gz_mid, &g_acts);

    // encoder
    for (int i = d - 1; i >= 0; --i) {
        Tensor<T> gz = netdetail::silu_backward(cache.enc_z[i], g_acts);
        g_acts = Tensor<T>(cache.acts[i].shape());
        backprop_conv(arch.enc[i], cache.acts[i], gz, &g_acts);
        g_acts += skip_grad[i];
    }

    // stem (input gradient not needed)
    Tensor<T> gz0 = netdetail::silu_backward(cache.stem_z, g_acts);
    backprop_conv(arch.stem, cache.input, gz0, nullptr);
}

// Standard Adam with bias correction; increments the step counter.
template <typename T>
void adam_step(NetParamsT<T>& p, const Gradients<T>& grads, double lr, const OptimConfig& oc) {
    if (grads.g.size() != p.tensors.size())
        throw std::invalid_argument("adam_step: gradient structure mismatch");
    p.step += 1;
    const double b1 = oc.adam_beta1, b2 = oc.adam_beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(p.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(p.step));
    for (std::size_t ti = 0; ti < p.tensors.size(); ++ti) {
        auto& t = p.tensors[ti];
        const Tensor<T>& g = grads.g[ti];
        t.value.require_shape(g, "adam_step");
        for (std::int64_t i = 0; i < t.value.numel(); ++i) {
            const double gi = static_cast<double>(g[i]);
            const double m = b1 * static_cast<double>(t.adam_m[i]) + (1.0 - b1) * gi;
            const double v = b2 * static_cast<double>(t.adam_v[i]) + (1.0 - b2) * gi * gi;
            t.adam_m[i] = static_cast<T>(m);
            t.adam_v[i] = static_cast<T>(v);
            const double m_hat = m / bc1;
            const double v_hat = v / bc2;
            t.value[i] =
                static_cast<T>(static_cast<double>(t.value[i]) -
                               lr * m_hat / (std::sqrt(v_hat) + oc.adam_eps));
        }
    }
}

// ema <- decay*ema + (1-decay)*weights. Never touches the weights.
template <typename T>
void ema_update(NetParamsT<T>& p, double decay) {
    if (decay < 0.0 || decay >= 1.0)
        throw std::invalid_argument("ema_update: decay must be in [0,1)");
    for (auto& t : p.tensors)
        for (std::int64_t i = 0; i < t.value.numel(); ++i)
            t.ema[i] = static_cast<T>(decay * static_cast<double>(t.ema[i]) +
                                      (1.0 - decay) * static_cast<double>(t.value[i]));
}

// lr(step) = 0.5 * max_lr * (1 + cos(pi * step / total)); clamps past the end.
inline double cosine_lr(std::int64_t step, const OptimConfig& oc) {
    if (step < 0) throw std::invalid_argument("cosine_lr: negative step");
    const std::int64_t s = std::min(step, oc.total_steps);
    constexpr double pi = 3.14159265358979323846;
    return 0.5 * oc.max_lr *
           (1.0 + std::cos(pi * static_cast<double>(s) / static_cast<double>(oc.total_steps)));
}

// Type-erased denoiser used by the diffusion chain and the analyzers, so
// tests can substitute exact stubs for the conv net.
template <typename T>
using DenoiserFn = std::function<Tensor<T>(const Tensor<T>& state, const Tensor<T>& cond,
                                           double t_norm)>;

template <typename T>
DenoiserFn<T> make_denoiser(const NetParamsT<T>& p, bool use_ema) {
    return [&p, use_ema](const Tensor<T>& x, const Tensor<T>& y, double t_norm) {
        return net_forward(p, x, y, t_norm, use_ema);
    };
}

}  // namespace rsdiff
