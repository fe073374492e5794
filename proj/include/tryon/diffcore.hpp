#ifndef TRYON_DIFFCORE_HPP
#define TRYON_DIFFCORE_HPP

#include <cmath>
#include <functional>
#include <string>

#include "tryon/datamodel.hpp"
#include "tryon/nn.hpp"
#include "tryon/rng.hpp"
#include "tryon/tensor.hpp"

namespace tryon {

// Variance-preserving schedule on t in [0, 1]: alpha^2 + sigma^2 = 1.
struct NoiseSchedule {
    double shift = 0.008;      // cosine offset
    double alpha_floor = 1e-3; // keeps x-recovery well-posed at t = 1

    double alpha(double t) const {
        const double a = std::cos(1.5707963267948966 * (t + shift) / (1.0 + shift));
        return std::min(std::max(a, alpha_floor), 1.0);
    }
    double sigma(double t) const {
        const double a = alpha(t);
        return std::sqrt(1.0 - a * a);
    }
    double loss_weight(double /*t*/) const { return 1.0; }  // epsilon parameterization
};

inline NoiseSchedule cosine_schedule() { return NoiseSchedule{}; }

enum class SamplerKind { kDDPM, kDDIM };

struct SamplerSpec {
    SamplerKind kind = SamplerKind::kDDPM;
    int steps = 256;
    double guidance_weight = 2.0;
    double eta = 0.0;  // DDIM stochasticity; DDPM ignores it
};

// z_t = alpha(t) * x + sigma(t) * eps.
template <typename T>
Tensor<T> forward_corrupt(const Tensor<T>& x, const Tensor<T>& eps, double t,
                          const NoiseSchedule& sched) {
    if (!x.same_shape(eps)) throw std::invalid_argument("forward_corrupt: shape mismatch");
    const T a = static_cast<T>(sched.alpha(t)), s = static_cast<T>(sched.sigma(t));
    Tensor<T> z(x.shape);
    for (int64_t i = 0; i < x.numel(); ++i) z[i] = a * x[i] + s * eps[i];
    return z;
}

// x_hat = (z_t - sigma(t) * eps_hat) / alpha(t).
template <typename T>
Tensor<T> eps_to_x(const Tensor<T>& z, const Tensor<T>& eps_hat, double t,
                   const NoiseSchedule& sched) {
    if (!z.same_shape(eps_hat)) throw std::invalid_argument("eps_to_x: shape mismatch");
    const double a = sched.alpha(t);
    if (a < 1e-8) throw std::runtime_error("eps_to_x: timestep too noisy for x-recovery");
    const T ia = static_cast<T>(1.0 / a), s = static_cast<T>(sched.sigma(t));
    Tensor<T> x(z.shape);
    for (int64_t i = 0; i < z.numel(); ++i) x[i] = (z[i] - s * eps_hat[i]) * ia;
    return x;
}

// eps-parameterized denoising objective: w(t) * MSE(eps_hat, eps).
// Throws on non-finite model output.
template <typename T>
nn::Var<T> denoising_loss(Tape<T>& tape, nn::Var<T> eps_hat, const Tensor<T>& eps, double t,
                          const NoiseSchedule& sched) {
    const Tensor<T>& pred = tape.val(eps_hat);
    for (int64_t i = 0; i < pred.numel(); ++i)
        if (!std::isfinite(static_cast<double>(pred[i])))
            throw std::runtime_error("denoising_loss: non-finite model output");
    nn::Var<T> l = nn::mse_loss(tape, eps_hat, eps);
    const double w = sched.loss_weight(t);
    return w == 1.0 ? l : nn::scale(tape, l, w);
}

// Corrupts a conditioning image to level t_na with fresh Gaussian noise.
ImageRGB apply_noise_aug(const ImageRGB& img, double t_na, Rng& rng, const NoiseSchedule& sched);

// One coin for the whole bundle: with probability p all images and poses
// (and any low-res conditioning) are zeroed.
ConditioningBundle conditioning_dropout(const ConditioningBundle& cond, double p, Rng& rng);
ConditioningBundle zero_bundle_like(const ConditioningBundle& cond);

// eps_uncond + w * (eps_cond - eps_uncond).
template <typename T>
Tensor<T> cfg_combine(const Tensor<T>& eps_cond, const Tensor<T>& eps_uncond, double w) {
    if (!eps_cond.same_shape(eps_uncond)) throw std::invalid_argument("cfg_combine: shape mismatch");
    if (w == 1.0) return eps_cond;  // exact identity, no round-trip through the difference
    Tensor<T> out(eps_cond.shape);
    const T tw = static_cast<T>(w);
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = eps_uncond[i] + tw * (eps_cond[i] - eps_uncond[i]);
    return out;
}

// Denoiser callback: conditional = false requests the zeroed-conditioning pass.
using DenoiseFn = std::function<Tensor<float>(const Tensor<float>& z, double t, bool conditional)>;

// Ancestral sampling over a uniform t-grid from 1 to 0 with CFG and
// per-step x_hat clipping to [-1, 1]. Deterministic given the rng seed.
Tensor<float> ddpm_sample(const DenoiseFn& model, const NoiseSchedule& sched,
                          const SamplerSpec& spec, const std::vector<int64_t>& shape, Rng& rng);

// DDIM update with stochasticity eta; eta = 0 never touches the rng.
Tensor<float> ddim_sample(const DenoiseFn& model, const NoiseSchedule& sched,
                          const SamplerSpec& spec, const std::vector<int64_t>& shape, Rng& rng);

Tensor<float> sample(const DenoiseFn& model, const NoiseSchedule& sched, const SamplerSpec& spec,
                     const std::vector<int64_t>& shape, Rng& rng);

}  // namespace tryon

#endif
