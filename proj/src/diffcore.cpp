#include "tryon/diffcore.hpp"

#include <algorithm>
#include <stdexcept>

namespace tryon {

ImageRGB apply_noise_aug(const ImageRGB& img, double t_na, Rng& rng, const NoiseSchedule& sched) {
    if (t_na < 0.0 || t_na > 1.0) throw std::invalid_argument("apply_noise_aug: t_na outside [0, 1]");
    const float a = static_cast<float>(sched.alpha(t_na));
    const float s = static_cast<float>(sched.sigma(t_na));
    ImageRGB out(img.h, img.w);
    for (size_t i = 0; i < img.pix.size(); ++i)
        out.pix[i] = a * img.pix[i] + s * static_cast<float>(rng.normal());
    return out;
}

ConditioningBundle zero_bundle_like(const ConditioningBundle& cond) {
    ConditioningBundle z = cond;
    std::fill(z.agnostic_rgb.pix.begin(), z.agnostic_rgb.pix.end(), 0.f);
    std::fill(z.garment.pix.begin(), z.garment.pix.end(), 0.f);
    if (z.low_res) std::fill(z.low_res->pix.begin(), z.low_res->pix.end(), 0.f);
    for (auto& p : z.person_pose.pts) p = {0.f, 0.f, 0.f};
    for (auto& p : z.garment_pose.pts) p = {0.f, 0.f, 0.f};
    z.noise_aug_levels = NoiseAugLevels{};
    return z;
}

ConditioningBundle conditioning_dropout(const ConditioningBundle& cond, double p, Rng& rng) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("conditioning_dropout: p outside [0, 1]");
    return rng.uniform() < p ? zero_bundle_like(cond) : cond;
}

namespace {

Tensor<float> gaussian(const std::vector<int64_t>& shape, Rng& rng) {
    Tensor<float> t(shape);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.normal());
    return t;
}

Tensor<float> guided_eps(const DenoiseFn& model, const Tensor<float>& z, double t, double w,
                         int step) {
    Tensor<float> eps = w == 1.0 ? model(z, t, true)
                                 : cfg_combine(model(z, t, true), model(z, t, false), w);
    if (!z.same_shape(eps))
        throw std::runtime_error("sampler: model output shape mismatch at step " +
                                 std::to_string(step));
    for (int64_t i = 0; i < eps.numel(); ++i)
        if (!std::isfinite(eps[i]))
            throw std::runtime_error("sampler: non-finite model output at step " +
                                     std::to_string(step));
    return eps;
}

Tensor<float> clipped_x_hat(const Tensor<float>& z, const Tensor<float>& eps, double t,
                            const NoiseSchedule& sched) {
    Tensor<float> x = eps_to_x(z, eps, t, sched);
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = std::min(1.f, std::max(-1.f, x[i]));
    return x;
}

void check_spec(const SamplerSpec& spec) {
    if (spec.steps < 1) throw std::invalid_argument("sampler: steps must be >= 1");
    if (spec.eta < 0.0) throw std::invalid_argument("sampler: eta must be >= 0");
}

}  // namespace

Tensor<float> ddpm_sample(const DenoiseFn& model, const NoiseSchedule& sched,
                          const SamplerSpec& spec, const std::vector<int64_t>& shape, Rng& rng) {
    check_spec(spec);
    Tensor<float> z = gaussian(shape, rng);
    const int n = spec.steps;
    for (int k = n; k >= 1; --k) {
        const double s = double(k) / n, r = double(k - 1) / n;
        const Tensor<float> eps = guided_eps(model, z, s, spec.guidance_weight, n - k);
        const Tensor<float> x_hat = clipped_x_hat(z, eps, s, sched);
        if (k == 1) {
            z = x_hat;
            break;
        }
        const double as = sched.alpha(s), ar = sched.alpha(r);
        const double ss2 = sched.sigma(s) * sched.sigma(s), sr2 = sched.sigma(r) * sched.sigma(r);
        const double a_sr = as / ar;
        const double var_sr = ss2 - a_sr * a_sr * sr2;  // forward s|r variance
        const float cz = static_cast<float>(a_sr * sr2 / ss2);
        const float cx = static_cast<float>(ar * var_sr / ss2);
        const float sd = static_cast<float>(std::sqrt(std::max(0.0, var_sr * sr2 / ss2)));
        for (int64_t i = 0; i < z.numel(); ++i)
            z[i] = cz * z[i] + cx * x_hat[i] + sd * static_cast<float>(rng.normal());
    }
    return z;
}

Tensor<float> ddim_sample(const DenoiseFn& model, const NoiseSchedule& sched,
                          const SamplerSpec& spec, const std::vector<int64_t>& shape, Rng& rng) {
    check_spec(spec);
    Tensor<float> z = gaussian(shape, rng);
    const int n = spec.steps;
    for (int k = n; k >= 1; --k) {
        const double s = double(k) / n, r = double(k - 1) / n;
        const Tensor<float> eps = guided_eps(model, z, s, spec.guidance_weight, n - k);
        const Tensor<float> x_hat = clipped_x_hat(z, eps, s, sched);
        if (k == 1) {
            z = x_hat;
            break;
        }
        const double as = sched.alpha(s), ar = sched.alpha(r);
        const double ssig = sched.sigma(s), rsig = sched.sigma(r);
        const double a_sr = as / ar;
        const double var_sr = ssig * ssig - a_sr * a_sr * rsig * rsig;
        // eta = 1 reproduces the ancestral posterior exactly.
        const double noise_sd =
            spec.eta * std::sqrt(std::max(0.0, var_sr * rsig * rsig / (ssig * ssig)));
        const double dir_sd = std::sqrt(std::max(0.0, rsig * rsig - noise_sd * noise_sd));
        const float ca = static_cast<float>(ar), cd = static_cast<float>(dir_sd / ssig);
        const float cas = static_cast<float>(as);
        for (int64_t i = 0; i < z.numel(); ++i) {
            const float eps_tilde = z[i] - cas * x_hat[i];  // sigma_s * eps from clipped x_hat
            float v = ca * x_hat[i] + cd * eps_tilde;
            if (noise_sd > 0.0) v += static_cast<float>(noise_sd * rng.normal());
            z[i] = v;
        }
    }
    return z;
}

Tensor<float> sample(const DenoiseFn& model, const NoiseSchedule& sched, const SamplerSpec& spec,
                     const std::vector<int64_t>& shape, Rng& rng) {
    return spec.kind == SamplerKind::kDDPM ? ddpm_sample(model, sched, spec, shape, rng)
                                           : ddim_sample(model, sched, spec, shape, rng);
}

}  // namespace tryon
