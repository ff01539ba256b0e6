// SPDX-License-Identifier: Apache-2.0
#include "phantomdiff/diffusion.hpp"

#include <cmath>
#include <string>

#include "phantomdiff/errors.hpp"

namespace phantomdiff {

ImageGrid q_sample(const ImageGrid& x0, int t, const ImageGrid& eps,
                   const VarianceSchedule& sched) {
  require_same_shape(x0, eps, "q_sample");
  const double abar = sched.alpha_bar(t);
  const double a = std::sqrt(abar);
  const double b = std::sqrt(1.0 - abar);
  ImageGrid out(x0.width(), x0.height(), x0.range());
  const std::size_t n = x0.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x0[i] + b * eps[i];
  out.require_finite("q_sample output at t=" + std::to_string(t));
  return out;
}

ImageGrid reverse_mean(const ImageGrid& x_t, int t, const ImageGrid& eps_pred,
                       const VarianceSchedule& sched) {
  require_same_shape(x_t, eps_pred, "reverse_mean");
  const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha(t));
  const double coef = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
  ImageGrid out(x_t.width(), x_t.height(), x_t.range());
  const std::size_t n = x_t.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = inv_sqrt_alpha * (x_t[i] - coef * eps_pred[i]);
  out.require_finite("reverse_mean output at t=" + std::to_string(t));
  return out;
}

ImageGrid ddpm_step(const ImageGrid& x_t, int t, const DenoiserModel& model, const ImageGrid& z,
                    const VarianceSchedule& sched) {
  require_same_shape(x_t, z, "ddpm_step");
  ImageGrid out = reverse_mean(x_t, t, model.predict(x_t, t), sched);
  const double sigma = sched.sigma(t);
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out[i] += sigma * z[i];
  return out;
}

ImageGrid sample_unconditional(const DenoiserModel& model, const VarianceSchedule& sched,
                               int width, int height, std::uint64_t seed) {
  NoiseStream stream(seed);
  ImageGrid x(width, height, ValueRange::Normalized);
  stream.fill_normal(x);
  ImageGrid z(width, height, ValueRange::Normalized);
  for (int t = sched.steps(); t >= 1; --t) {
    if (t > 1) {
      stream.fill_normal(z);
    } else {
      for (auto& v : z.values()) v = 0.0;
    }
    x = ddpm_step(x, t, model, z, sched);
  }
  return x;
}

}  // namespace phantomdiff
