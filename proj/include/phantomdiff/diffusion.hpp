// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "phantomdiff/denoiser.hpp"
#include "phantomdiff/image.hpp"
#include "phantomdiff/rng.hpp"
#include "phantomdiff/schedule.hpp"

namespace phantomdiff {

/// Closed-form forward noising:
///   sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps, elementwise.
ImageGrid q_sample(const ImageGrid& x0, int t, const ImageGrid& eps,
                   const VarianceSchedule& sched);

/// Posterior mean of the reverse transition in terms of predicted noise:
///   (1/sqrt(alpha_t)) * (x_t - (beta_t / sqrt(1 - abar_t)) * eps_pred).
ImageGrid reverse_mean(const ImageGrid& x_t, int t, const ImageGrid& eps_pred,
                       const VarianceSchedule& sched);

/// One ancestral step: reverse_mean(x_t, t, model(x_t, t)) + sigma_t * z.
/// Callers must pass z = 0 at t = 1; the step applies whatever z it receives.
ImageGrid ddpm_step(const ImageGrid& x_t, int t, const DenoiserModel& model, const ImageGrid& z,
                    const VarianceSchedule& sched);

/// Full ancestral chain from seeded x_T ~ N(0, I) down to x_0.
///
/// Stream discipline (one NoiseStream per chain, seeded with `seed`):
/// x_T is drawn first; then for each t = T..2 one z grid is drawn. No draw
/// happens at t = 1 (z is zero there). Guided sampling follows the same
/// order and interleaves its reference draws after z, so an empty guidance
/// set reproduces this chain bitwise.
ImageGrid sample_unconditional(const DenoiserModel& model, const VarianceSchedule& sched,
                               int width, int height, std::uint64_t seed);

}  // namespace phantomdiff
