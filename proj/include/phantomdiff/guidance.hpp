// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "phantomdiff/denoiser.hpp"
#include "phantomdiff/image.hpp"
#include "phantomdiff/rng.hpp"
#include "phantomdiff/schedule.hpp"

namespace phantomdiff {

/// Box-average downsample by factor N. Edge cells that the factor does not
/// cover evenly are partial boxes, renormalized by their true pixel count.
ImageGrid box_downsample(const ImageGrid& img, int factor);

/// Low-pass operator: box-average downsample by N, then upsample back to the
/// original shape with bilinear interpolation between cell centers followed
/// by an exact per-cell mean restoration. The operator is linear, maps
/// constants to themselves, and box-downsampling its output recovers the
/// coarse cell means. N = 1 is the bitwise identity.
ImageGrid lowpass(const ImageGrid& img, int factor);

/// One conditional image with its filter scale and stop-time.
/// Guidance is applied while t >= a: a = 1 keeps the condition active for the
/// whole chain, a = T restricts it to the first step only.
struct GuidanceSpec {
  ImageGrid y;
  int n = 1;
  int a = 1;
  std::string label;
};

/// Ordered set of conditions. More than four conditions rarely behaves well,
/// so sizes above four are rejected unless allow_many is set.
struct GuidanceSet {
  std::vector<GuidanceSpec> specs;
  bool allow_many = false;

  std::size_t size() const { return specs.size(); }
  bool empty() const { return specs.empty(); }

  /// Throws std::invalid_argument on shape/stop-time/size violations.
  void validate(int width, int height, int T) const;
};

/// Multi-condition correction: returns
///   x_prev + sum over active s of (phi_{n_s}(y_noisy[s]) - phi_{n_s}(x_prev)),
/// every correction computed against the original x_prev and applied once.
/// A condition is active when t >= a_s. y_noisy must hold one grid per spec.
ImageGrid refine(const ImageGrid& x_prev, const std::vector<ImageGrid>& y_noisy,
                 const GuidanceSet& set, int t);

/// Noised reference for step t-1: q_sample(y, t-1, eps) with eps drawn from
/// the supplied stream; t-1 = 0 returns y unchanged and draws nothing.
ImageGrid q_sample_reference(const ImageGrid& y, int t_minus_1, NoiseStream& stream,
                             const VarianceSchedule& sched);
/// Convenience overload seeding a fresh stream.
ImageGrid q_sample_reference(const ImageGrid& y, int t_minus_1, std::uint64_t seed,
                             const VarianceSchedule& sched);

/// Per-step observation of a guided chain, for tests and diagnostics.
struct GuidedStepTrace {
  int t;                                  // step just completed (x is x_{t-1})
  const ImageGrid& x;                     // latent after the refine
  const std::vector<ImageGrid>& y_noisy;  // references used by this refine
};

struct GuidedSampleResult {
  ImageGrid x0;
  std::uint64_t refine_applications = 0;  // active (s, t) pairs over the chain
};

/// Guided ancestral chain. Per step t = T..1: one unguided ancestral step
/// (z = 0 at t = 1), then each condition is noised to level t-1 and the
/// refine correction is applied.
///
/// Stream discipline: x_T first; per step, the z grid, then one eps grid per
/// condition in spec order (skipped at t = 1 where the clean reference is
/// used). With an empty set this reproduces sample_unconditional bitwise.
GuidedSampleResult sample_guided(const DenoiserModel& model, const VarianceSchedule& sched,
                                 const GuidanceSet& set, int width, int height,
                                 std::uint64_t seed,
                                 const std::function<void(const GuidedStepTrace&)>& observer = {});

}  // namespace phantomdiff
