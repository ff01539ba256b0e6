// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "phantomdiff/denoiser.hpp"
#include "phantomdiff/net.hpp"
#include "phantomdiff/schedule.hpp"

namespace phantomdiff {

/// Training hyperparameters. Everything that affects results is explicit.
struct TrainConfig {
  int batch_size = 4;
  int steps = 1000;
  double learning_rate = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 1;
  int checkpoint_interval = 50;

  void validate() const;
};

/// Mean over the batch of the squared L2 distance between eps and the
/// model's prediction on q_sample(x0, t, eps).
double loss_simple(const DenoiserModel& model, const std::vector<ImageGrid>& x0_batch,
                   const std::vector<int>& t_batch, const std::vector<ImageGrid>& eps_batch,
                   const VarianceSchedule& sched);

struct TrainResult {
  std::vector<double> step_losses;                  // one entry per step
  std::vector<std::pair<int, double>> loss_trace;   // (step, loss) at intervals
};

/// Standard denoising training loop: per step draw batch indices, per item a
/// uniform t in 1..T and a fresh eps, then one adaptive-moment update of the
/// batch loss. Deterministic given cfg.seed; draw order per step is all
/// (index, t) pairs first, then one eps grid per item.
/// Throws NumericError naming the step if the loss goes non-finite.
TrainResult train(SmallDenoiserNet& net, const std::vector<ImageGrid>& dataset,
                  const TrainConfig& cfg, const VarianceSchedule& sched);

}  // namespace phantomdiff
