// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace phantomdiff {

enum class ScheduleKind : std::uint8_t {
  Linear = 0,
  Cosine = 1,
};

ScheduleKind schedule_kind_from_string(const std::string& s);
std::string to_string(ScheduleKind k);

/// Precomputed beta/alpha/alpha_bar/sigma arrays for a T-step chain.
///
/// Public step indices run 1..T; storage is 0-indexed internally. Immutable
/// after construction. alpha_bar products are accumulated in long double so
/// they stay strictly decreasing out to T=1000.
class VarianceSchedule {
 public:
  /// Standard constructions. Requires T >= 2.
  ///  linear: beta interpolated uniformly from 1e-4 to 0.02.
  ///  cosine: alpha_bar(t) = f(t)/f(0), f(t) = cos^2(((t/T + s)/(1+s)) * pi/2),
  ///          s = 0.008, per-step beta clipped at 0.999.
  static VarianceSchedule build(ScheduleKind kind, int T);

  /// Construct from raw betas (schedule load, degenerate T=1 test schedules).
  /// Requires T >= 1 and every beta in (0,1); throws ScheduleError otherwise.
  static VarianceSchedule from_betas(ScheduleKind kind, std::vector<double> betas);

  int steps() const { return static_cast<int>(betas_.size()); }
  ScheduleKind kind() const { return kind_; }

  // t in 1..T.
  double beta(int t) const { return betas_[check_index(t)]; }
  double alpha(int t) const { return alphas_[check_index(t)]; }
  double alpha_bar(int t) const { return alpha_bars_[check_index(t)]; }
  double sigma(int t) const { return sigmas_[check_index(t)]; }

  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alphas() const { return alphas_; }
  const std::vector<double>& alpha_bars() const { return alpha_bars_; }
  const std::vector<double>& sigmas() const { return sigmas_; }

 private:
  VarianceSchedule() = default;
  std::size_t check_index(int t) const;

  ScheduleKind kind_ = ScheduleKind::Linear;
  std::vector<double> betas_, alphas_, alpha_bars_, sigmas_;
};

}  // namespace phantomdiff
