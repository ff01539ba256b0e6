// SPDX-License-Identifier: Apache-2.0
#include "phantomdiff/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "phantomdiff/errors.hpp"

namespace phantomdiff {

namespace {

constexpr double kLinearBetaStart = 1e-4;
constexpr double kLinearBetaEnd = 0.02;
constexpr double kCosineOffset = 0.008;
constexpr double kBetaClip = 0.999;

double cosine_f(double t, double T) {
  double arg = ((t / T + kCosineOffset) / (1.0 + kCosineOffset)) * std::numbers::pi / 2.0;
  double c = std::cos(arg);
  return c * c;
}

}  // namespace

ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "linear") return ScheduleKind::Linear;
  if (s == "cosine") return ScheduleKind::Cosine;
  throw std::invalid_argument("unknown schedule kind: " + s);
}

std::string to_string(ScheduleKind k) {
  return k == ScheduleKind::Linear ? "linear" : "cosine";
}

VarianceSchedule VarianceSchedule::build(ScheduleKind kind, int T) {
  if (T < 2) throw std::invalid_argument("build_schedule: T must be >= 2");
  std::vector<double> betas(static_cast<std::size_t>(T));
  if (kind == ScheduleKind::Linear) {
    for (int i = 0; i < T; ++i) {
      betas[i] = kLinearBetaStart +
                 (kLinearBetaEnd - kLinearBetaStart) * static_cast<double>(i) / (T - 1);
    }
  } else {
    double f0 = cosine_f(0.0, T);
    double abar_prev = 1.0;
    for (int t = 1; t <= T; ++t) {
      double abar = cosine_f(static_cast<double>(t), T) / f0;
      betas[t - 1] = std::min(1.0 - abar / abar_prev, kBetaClip);
      abar_prev = abar;
    }
  }
  return from_betas(kind, std::move(betas));
}

VarianceSchedule VarianceSchedule::from_betas(ScheduleKind kind, std::vector<double> betas) {
  if (betas.empty()) throw std::invalid_argument("VarianceSchedule: empty beta array");
  VarianceSchedule s;
  s.kind_ = kind;
  s.betas_ = std::move(betas);
  const std::size_t T = s.betas_.size();
  s.alphas_.resize(T);
  s.alpha_bars_.resize(T);
  s.sigmas_.resize(T);
  long double abar = 1.0L;
  for (std::size_t i = 0; i < T; ++i) {
    double b = s.betas_[i];
    if (!(b > 0.0 && b < 1.0)) {
      throw ScheduleError("schedule construction: beta[" + std::to_string(i + 1) +
                          "] = " + std::to_string(b) + " outside (0,1)");
    }
    s.alphas_[i] = 1.0 - b;
    abar *= static_cast<long double>(s.alphas_[i]);
    s.alpha_bars_[i] = static_cast<double>(abar);
    s.sigmas_[i] = std::sqrt(b);
  }
  return s;
}

std::size_t VarianceSchedule::check_index(int t) const {
  if (t < 1 || t > steps()) {
    throw std::invalid_argument("schedule step index " + std::to_string(t) + " outside 1.." +
                                std::to_string(steps()));
  }
  return static_cast<std::size_t>(t - 1);
}

}  // namespace phantomdiff
