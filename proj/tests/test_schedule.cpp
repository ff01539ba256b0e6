// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "phantomdiff/errors.hpp"
#include "phantomdiff/io_formats.hpp"
#include "phantomdiff/schedule.hpp"

using namespace phantomdiff;

namespace {

// Independent accumulation of the alpha_bar products via log-sums.
std::vector<double> oracle_alpha_bars(const std::vector<double>& betas) {
  std::vector<double> out(betas.size());
  long double log_acc = 0.0L;
  for (std::size_t i = 0; i < betas.size(); ++i) {
    log_acc += std::log(1.0L - static_cast<long double>(betas[i]));
    out[i] = static_cast<double>(std::exp(log_acc));
  }
  return out;
}

double oracle_cosine_f(double t, double T) {
  const double s = 0.008;
  double c = std::cos(((t / T + s) / (1.0 + s)) * std::numbers::pi / 2.0);
  return c * c;
}

}  // namespace

TEST_CASE("linear schedule endpoints at T=1000") {
  auto sched = VarianceSchedule::build(ScheduleKind::Linear, 1000);
  CHECK(sched.beta(1) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(sched.beta(1000) == doctest::Approx(0.02).epsilon(1e-12));
  // alpha_bars strictly decreasing, cross-checked against the log oracle.
  auto oracle = oracle_alpha_bars(sched.betas());
  for (int t = 1; t <= 1000; ++t) {
    if (t > 1) CHECK(sched.alpha_bar(t) < sched.alpha_bar(t - 1));
    CHECK(sched.alpha_bar(t) ==
          doctest::Approx(oracle[static_cast<std::size_t>(t - 1)]).epsilon(1e-12));
  }
  CHECK(sched.alpha_bar(1000) < 0.01);
}

TEST_CASE("linear schedule tiny T by hand") {
  auto sched = VarianceSchedule::build(ScheduleKind::Linear, 2);
  CHECK(sched.alpha(1) == doctest::Approx(1.0 - 1e-4).epsilon(1e-15));
  CHECK(sched.alpha(2) == doctest::Approx(0.98).epsilon(1e-15));
  CHECK(sched.alpha_bar(1) == doctest::Approx(0.9999).epsilon(1e-15));
  CHECK(sched.alpha_bar(2) == doctest::Approx(0.979902).epsilon(1e-9));
}

TEST_CASE("cosine schedule matches the closed form at t=1") {
  auto sched = VarianceSchedule::build(ScheduleKind::Cosine, 1000);
  const double expected = oracle_cosine_f(1.0, 1000.0) / oracle_cosine_f(0.0, 1000.0);
  CHECK(sched.alpha_bar(1) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("schedule invariants across kinds and sizes") {
  for (auto kind : {ScheduleKind::Linear, ScheduleKind::Cosine}) {
    for (int T : {2, 100, 1000}) {
      CAPTURE(static_cast<int>(kind));
      CAPTURE(T);
      auto sched = VarianceSchedule::build(kind, T);
      for (int t = 1; t <= T; ++t) {
        CHECK(sched.beta(t) > 0.0);
        CHECK(sched.beta(t) < 1.0);
        CHECK(sched.alpha(t) == 1.0 - sched.beta(t));
        CHECK(sched.sigma(t) == doctest::Approx(std::sqrt(sched.beta(t))).epsilon(1e-15));
        CHECK(sched.alpha_bar(t) > 0.0);
        CHECK(sched.alpha_bar(t) < 1.0);
        if (t > 1) {
          CHECK(sched.alpha_bar(t) < sched.alpha_bar(t - 1));
          CHECK(sched.alpha_bar(t) ==
                doctest::Approx(sched.alpha_bar(t - 1) * sched.alpha(t)).epsilon(1e-12));
        }
      }
      if (T == 1000) CHECK(sched.alpha_bar(T) < 0.01);
    }
  }
}

TEST_CASE("schedule construction errors") {
  CHECK_THROWS_AS(VarianceSchedule::build(ScheduleKind::Linear, 1), std::invalid_argument);
  CHECK_THROWS_AS(VarianceSchedule::build(ScheduleKind::Cosine, 0), std::invalid_argument);
  CHECK_THROWS_AS(VarianceSchedule::from_betas(ScheduleKind::Linear, {0.5, 1.5}), ScheduleError);
  CHECK_THROWS_AS(VarianceSchedule::from_betas(ScheduleKind::Linear, {0.0}), ScheduleError);
  CHECK_THROWS_AS(VarianceSchedule::from_betas(ScheduleKind::Linear, {}), std::invalid_argument);
}

TEST_CASE("degenerate single-step schedule is allowed for tests") {
  auto sched = VarianceSchedule::from_betas(ScheduleKind::Linear, {0.02});
  CHECK(sched.steps() == 1);
  CHECK(sched.alpha_bar(1) == doctest::Approx(0.98).epsilon(1e-15));
}

TEST_CASE("schedule dump and load round-trips bit-exactly") {
  for (auto kind : {ScheduleKind::Linear, ScheduleKind::Cosine}) {
    auto sched = VarianceSchedule::build(kind, 137);
    std::stringstream buf;
    write_vsch(buf, sched);
    auto loaded = read_vsch(buf);
    CHECK(loaded.kind() == sched.kind());
    REQUIRE(loaded.steps() == sched.steps());
    for (int t = 1; t <= sched.steps(); ++t) {
      CHECK(loaded.beta(t) == sched.beta(t));
      CHECK(loaded.alpha_bar(t) == sched.alpha_bar(t));
    }
  }
}

TEST_CASE("step index bounds are enforced") {
  auto sched = VarianceSchedule::build(ScheduleKind::Linear, 10);
  CHECK_THROWS_AS(sched.beta(0), std::invalid_argument);
  CHECK_THROWS_AS(sched.beta(11), std::invalid_argument);
  CHECK_NOTHROW(sched.beta(10));
}
