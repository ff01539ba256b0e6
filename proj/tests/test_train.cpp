// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "phantomdiff/denoiser.hpp"
#include "phantomdiff/errors.hpp"
#include "phantomdiff/rng.hpp"
#include "phantomdiff/train.hpp"
#include "support/test_util.hpp"

using namespace phantomdiff;
using namespace testutil;

namespace {

NetDescriptor mlp_1d(int size, int temb = 16) {
  NetDescriptor d;
  d.kind = NetDescriptor::Kind::Mlp;
  d.width = size;
  d.height = 1;
  d.hidden_widths = {48, 48};
  d.temb_dim = temb;
  return d;
}

std::vector<ImageGrid> gaussian_dataset(int size, int count, double mean, double sd,
                                        std::uint64_t seed) {
  std::vector<ImageGrid> data;
  NoiseStream stream(seed);
  for (int i = 0; i < count; ++i) {
    ImageGrid g(size, 1, ValueRange::Normalized);
    for (auto& v : g.values()) v = mean + sd * stream.normal();
    data.push_back(std::move(g));
  }
  return data;
}

}  // namespace

TEST_CASE("zero learning rate leaves parameters bitwise unchanged") {
  auto sched = VarianceSchedule::build(ScheduleKind::Cosine, 20);
  SmallDenoiserNet net = SmallDenoiserNet::create(mlp_1d(8), 42);
  std::vector<double> before = net.parameters();
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.steps = 25;
  cfg.learning_rate = 0.0;
  cfg.seed = 3;
  cfg.checkpoint_interval = 10;
  train(net, gaussian_dataset(8, 4, 0.1, 0.5, 9), cfg, sched);
  CHECK(net.parameters() == before);
}

TEST_CASE("training is deterministic given the seed") {
  auto sched = VarianceSchedule::build(ScheduleKind::Cosine, 20);
  TrainConfig cfg;
  cfg.batch_size = 3;
  cfg.steps = 40;
  cfg.learning_rate = 1e-3;
  cfg.seed = 12;
  cfg.checkpoint_interval = 5;
  auto data = gaussian_dataset(8, 4, 0.0, 0.6, 10);

  SmallDenoiserNet n1 = SmallDenoiserNet::create(mlp_1d(8), 42);
  SmallDenoiserNet n2 = SmallDenoiserNet::create(mlp_1d(8), 42);
  TrainResult r1 = train(n1, data, cfg, sched);
  TrainResult r2 = train(n2, data, cfg, sched);
  CHECK(r1.step_losses == r2.step_losses);
  CHECK(r1.loss_trace == r2.loss_trace);
  CHECK(n1.parameters() == n2.parameters());
}

TEST_CASE("empty dataset and bad config are rejected") {
  auto sched = VarianceSchedule::build(ScheduleKind::Cosine, 20);
  SmallDenoiserNet net = SmallDenoiserNet::create(mlp_1d(8), 42);
  TrainConfig cfg;
  CHECK_THROWS_AS(train(net, {}, cfg, sched), std::invalid_argument);
  TrainConfig bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(train(net, gaussian_dataset(8, 2, 0, 0.5, 1), bad, sched),
                  std::invalid_argument);
}

TEST_CASE("non-finite loss aborts with the offending step") {
  auto sched = VarianceSchedule::build(ScheduleKind::Cosine, 20);
  SmallDenoiserNet net = SmallDenoiserNet::create(mlp_1d(8), 42);
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.steps = 10;
  cfg.learning_rate = 1e-3;
  cfg.seed = 5;
  // Data magnitudes that overflow the squared error immediately.
  std::vector<ImageGrid> overflow{ImageGrid::constant(8, 1, 1e200)};
  try {
    train(net, overflow, cfg, sched);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.where() == 1);
  }
}

TEST_CASE("single-image overfit run halves the loss") {
  // 2000 steps on one 16x16 image; the trailing-200 mean must drop below
  // half of the leading-200 mean.
  auto sched = VarianceSchedule::build(ScheduleKind::Cosine, 100);
  NetDescriptor d;
  d.kind = NetDescriptor::Kind::Unet;
  d.width = 16;
  d.height = 16;
  d.base_channels = 8;
  d.temb_dim = 32;
  SmallDenoiserNet net = SmallDenoiserNet::create(d, 1234);

  ImageGrid target = random_grid(16, 16, 77, -0.8, 0.8);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.steps = 2000;
  cfg.learning_rate = 2e-3;
  cfg.seed = 99;
  cfg.checkpoint_interval = 100;
  TrainResult r = train(net, {target}, cfg, sched);

  const auto head = std::accumulate(r.step_losses.begin(), r.step_losses.begin() + 200, 0.0) / 200;
  const auto tail = std::accumulate(r.step_losses.end() - 200, r.step_losses.end(), 0.0) / 200;
  CAPTURE(head);
  CAPTURE(tail);
  CHECK(tail < 0.5 * head);
}

TEST_CASE("trained net approaches but never beats the analytic oracle") {
  auto sched = VarianceSchedule::build(ScheduleKind::Cosine, 50);
  const int D = 8;
  const double mean = 0.2, sd = 0.5;
  auto data = gaussian_dataset(D, 64, mean, sd, 21);

  SmallDenoiserNet net = SmallDenoiserNet::create(mlp_1d(D), 2042);
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.steps = 1500;
  cfg.learning_rate = 2e-3;
  cfg.seed = 31;
  train(net, data, cfg, sched);

  std::vector<GaussianComponent> comps{{std::vector<double>(D, mean), sd * sd, 1.0}};
  AnalyticGaussianDenoiser oracle(D, 1, comps, sched);

  // Fresh evaluation draws, shared between both models.
  NoiseStream stream(5150);
  const std::size_t n = 10000;
  std::vector<double> diff;  // net loss - oracle loss per draw
  diff.reserve(n);
  ImageGrid x0(D, 1, ValueRange::Normalized), eps(D, 1, ValueRange::Normalized);
  double oracle_total = 0.0, net_total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : x0.values()) v = mean + sd * stream.normal();
    stream.fill_normal(eps);
    const int t = static_cast<int>(stream.uniform_int(1, sched.steps()));
    const double lo = loss_simple(oracle, {x0}, {t}, {eps}, sched);
    const double ln = loss_simple(net, {x0}, {t}, {eps}, sched);
    diff.push_back(ln - lo);
    oracle_total += lo;
    net_total += ln;
  }
  auto m = moments(diff);
  // Oracle optimality within three standard errors.
  CHECK(oracle_total / n <= net_total / n + 3.0 * m.mean_se());
  // And the trained net is actually in the oracle's neighborhood, not junk.
  CHECK(net_total / n < 2.0 * (oracle_total / n) + 0.5 * D);
}

TEST_CASE("trained net uses its time input") {
  auto sched = VarianceSchedule::build(ScheduleKind::Cosine, 50);
  const int D = 8;
  const double mean = 0.0, sd = 0.5;
  auto data = gaussian_dataset(D, 64, mean, sd, 22);

  SmallDenoiserNet net = SmallDenoiserNet::create(mlp_1d(D), 777);
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.steps = 1200;
  cfg.learning_rate = 2e-3;
  cfg.seed = 41;
  train(net, data, cfg, sched);

  const int T = sched.steps();
  NoiseStream stream(616);
  ImageGrid x0(D, 1, ValueRange::Normalized), eps(D, 1, ValueRange::Normalized);
  std::vector<double> low_losses, high_losses;
  for (std::size_t i = 0; i < 4000; ++i) {
    for (auto& v : x0.values()) v = mean + sd * stream.normal();
    stream.fill_normal(eps);
    const int t_low = static_cast<int>(stream.uniform_int(1, T / 10));
    const int t_high = static_cast<int>(stream.uniform_int(9 * T / 10, T));
    low_losses.push_back(loss_simple(net, {x0}, {t_low}, {eps}, sched));
    high_losses.push_back(loss_simple(net, {x0}, {t_high}, {eps}, sched));
  }
  auto ml = moments(low_losses);
  auto mh = moments(high_losses);
  const double gap_se = std::sqrt(ml.mean_se() * ml.mean_se() + mh.mean_se() * mh.mean_se());
  CHECK(std::abs(ml.mean - mh.mean) > 3.0 * gap_se);
}
