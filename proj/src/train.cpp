// SPDX-License-Identifier: Apache-2.0
#include "phantomdiff/train.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <thread>

#include "phantomdiff/diffusion.hpp"
#include "phantomdiff/errors.hpp"
#include "phantomdiff/rng.hpp"

namespace phantomdiff {

void TrainConfig::validate() const {
  std::vector<std::string> bad;
  if (batch_size < 1) bad.push_back("batch_size");
  if (steps < 1) bad.push_back("steps");
  if (!(learning_rate >= 0.0)) bad.push_back("learning_rate");
  if (!(beta1 > 0.0 && beta1 < 1.0)) bad.push_back("beta1");
  if (!(beta2 > 0.0 && beta2 < 1.0)) bad.push_back("beta2");
  if (!(epsilon > 0.0)) bad.push_back("epsilon");
  if (checkpoint_interval < 1) bad.push_back("checkpoint_interval");
  if (!bad.empty()) {
    std::string msg = "invalid train config field(s):";
    for (const auto& f : bad) msg += " " + f;
    throw std::invalid_argument(msg);
  }
}

double loss_simple(const DenoiserModel& model, const std::vector<ImageGrid>& x0_batch,
                   const std::vector<int>& t_batch, const std::vector<ImageGrid>& eps_batch,
                   const VarianceSchedule& sched) {
  if (x0_batch.empty() || x0_batch.size() != t_batch.size() ||
      x0_batch.size() != eps_batch.size()) {
    throw std::invalid_argument("loss_simple: inconsistent batch sizes");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < x0_batch.size(); ++i) {
    require_same_shape(x0_batch[i], eps_batch[i], "loss_simple");
    ImageGrid x_t = q_sample(x0_batch[i], t_batch[i], eps_batch[i], sched);
    ImageGrid pred = model.predict(x_t, t_batch[i]);
    for (std::size_t k = 0; k < pred.size(); ++k) {
      double r = pred[k] - eps_batch[i][k];
      total += r * r;
    }
  }
  return total / static_cast<double>(x0_batch.size());
}

namespace {

struct Adam {
  std::vector<double> m, v;
  long step = 0;

  explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

  void update(std::vector<double>& params, const std::vector<double>& grad,
              const TrainConfig& cfg) {
    ++step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      params[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
};

}  // namespace

TrainResult train(SmallDenoiserNet& net, const std::vector<ImageGrid>& dataset,
                  const TrainConfig& cfg, const VarianceSchedule& sched) {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  for (const auto& img : dataset) {
    if (img.width() != net.input_width() || img.height() != net.input_height()) {
      throw std::invalid_argument("train: dataset image shape does not match the net");
    }
  }

  const int B = cfg.batch_size;
  const int T = sched.steps();
  const std::size_t P = net.parameter_count();
  NoiseStream stream(cfg.seed);
  Adam adam(P);
  TrainResult result;
  result.step_losses.reserve(static_cast<std::size_t>(cfg.steps));

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned workers = std::min<unsigned>(hw, static_cast<unsigned>(B));

  std::vector<ImageGrid> x_t(B, ImageGrid(net.input_width(), net.input_height(),
                                          ValueRange::Normalized));
  std::vector<ImageGrid> eps = x_t;
  std::vector<int> ts(B, 1);
  // Per-item gradient buffers merged in index order: the reduction is
  // deterministic no matter how many workers run.
  std::vector<std::vector<double>> item_grads(B, std::vector<double>(P, 0.0));
  std::vector<double> item_losses(B, 0.0);
  std::vector<double> grad(P, 0.0);

  for (int step = 1; step <= cfg.steps; ++step) {
    std::vector<std::size_t> idx(B);
    for (int b = 0; b < B; ++b) {
      idx[b] = static_cast<std::size_t>(
          stream.uniform_int(0, static_cast<std::int64_t>(dataset.size()) - 1));
      ts[b] = static_cast<int>(stream.uniform_int(1, T));
    }
    for (int b = 0; b < B; ++b) {
      stream.fill_normal(eps[b]);
      x_t[b] = q_sample(dataset[idx[b]], ts[b], eps[b], sched);
    }

    auto run_item = [&](int b) {
      std::fill(item_grads[b].begin(), item_grads[b].end(), 0.0);
      item_losses[b] = net.loss_grad_single(x_t[b], ts[b], eps[b], 1.0 / B,
                                            std::span<double>(item_grads[b]));
    };
    if (workers <= 1) {
      for (int b = 0; b < B; ++b) run_item(b);
    } else {
      std::vector<std::thread> pool;
      for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
          for (int b = static_cast<int>(w); b < B; b += static_cast<int>(workers)) run_item(b);
        });
      }
      for (auto& th : pool) th.join();
    }

    double loss = 0.0;
    std::fill(grad.begin(), grad.end(), 0.0);
    for (int b = 0; b < B; ++b) {
      loss += item_losses[b];
      const auto& g = item_grads[b];
      for (std::size_t i = 0; i < P; ++i) grad[i] += g[i];
    }
    loss /= static_cast<double>(B);
    if (!std::isfinite(loss)) {
      throw NumericError("training diverged (non-finite loss) at step " + std::to_string(step),
                         step);
    }
    result.step_losses.push_back(loss);
    adam.update(net.parameters(), grad, cfg);

    if (step % cfg.checkpoint_interval == 0 || step == cfg.steps) {
      result.loss_trace.emplace_back(step, loss);
    }
  }
  return result;
}

}  // namespace phantomdiff
