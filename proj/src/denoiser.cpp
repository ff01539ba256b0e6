// SPDX-License-Identifier: Apache-2.0
#include "phantomdiff/denoiser.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "phantomdiff/errors.hpp"

namespace phantomdiff {

AnalyticGaussianDenoiser::AnalyticGaussianDenoiser(int width, int height,
                                                   std::vector<GaussianComponent> components,
                                                   VarianceSchedule schedule)
    : width_(width), height_(height), components_(std::move(components)),
      schedule_(std::move(schedule)) {
  if (components_.empty()) {
    throw std::invalid_argument("AnalyticGaussianDenoiser: no components");
  }
  const std::size_t dim = static_cast<std::size_t>(width_) * height_;
  double wsum = 0.0;
  for (const auto& c : components_) {
    if (c.mean.size() != dim) {
      throw std::invalid_argument("AnalyticGaussianDenoiser: component mean dimensionality "
                                  "does not match grid size");
    }
    if (!(c.variance > 0.0)) {
      throw std::invalid_argument("AnalyticGaussianDenoiser: component variance must be > 0");
    }
    wsum += c.weight;
  }
  if (std::abs(wsum - 1.0) > 1e-12) {
    throw std::invalid_argument("AnalyticGaussianDenoiser: weights must sum to 1");
  }
}

ImageGrid AnalyticGaussianDenoiser::predict(const ImageGrid& x_t, int t) const {
  const std::size_t dim = static_cast<std::size_t>(width_) * height_;
  if (x_t.size() != dim) {
    throw std::invalid_argument("AnalyticGaussianDenoiser: input shape mismatch");
  }
  const double abar = schedule_.alpha_bar(t);
  const double sqrt_abar = std::sqrt(abar);
  const double sqrt_one_minus = std::sqrt(1.0 - abar);
  const std::size_t K = components_.size();

  // Posterior responsibilities from the joint (whole grid) marginal of x_t:
  // x_t | k  ~  N(sqrt(abar) m_k, (abar s_k^2 + 1 - abar) I).
  std::vector<double> loglik(K);
  std::vector<double> marg_var(K);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& c = components_[k];
    marg_var[k] = abar * c.variance + (1.0 - abar);
    double quad = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      double d = x_t[i] - sqrt_abar * c.mean[i];
      quad += d * d;
    }
    loglik[k] = std::log(c.weight) -
                0.5 * (quad / marg_var[k] +
                       static_cast<double>(dim) * std::log(2.0 * std::numbers::pi * marg_var[k]));
  }
  double lmax = loglik[0];
  for (double v : loglik) lmax = std::max(lmax, v);
  double norm = 0.0;
  for (std::size_t k = 0; k < K; ++k) norm += std::exp(loglik[k] - lmax);

  ImageGrid out(x_t.width(), x_t.height(), x_t.range());
  for (std::size_t k = 0; k < K; ++k) {
    const auto& c = components_[k];
    double resp = std::exp(loglik[k] - lmax) / norm;
    double scale = resp * sqrt_one_minus / marg_var[k];
    for (std::size_t i = 0; i < dim; ++i) {
      out[i] += scale * (x_t[i] - sqrt_abar * c.mean[i]);
    }
  }
  if (!out.all_finite()) {
    throw NumericError("analytic denoiser produced non-finite output at t=" + std::to_string(t),
                       t);
  }
  return out;
}

}  // namespace phantomdiff
