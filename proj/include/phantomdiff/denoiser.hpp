// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "phantomdiff/image.hpp"
#include "phantomdiff/schedule.hpp"

namespace phantomdiff {

/// Noise-predictor contract: given a noisy latent x_t and its step index,
/// return the predicted noise, same shape. Evaluation must be deterministic
/// given parameters and safe to call from many threads.
class DenoiserModel {
 public:
  virtual ~DenoiserModel() = default;

  virtual ImageGrid predict(const ImageGrid& x_t, int t) const = 0;

  virtual int input_width() const = 0;
  virtual int input_height() const = 0;
  virtual std::size_t parameter_count() const { return 0; }
};

/// One mixture component: a per-pixel mean image, an isotropic variance, and
/// a mixture weight.
struct GaussianComponent {
  std::vector<double> mean;
  double variance = 1.0;
  double weight = 1.0;
};

/// Exact posterior-mean noise predictor for pixelwise Gaussian-mixture data.
///
/// For a single component N(m, s^2) per pixel the prediction is
///   (x_t - sqrt(abar_t) * m) * sqrt(1 - abar_t) / (abar_t * s^2 + 1 - abar_t);
/// mixtures combine per-component terms weighted by posterior
/// responsibilities computed from the whole-grid likelihood.
class AnalyticGaussianDenoiser : public DenoiserModel {
 public:
  AnalyticGaussianDenoiser(int width, int height, std::vector<GaussianComponent> components,
                           VarianceSchedule schedule);

  ImageGrid predict(const ImageGrid& x_t, int t) const override;

  int input_width() const override { return width_; }
  int input_height() const override { return height_; }

  const std::vector<GaussianComponent>& components() const { return components_; }
  const VarianceSchedule& schedule() const { return schedule_; }

 private:
  int width_;
  int height_;
  std::vector<GaussianComponent> components_;
  VarianceSchedule schedule_;
};

/// Denoiser that always predicts zero noise. Test double.
class ZeroDenoiser : public DenoiserModel {
 public:
  ZeroDenoiser(int width, int height) : width_(width), height_(height) {}
  ImageGrid predict(const ImageGrid& x_t, int) const override {
    return ImageGrid(x_t.width(), x_t.height(), x_t.range());
  }
  int input_width() const override { return width_; }
  int input_height() const override { return height_; }

 private:
  int width_, height_;
};

}  // namespace phantomdiff
