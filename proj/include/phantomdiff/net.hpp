// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "phantomdiff/denoiser.hpp"
#include "phantomdiff/image.hpp"

namespace phantomdiff {

enum class Activation : std::uint8_t {
  Silu = 0,
  Relu = 1,
  Tanh = 2,
};

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

/// Architecture description, serializable into checkpoints.
struct NetDescriptor {
  enum class Kind : std::uint8_t { Mlp = 0, Unet = 1 };

  Kind kind = Kind::Unet;
  int width = 64;
  int height = 64;
  int temb_dim = 64;
  Activation activation = Activation::Silu;
  int base_channels = 14;          // unet only
  std::vector<int> hidden_widths;  // mlp only, e.g. {128, 128}

  bool operator==(const NetDescriptor&) const = default;
};

/// Sinusoidal step embedding of dimension dim (even).
std::vector<double> time_embedding(int t, int dim);

/// Small trainable noise predictor with hand-rolled gradients.
///
/// Unet kind: three resolution levels of double 3x3 convolutions with skip
/// connections, average-pool down, nearest-neighbor up; a learned projection
/// of the sinusoidal step embedding is added per channel after the first
/// convolution of every block. Mlp kind: fully connected layers over the
/// flattened grid with the step projection added at the first hidden layer.
/// All math in double; checkpoints store parameters as f32.
class SmallDenoiserNet : public DenoiserModel {
 public:
  /// Seeded He-normal initialization; the output layer starts near zero.
  static SmallDenoiserNet create(const NetDescriptor& desc, std::uint64_t init_seed);
  static SmallDenoiserNet from_parameters(NetDescriptor desc, std::vector<double> params);

  ImageGrid predict(const ImageGrid& x_t, int t) const override;

  int input_width() const override { return desc_.width; }
  int input_height() const override { return desc_.height; }
  std::size_t parameter_count() const override { return params_.size(); }

  const NetDescriptor& descriptor() const { return desc_; }
  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }

  /// Squared-error loss for one sample plus parameter gradient.
  /// Accumulates d(||predict(x_t, t) - target||^2)/dtheta * weight into
  /// grad_accum (length parameter_count) and returns the unweighted loss.
  double loss_grad_single(const ImageGrid& x_t, int t, const ImageGrid& target,
                          double weight, std::span<double> grad_accum) const;

  static std::size_t expected_parameter_count(const NetDescriptor& desc);

 private:
  SmallDenoiserNet(NetDescriptor desc, std::vector<double> params);

  NetDescriptor desc_;
  std::vector<double> params_;
};

}  // namespace phantomdiff
