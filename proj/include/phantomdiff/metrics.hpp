// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "phantomdiff/image.hpp"

namespace phantomdiff {

/// Windowed SSIM: 8x8 sliding window, stride 1, C1 = (0.01 L)^2 and
/// C2 = (0.03 L)^2 with L = 1, mean over windows. Inputs are expected on a
/// [0, 1] scale and must share a shape.
double ssim(const ImageGrid& a, const ImageGrid& b);

/// Mean over generated images of the best SSIM match in the reference set.
double set_ssim(const std::vector<ImageGrid>& generated, const std::vector<ImageGrid>& reference);

inline constexpr int kFeatureDim = 64;

/// Deterministic seeded feature embedding: multi-scale pooled patch
/// statistics (scales 1/2/4 with 6x6/3x3/2x2 patch grids, mean and spread
/// per patch) projected to 64 dimensions by a fixed Gaussian random matrix.
/// Both sides of a comparison must use the same extractor seed.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(std::uint64_t seed);

  std::vector<double> extract(const ImageGrid& img) const;
  std::uint64_t seed() const { return seed_; }

  static constexpr int kStatsDim = 98;  // 2 * (36 + 9 + 4)

 private:
  std::uint64_t seed_;
  std::vector<double> projection_;  // kFeatureDim x kStatsDim, row-major
};

/// Gaussian fit of a feature cloud. Covariance is symmetric by construction;
/// regularized covariances are flagged.
struct GaussianStats {
  std::vector<double> mean;        // kFeatureDim
  std::vector<double> covariance;  // kFeatureDim x kFeatureDim, row-major
  bool regularized = false;
};

/// Fit features of an image set. Fewer than 65 images cannot give a
/// full-rank covariance; those fits gain +1e-6 I and the regularized flag.
GaussianStats extract_stats(const std::vector<ImageGrid>& images,
                            const FeatureExtractor& extractor);

/// Frechet distance between Gaussian fits:
/// ||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1 S2)^{1/2}), square root taken by
/// eigendecomposition of the symmetrized product with negative eigenvalues
/// clamped to zero.
double frechet_distance(const GaussianStats& s1, const GaussianStats& s2);

}  // namespace phantomdiff
