// SPDX-License-Identifier: Apache-2.0
#include "phantomdiff/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "phantomdiff/guidance.hpp"
#include "phantomdiff/phantom.hpp"
#include "phantomdiff/rng.hpp"

namespace phantomdiff {

namespace {

constexpr double kC1 = 0.01 * 0.01;  // (0.01 * L)^2, L = 1
constexpr double kC2 = 0.03 * 0.03;

Eigen::MatrixXd to_matrix(const std::vector<double>& cov) {
  const int d = kFeatureDim;
  if (cov.size() != static_cast<std::size_t>(d) * d) {
    throw std::invalid_argument("covariance must be 64x64");
  }
  Eigen::MatrixXd m(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) m(i, j) = cov[static_cast<std::size_t>(i) * d + j];
  }
  return m;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double ssim(const ImageGrid& a, const ImageGrid& b) {
  require_same_shape(a, b, "ssim");
  const int wy = std::min(8, a.height());
  const int wx = std::min(8, a.width());
  const double n = static_cast<double>(wx) * wy;
  double total = 0.0;
  std::size_t windows = 0;
  for (int y0 = 0; y0 + wy <= a.height(); ++y0) {
    for (int x0 = 0; x0 + wx <= a.width(); ++x0) {
      double sa = 0.0, sb = 0.0;
      for (int y = y0; y < y0 + wy; ++y) {
        for (int x = x0; x < x0 + wx; ++x) {
          sa += a.at(y, x);
          sb += b.at(y, x);
        }
      }
      const double ma = sa / n, mb = sb / n;
      double va = 0.0, vb = 0.0, cov = 0.0;
      for (int y = y0; y < y0 + wy; ++y) {
        for (int x = x0; x < x0 + wx; ++x) {
          const double da = a.at(y, x) - ma;
          const double db = b.at(y, x) - mb;
          va += da * da;
          vb += db * db;
          cov += da * db;
        }
      }
      va /= n;
      vb /= n;
      cov /= n;
      // Each product is rounded once before any sum so identical inputs
      // yield a numerator that is bitwise equal to the denominator.
      const double ma2 = ma * ma;
      const double mb2 = mb * mb;
      const double mamb = ma * mb;
      const double num = (2.0 * mamb + kC1) * (2.0 * cov + kC2);
      const double den = ((ma2 + mb2) + kC1) * ((va + vb) + kC2);
      total += num / den;
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

double set_ssim(const std::vector<ImageGrid>& generated,
                const std::vector<ImageGrid>& reference) {
  if (generated.empty() || reference.empty()) {
    throw std::invalid_argument("set_ssim: both sets must be nonempty");
  }
  double total = 0.0;
  for (const auto& g : generated) {
    double best = -1.0;
    for (const auto& r : reference) best = std::max(best, ssim(g, r));
    total += best;
  }
  return total / static_cast<double>(generated.size());
}

FeatureExtractor::FeatureExtractor(std::uint64_t seed) : seed_(seed) {
  NoiseStream stream(seed);
  projection_.resize(static_cast<std::size_t>(kFeatureDim) * kStatsDim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(kStatsDim));
  for (auto& v : projection_) v = scale * stream.normal();
}

std::vector<double> FeatureExtractor::extract(const ImageGrid& img) const {
  if (img.width() < 8 || img.height() < 8) {
    throw std::invalid_argument("FeatureExtractor: image must be at least 8x8");
  }
  // Display normalization so HU and model-space images embed comparably.
  ImageGrid norm(img.width(), img.height(), ValueRange::Normalized);
  for (std::size_t i = 0; i < img.size(); ++i) {
    double v = img[i];
    switch (img.range()) {
      case ValueRange::Hu: v = (v + 1000.0) / 2000.0; break;
      case ValueRange::Normalized: v = (v + 1.0) / 2.0; break;
      case ValueRange::Binary: break;
      case ValueRange::Labels: v = v / (kLabelCount - 1); break;
    }
    norm[i] = std::clamp(v, -4.0, 4.0);
  }

  // Patch grids deliberately differ per scale (6/3/2) so the pooled means of
  // one scale are not linear combinations of another's; aligned grids would
  // collapse the covariance rank.
  std::vector<double> stats;
  stats.reserve(kStatsDim);
  const int scales[] = {1, 2, 4};
  const int grids[] = {6, 3, 2};
  for (int si = 0; si < 3; ++si) {
    ImageGrid level = scales[si] == 1 ? norm : box_downsample(norm, scales[si]);
    const int g = grids[si];
    for (int py = 0; py < g; ++py) {
      for (int px = 0; px < g; ++px) {
        const int y0 = py * level.height() / g;
        const int y1 = (py + 1) * level.height() / g;
        const int x0 = px * level.width() / g;
        const int x1 = (px + 1) * level.width() / g;
        double s = 0.0, ss = 0.0;
        int cnt = 0;
        for (int y = y0; y < std::max(y1, y0 + 1); ++y) {
          for (int x = x0; x < std::max(x1, x0 + 1); ++x) {
            const double v = level.at(std::min(y, level.height() - 1),
                                      std::min(x, level.width() - 1));
            s += v;
            ss += v * v;
            ++cnt;
          }
        }
        const double mean = s / cnt;
        const double var = std::max(0.0, ss / cnt - mean * mean);
        stats.push_back(mean);
        stats.push_back(std::sqrt(var));
      }
    }
  }

  std::vector<double> feat(kFeatureDim, 0.0);
  for (int r = 0; r < kFeatureDim; ++r) {
    const double* row = projection_.data() + static_cast<std::size_t>(r) * kStatsDim;
    double acc = 0.0;
    for (int c = 0; c < kStatsDim; ++c) acc += row[c] * stats[static_cast<std::size_t>(c)];
    feat[static_cast<std::size_t>(r)] = acc;
  }
  return feat;
}

GaussianStats extract_stats(const std::vector<ImageGrid>& images,
                            const FeatureExtractor& extractor) {
  if (images.empty()) throw std::invalid_argument("extract_stats: empty image set");
  const std::size_t n = images.size();
  std::vector<std::vector<double>> feats;
  feats.reserve(n);
  for (const auto& img : images) feats.push_back(extractor.extract(img));

  GaussianStats stats;
  stats.mean.assign(kFeatureDim, 0.0);
  for (const auto& f : feats) {
    for (int i = 0; i < kFeatureDim; ++i) stats.mean[static_cast<std::size_t>(i)] += f[i];
  }
  for (auto& m : stats.mean) m /= static_cast<double>(n);

  stats.covariance.assign(static_cast<std::size_t>(kFeatureDim) * kFeatureDim, 0.0);
  if (n > 1) {
    for (const auto& f : feats) {
      for (int i = 0; i < kFeatureDim; ++i) {
        const double di = f[i] - stats.mean[static_cast<std::size_t>(i)];
        for (int j = i; j < kFeatureDim; ++j) {
          const double dj = f[j] - stats.mean[static_cast<std::size_t>(j)];
          stats.covariance[static_cast<std::size_t>(i) * kFeatureDim + j] += di * dj;
        }
      }
    }
    for (int i = 0; i < kFeatureDim; ++i) {
      for (int j = i; j < kFeatureDim; ++j) {
        const double v = stats.covariance[static_cast<std::size_t>(i) * kFeatureDim + j] /
                         static_cast<double>(n - 1);
        stats.covariance[static_cast<std::size_t>(i) * kFeatureDim + j] = v;
        stats.covariance[static_cast<std::size_t>(j) * kFeatureDim + i] = v;
      }
    }
  }
  // Fewer than 65 images cannot span the feature space; a degenerate cloud
  // (duplicates) fails the same way at any size.
  bool deficient = n < 65;
  if (!deficient) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_matrix(stats.covariance));
    const double max_eig = es.eigenvalues().maxCoeff();
    deficient = max_eig <= 0.0 || es.eigenvalues().minCoeff() < 1e-9 * max_eig;
  }
  if (deficient) {
    for (int i = 0; i < kFeatureDim; ++i) {
      stats.covariance[static_cast<std::size_t>(i) * kFeatureDim + i] += 1e-6;
    }
    stats.regularized = true;
  }
  return stats;
}

double frechet_distance(const GaussianStats& s1, const GaussianStats& s2) {
  if (s1.mean.size() != static_cast<std::size_t>(kFeatureDim) ||
      s2.mean.size() != static_cast<std::size_t>(kFeatureDim)) {
    throw std::invalid_argument("frechet_distance: mean must have 64 entries");
  }
  Eigen::MatrixXd c1 = to_matrix(s1.covariance);
  Eigen::MatrixXd c2 = to_matrix(s2.covariance);
  if ((c1 - c1.transpose()).cwiseAbs().maxCoeff() > 1e-8 ||
      (c2 - c2.transpose()).cwiseAbs().maxCoeff() > 1e-8) {
    throw std::invalid_argument("frechet_distance: covariance not symmetric");
  }
  c1 = 0.5 * (c1 + c1.transpose());
  c2 = 0.5 * (c2 + c2.transpose());

  double mean_term = 0.0;
  for (int i = 0; i < kFeatureDim; ++i) {
    const double d = s1.mean[static_cast<std::size_t>(i)] - s2.mean[static_cast<std::size_t>(i)];
    mean_term += d * d;
  }

  Eigen::MatrixXd r1 = psd_sqrt(c1);
  Eigen::MatrixXd prod = r1 * c2 * r1;
  prod = 0.5 * (prod + prod.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(prod);
  const double trace_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  return mean_term + c1.trace() + c2.trace() - 2.0 * trace_sqrt;
}

}  // namespace phantomdiff
