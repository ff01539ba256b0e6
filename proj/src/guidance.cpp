// SPDX-License-Identifier: Apache-2.0
#include "phantomdiff/guidance.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "phantomdiff/diffusion.hpp"
#include "phantomdiff/errors.hpp"

namespace phantomdiff {

namespace {

struct Axis {
  std::vector<int> start;      // first fine index per cell
  std::vector<int> count;      // pixels per cell
  std::vector<double> center;  // mean fine coordinate per cell
};

Axis make_axis(int extent, int factor) {
  Axis ax;
  for (int s = 0; s < extent; s += factor) {
    int c = std::min(factor, extent - s);
    ax.start.push_back(s);
    ax.count.push_back(c);
    ax.center.push_back(s + (c - 1) / 2.0);
  }
  return ax;
}

void check_factor(const ImageGrid& img, int factor, const char* where) {
  if (factor < 1) throw std::invalid_argument(std::string(where) + ": factor must be >= 1");
  if (factor > img.width() || factor > img.height()) {
    throw std::invalid_argument(std::string(where) + ": factor " + std::to_string(factor) +
                                " exceeds image dimensions");
  }
}

// Linear interpolation weights along one axis of cell centers, with constant
// extrapolation beyond the outermost centers.
void interp_weights(const Axis& ax, int fine, int& i0, int& i1, double& w1) {
  const auto& c = ax.center;
  const int n = static_cast<int>(c.size());
  if (fine <= c.front()) {
    i0 = i1 = 0;
    w1 = 0.0;
    return;
  }
  if (fine >= c.back()) {
    i0 = i1 = n - 1;
    w1 = 0.0;
    return;
  }
  int k = 0;
  while (k + 1 < n && c[k + 1] < fine) ++k;
  i0 = k;
  i1 = k + 1;
  w1 = (fine - c[k]) / (c[k + 1] - c[k]);
}

}  // namespace

ImageGrid box_downsample(const ImageGrid& img, int factor) {
  check_factor(img, factor, "box_downsample");
  if (factor == 1) return img;
  Axis xs = make_axis(img.width(), factor);
  Axis ys = make_axis(img.height(), factor);
  ImageGrid coarse(static_cast<int>(xs.start.size()), static_cast<int>(ys.start.size()),
                   img.range());
  for (int cy = 0; cy < coarse.height(); ++cy) {
    for (int cx = 0; cx < coarse.width(); ++cx) {
      double sum = 0.0;
      for (int y = ys.start[cy]; y < ys.start[cy] + ys.count[cy]; ++y) {
        for (int x = xs.start[cx]; x < xs.start[cx] + xs.count[cx]; ++x) {
          sum += img.at(y, x);
        }
      }
      coarse.at(cy, cx) = sum / (static_cast<double>(ys.count[cy]) * xs.count[cx]);
    }
  }
  return coarse;
}

ImageGrid lowpass(const ImageGrid& img, int factor) {
  check_factor(img, factor, "lowpass");
  if (factor == 1) return img;

  ImageGrid coarse = box_downsample(img, factor);
  Axis xs = make_axis(img.width(), factor);
  Axis ys = make_axis(img.height(), factor);

  ImageGrid out(img.width(), img.height(), img.range());
  for (int y = 0; y < img.height(); ++y) {
    int ry0, ry1;
    double wy;
    interp_weights(ys, y, ry0, ry1, wy);
    for (int x = 0; x < img.width(); ++x) {
      int rx0, rx1;
      double wx;
      interp_weights(xs, x, rx0, rx1, wx);
      double top = (1.0 - wx) * coarse.at(ry0, rx0) + wx * coarse.at(ry0, rx1);
      double bot = (1.0 - wx) * coarse.at(ry1, rx0) + wx * coarse.at(ry1, rx1);
      out.at(y, x) = (1.0 - wy) * top + wy * bot;
    }
  }

  // Restore exact cell means so box-downsampling the result recovers the
  // coarse image; bilinear interpolation alone leaks mass across cells.
  for (int cy = 0; cy < coarse.height(); ++cy) {
    for (int cx = 0; cx < coarse.width(); ++cx) {
      double sum = 0.0;
      for (int y = ys.start[cy]; y < ys.start[cy] + ys.count[cy]; ++y) {
        for (int x = xs.start[cx]; x < xs.start[cx] + xs.count[cx]; ++x) {
          sum += out.at(y, x);
        }
      }
      double shift = coarse.at(cy, cx) - sum / (static_cast<double>(ys.count[cy]) * xs.count[cx]);
      for (int y = ys.start[cy]; y < ys.start[cy] + ys.count[cy]; ++y) {
        for (int x = xs.start[cx]; x < xs.start[cx] + xs.count[cx]; ++x) {
          out.at(y, x) += shift;
        }
      }
    }
  }
  return out;
}

void GuidanceSet::validate(int width, int height, int T) const {
  if (specs.size() > 4 && !allow_many) {
    throw std::invalid_argument("guidance set holds " + std::to_string(specs.size()) +
                                " conditions; more than 4 requires the override flag");
  }
  for (std::size_t s = 0; s < specs.size(); ++s) {
    const auto& spec = specs[s];
    if (spec.y.width() != width || spec.y.height() != height) {
      throw std::invalid_argument("guidance condition " + std::to_string(s + 1) +
                                  " shape does not match the generation shape");
    }
    if (spec.a < 1 || spec.a > T) {
      throw std::invalid_argument("guidance condition " + std::to_string(s + 1) + " stop-time " +
                                  std::to_string(spec.a) + " outside 1..T");
    }
    if (spec.n < 1 || spec.n > width || spec.n > height) {
      throw std::invalid_argument("guidance condition " + std::to_string(s + 1) +
                                  " filter scale " + std::to_string(spec.n) + " invalid");
    }
  }
}

ImageGrid refine(const ImageGrid& x_prev, const std::vector<ImageGrid>& y_noisy,
                 const GuidanceSet& set, int t) {
  if (y_noisy.size() != set.specs.size()) {
    throw std::invalid_argument("refine: one noisy reference per condition required");
  }
  ImageGrid out = x_prev;
  std::vector<const ImageGrid*> active_y;
  std::vector<int> active_n;
  for (std::size_t s = 0; s < set.specs.size(); ++s) {
    require_same_shape(x_prev, y_noisy[s], "refine");
    if (t >= set.specs[s].a) {
      active_y.push_back(&y_noisy[s]);
      active_n.push_back(set.specs[s].n);
    }
  }
  // Subtract all filtered latents first, then add the filtered references.
  // With n = 1 and a single condition this collapses exactly to the
  // reference: (x - x) + y.
  for (int n : active_n) {
    ImageGrid phi_x = lowpass(x_prev, n);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= phi_x[i];
  }
  for (std::size_t k = 0; k < active_y.size(); ++k) {
    ImageGrid phi_y = lowpass(*active_y[k], active_n[k]);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += phi_y[i];
  }
  out.require_finite("refine output at t=" + std::to_string(t));
  return out;
}

ImageGrid q_sample_reference(const ImageGrid& y, int t_minus_1, NoiseStream& stream,
                             const VarianceSchedule& sched) {
  if (t_minus_1 < 0 || t_minus_1 > sched.steps()) {
    throw std::invalid_argument("q_sample_reference: step outside 0..T");
  }
  if (t_minus_1 == 0) return y;
  ImageGrid eps(y.width(), y.height(), ValueRange::Normalized);
  stream.fill_normal(eps);
  return q_sample(y, t_minus_1, eps, sched);
}

ImageGrid q_sample_reference(const ImageGrid& y, int t_minus_1, std::uint64_t seed,
                             const VarianceSchedule& sched) {
  NoiseStream stream(seed);
  return q_sample_reference(y, t_minus_1, stream, sched);
}

GuidedSampleResult sample_guided(const DenoiserModel& model, const VarianceSchedule& sched,
                                 const GuidanceSet& set, int width, int height,
                                 std::uint64_t seed,
                                 const std::function<void(const GuidedStepTrace&)>& observer) {
  set.validate(width, height, sched.steps());

  NoiseStream stream(seed);
  ImageGrid x(width, height, ValueRange::Normalized);
  stream.fill_normal(x);
  ImageGrid z(width, height, ValueRange::Normalized);
  std::vector<ImageGrid> y_noisy(set.specs.size());

  GuidedSampleResult result{ImageGrid(width, height, ValueRange::Normalized), 0};
  for (int t = sched.steps(); t >= 1; --t) {
    if (t > 1) {
      stream.fill_normal(z);
    } else {
      for (auto& v : z.values()) v = 0.0;
    }
    x = ddpm_step(x, t, model, z, sched);
    if (!set.empty()) {
      for (std::size_t s = 0; s < set.specs.size(); ++s) {
        y_noisy[s] = q_sample_reference(set.specs[s].y, t - 1, stream, sched);
      }
      x = refine(x, y_noisy, set, t);
      for (const auto& spec : set.specs) {
        if (t >= spec.a) ++result.refine_applications;
      }
    }
    if (observer) observer(GuidedStepTrace{t, x, y_noisy});
  }
  result.x0 = std::move(x);
  return result;
}

}  // namespace phantomdiff
