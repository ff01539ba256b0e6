// SPDX-License-Identifier: Apache-2.0
#include "phantomdiff/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "phantomdiff/guidance.hpp"
#include "phantomdiff/rng.hpp"

namespace phantomdiff {

namespace {

constexpr double kPi = std::numbers::pi;

double uniform_in(NoiseStream& s, double lo, double hi) { return lo + (hi - lo) * s.uniform(); }

bool inside_ellipse(const Ellipse& e, double ux, double uy, double scale = 1.0) {
  double dx = (ux - e.cx) / (e.ax * scale);
  double dy = (uy - e.cy) / (e.ay * scale);
  return dx * dx + dy * dy <= 1.0;
}

double ellipse_rnorm(const Ellipse& e, double ux, double uy) {
  double dx = (ux - e.cx) / e.ax;
  double dy = (uy - e.cy) / e.ay;
  return std::sqrt(dx * dx + dy * dy);
}

bool inside_lung(const LungContour& l, double ux, double uy) {
  double dx = (ux - l.cx) / l.sx;
  double dy = (uy - l.cy) / l.sy;
  double r = std::sqrt(dx * dx + dy * dy);
  double theta = std::atan2(dy, dx);
  double rim = 1.0;
  for (int k = 0; k < 4; ++k) rim += l.amp[k] * std::cos((k + 2) * theta + l.phase[k]);
  return r <= l.r0 * std::max(0.2, rim);
}

}  // namespace

double label_base_hu(int label) {
  switch (label) {
    case kLabelBackground: return -1000.0;
    case kLabelSoftTissue: return 60.0;
    case kLabelLung: return -800.0;
    case kLabelBone: return 650.0;
    case kLabelHeart: return 50.0;
  }
  throw std::invalid_argument("unknown label " + std::to_string(label));
}

HuBand label_band(int label) {
  switch (label) {
    case kLabelBackground: return {-1000.0, -980.0};
    case kLabelSoftTissue: return {-100.0, 200.0};
    case kLabelLung: return {-950.0, -650.0};
    case kLabelBone: return {300.0, 1000.0};
    case kLabelHeart: return {0.0, 100.0};
  }
  throw std::invalid_argument("unknown label " + std::to_string(label));
}

AnatomyResult gen_anatomy(std::uint64_t seed, int width, int height) {
  if (width < 32 || height < 32) {
    throw std::invalid_argument("gen_anatomy: shape must be at least 32x32");
  }
  NoiseStream rng(seed);
  AnatomySpec spec;
  spec.seed = seed;

  spec.body.cx = uniform_in(rng, 0.48, 0.52);
  spec.body.cy = uniform_in(rng, 0.50, 0.54);
  spec.body.ax = uniform_in(rng, 0.34, 0.40);
  spec.body.ay = uniform_in(rng, 0.27, 0.32);

  const double lung_dx = uniform_in(rng, 0.14, 0.17);
  for (int i = 0; i < 2; ++i) {
    LungContour& l = spec.lungs[i];
    l.cx = spec.body.cx + (i == 0 ? -lung_dx : lung_dx) + uniform_in(rng, -0.01, 0.01);
    l.cy = spec.body.cy - uniform_in(rng, 0.02, 0.05);
    l.sx = uniform_in(rng, 0.55, 0.65);
    l.sy = uniform_in(rng, 1.00, 1.15);
    l.r0 = uniform_in(rng, 0.11, 0.14);
    for (int k = 0; k < 4; ++k) {
      l.amp[k] = uniform_in(rng, -0.07, 0.07);
      l.phase[k] = uniform_in(rng, 0.0, 2.0 * kPi);
    }
  }

  spec.heart.cx = 0.5 * (spec.lungs[0].cx + spec.lungs[1].cx) + uniform_in(rng, -0.01, 0.01);
  spec.heart.cy = spec.body.cy + uniform_in(rng, 0.03, 0.07);
  spec.heart.ax = uniform_in(rng, 0.10, 0.13);
  spec.heart.ay = uniform_in(rng, 0.085, 0.11);

  spec.rib_count = static_cast<int>(rng.uniform_int(7, 9));
  // Ring thick enough to survive rasterization at the smallest allowed size,
  // and far enough inside the body rim that no bone pixel can border
  // background.
  const double px_rnorm = 1.0 / (std::min(spec.body.ax * width, spec.body.ay * height));
  spec.rib_thickness = std::max(0.05, 1.4 * px_rnorm);
  const double rib_outer = 1.0 - 2.5 * px_rnorm;
  const double rib_phase = uniform_in(rng, 0.0, 2.0 * kPi);

  ImageGrid map(width, height, ValueRange::Labels);
  // Lungs and heart keep a margin from the body rim so interior containment
  // holds after rasterization.
  const double erode = 0.88;

  auto rasterize = [&](const AnatomySpec& sp) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double ux = (x + 0.5) / width;
        const double uy = (y + 0.5) / height;
        int label = kLabelBackground;
        if (inside_ellipse(sp.body, ux, uy)) {
          label = kLabelSoftTissue;
          const bool interior = inside_ellipse(sp.body, ux, uy, erode);
          if (interior &&
              (inside_lung(sp.lungs[0], ux, uy) || inside_lung(sp.lungs[1], ux, uy))) {
            label = kLabelLung;
          }
          if (interior && inside_ellipse(sp.heart, ux, uy)) {
            label = kLabelHeart;
          }
          if (label == kLabelSoftTissue) {
            const double rn = ellipse_rnorm(sp.body, ux, uy);
            if (rn <= rib_outer && rn >= rib_outer - sp.rib_thickness) {
              const double theta = std::atan2(uy - sp.body.cy, ux - sp.body.cx);
              const double seg = std::fmod((theta + rib_phase) / (2.0 * kPi) * sp.rib_count +
                                               sp.rib_count,
                                           1.0);
              if (seg < 0.62) label = kLabelBone;
            }
          }
        }
        map.at(y, x) = label;
      }
    }
  };

  auto heart_misses_lung = [&]() {
    for (const auto& v : check_anatomy(map)) {
      if (v.find("heart") != std::string::npos) return true;
    }
    return false;
  };

  rasterize(spec);
  // Grow the heart until it actually reaches lung tissue; bounded and
  // deterministic.
  for (int attempt = 0; attempt < 10 && heart_misses_lung(); ++attempt) {
    spec.heart.ax *= 1.12;
    spec.heart.ay *= 1.12;
    rasterize(spec);
  }
  return AnatomyResult{spec, std::move(map)};
}

std::vector<std::string> check_anatomy(const ImageGrid& map) {
  std::vector<std::string> bad;
  const int w = map.width(), h = map.height();
  std::array<std::size_t, kLabelCount> counts{};
  bool heart_touches_lung = false;
  bool interior_ok = true;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = map.at(y, x);
      const int label = static_cast<int>(v);
      if (v != label || label < 0 || label >= kLabelCount) {
        bad.push_back("non-label value at (" + std::to_string(x) + "," + std::to_string(y) + ")");
        return bad;
      }
      counts[static_cast<std::size_t>(label)]++;
      if (label != kLabelBackground && label != kLabelSoftTissue) {
        if (x == 0 || y == 0 || x == w - 1 || y == h - 1) {
          interior_ok = false;
        } else {
          for (auto [dx, dy] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
            const int nl = static_cast<int>(map.at(y + dy, x + dx));
            if (nl == kLabelBackground) interior_ok = false;
            if (label == kLabelHeart && nl == kLabelLung) heart_touches_lung = true;
          }
        }
      }
    }
  }
  for (int l = 0; l < kLabelCount; ++l) {
    if (counts[static_cast<std::size_t>(l)] == 0) {
      bad.push_back("label " + std::to_string(l) + " missing");
    }
  }
  if (!interior_ok) bad.push_back("organ tissue touches background or image border");
  if (!heart_touches_lung) bad.push_back("heart does not reach the medial lung boundary");
  return bad;
}

ImageGrid render_phantom(const ImageGrid& map, std::uint64_t texture_seed,
                         const RenderOptions& opts) {
  const int w = map.width(), h = map.height();
  for (double v : map.values()) {
    const int label = static_cast<int>(v);
    if (v != label || label < 0 || label >= kLabelCount) {
      throw std::invalid_argument("render_phantom: unknown label value");
    }
  }
  NoiseStream rng(texture_seed);
  ImageGrid noise(w, h, ValueRange::Normalized);
  rng.fill_normal(noise);
  ImageGrid smooth = lowpass(noise, 2);  // band-limited texture
  const double c1 = rng.normal(), c2 = rng.normal(), c3 = rng.normal();

  // Per-label texture amplitude in HU.
  auto amp = [&](int label) {
    switch (label) {
      case kLabelBackground: return 3.0;
      case kLabelSoftTissue: return 25.0;
      case kLabelLung: return 30.0;
      case kLabelBone: return 55.0;
      case kLabelHeart: return 10.0;
    }
    return 0.0;
  };

  // Texture is centered per label region so label-wise means stay pinned to
  // the base values across texture seeds.
  std::array<double, kLabelCount> region_sum{};
  std::array<std::size_t, kLabelCount> region_count{};
  for (std::size_t i = 0; i < map.size(); ++i) {
    const auto label = static_cast<std::size_t>(map[i]);
    region_sum[label] += smooth[i];
    region_count[label]++;
  }
  std::array<double, kLabelCount> region_mean{};
  for (std::size_t l = 0; l < kLabelCount; ++l) {
    region_mean[l] = region_count[l] ? region_sum[l] / region_count[l] : 0.0;
  }

  ImageGrid img(w, h, ValueRange::Hu);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int label = static_cast<int>(map.at(y, x));
      const double ux = (x + 0.5) / w - 0.5;
      const double uy = (y + 0.5) / h - 0.5;
      double v = label_base_hu(label);
      v += opts.texture_amplitude * amp(label) *
           (smooth.at(y, x) - region_mean[static_cast<std::size_t>(label)]);
      v += opts.bias_amplitude * 5.0 * (c1 * ux + c2 * uy + c3 * ux * uy * 2.0);
      const HuBand band = label_band(label);
      img.at(y, x) = std::clamp(v, band.lo, band.hi);
    }
  }
  return img;
}

const std::vector<WindowPreset>& standard_windows() {
  static const std::vector<WindowPreset> presets{
      {"full", 0.0, 2000.0},
      {"lung", -600.0, 1500.0},
      {"bone", 400.0, 1800.0},
      {"soft-tissue", 50.0, 350.0},
  };
  return presets;
}

WindowPreset window_preset(const std::string& name) {
  for (const auto& p : standard_windows()) {
    if (p.name == name) return p;
  }
  throw std::invalid_argument("unknown window preset: " + name);
}

ImageGrid to_window(const ImageGrid& img, const WindowPreset& preset) {
  if (img.range() != ValueRange::Hu) {
    throw std::invalid_argument("to_window: input must carry HU values");
  }
  if (!(preset.width > 0.0)) throw std::invalid_argument("to_window: window width must be > 0");
  const double lo = preset.center - preset.width / 2.0;
  ImageGrid out(img.width(), img.height(), ValueRange::Normalized);
  for (std::size_t i = 0; i < img.size(); ++i) {
    out[i] = std::clamp((img[i] - lo) / preset.width, 0.0, 1.0);
  }
  return out;
}

NormalizeResult normalize_for_model(const ImageGrid& hu) {
  if (hu.range() != ValueRange::Hu) {
    throw std::invalid_argument("normalize_for_model: input must carry HU values");
  }
  NormalizeResult res{ImageGrid(hu.width(), hu.height(), ValueRange::Normalized), 0};
  for (std::size_t i = 0; i < hu.size(); ++i) {
    double v = hu[i];
    if (v < -1000.0 || v > 1000.0) {
      v = std::clamp(v, -1000.0, 1000.0);
      ++res.clamped;
    }
    res.image[i] = v / 1000.0;
  }
  return res;
}

ImageGrid denormalize_from_model(const ImageGrid& normalized) {
  ImageGrid out(normalized.width(), normalized.height(), ValueRange::Hu);
  for (std::size_t i = 0; i < normalized.size(); ++i) out[i] = normalized[i] * 1000.0;
  return out;
}

}  // namespace phantomdiff
