// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "phantomdiff/image.hpp"

namespace phantomdiff {

// Tissue labels carried by anatomy maps.
inline constexpr int kLabelBackground = 0;
inline constexpr int kLabelSoftTissue = 1;
inline constexpr int kLabelLung = 2;
inline constexpr int kLabelBone = 3;
inline constexpr int kLabelHeart = 4;
inline constexpr int kLabelCount = 5;

struct Ellipse {
  double cx = 0.5, cy = 0.5, ax = 0.3, ay = 0.3;  // normalized [0,1] coords
};

/// Closed star-shaped contour from a smoothed random harmonic polygon:
/// radius(theta) = r0 * (1 + sum_k amp[k] * cos((k+2) * theta + phase[k])),
/// anisotropically scaled by (sx, sy) around (cx, cy).
struct LungContour {
  double cx = 0.35, cy = 0.48;
  double sx = 0.6, sy = 1.1;
  double r0 = 0.12;
  std::array<double, 4> amp{};    // harmonics 2..5
  std::array<double, 4> phase{};
};

/// Deterministic description of one phantom's geometry.
struct AnatomySpec {
  std::uint64_t seed = 0;
  Ellipse body;
  std::array<LungContour, 2> lungs;
  Ellipse heart;
  int rib_count = 8;
  double rib_thickness = 0.05;  // in normalized body-radius units
};

struct AnatomyResult {
  AnatomySpec spec;
  ImageGrid map;  // ValueRange::Labels
};

/// Procedural anatomy map: body outline, two lung blobs, heart overlapping
/// the medial lung boundary, rib arcs in the peripheral soft tissue.
/// Deterministic from seed. Requires width, height >= 32.
AnatomyResult gen_anatomy(std::uint64_t seed, int width, int height);

/// Checks the anatomy invariants; returns a list of violations (empty = ok):
/// labels in range and all present, lung/heart/bone strictly interior to the
/// body, heart adjacent to lung tissue.
std::vector<std::string> check_anatomy(const ImageGrid& map);

struct RenderOptions {
  double texture_amplitude = 1.0;  // 0 disables the band-limited noise
  double bias_amplitude = 1.0;     // 0 disables the smooth bias field
};

/// Per-label HU band (inclusive) that rendered pixels must stay within.
struct HuBand {
  double lo, hi;
};
HuBand label_band(int label);
double label_base_hu(int label);

/// Textured HU rendering of a label map: per-label base value plus
/// band-limited noise plus a smooth bias field, clamped to the label band.
/// Deterministic from texture_seed.
ImageGrid render_phantom(const ImageGrid& map, std::uint64_t texture_seed,
                         const RenderOptions& opts = {});

struct WindowPreset {
  std::string name;
  double center = 0.0;
  double width = 2000.0;
};

/// Standard presets: full (0/2000), lung (-600/1500), bone (400/1800),
/// soft-tissue (50/350).
const std::vector<WindowPreset>& standard_windows();
WindowPreset window_preset(const std::string& name);

/// Clamp to [center - width/2, center + width/2] then map affinely to [0,1].
/// Input must carry the Hu tag.
ImageGrid to_window(const ImageGrid& img, const WindowPreset& preset);

struct NormalizeResult {
  ImageGrid image;
  std::size_t clamped = 0;  // values outside [-1000, 1000] clamped, counted
};

/// Affine bijection [-1000, 1000] HU <-> [-1, 1] model space.
NormalizeResult normalize_for_model(const ImageGrid& hu);
ImageGrid denormalize_from_model(const ImageGrid& normalized);

}  // namespace phantomdiff
