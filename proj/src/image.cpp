// SPDX-License-Identifier: Apache-2.0
#include "phantomdiff/image.hpp"

#include <cmath>
#include <stdexcept>

#include "phantomdiff/errors.hpp"

namespace phantomdiff {

std::string to_string(ValueRange r) {
  switch (r) {
    case ValueRange::Normalized: return "normalized";
    case ValueRange::Hu: return "hu";
    case ValueRange::Binary: return "binary";
    case ValueRange::Labels: return "labels";
  }
  return "unknown";
}

ImageGrid::ImageGrid(int width, int height, ValueRange range)
    : width_(width), height_(height), range_(range) {
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("ImageGrid: dimensions must be positive");
  }
  values_.assign(static_cast<std::size_t>(width) * height, 0.0);
}

ImageGrid::ImageGrid(int width, int height, ValueRange range, std::vector<double> values)
    : width_(width), height_(height), range_(range), values_(std::move(values)) {
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("ImageGrid: dimensions must be positive");
  }
  if (values_.size() != static_cast<std::size_t>(width) * height) {
    throw std::invalid_argument("ImageGrid: value count does not match width*height");
  }
}

ImageGrid ImageGrid::constant(int width, int height, double value, ValueRange range) {
  ImageGrid g(width, height, range);
  for (auto& v : g.values_) v = value;
  return g;
}

bool ImageGrid::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void ImageGrid::require_finite(const std::string& where) const {
  if (!all_finite()) {
    throw NumericError("non-finite value in " + where);
  }
}

void require_same_shape(const ImageGrid& a, const ImageGrid& b, const std::string& where) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(where + ": shape mismatch (" + std::to_string(a.width()) + "x" +
                                std::to_string(a.height()) + " vs " + std::to_string(b.width()) +
                                "x" + std::to_string(b.height()) + ")");
  }
}

}  // namespace phantomdiff
