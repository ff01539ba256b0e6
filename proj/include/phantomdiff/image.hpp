// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace phantomdiff {

/// Semantic tag for the intensity values a grid carries.
enum class ValueRange : std::uint8_t {
  Normalized = 0,  // model space, nominally [-1, 1] (window outputs use [0, 1])
  Hu = 1,          // Hounsfield units, [-1000, 1000]
  Binary = 2,      // {0, 1}
  Labels = 3,      // integer tissue labels {0..4}
};

std::string to_string(ValueRange r);

/// Single-channel 2-D raster, row-major doubles. The carrier for x, eps, y.
class ImageGrid {
 public:
  ImageGrid() = default;
  ImageGrid(int width, int height, ValueRange range);
  ImageGrid(int width, int height, ValueRange range, std::vector<double> values);

  static ImageGrid constant(int width, int height, double value,
                            ValueRange range = ValueRange::Normalized);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return values_.size(); }
  ValueRange range() const { return range_; }
  void set_range(ValueRange r) { range_ = r; }

  double& at(int y, int x) { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  double at(int y, int x) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool same_shape(const ImageGrid& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

  bool all_finite() const;
  /// Throws NumericError naming `where` if any value is NaN/Inf.
  void require_finite(const std::string& where) const;

 private:
  int width_ = 0;
  int height_ = 0;
  ValueRange range_ = ValueRange::Normalized;
  std::vector<double> values_;
};

/// Throws std::invalid_argument unless both grids have identical dimensions.
void require_same_shape(const ImageGrid& a, const ImageGrid& b, const std::string& where);

}  // namespace phantomdiff
