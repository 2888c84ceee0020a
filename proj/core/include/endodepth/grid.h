#ifndef ENDODEPTH_GRID_H_
#define ENDODEPTH_GRID_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace endodepth {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Dense row-major W x H x C array of doubles. Pixel (x, y) sits at the
// continuous coordinate (x, y); there is no half-pixel offset anywhere in
// the library.
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, int channels, double fill = 0.0);
  Grid(int width, int height, int channels, std::vector<double> data);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool InBounds(int x, int y) const {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }
  bool SameShape(const Grid& other) const {
    return width_ == other.width_ && height_ == other.height_ &&
           channels_ == other.channels_;
  }

  std::size_t Index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }
  double& at(int x, int y, int c = 0) { return data_[Index(x, y, c)]; }
  double at(int x, int y, int c = 0) const { return data_[Index(x, y, c)]; }

  std::span<double> pixel(int x, int y) {
    return {data_.data() + Index(x, y), static_cast<std::size_t>(channels_)};
  }
  std::span<const double> pixel(int x, int y) const {
    return {data_.data() + Index(x, y), static_cast<std::size_t>(channels_)};
  }

  std::span<const double> data() const { return data_; }
  std::span<double> mutable_data() { return data_; }
  const std::vector<double>& values() const { return data_; }

 protected:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

// Intensity image with samples in [0, 1].
class ImageBuffer : public Grid {
 public:
  ImageBuffer() = default;
  ImageBuffer(int width, int height, int channels, double fill = 0.0);
  ImageBuffer(int width, int height, int channels, std::vector<double> data);

  // Throws std::invalid_argument if any sample is non-finite or outside [0,1].
  void Validate() const;
  // Channel mean per pixel.
  ImageBuffer ToGray() const;
};

// Single-channel depth in millimetres; every value finite and > 0.
class DepthMap : public Grid {
 public:
  DepthMap() = default;
  DepthMap(int width, int height, double fill);
  DepthMap(int width, int height, std::vector<double> data);

  double operator()(int x, int y) const { return at(x, y); }
  double& operator()(int x, int y) { return at(x, y); }

  void Validate() const;
  double Min() const;
  double Max() const;
  double Mean() const;
};

// Per-pixel descriptors of length `descriptor_length` (the channel count).
class FeatureMap : public Grid {
 public:
  FeatureMap() = default;
  FeatureMap(int width, int height, int descriptor_length, double fill = 0.0);
  FeatureMap(int width, int height, int descriptor_length,
             std::vector<double> data);

  int descriptor_length() const { return channels_; }
  void Validate() const;
};

class ValidityMask {
 public:
  ValidityMask() = default;
  ValidityMask(int width, int height, bool fill);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool operator()(int x, int y) const {
    return data_[static_cast<std::size_t>(y) * width_ + x] != 0;
  }
  void Set(int x, int y, bool value) {
    data_[static_cast<std::size_t>(y) * width_ + x] = value ? 1 : 0;
  }
  bool operator[](std::size_t i) const { return data_[i] != 0; }
  void Set(std::size_t i, bool value) { data_[i] = value ? 1 : 0; }

  std::size_t Count() const;
  bool All() const { return Count() == data_.size(); }
  bool None() const { return Count() == 0; }
  bool SameShape(const Grid& grid) const {
    return width_ == grid.width() && height_ == grid.height();
  }
  bool SameShape(const ValidityMask& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

// d(loss)/d(depth) per pixel. `kinks` marks pixels whose loss is not
// differentiable within +-kink_step of the current depth (grid-line
// crossings of a bilinear sample, zero crossings of an absolute value, ties
// in a minimum), where a finite-difference check is not meaningful.
struct GradientField {
  GradientField() = default;
  GradientField(int w, int h)
      : width(w), height(h),
        values(static_cast<std::size_t>(w) * h, 0.0),
        kinks(static_cast<std::size_t>(w) * h, 0) {}

  int width = 0;
  int height = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> kinks;

  double& at(int x, int y) {
    return values[static_cast<std::size_t>(y) * width + x];
  }
  void MarkKink(std::size_t i) { kinks[i] = 1; }
  // this += scale * other; kinks are OR-ed.
  void Accumulate(const GradientField& other, double scale);
};

}  // namespace endodepth

#endif  // ENDODEPTH_GRID_H_
