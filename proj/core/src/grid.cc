#include "endodepth/grid.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace endodepth {
namespace {

void CheckShape(int width, int height, int channels) {
  if (width <= 0 || height <= 0 || channels <= 0) {
    throw std::invalid_argument("grid dimensions must be positive, got " +
                                std::to_string(width) + "x" +
                                std::to_string(height) + "x" +
                                std::to_string(channels));
  }
}

}  // namespace

Grid::Grid(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
  CheckShape(width, height, channels);
  data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Grid::Grid(int width, int height, int channels, std::vector<double> data)
    : width_(width), height_(height), channels_(channels),
      data_(std::move(data)) {
  CheckShape(width, height, channels);
  if (data_.size() != static_cast<std::size_t>(width) * height * channels) {
    throw std::invalid_argument("grid data length " +
                                std::to_string(data_.size()) +
                                " does not match shape");
  }
}

ImageBuffer::ImageBuffer(int width, int height, int channels, double fill)
    : Grid(width, height, channels, fill) {
  Validate();
}

ImageBuffer::ImageBuffer(int width, int height, int channels,
                         std::vector<double> data)
    : Grid(width, height, channels, std::move(data)) {
  Validate();
}

void ImageBuffer::Validate() const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const double v = data_[i];
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw std::invalid_argument("image sample " + std::to_string(i) +
                                  " outside [0,1]: " + std::to_string(v));
    }
  }
}

ImageBuffer ImageBuffer::ToGray() const {
  if (channels_ == 1) return *this;
  std::vector<double> gray(pixel_count());
  for (std::size_t i = 0; i < gray.size(); ++i) {
    double sum = 0.0;
    for (int c = 0; c < channels_; ++c) sum += data_[i * channels_ + c];
    gray[i] = sum / channels_;
  }
  return ImageBuffer(width_, height_, 1, std::move(gray));
}

DepthMap::DepthMap(int width, int height, double fill)
    : Grid(width, height, 1, fill) {
  Validate();
}

DepthMap::DepthMap(int width, int height, std::vector<double> data)
    : Grid(width, height, 1, std::move(data)) {
  Validate();
}

void DepthMap::Validate() const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const double v = data_[i];
    if (!std::isfinite(v) || v <= 0.0) {
      throw std::invalid_argument("depth " + std::to_string(i) +
                                  " is not finite and positive: " +
                                  std::to_string(v));
    }
  }
}

double DepthMap::Min() const {
  return *std::min_element(data_.begin(), data_.end());
}

double DepthMap::Max() const {
  return *std::max_element(data_.begin(), data_.end());
}

double DepthMap::Mean() const {
  return std::accumulate(data_.begin(), data_.end(), 0.0) /
         static_cast<double>(data_.size());
}

FeatureMap::FeatureMap(int width, int height, int descriptor_length,
                       double fill)
    : Grid(width, height, descriptor_length, fill) {}

FeatureMap::FeatureMap(int width, int height, int descriptor_length,
                       std::vector<double> data)
    : Grid(width, height, descriptor_length, std::move(data)) {
  Validate();
}

void FeatureMap::Validate() const {
  for (double v : data_) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("feature map contains a non-finite value");
    }
  }
}

ValidityMask::ValidityMask(int width, int height, bool fill)
    : width_(width), height_(height) {
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("mask dimensions must be positive");
  }
  data_.assign(static_cast<std::size_t>(width) * height, fill ? 1 : 0);
}

std::size_t ValidityMask::Count() const {
  return static_cast<std::size_t>(
      std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

void GradientField::Accumulate(const GradientField& other, double scale) {
  if (other.width != width || other.height != height) {
    throw std::invalid_argument("gradient fields differ in shape");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] += scale * other.values[i];
    kinks[i] |= other.kinks[i];
  }
}

}  // namespace endodepth
