#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lfdtn/error.hpp"

namespace lfdtn {

/// Dense row-major 2-D array.
template <class T>
class Plane {
public:
  Plane() = default;
  Plane(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
    if (rows < 0 || cols < 0) throw ValidationError("Plane: negative dimensions");
  }
  Plane(int rows, int cols, std::vector<T> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != static_cast<std::size_t>(rows) * cols)
      throw ValidationError("Plane: data size does not match " + std::to_string(rows) + "x" +
                            std::to_string(cols));
  }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int r, int c) noexcept { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  const T& operator()(int r, int c) const noexcept {
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<T> span() noexcept { return data_; }
  std::span<const T> span() const noexcept { return data_; }
  std::vector<T>& vec() noexcept { return data_; }
  const std::vector<T>& vec() const noexcept { return data_; }

  bool same_shape(const Plane& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  bool operator==(const Plane&) const = default;

private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

/// Working image for the numeric pipeline.
using Image = Plane<double>;

/// Stored grayscale frame; intensities are 32-bit floats in [0,1].
class Frame {
public:
  Frame() = default;
  Frame(int height, int width, std::vector<float> pixels) : pix_(height, width, std::move(pixels)) {
    for (std::size_t i = 0; i < pix_.size(); ++i) {
      const float p = pix_[i];
      if (!(p >= 0.0f && p <= 1.0f))
        throw ValidationError("Frame: pixel " + std::to_string(i) + " outside [0,1]");
    }
  }
  Frame(int height, int width, float fill = 0.0f) : Frame(height, width, std::vector<float>(static_cast<std::size_t>(height) * width, fill)) {}

  int height() const noexcept { return pix_.rows(); }
  int width() const noexcept { return pix_.cols(); }
  float operator()(int r, int c) const noexcept { return pix_(r, c); }
  std::span<const float> pixels() const noexcept { return pix_.span(); }

  bool operator==(const Frame&) const = default;

private:
  Plane<float> pix_;
};

inline Image to_image(const Frame& f) {
  Image out(f.height(), f.width());
  auto px = f.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) out[i] = px[i];
  return out;
}

/// Clamps to [0,1] and narrows to float.
inline Frame to_frame(const Image& img) {
  std::vector<float> px(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = std::isfinite(img[i]) ? img[i] : 0.0;
    px[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return Frame(img.rows(), img.cols(), std::move(px));
}

struct FrameSequence {
  std::vector<Frame> frames;
  int seed_count = 2;

  FrameSequence() = default;
  FrameSequence(std::vector<Frame> f, int seeds) : frames(std::move(f)), seed_count(seeds) { validate(); }

  void validate() const {
    if (seed_count < 2) throw ValidationError("FrameSequence: seed_count must be >= 2");
    if (static_cast<std::size_t>(seed_count) > frames.size())
      throw ValidationError("FrameSequence: seed_count exceeds frame count");
    for (const auto& f : frames)
      if (f.height() != frames.front().height() || f.width() != frames.front().width())
        throw ValidationError("FrameSequence: frames differ in size");
  }
  std::size_t size() const noexcept { return frames.size(); }
};

}  // namespace lfdtn
