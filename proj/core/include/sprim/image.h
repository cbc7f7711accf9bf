#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace sprim {

// Row-major, channel-interleaved float32 image. Color images hold values in
// [0, 1]; depth and normal images are unbounded.
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, float fill = 0.0f);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }

  float& at(int u, int v, int c = 0) {
    return data_[(static_cast<std::size_t>(v) * width_ + u) * channels_ + c];
  }
  float at(int u, int v, int c = 0) const {
    return data_[(static_cast<std::size_t>(v) * width_ + u) * channels_ + c];
  }
  const float* pixel(int u, int v) const {
    return data_.data() +
           (static_cast<std::size_t>(v) * width_ + u) * channels_;
  }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  bool SameShape(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_ &&
           channels_ == other.channels_;
  }
  bool AllFinite() const;

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

// Bilinear interpolation of all channels at continuous coordinate uv. Returns
// nullopt outside [0, w-1] x [0, h-1].
std::optional<Eigen::VectorXd> BilinearSample(const Image& img,
                                              const Eigen::Vector2d& uv);

// Hot-path variant for 3-channel images: writes interpolated values and their
// derivatives along u and v. Returns false outside the valid domain.
bool SampleWithGradient3(const Image& img, double u, double v, double value[3],
                         double du[3], double dv[3]);

// Level 0 is the input; each further level halves both dimensions (floor) by
// 2x2 box averaging. Throws DomainError when the image is too small.
std::vector<Image> BuildPyramid(const Image& img, int levels);
Image Downsample2x(const Image& img);

// Separable Gaussian blur with clamped borders.
Image GaussianBlur(const Image& img, double sigma);

// Mean over channels.
Image ToGray(const Image& img);

}  // namespace sprim
