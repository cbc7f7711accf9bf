#include "sprim/image.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "sprim/error.h"

namespace sprim {

Image::Image(int width, int height, int channels, float fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 0 || height < 0 || channels <= 0) {
    throw DomainError("image: invalid dimensions");
  }
  data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

bool Image::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](float x) { return std::isfinite(x); });
}

namespace {

// Lower cell corner and fractional offset for a coordinate in [0, n-1].
inline void Cell(double x, int n, int* i0, int* i1, double* frac) {
  int i = static_cast<int>(std::floor(x));
  i = std::clamp(i, 0, std::max(n - 2, 0));
  *i0 = i;
  *i1 = std::min(i + 1, n - 1);
  *frac = x - i;
}

}  // namespace

std::optional<Eigen::VectorXd> BilinearSample(const Image& img,
                                              const Eigen::Vector2d& uv) {
  const double u = uv.x();
  const double v = uv.y();
  if (!(u >= 0.0 && v >= 0.0 && u <= img.width() - 1 &&
        v <= img.height() - 1)) {
    return std::nullopt;
  }
  int u0, u1, v0, v1;
  double fu, fv;
  Cell(u, img.width(), &u0, &u1, &fu);
  Cell(v, img.height(), &v0, &v1, &fv);
  Eigen::VectorXd out(img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    const double top = (1.0 - fu) * img.at(u0, v0, c) + fu * img.at(u1, v0, c);
    const double bottom =
        (1.0 - fu) * img.at(u0, v1, c) + fu * img.at(u1, v1, c);
    out[c] = (1.0 - fv) * top + fv * bottom;
  }
  return out;
}

bool SampleWithGradient3(const Image& img, double u, double v, double value[3],
                         double du[3], double dv[3]) {
  const int w = img.width();
  const int h = img.height();
  if (!(u >= 0.0 && v >= 0.0 && u <= w - 1 && v <= h - 1)) {
    return false;
  }
  int u0, u1, v0, v1;
  double fu, fv;
  Cell(u, w, &u0, &u1, &fu);
  Cell(v, h, &v0, &v1, &fv);
  const float* p00 = img.pixel(u0, v0);
  const float* p10 = img.pixel(u1, v0);
  const float* p01 = img.pixel(u0, v1);
  const float* p11 = img.pixel(u1, v1);
  for (int c = 0; c < 3; ++c) {
    const double a = p00[c];
    const double b = p10[c];
    const double d = p01[c];
    const double e = p11[c];
    const double top = a + fu * (b - a);
    const double bottom = d + fu * (e - d);
    value[c] = top + fv * (bottom - top);
    du[c] = (b - a) + fv * ((e - d) - (b - a));
    dv[c] = bottom - top;
  }
  return true;
}

Image Downsample2x(const Image& img) {
  const int w = img.width() / 2;
  const int h = img.height() / 2;
  Image out(w, h, img.channels());
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      for (int c = 0; c < img.channels(); ++c) {
        const double sum = static_cast<double>(img.at(2 * u, 2 * v, c)) +
                           img.at(2 * u + 1, 2 * v, c) +
                           img.at(2 * u, 2 * v + 1, c) +
                           img.at(2 * u + 1, 2 * v + 1, c);
        out.at(u, v, c) = static_cast<float>(0.25 * sum);
      }
    }
  }
  return out;
}

std::vector<Image> BuildPyramid(const Image& img, int levels) {
  if (levels < 1) {
    throw DomainError("pyramid: levels must be >= 1");
  }
  const int min_dim = 1 << (levels - 1);
  if (img.width() < min_dim || img.height() < min_dim) {
    throw DomainError("pyramid: image " + std::to_string(img.width()) + "x" +
                      std::to_string(img.height()) + " too small for " +
                      std::to_string(levels) + " levels");
  }
  std::vector<Image> pyramid;
  pyramid.reserve(levels);
  pyramid.push_back(img);
  for (int l = 1; l < levels; ++l) {
    pyramid.push_back(Downsample2x(pyramid.back()));
  }
  return pyramid;
}

Image GaussianBlur(const Image& img, double sigma) {
  if (sigma <= 0.0) {
    return img;
  }
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += kernel[i + radius];
  }
  for (double& k : kernel) k /= total;

  const int w = img.width();
  const int h = img.height();
  const int ch = img.channels();
  Image tmp(w, h, ch);
  Image out(w, h, ch);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += kernel[i + radius] * img.at(std::clamp(u + i, 0, w - 1), v, c);
        }
        tmp.at(u, v, c) = static_cast<float>(acc);
      }
    }
  }
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += kernel[i + radius] * tmp.at(u, std::clamp(v + i, 0, h - 1), c);
        }
        out.at(u, v, c) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

Image ToGray(const Image& img) {
  Image out(img.width(), img.height(), 1);
  for (int v = 0; v < img.height(); ++v) {
    for (int u = 0; u < img.width(); ++u) {
      double acc = 0.0;
      for (int c = 0; c < img.channels(); ++c) acc += img.at(u, v, c);
      out.at(u, v) = static_cast<float>(acc / img.channels());
    }
  }
  return out;
}

}  // namespace sprim
