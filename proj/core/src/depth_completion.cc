#include "sprim/depth_completion.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "sprim/error.h"

namespace sprim {

namespace {

int FindPixel(std::span<const Pixel> pixels, Pixel p) {
  const auto it = std::lower_bound(pixels.begin(), pixels.end(), p);
  if (it == pixels.end() || *it != p) return -1;
  return static_cast<int>(it - pixels.begin());
}

// Linear interpolation along one line of `n` values spaced by `stride`.
// Writes estimates for undefined entries into `estimate` (summed) and bumps
// `count`.
void FillLine(const float* depth, int n, int stride, double* estimate,
              int* count) {
  int prev = -1;
  for (int k = 0; k <= n; ++k) {
    if (k < n && !(depth[k * stride] > 0.0f)) continue;
    if (prev < 0 && k == n) return;  // nothing defined on this line
    for (int j = prev + 1; j < k; ++j) {
      double value;
      if (prev < 0) {
        value = depth[k * stride];
      } else if (k == n) {
        value = depth[prev * stride];
      } else {
        const double a = static_cast<double>(j - prev) / (k - prev);
        value = (1.0 - a) * depth[prev * stride] + a * depth[k * stride];
      }
      estimate[j * stride] += value;
      ++count[j * stride];
    }
    prev = k;
  }
}

}  // namespace

void ValidateSparseDepth(std::span<const DepthSample> samples,
                         const Intrinsics& intr, double d_min, double d_max) {
  for (const DepthSample& s : samples) {
    if (s.u < 0 || s.v < 0 || s.u >= intr.width || s.v >= intr.height) {
      throw DomainError("sparse depth: sample (" + std::to_string(s.u) + ", " +
                        std::to_string(s.v) + ") outside the image");
    }
    if (!(s.depth >= d_min && s.depth <= d_max)) {
      throw DomainError("sparse depth: depth " + std::to_string(s.depth) +
                        " outside the valid range");
    }
  }
}

std::vector<DepthSample> ReadSparseDepth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::vector<DepthSample> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    DepthSample s;
    if (!(ss >> s.u)) continue;
    std::string rest;
    if (!(ss >> s.v >> s.depth) || (ss >> rest)) {
      throw FormatError(path + ":" + std::to_string(line_no) +
                        ": expected \"u v depth\"");
    }
    out.push_back(s);
  }
  return out;
}

void WriteSparseDepth(const std::string& path,
                      std::span<const DepthSample> samples) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  char buf[96];
  for (const DepthSample& s : samples) {
    std::snprintf(buf, sizeof(buf), "%d %d %.9g\n", s.u, s.v, s.depth);
    out << buf;
  }
}

std::vector<DepthSample> SampleSparseDepth(const Image& depth, int count,
                                           std::uint64_t seed, double d_min,
                                           double d_max) {
  std::vector<DepthSample> pool;
  for (int v = 0; v < depth.height(); ++v) {
    for (int u = 0; u < depth.width(); ++u) {
      const double d = depth.at(u, v);
      if (d >= d_min && d <= d_max) pool.push_back({u, v, d});
    }
  }
  std::mt19937_64 rng(seed);
  const std::size_t n = std::min<std::size_t>(pool.size(),
                                              static_cast<std::size_t>(std::max(count, 0)));
  for (std::size_t k = 0; k < n; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
    std::swap(pool[k], pool[pick(rng)]);
  }
  pool.resize(n);
  return pool;
}

std::optional<double> FitScale(const SuperPrimitive& primitive,
                               std::span<const DepthSample> samples,
                               ScaleFit fit) {
  double num = 0.0;
  double den = 0.0;
  std::vector<double> log_ratios;
  for (const DepthSample& s : samples) {
    if (!(s.depth > 0.0) || !std::isfinite(s.depth)) continue;
    const int k = FindPixel(primitive.segment.pixels, Pixel{s.u, s.v});
    if (k < 0) continue;
    const double lud = primitive.log_udepth[static_cast<std::size_t>(k)];
    const double ud = std::exp(lud);
    num += ud * s.depth;
    den += ud * ud;
    log_ratios.push_back(std::log(s.depth) - lud);
  }
  if (log_ratios.empty()) return std::nullopt;
  if (fit == ScaleFit::kMedianRatio) {
    const auto mid = log_ratios.begin() + (log_ratios.size() - 1) / 2;
    std::nth_element(log_ratios.begin(), mid, log_ratios.end());
    return *mid;
  }
  return std::log(num / den);
}

PointCloud Fuse(std::span<const ScaledPrimitive> primitives,
                const Intrinsics& intr, const Pose& camera_to_world,
                const Image* image) {
  PointCloud cloud;
  for (const ScaledPrimitive& sp : primitives) {
    const std::vector<Pixel>& pixels = sp.prim.segment.pixels;
    for (std::size_t k = 0; k < pixels.size(); ++k) {
      const Eigen::Vector3d x =
          sp.DepthAt(k) * PixelRay(pixels[k].u, pixels[k].v, intr);
      cloud.points.push_back(camera_to_world * x);
      if (image != nullptr) {
        const float* c = image->pixel(pixels[k].u, pixels[k].v);
        cloud.colors.emplace_back(c[0], c[1], c[2]);
      }
    }
  }
  return cloud;
}

std::size_t DepthMap::CountDefined() const {
  std::size_t n = 0;
  for (float d : depth.data()) n += d > 0.0f ? 1 : 0;
  return n;
}

DepthMap RenderDepth(const PointCloud& cloud, const Intrinsics& intr,
                     const Pose& camera_to_world) {
  const Pose world_to_camera = camera_to_world.Inverse();
  const std::size_t n = static_cast<std::size_t>(intr.width) * intr.height;
  std::vector<double> sum(n, 0.0);
  std::vector<int> count(n, 0);
  for (const Eigen::Vector3d& p : cloud.points) {
    const Eigen::Vector3d x = world_to_camera * p;
    if (!(x.z() > 0.0)) continue;
    const double u = intr.fu * x.x() / x.z() + intr.cu;
    const double v = intr.fv * x.y() / x.z() + intr.cv;
    const double ur = std::round(u);
    const double vr = std::round(v);
    if (!(ur >= 0.0 && vr >= 0.0 && ur < intr.width && vr < intr.height)) {
      continue;
    }
    const std::size_t idx =
        static_cast<std::size_t>(vr) * intr.width + static_cast<std::size_t>(ur);
    sum[idx] += x.z();
    ++count[idx];
  }
  DepthMap map;
  map.depth = Image(intr.width, intr.height, 1);
  map.provenance.assign(n, Provenance::kUndefined);
  std::span<float> d = map.depth.data();
  for (std::size_t k = 0; k < n; ++k) {
    if (count[k] == 0) continue;
    d[k] = static_cast<float>(sum[k] / count[k]);
    if (d[k] > 0.0f) map.provenance[k] = Provenance::kPrimitive;
  }
  return map;
}

void FillGaps(DepthMap* map) {
  const int w = map->depth.width();
  const int h = map->depth.height();
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (map->provenance.size() != n) {
    map->provenance.assign(n, Provenance::kUndefined);
    for (std::size_t k = 0; k < n; ++k) {
      if (map->depth.data()[k] > 0.0f) map->provenance[k] = Provenance::kPrimitive;
    }
  }
  if (map->CountDefined() == 0) {
    throw DegenerateError("gap fill: no defined depth");
  }
  std::span<float> d = map->depth.data();
  while (map->CountDefined() < n) {
    std::vector<double> estimate(n, 0.0);
    std::vector<int> count(n, 0);
    for (int v = 0; v < h; ++v) {
      const std::size_t row = static_cast<std::size_t>(v) * w;
      FillLine(d.data() + row, w, 1, estimate.data() + row, count.data() + row);
    }
    for (int u = 0; u < w; ++u) {
      FillLine(d.data() + u, h, w, estimate.data() + u, count.data() + u);
    }
    for (std::size_t k = 0; k < n; ++k) {
      if (count[k] == 0 || d[k] > 0.0f) continue;
      d[k] = static_cast<float>(estimate[k] / count[k]);
      map->provenance[k] = Provenance::kInterpolated;
    }
  }
}

CompletionResult Complete(const FrameBundle& bundle,
                          std::span<const SuperPrimitive> primitives,
                          std::span<const DepthSample> samples,
                          const CompletionOptions& options) {
  CompletionResult result;
  for (const SuperPrimitive& p : primitives) {
    std::optional<double> ls;
    if (p.usable()) ls = FitScale(p, samples, options.fit);
    result.log_scales.push_back(ls);
    if (ls) result.retained.push_back({p, *ls});
  }
  if (result.retained.empty()) {
    throw DegenerateError("depth completion: every primitive was discarded");
  }
  result.cloud = Fuse(result.retained, bundle.intr, Pose(), &bundle.image);
  result.map = RenderDepth(result.cloud, bundle.intr);
  for (const DepthSample& s : samples) {
    if (s.u < 0 || s.v < 0 || s.u >= bundle.intr.width ||
        s.v >= bundle.intr.height || !(s.depth > 0.0)) {
      continue;
    }
    const std::size_t k = static_cast<std::size_t>(s.v) * bundle.intr.width + s.u;
    if (result.map.provenance[k] == Provenance::kPrimitive) continue;
    result.map.depth.at(s.u, s.v) = static_cast<float>(s.depth);
    result.map.provenance[k] = Provenance::kMeasured;
  }
  FillGaps(&result.map);
  return result;
}

}  // namespace sprim
