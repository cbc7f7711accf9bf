#include "sprim/bundle.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "sprim/error.h"
#include "sprim/trajectory.h"

namespace sprim {

static_assert(std::endian::native == std::endian::little,
              "bundle payloads are read and written as host little-endian");

namespace fs = std::filesystem;

namespace {

constexpr double kUnitNormalTolerance = 1e-3;

std::string Join(const std::string& dir, const char* name) {
  return (fs::path(dir) / name).string();
}

std::vector<char> ReadAll(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("cannot open file: " + path);
  }
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

class Reader {
 public:
  Reader(std::vector<char> bytes, std::string name)
      : bytes_(std::move(bytes)), name_(std::move(name)) {}

  template <typename T>
  T Read() {
    if (pos_ + sizeof(T) > bytes_.size()) {
      throw FormatError(name_ + ": unexpected end of file");
    }
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  bool AtEnd() const { return pos_ == bytes_.size(); }

 private:
  std::vector<char> bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

template <typename T>
void Put(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

std::uint32_t PixelIndex(const Pixel& p, int width) {
  return static_cast<std::uint32_t>(p.v) * static_cast<std::uint32_t>(width) +
         static_cast<std::uint32_t>(p.u);
}

std::vector<Pixel> ReadPixelList(Reader& r, int width, int height,
                                 const std::string& name) {
  const std::uint32_t n = r.Read<std::uint32_t>();
  const std::uint64_t limit = static_cast<std::uint64_t>(width) * height;
  if (n > limit) {
    throw FormatError(name + ": pixel count exceeds image size");
  }
  std::vector<Pixel> pixels;
  pixels.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t idx = r.Read<std::uint32_t>();
    if (idx >= limit) {
      throw FormatError(name + ": pixel index " + std::to_string(idx) +
                        " out of range (w*h = " + std::to_string(limit) + ")");
    }
    pixels.push_back({static_cast<int>(idx % width),
                      static_cast<int>(idx / width)});
  }
  Canonicalize(&pixels);
  return pixels;
}

void SkipPpmSpace(std::istream& in) {
  while (true) {
    const int c = in.peek();
    if (c == '#') {
      std::string dummy;
      std::getline(in, dummy);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

}  // namespace

float QuantizeTo8Bit(float x) {
  return static_cast<float>(std::lround(std::clamp(x, 0.0f, 1.0f) * 255.0f)) /
         255.0f;
}

Image ReadPpm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("cannot open image: " + path);
  }
  std::string magic;
  in >> magic;
  if (magic != "P6") {
    throw FormatError(path + ": expected binary PPM (P6)");
  }
  int w = 0, h = 0, maxval = 0;
  SkipPpmSpace(in);
  in >> w;
  SkipPpmSpace(in);
  in >> h;
  SkipPpmSpace(in);
  in >> maxval;
  if (!in || w <= 0 || h <= 0 || maxval != 255) {
    throw FormatError(path + ": unsupported PPM header");
  }
  in.get();
  Image img(w, h, 3);
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
  if (!in.read(reinterpret_cast<char*>(raw.data()),
               static_cast<std::streamsize>(raw.size()))) {
    throw FormatError(path + ": truncated PPM payload");
  }
  auto data = img.data();
  for (std::size_t i = 0; i < raw.size(); ++i) {
    data[i] = static_cast<float>(raw[i]) / 255.0f;
  }
  return img;
}

void WritePpm(const std::string& path, const Image& image) {
  if (image.channels() != 3) {
    throw FormatError("PPM output requires a 3-channel image: " + path);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("cannot write image: " + path);
  }
  out << "P6\n" << image.width() << " " << image.height() << "\n255\n";
  std::vector<unsigned char> raw(image.size());
  const auto data = image.data();
  for (std::size_t i = 0; i < raw.size(); ++i) {
    raw[i] = static_cast<unsigned char>(
        std::lround(std::clamp(data[i], 0.0f, 1.0f) * 255.0f));
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
}

Image ReadFloatImage(const std::string& path, int width, int height,
                     int channels) {
  const std::vector<char> bytes = ReadAll(path);
  Image img(width, height, channels);
  const std::size_t expected = img.size() * sizeof(float);
  if (bytes.size() != expected) {
    throw FormatError(fs::path(path).filename().string() + ": expected " +
                      std::to_string(expected) + " bytes, found " +
                      std::to_string(bytes.size()) + " (" + path + ")");
  }
  std::memcpy(img.data().data(), bytes.data(), expected);
  return img;
}

void WriteFloatImage(const std::string& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("cannot write file: " + path);
  }
  out.write(reinterpret_cast<const char*>(image.data().data()),
            static_cast<std::streamsize>(image.size() * sizeof(float)));
}

std::vector<Segment> ReadSegments(const std::string& path, int width,
                                  int height) {
  Reader r(ReadAll(path), "segments.bin");
  const std::uint32_t count = r.Read<std::uint32_t>();
  std::vector<Segment> segments;
  segments.reserve(std::min<std::uint32_t>(count, 1u << 16));
  for (std::uint32_t s = 0; s < count; ++s) {
    Segment seg;
    const std::uint32_t au = r.Read<std::uint32_t>();
    const std::uint32_t av = r.Read<std::uint32_t>();
    if (au >= static_cast<std::uint32_t>(width) ||
        av >= static_cast<std::uint32_t>(height)) {
      throw FormatError("segments.bin: anchor out of bounds in segment " +
                        std::to_string(s));
    }
    seg.anchor = {static_cast<int>(au), static_cast<int>(av)};
    seg.pixels = ReadPixelList(r, width, height, "segments.bin");
    if (seg.pixels.empty()) {
      throw FormatError("segments.bin: empty segment " + std::to_string(s));
    }
    if (!seg.Contains(seg.anchor)) {
      throw FormatError("segments.bin: anchor outside segment " +
                        std::to_string(s));
    }
    segments.push_back(std::move(seg));
  }
  if (!r.AtEnd()) {
    throw FormatError("segments.bin: trailing bytes");
  }
  return segments;
}

void WriteSegments(const std::string& path, std::span<const Segment> segments,
                   int width) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("cannot write file: " + path);
  }
  Put<std::uint32_t>(out, static_cast<std::uint32_t>(segments.size()));
  for (const Segment& s : segments) {
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(s.anchor.u));
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(s.anchor.v));
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(s.pixels.size()));
    for (const Pixel& p : s.pixels) Put<std::uint32_t>(out, PixelIndex(p, width));
  }
}

std::vector<QueryCandidates> ReadMaskCandidates(const std::string& path,
                                                int width, int height) {
  Reader r(ReadAll(path), "masks.bin");
  const std::uint32_t count = r.Read<std::uint32_t>();
  std::vector<QueryCandidates> out;
  std::map<std::pair<int, int>, std::size_t> index;
  for (std::uint32_t m = 0; m < count; ++m) {
    const std::uint32_t qu = r.Read<std::uint32_t>();
    const std::uint32_t qv = r.Read<std::uint32_t>();
    if (qu >= static_cast<std::uint32_t>(width) ||
        qv >= static_cast<std::uint32_t>(height)) {
      throw FormatError("masks.bin: query out of bounds in mask " +
                        std::to_string(m));
    }
    MaskCandidate cand;
    cand.pixels = ReadPixelList(r, width, height, "masks.bin");
    cand.stability = r.Read<float>();
    cand.score = r.Read<float>();
    const auto key = std::make_pair(static_cast<int>(qu), static_cast<int>(qv));
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, out.size()).first;
      out.push_back({{key.first, key.second}, {}});
    }
    out[it->second].candidates.push_back(std::move(cand));
  }
  if (!r.AtEnd()) {
    throw FormatError("masks.bin: trailing bytes");
  }
  return out;
}

void WriteMaskCandidates(const std::string& path,
                         std::span<const QueryCandidates> queries, int width) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("cannot write file: " + path);
  }
  std::uint32_t count = 0;
  for (const auto& q : queries) count += q.candidates.size();
  Put<std::uint32_t>(out, count);
  for (const auto& q : queries) {
    for (const auto& c : q.candidates) {
      Put<std::uint32_t>(out, static_cast<std::uint32_t>(q.query.u));
      Put<std::uint32_t>(out, static_cast<std::uint32_t>(q.query.v));
      std::vector<Pixel> pixels = c.pixels;
      Canonicalize(&pixels);
      Put<std::uint32_t>(out, static_cast<std::uint32_t>(pixels.size()));
      for (const Pixel& p : pixels) Put<std::uint32_t>(out, PixelIndex(p, width));
      Put<float>(out, static_cast<float>(c.stability));
      Put<float>(out, static_cast<float>(c.score));
    }
  }
}

void FrameBundle::Validate() const {
  const int w = intr.width;
  const int h = intr.height;
  if (image.width() != w || image.height() != h || image.channels() != 3) {
    throw FormatError("image.ppm: dimensions do not match intrinsics.txt");
  }
  if (normals.width() != w || normals.height() != h ||
      normals.channels() != 3) {
    throw FormatError("normals.f32: dimensions do not match intrinsics.txt");
  }
  if (!image.AllFinite()) {
    throw FormatError("image.ppm: non-finite values");
  }
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const float* n = normals.pixel(u, v);
      const double len = std::sqrt(static_cast<double>(n[0]) * n[0] +
                                   static_cast<double>(n[1]) * n[1] +
                                   static_cast<double>(n[2]) * n[2]);
      if (!(std::abs(len - 1.0) <= kUnitNormalTolerance)) {
        throw FormatError("normals.f32: non-unit normal at pixel (" +
                          std::to_string(u) + ", " + std::to_string(v) + ")");
      }
    }
  }
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const Segment& seg = segments[s];
    if (seg.pixels.empty()) {
      throw FormatError("segments.bin: empty segment " + std::to_string(s));
    }
    for (const Pixel& p : seg.pixels) {
      if (p.u < 0 || p.v < 0 || p.u >= w || p.v >= h) {
        throw FormatError("segments.bin: pixel out of bounds in segment " +
                          std::to_string(s));
      }
    }
    if (!seg.Contains(seg.anchor)) {
      throw FormatError("segments.bin: anchor outside segment " +
                        std::to_string(s));
    }
  }
  if (gt_depth) {
    if (gt_depth->width() != w || gt_depth->height() != h ||
        gt_depth->channels() != 1) {
      throw FormatError("depth.f32: dimensions do not match intrinsics.txt");
    }
  }
}

FrameBundle LoadBundle(const std::string& dir) {
  if (!fs::is_directory(dir)) {
    throw FormatError("bundle directory not found: " + dir);
  }
  FrameBundle b;
  b.intr = ReadIntrinsics(Join(dir, "intrinsics.txt"));
  const int w = b.intr.width;
  const int h = b.intr.height;
  b.image = ReadPpm(Join(dir, "image.ppm"));
  if (b.image.width() != w || b.image.height() != h) {
    throw FormatError("image.ppm: dimensions do not match intrinsics.txt (" +
                      dir + ")");
  }
  b.normals = ReadFloatImage(Join(dir, "normals.f32"), w, h, 3);
  b.segments = ReadSegments(Join(dir, "segments.bin"), w, h);
  if (fs::exists(Join(dir, "depth.f32"))) {
    b.gt_depth = ReadFloatImage(Join(dir, "depth.f32"), w, h, 1);
  }
  if (fs::exists(Join(dir, "pose.txt"))) {
    std::ifstream in(Join(dir, "pose.txt"));
    std::string line;
    std::getline(in, line);
    const TimedPose tp = ParseTumLine(line);
    b.gt_pose = tp.pose;
    b.timestamp = tp.timestamp;
  }
  b.Validate();
  return b;
}

void SaveBundle(const FrameBundle& bundle, const std::string& dir) {
  fs::create_directories(dir);
  WriteIntrinsics(Join(dir, "intrinsics.txt"), bundle.intr);
  WritePpm(Join(dir, "image.ppm"), bundle.image);
  WriteFloatImage(Join(dir, "normals.f32"), bundle.normals);
  WriteSegments(Join(dir, "segments.bin"), bundle.segments, bundle.intr.width);
  if (bundle.gt_depth) {
    WriteFloatImage(Join(dir, "depth.f32"), *bundle.gt_depth);
  } else {
    fs::remove(Join(dir, "depth.f32"));
  }
  if (bundle.gt_pose) {
    std::ofstream out(Join(dir, "pose.txt"));
    out << FormatTumLine({bundle.timestamp, *bundle.gt_pose}) << "\n";
  } else {
    fs::remove(Join(dir, "pose.txt"));
  }
}

FrameBundle DownsampleBundle(const FrameBundle& bundle, int levels) {
  if (levels <= 0) return bundle;
  FrameBundle out;
  out.intr = bundle.intr.AtLevel(levels);
  out.gt_pose = bundle.gt_pose;
  out.timestamp = bundle.timestamp;
  out.image = BuildPyramid(bundle.image, levels + 1).back();
  Image normals = BuildPyramid(bundle.normals, levels + 1).back();
  for (int v = 0; v < normals.height(); ++v) {
    for (int u = 0; u < normals.width(); ++u) {
      Eigen::Vector3d n(normals.at(u, v, 0), normals.at(u, v, 1),
                        normals.at(u, v, 2));
      n = n.norm() > 1e-9 ? n.normalized() : Eigen::Vector3d(0, 0, -1);
      for (int c = 0; c < 3; ++c) normals.at(u, v, c) = static_cast<float>(n[c]);
    }
  }
  out.normals = std::move(normals);

  const int factor = 1 << levels;
  const int w = out.intr.width;
  const int h = out.intr.height;
  if (bundle.gt_depth) {
    Image depth(w, h, 1);
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        double sum = 0.0;
        int n = 0;
        for (int dv = 0; dv < factor; ++dv) {
          for (int du = 0; du < factor; ++du) {
            const float d = bundle.gt_depth->at(u * factor + du, v * factor + dv);
            if (d > 0.0f) {
              sum += d;
              ++n;
            }
          }
        }
        depth.at(u, v) = n > 0 ? static_cast<float>(sum / n) : 0.0f;
      }
    }
    out.gt_depth = std::move(depth);
  }

  const int majority = factor * factor / 2;
  for (const Segment& seg : bundle.segments) {
    std::map<std::pair<int, int>, int> votes;
    for (const Pixel& p : seg.pixels) {
      const int cu = p.u / factor;
      const int cv = p.v / factor;
      if (cu < w && cv < h) ++votes[{cv, cu}];
    }
    Segment coarse;
    for (const auto& [key, count] : votes) {
      if (count >= majority) coarse.pixels.push_back({key.second, key.first});
    }
    if (coarse.pixels.empty()) continue;
    Canonicalize(&coarse.pixels);
    coarse.anchor = {seg.anchor.u / factor, seg.anchor.v / factor};
    for (Segment& part : SplitConnected(coarse, 4)) {
      out.segments.push_back(std::move(part));
    }
  }
  return out;
}

}  // namespace sprim
