#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sprim/camera.h"
#include "sprim/image.h"
#include "sprim/pose.h"
#include "sprim/segment.h"

namespace sprim {

// Front-end output for one frame.
//
// Normals are unit vectors in the camera frame, oriented towards the viewer:
// n . K^-1 (u, v, 1) <= 0, which reduces to n_z <= 0 on the optical axis.
struct FrameBundle {
  Image image;    // 3 channels, [0, 1]
  Image normals;  // 3 channels
  std::vector<Segment> segments;
  Intrinsics intr;
  std::optional<Image> gt_depth;  // 1 channel, meters, <= 0 invalid
  std::optional<Pose> gt_pose;    // camera-to-world
  double timestamp = 0.0;

  // Throws FormatError naming the offending field.
  void Validate() const;
};

// Directory layout:
//   intrinsics.txt  "fu fv cu cv width height"
//   image.ppm       binary P6, 8 bit
//   normals.f32     float32 h*w*3, row-major, channel-interleaved
//   segments.bin    u32 count; per segment u32 anchor_u, anchor_v, n, then n
//                   u32 row-major pixel indices
//   depth.f32       optional float32 h*w
//   pose.txt        optional TUM line "t tx ty tz qx qy qz qw"
// All binary payloads are little-endian.
FrameBundle LoadBundle(const std::string& dir);
void SaveBundle(const FrameBundle& bundle, const std::string& dir);

// 8-bit quantization used by image.ppm: round(255 x) / 255.
float QuantizeTo8Bit(float x);

Image ReadPpm(const std::string& path);
void WritePpm(const std::string& path, const Image& image);

Image ReadFloatImage(const std::string& path, int width, int height,
                     int channels);
void WriteFloatImage(const std::string& path, const Image& image);

std::vector<Segment> ReadSegments(const std::string& path, int width,
                                  int height);
void WriteSegments(const std::string& path, std::span<const Segment> segments,
                   int width);

// masks.bin: u32 mask count; per mask u32 query_u, query_v, n, n u32 pixel
// indices, then float32 stability and float32 score. Masks are grouped by
// query in order of first appearance.
std::vector<QueryCandidates> ReadMaskCandidates(const std::string& path,
                                                int width, int height);
void WriteMaskCandidates(const std::string& path,
                         std::span<const QueryCandidates> queries, int width);

// Reduces a bundle by 2^levels: box-averaged image, renormalized averaged
// normals, depth averaged over valid pixels, segments mapped to coarse pixels.
FrameBundle DownsampleBundle(const FrameBundle& bundle, int levels);

}  // namespace sprim
