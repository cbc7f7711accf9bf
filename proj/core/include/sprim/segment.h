#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <vector>

#include "sprim/camera.h"

namespace sprim {

struct Pixel {
  int u = 0;
  int v = 0;

  friend bool operator==(const Pixel&, const Pixel&) = default;
  // Row-major order.
  friend std::strong_ordering operator<=>(const Pixel& a, const Pixel& b) {
    if (auto c = a.v <=> b.v; c != 0) return c;
    return a.u <=> b.u;
  }
};

// A connected image region with the query pixel it originated from. Pixels
// are kept sorted row-major and unique.
struct Segment {
  std::vector<Pixel> pixels;
  Pixel anchor;

  std::size_t area() const { return pixels.size(); }
  bool Contains(const Pixel& p) const;
  // Index of the anchor inside `pixels`, or -1.
  int AnchorIndex() const;

  friend bool operator==(const Segment&, const Segment&) = default;
};

// Sorts and deduplicates a pixel list in place.
void Canonicalize(std::vector<Pixel>* pixels);

// A mask proposal returned by the segmentation model for one query point.
struct MaskCandidate {
  std::vector<Pixel> pixels;
  double stability = 1.0;
  double score = 1.0;
};

struct QueryCandidates {
  Pixel query;
  std::vector<MaskCandidate> candidates;
};

struct MaskSelectionOptions {
  double stability_min = 0.9;
  double nms_iou = 0.7;
};

// Intersection over union of two canonical pixel lists.
double MaskIoU(std::span<const Pixel> a, std::span<const Pixel> b);

// Stability filter, then mask-IoU NMS over every retained candidate, then the
// smallest surviving mask per query becomes a Segment anchored at the query.
// Queries left without a candidate are dropped. Equal areas resolve to the
// lowest candidate index.
std::vector<Segment> SelectMasks(std::span<const QueryCandidates> queries,
                                 const MaskSelectionOptions& options = {});

inline constexpr int kInitialQueryCount = 300;
inline constexpr int kUncoveredQueryCount = 100;

// `count` distinct pixels drawn uniformly over the image.
std::vector<Pixel> SampleInitialQueries(const Intrinsics& intr,
                                        std::uint64_t seed,
                                        int count = kInitialQueryCount);

// Up to `count` distinct pixels drawn uniformly from pixels where
// coverage == 0. `coverage` is row-major, width * height entries.
std::vector<Pixel> SampleUncoveredQueries(const Intrinsics& intr,
                                          std::span<const std::uint8_t> coverage,
                                          std::uint64_t seed,
                                          int count = kUncoveredQueryCount);

// Two-phase policy: with nothing covered yet the initial 300 queries are
// drawn, otherwise 100 queries from the uncovered pixels.
std::vector<Pixel> SampleQueries(const Intrinsics& intr,
                                 std::span<const std::uint8_t> coverage,
                                 std::uint64_t seed);

// Row-major mask, 1 where any segment covers the pixel.
std::vector<std::uint8_t> CoverageMask(std::span<const Segment> segments,
                                       int width, int height);

inline constexpr int kDefaultMinSegmentArea = 16;

// Splits a segment into its 4-connected components, dropping those smaller
// than min_area. The anchor stays with its component; other components are
// anchored at the pixel nearest their centroid.
std::vector<Segment> SplitConnected(const Segment& segment,
                                    int min_area = kDefaultMinSegmentArea);

// True when the pixel set forms a single 4-connected component.
bool IsFourConnected(std::span<const Pixel> pixels);

// Pixel of the set closest to its centroid (ties: first in row-major order).
Pixel CentroidNearestPixel(std::span<const Pixel> pixels);

}  // namespace sprim
