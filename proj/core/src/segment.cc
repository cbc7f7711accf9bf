#include "sprim/segment.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <tuple>
#include <unordered_set>

#include "sprim/error.h"

namespace sprim {

bool Segment::Contains(const Pixel& p) const {
  return std::binary_search(pixels.begin(), pixels.end(), p);
}

int Segment::AnchorIndex() const {
  const auto it = std::lower_bound(pixels.begin(), pixels.end(), anchor);
  if (it == pixels.end() || *it != anchor) return -1;
  return static_cast<int>(it - pixels.begin());
}

void Canonicalize(std::vector<Pixel>* pixels) {
  std::sort(pixels->begin(), pixels->end());
  pixels->erase(std::unique(pixels->begin(), pixels->end()), pixels->end());
}

double MaskIoU(std::span<const Pixel> a, std::span<const Pixel> b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t i = 0;
  std::size_t j = 0;
  std::size_t inter = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++inter;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

struct Box {
  int u0 = std::numeric_limits<int>::max();
  int v0 = std::numeric_limits<int>::max();
  int u1 = std::numeric_limits<int>::min();
  int v1 = std::numeric_limits<int>::min();
};

Box BoundingBox(std::span<const Pixel> pixels) {
  Box box;
  for (const Pixel& p : pixels) {
    box.u0 = std::min(box.u0, p.u);
    box.v0 = std::min(box.v0, p.v);
    box.u1 = std::max(box.u1, p.u);
    box.v1 = std::max(box.v1, p.v);
  }
  return box;
}

bool BoxesOverlap(const Box& a, const Box& b) {
  return a.u0 <= b.u1 && b.u0 <= a.u1 && a.v0 <= b.v1 && b.v0 <= a.v1;
}

struct Proposal {
  int query = 0;
  int candidate = 0;
  std::vector<Pixel> pixels;
  double score = 0.0;
  Box box;
};

Pixel NearestPixelTo(std::span<const Pixel> pixels, double u, double v) {
  Pixel best = pixels.front();
  double best_d = std::numeric_limits<double>::infinity();
  for (const Pixel& p : pixels) {
    const double d = (p.u - u) * (p.u - u) + (p.v - v) * (p.v - v);
    if (d < best_d) {
      best_d = d;
      best = p;
    }
  }
  return best;
}

}  // namespace

std::vector<Segment> SelectMasks(std::span<const QueryCandidates> queries,
                                 const MaskSelectionOptions& options) {
  std::vector<Proposal> proposals;
  for (int q = 0; q < static_cast<int>(queries.size()); ++q) {
    const auto& candidates = queries[q].candidates;
    for (int c = 0; c < static_cast<int>(candidates.size()); ++c) {
      const MaskCandidate& m = candidates[c];
      if (m.pixels.empty() || m.stability < options.stability_min) continue;
      Proposal p;
      p.query = q;
      p.candidate = c;
      p.pixels = m.pixels;
      Canonicalize(&p.pixels);
      p.score = m.score;
      p.box = BoundingBox(p.pixels);
      proposals.push_back(std::move(p));
    }
  }

  // NMS visiting order depends only on mask content, so permuting the
  // candidate lists does not change which masks survive.
  std::vector<int> order(proposals.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const Proposal& pa = proposals[a];
    const Proposal& pb = proposals[b];
    if (pa.score != pb.score) return pa.score > pb.score;
    if (pa.pixels.size() != pb.pixels.size()) {
      return pa.pixels.size() < pb.pixels.size();
    }
    if (pa.pixels != pb.pixels) {
      return std::lexicographical_compare(pa.pixels.begin(), pa.pixels.end(),
                                          pb.pixels.begin(), pb.pixels.end());
    }
    return std::tie(pa.query, pa.candidate) < std::tie(pb.query, pb.candidate);
  });

  std::vector<int> kept;
  std::vector<char> survives(proposals.size(), 0);
  for (int idx : order) {
    const Proposal& p = proposals[idx];
    bool suppressed = false;
    for (int k : kept) {
      const Proposal& other = proposals[k];
      if (!BoxesOverlap(p.box, other.box)) continue;
      const double small = static_cast<double>(
          std::min(p.pixels.size(), other.pixels.size()));
      const double large = static_cast<double>(
          std::max(p.pixels.size(), other.pixels.size()));
      if (small / large <= options.nms_iou) continue;
      if (MaskIoU(p.pixels, other.pixels) > options.nms_iou) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) {
      kept.push_back(idx);
      survives[idx] = 1;
    }
  }

  std::vector<int> best(queries.size(), -1);
  for (int i = 0; i < static_cast<int>(proposals.size()); ++i) {
    if (!survives[i]) continue;
    const Proposal& p = proposals[i];
    int& b = best[p.query];
    if (b < 0 || p.pixels.size() < proposals[b].pixels.size() ||
        (p.pixels.size() == proposals[b].pixels.size() &&
         p.candidate < proposals[b].candidate)) {
      b = i;
    }
  }

  std::vector<Segment> segments;
  for (int q = 0; q < static_cast<int>(queries.size()); ++q) {
    if (best[q] < 0) continue;
    Segment s;
    s.pixels = proposals[best[q]].pixels;
    s.anchor = queries[q].query;
    if (!s.Contains(s.anchor)) {
      s.anchor = NearestPixelTo(s.pixels, s.anchor.u, s.anchor.v);
    }
    segments.push_back(std::move(s));
  }
  return segments;
}

std::vector<Pixel> SampleInitialQueries(const Intrinsics& intr,
                                        std::uint64_t seed, int count) {
  const int n = intr.width * intr.height;
  count = std::clamp(count, 0, n);
  std::mt19937_64 rng(seed);
  std::vector<Pixel> out;
  out.reserve(count);
  if (2 * count > n) {
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    for (int i = 0; i < count; ++i) {
      std::uniform_int_distribution<int> pick(i, n - 1);
      std::swap(all[i], all[pick(rng)]);
      out.push_back({all[i] % intr.width, all[i] / intr.width});
    }
    return out;
  }
  std::unordered_set<int> seen;
  std::uniform_int_distribution<int> pick(0, n - 1);
  while (static_cast<int>(out.size()) < count) {
    const int idx = pick(rng);
    if (seen.insert(idx).second) {
      out.push_back({idx % intr.width, idx / intr.width});
    }
  }
  return out;
}

std::vector<Pixel> SampleUncoveredQueries(const Intrinsics& intr,
                                          std::span<const std::uint8_t> coverage,
                                          std::uint64_t seed, int count) {
  const int n = intr.width * intr.height;
  if (static_cast<int>(coverage.size()) != n) {
    throw DomainError("coverage mask size does not match the image");
  }
  std::vector<int> uncovered;
  for (int i = 0; i < n; ++i) {
    if (coverage[i] == 0) uncovered.push_back(i);
  }
  count = std::clamp(count, 0, static_cast<int>(uncovered.size()));
  std::mt19937_64 rng(seed);
  std::vector<Pixel> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<int> pick(
        i, static_cast<int>(uncovered.size()) - 1);
    std::swap(uncovered[i], uncovered[pick(rng)]);
    out.push_back({uncovered[i] % intr.width, uncovered[i] / intr.width});
  }
  return out;
}

std::vector<Pixel> SampleQueries(const Intrinsics& intr,
                                 std::span<const std::uint8_t> coverage,
                                 std::uint64_t seed) {
  const bool any_covered = std::any_of(coverage.begin(), coverage.end(),
                                       [](std::uint8_t c) { return c != 0; });
  if (!any_covered) return SampleInitialQueries(intr, seed);
  return SampleUncoveredQueries(intr, coverage, seed);
}

std::vector<std::uint8_t> CoverageMask(std::span<const Segment> segments,
                                       int width, int height) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(width) * height, 0);
  for (const Segment& s : segments) {
    for (const Pixel& p : s.pixels) {
      if (p.u >= 0 && p.v >= 0 && p.u < width && p.v < height) {
        mask[static_cast<std::size_t>(p.v) * width + p.u] = 1;
      }
    }
  }
  return mask;
}

Pixel CentroidNearestPixel(std::span<const Pixel> pixels) {
  double su = 0.0;
  double sv = 0.0;
  for (const Pixel& p : pixels) {
    su += p.u;
    sv += p.v;
  }
  const double n = static_cast<double>(pixels.size());
  return NearestPixelTo(pixels, su / n, sv / n);
}

namespace {

// Labels 4-connected components; returns components in row-major order of
// their first pixel, each canonical.
std::vector<std::vector<Pixel>> Components(std::span<const Pixel> pixels) {
  std::vector<std::vector<Pixel>> out;
  if (pixels.empty()) return out;
  const Box box = BoundingBox(pixels);
  const int w = box.u1 - box.u0 + 1;
  const int h = box.v1 - box.v0 + 1;
  // 0 = outside, 1 = unvisited member, 2 = visited
  std::vector<std::uint8_t> grid(static_cast<std::size_t>(w) * h, 0);
  auto at = [&](int u, int v) -> std::uint8_t& {
    return grid[static_cast<std::size_t>(v - box.v0) * w + (u - box.u0)];
  };
  std::vector<Pixel> sorted(pixels.begin(), pixels.end());
  Canonicalize(&sorted);
  for (const Pixel& p : sorted) at(p.u, p.v) = 1;

  std::vector<Pixel> stack;
  for (const Pixel& seed : sorted) {
    if (at(seed.u, seed.v) != 1) continue;
    std::vector<Pixel> component;
    stack.push_back(seed);
    at(seed.u, seed.v) = 2;
    while (!stack.empty()) {
      const Pixel p = stack.back();
      stack.pop_back();
      component.push_back(p);
      const Pixel nbrs[4] = {
          {p.u + 1, p.v}, {p.u - 1, p.v}, {p.u, p.v + 1}, {p.u, p.v - 1}};
      for (const Pixel& q : nbrs) {
        if (q.u < box.u0 || q.u > box.u1 || q.v < box.v0 || q.v > box.v1) {
          continue;
        }
        if (at(q.u, q.v) == 1) {
          at(q.u, q.v) = 2;
          stack.push_back(q);
        }
      }
    }
    Canonicalize(&component);
    out.push_back(std::move(component));
  }
  return out;
}

}  // namespace

bool IsFourConnected(std::span<const Pixel> pixels) {
  return Components(pixels).size() == 1;
}

std::vector<Segment> SplitConnected(const Segment& segment, int min_area) {
  std::vector<Segment> out;
  for (auto& component : Components(segment.pixels)) {
    if (static_cast<int>(component.size()) < min_area) continue;
    Segment s;
    s.pixels = std::move(component);
    s.anchor = s.Contains(segment.anchor) ? segment.anchor
                                          : CentroidNearestPixel(s.pixels);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace sprim
