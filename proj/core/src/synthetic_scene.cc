#include "sprim/synthetic_scene.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "sprim/error.h"

namespace sprim {

namespace {

constexpr double kMinHitDistance = 1e-6;

std::uint64_t SplitMix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double LatticeValue(std::int64_t i, std::int64_t j, std::int64_t k,
                    std::uint64_t seed) {
  std::uint64_t h = SplitMix(seed ^ static_cast<std::uint64_t>(i));
  h = SplitMix(h ^ static_cast<std::uint64_t>(j));
  h = SplitMix(h ^ static_cast<std::uint64_t>(k));
  return static_cast<double>(h >> 11) * (2.0 / 9007199254740992.0) - 1.0;
}

double Fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

// C2 value noise in [-1, 1] with unit lattice spacing.
double ValueNoise(const Eigen::Vector3d& p, std::uint64_t seed) {
  const double fx = std::floor(p.x());
  const double fy = std::floor(p.y());
  const double fz = std::floor(p.z());
  const auto ix = static_cast<std::int64_t>(fx);
  const auto iy = static_cast<std::int64_t>(fy);
  const auto iz = static_cast<std::int64_t>(fz);
  const double tx = Fade(p.x() - fx);
  const double ty = Fade(p.y() - fy);
  const double tz = Fade(p.z() - fz);
  double corners[2][2][2];
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c)
        corners[a][b][c] = LatticeValue(ix + a, iy + b, iz + c, seed);
  auto lerp = [](double a, double b, double t) { return a + t * (b - a); };
  const double x00 = lerp(corners[0][0][0], corners[1][0][0], tx);
  const double x10 = lerp(corners[0][1][0], corners[1][1][0], tx);
  const double x01 = lerp(corners[0][0][1], corners[1][0][1], tx);
  const double x11 = lerp(corners[0][1][1], corners[1][1][1], tx);
  return lerp(lerp(x00, x10, ty), lerp(x01, x11, ty), tz);
}

Eigen::Vector3d Albedo(const TextureSpec& tex, const Eigen::Vector3d& p,
                       std::uint64_t surface_seed) {
  Eigen::Vector3d out;
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0;
    double norm = 0.0;
    double amplitude = 1.0;
    double frequency = 1.0 / tex.wavelength;
    for (int o = 0; o < tex.octaves; ++o) {
      const std::uint64_t s = SplitMix(surface_seed ^ (0x100ull * (c + 1) + o));
      sum += amplitude * ValueNoise(p * frequency, s);
      norm += amplitude;
      amplitude *= 0.5;
      frequency *= 2.0;
    }
    out[c] = std::clamp(tex.base_albedo[c] + tex.contrast * sum / norm, 0.0, 1.0);
  }
  return out;
}

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  int id = -1;  // segment id
  const TextureSpec* texture = nullptr;
  std::uint64_t texture_seed = 0;
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();  // world, facing the ray
};

struct SurfaceIds {
  int quad_base = 0;
  int sphere_base = 0;
  int box_base = 0;
};

SurfaceIds Ids(const SceneSpec& spec) {
  SurfaceIds ids;
  ids.quad_base = 0;
  ids.sphere_base = static_cast<int>(spec.quads.size());
  ids.box_base = ids.sphere_base + static_cast<int>(spec.spheres.size());
  return ids;
}

std::uint64_t SurfaceSeed(std::uint64_t seed, int surface) {
  return SplitMix(seed * 0x2545F4914F6CDD1Dull + 0x1000ull * (surface + 1));
}

void IntersectScene(const SceneSpec& spec, const Eigen::Vector3d& origin,
                    const Eigen::Vector3d& dir, std::uint64_t seed, Hit* hit) {
  const SurfaceIds ids = Ids(spec);
  for (std::size_t i = 0; i < spec.quads.size(); ++i) {
    const QuadSurface& q = spec.quads[i];
    const Eigen::Vector3d n = q.axis_u.cross(q.axis_v).normalized();
    const double denom = n.dot(dir);
    if (std::abs(denom) < 1e-12) continue;
    const double t = n.dot(q.center - origin) / denom;
    if (!(t > kMinHitDistance) || t >= hit->t) continue;
    const Eigen::Vector3d rel = origin + t * dir - q.center;
    if (std::abs(rel.dot(q.axis_u)) > q.half_u ||
        std::abs(rel.dot(q.axis_v)) > q.half_v) {
      continue;
    }
    const int surface = ids.quad_base + static_cast<int>(i);
    hit->t = t;
    hit->id = surface;
    hit->texture = &q.texture;
    hit->texture_seed = SurfaceSeed(seed, surface);
    hit->normal = denom < 0.0 ? n : Eigen::Vector3d(-n);
  }
  for (std::size_t i = 0; i < spec.spheres.size(); ++i) {
    const SphereSurface& s = spec.spheres[i];
    const Eigen::Vector3d oc = origin - s.center;
    const double a = dir.squaredNorm();
    const double b = 2.0 * dir.dot(oc);
    const double c = oc.squaredNorm() - s.radius * s.radius;
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) continue;
    const double t = (-b - std::sqrt(disc)) / (2.0 * a);
    if (!(t > kMinHitDistance) || t >= hit->t) continue;
    const int surface = ids.sphere_base + static_cast<int>(i);
    hit->t = t;
    hit->id = surface;
    hit->texture = &s.texture;
    hit->texture_seed = SurfaceSeed(seed, surface);
    hit->normal = (origin + t * dir - s.center) / s.radius;
  }
  for (std::size_t i = 0; i < spec.boxes.size(); ++i) {
    const BoxSurface& bx = spec.boxes[i];
    const Eigen::Vector3d o = bx.rotation.transpose() * (origin - bx.center);
    const Eigen::Vector3d d = bx.rotation.transpose() * dir;
    double t_near = -std::numeric_limits<double>::infinity();
    double t_far = std::numeric_limits<double>::infinity();
    int axis = -1;
    double sign = 0.0;
    bool miss = false;
    for (int k = 0; k < 3; ++k) {
      if (std::abs(d[k]) < 1e-15) {
        if (std::abs(o[k]) > bx.half_extents[k]) miss = true;
        continue;
      }
      double t0 = (-bx.half_extents[k] - o[k]) / d[k];
      double t1 = (bx.half_extents[k] - o[k]) / d[k];
      double s = -1.0;
      if (t0 > t1) {
        std::swap(t0, t1);
        s = 1.0;
      }
      if (t0 > t_near) {
        t_near = t0;
        axis = k;
        sign = s;
      }
      t_far = std::min(t_far, t1);
    }
    if (miss || axis < 0 || t_near > t_far) continue;
    if (!(t_near > kMinHitDistance) || t_near >= hit->t) continue;
    Eigen::Vector3d local = Eigen::Vector3d::Zero();
    local[axis] = sign;
    const int surface = ids.box_base + static_cast<int>(i);
    hit->t = t_near;
    hit->id = ids.box_base + static_cast<int>(i) * 6 + axis * 2 +
              (sign > 0.0 ? 1 : 0);
    hit->texture = &bx.texture;
    hit->texture_seed = SurfaceSeed(seed, surface);
    hit->normal = bx.rotation * local;
  }
}

void CheckCameraOutsideGeometry(const SceneSpec& spec, const Pose& pose) {
  const Eigen::Vector3d c = pose.translation();
  for (const SphereSurface& s : spec.spheres) {
    if ((c - s.center).norm() <= s.radius) {
      throw DomainError("synth: camera inside a sphere");
    }
  }
  for (const BoxSurface& b : spec.boxes) {
    const Eigen::Vector3d local = b.rotation.transpose() * (c - b.center);
    if ((local.cwiseAbs() - b.half_extents).maxCoeff() <= 0.0) {
      throw DomainError("synth: camera inside a box");
    }
  }
}

}  // namespace

FrameBundle RenderFrame(const SceneSpec& spec, const Pose& camera_to_world,
                        std::uint64_t seed, double timestamp) {
  CheckCameraOutsideGeometry(spec, camera_to_world);
  const Intrinsics& intr = spec.intr;
  const int w = intr.width;
  const int h = intr.height;
  FrameBundle b;
  b.intr = intr;
  b.image = Image(w, h, 3);
  b.normals = Image(w, h, 3);
  b.gt_depth = Image(w, h, 1);
  b.gt_pose = camera_to_world;
  b.timestamp = timestamp;

  const Eigen::Matrix3d& r = camera_to_world.rotation();
  const Eigen::Vector3d origin = camera_to_world.translation();
  std::vector<int> ids(static_cast<std::size_t>(w) * h, -1);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const Eigen::Vector3d dir = r * PixelRay(u, v, intr);
      Hit hit;
      IntersectScene(spec, origin, dir, seed, &hit);
      if (hit.id < 0) {
        b.normals.at(u, v, 2) = -1.0f;
        continue;
      }
      ids[static_cast<std::size_t>(v) * w + u] = hit.id;
      const Eigen::Vector3d point = origin + hit.t * dir;
      const Eigen::Vector3d albedo =
          Albedo(*hit.texture, point, hit.texture_seed);
      const Eigen::Vector3d n_cam = r.transpose() * hit.normal;
      for (int c = 0; c < 3; ++c) {
        b.image.at(u, v, c) = QuantizeTo8Bit(static_cast<float>(albedo[c]));
        b.normals.at(u, v, c) = static_cast<float>(n_cam[c]);
      }
      b.gt_depth->at(u, v) = static_cast<float>(hit.t);
    }
  }

  // Group pixels by (surface, grid cell); std::map keeps the order stable.
  std::map<std::pair<int, int>, std::vector<Pixel>> groups;
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const int id = ids[static_cast<std::size_t>(v) * w + u];
      if (id < 0) continue;
      int cell = 0;
      if (spec.segment_cell > 0) {
        const int cols = (w + spec.segment_cell - 1) / spec.segment_cell;
        cell = (v / spec.segment_cell) * cols + u / spec.segment_cell;
      }
      groups[{id, cell}].push_back({u, v});
    }
  }
  for (auto& [key, pixels] : groups) {
    Segment s;
    s.pixels = std::move(pixels);
    Canonicalize(&s.pixels);
    s.anchor = CentroidNearestPixel(s.pixels);
    for (Segment& part : SplitConnected(s, spec.min_segment_area)) {
      b.segments.push_back(std::move(part));
    }
  }
  return b;
}

SyntheticSequence SynthesizeScene(const SceneSpec& spec, std::uint64_t seed) {
  spec.intr.Validate();
  SyntheticSequence seq;
  for (std::size_t i = 0; i < spec.trajectory.size(); ++i) {
    const double t = static_cast<double>(i) * spec.frame_interval;
    seq.frames.push_back(RenderFrame(spec, spec.trajectory[i], seed, t));
    seq.groundtruth.Add(t, spec.trajectory[i]);
  }
  return seq;
}

Pose LookAt(const Eigen::Vector3d& eye, const Eigen::Vector3d& target) {
  const Eigen::Vector3d z = (target - eye).normalized();
  Eigen::Vector3d x = Eigen::Vector3d::UnitY().cross(z);
  if (x.norm() < 1e-9) x = Eigen::Vector3d::UnitX();
  x.normalize();
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix3d r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return Pose(r, eye);
}

Intrinsics MakeIntrinsics(int width, int height, double hfov_deg) {
  Intrinsics intr;
  intr.width = width;
  intr.height = height;
  intr.fu = 0.5 * width / std::tan(0.5 * hfov_deg * M_PI / 180.0);
  intr.fv = intr.fu;
  intr.cu = 0.5 * (width - 1);
  intr.cv = 0.5 * (height - 1);
  return intr;
}

SceneSpec ScaleScene(const SceneSpec& spec, double factor) {
  SceneSpec out = spec;
  for (QuadSurface& q : out.quads) {
    q.center *= factor;
    q.half_u *= factor;
    q.half_v *= factor;
    q.texture.wavelength *= factor;
  }
  for (SphereSurface& s : out.spheres) {
    s.center *= factor;
    s.radius *= factor;
    s.texture.wavelength *= factor;
  }
  for (BoxSurface& b : out.boxes) {
    b.center *= factor;
    b.half_extents *= factor;
    b.texture.wavelength *= factor;
  }
  for (Pose& p : out.trajectory) {
    p = Pose(p.rotation(), factor * p.translation());
  }
  return out;
}

namespace {

TextureSpec RandomTexture(std::mt19937_64& rng, double wavelength) {
  std::uniform_real_distribution<double> base(0.35, 0.65);
  TextureSpec t;
  t.base_albedo = Eigen::Vector3d(base(rng), base(rng), base(rng));
  t.wavelength = wavelength;
  return t;
}

QuadSurface Quad(const Eigen::Vector3d& center, const Eigen::Vector3d& axis_u,
                 const Eigen::Vector3d& axis_v, double half_u, double half_v,
                 const TextureSpec& texture) {
  QuadSurface q;
  q.center = center;
  q.axis_u = axis_u.normalized();
  q.axis_v = axis_v.normalized();
  q.half_u = half_u;
  q.half_v = half_v;
  q.texture = texture;
  return q;
}

// Walls, floor and ceiling of a box-shaped room around the origin region.
void AddRoom(SceneSpec* spec, std::mt19937_64& rng, double wavelength) {
  const Eigen::Vector3d ex = Eigen::Vector3d::UnitX();
  const Eigen::Vector3d ey = Eigen::Vector3d::UnitY();
  const Eigen::Vector3d ez = Eigen::Vector3d::UnitZ();
  // back wall z = 6.5, floor y = 1.3, ceiling y = -2.2, sides x = +-3.5,
  // front wall z = -3.
  spec->quads.push_back(Quad({0, -0.45, 6.5}, ex, ey, 3.5, 1.75,
                             RandomTexture(rng, wavelength)));
  spec->quads.push_back(Quad({0, 1.3, 1.75}, ex, ez, 3.5, 4.75,
                             RandomTexture(rng, wavelength)));
  spec->quads.push_back(Quad({0, -2.2, 1.75}, ex, ez, 3.5, 4.75,
                             RandomTexture(rng, wavelength)));
  spec->quads.push_back(Quad({-3.5, -0.45, 1.75}, ez, ey, 4.75, 1.75,
                             RandomTexture(rng, wavelength)));
  spec->quads.push_back(Quad({3.5, -0.45, 1.75}, ez, ey, 4.75, 1.75,
                             RandomTexture(rng, wavelength)));
  spec->quads.push_back(Quad({0, -0.45, -3.0}, ex, ey, 3.5, 1.75,
                             RandomTexture(rng, wavelength)));
}

std::vector<Pose> Arc(const Eigen::Vector3d& center, double radius,
                      double sweep_deg, int frames, double bob) {
  std::vector<Pose> out;
  for (int i = 0; i < frames; ++i) {
    const double s = frames > 1 ? static_cast<double>(i) / (frames - 1) : 0.0;
    const double theta = sweep_deg * M_PI / 180.0 * s;
    const Eigen::Vector3d eye(center.x() - radius * std::sin(theta),
                              center.y() + bob * std::sin(2.0 * M_PI * s),
                              center.z() - radius * std::cos(theta));
    const Eigen::Vector3d target(center.x(), center.y() + 0.1, center.z());
    out.push_back(LookAt(eye, target));
  }
  return out;
}

}  // namespace

SceneSpec MakePlaneScene(const Intrinsics& intr, double depth) {
  SceneSpec spec;
  spec.intr = intr;
  TextureSpec tex;
  tex.wavelength = 0.1 * depth;
  spec.quads.push_back(Quad({0, 0, depth}, Eigen::Vector3d::UnitX(),
                            Eigen::Vector3d::UnitY(), 100.0 * depth,
                            100.0 * depth, tex));
  spec.trajectory.push_back(Pose::Identity());
  return spec;
}

SceneSpec MakeSphereScene(const Intrinsics& intr) {
  SceneSpec spec;
  spec.intr = intr;
  TextureSpec tex;
  spec.spheres.push_back({Eigen::Vector3d(0, 0, 3), 1.0, tex});
  spec.quads.push_back(Quad({0, 0, 6}, Eigen::Vector3d::UnitX(),
                            Eigen::Vector3d::UnitY(), 20.0, 20.0, tex));
  spec.trajectory.push_back(Pose::Identity());
  return spec;
}

SceneSpec MakeFewViewScene(std::uint64_t seed, int supporting_views,
                           const SceneOptions& options, double baseline_ratio) {
  std::mt19937_64 rng(SplitMix(seed ^ 0xF3A1ull));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  SceneSpec spec;
  spec.intr = MakeIntrinsics(options.width, options.height, options.hfov_deg);
  spec.segment_cell = options.segment_cell;
  const double wavelength = 0.6;

  // Slanted textured wall behind the objects.
  const double yaw = 0.35 * unit(rng);
  const double pitch = 0.2 * unit(rng);
  const Eigen::Matrix3d wall_rot =
      (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()) *
       Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitX()))
          .toRotationMatrix();
  spec.quads.push_back(Quad({0.0, 0.0, 4.6 + 0.4 * unit(rng)},
                            wall_rot.col(0), wall_rot.col(1), 12.0, 12.0,
                            RandomTexture(rng, wavelength)));
  // Floor.
  spec.quads.push_back(Quad({0.0, 1.1 + 0.1 * unit(rng), 3.0},
                            Eigen::Vector3d::UnitX(),
                            Eigen::Vector3d::UnitZ(), 12.0, 12.0,
                            RandomTexture(rng, wavelength)));
  spec.spheres.push_back({Eigen::Vector3d(-0.7 + 0.2 * unit(rng),
                                          0.1 * unit(rng),
                                          2.9 + 0.3 * unit(rng)),
                          0.55 + 0.1 * unit(rng),
                          RandomTexture(rng, wavelength)});
  BoxSurface box;
  box.center = Eigen::Vector3d(0.75 + 0.2 * unit(rng), 0.25 + 0.1 * unit(rng),
                               3.2 + 0.3 * unit(rng));
  box.half_extents = Eigen::Vector3d(0.35, 0.4, 0.35);
  // Upright box turned so that both visible side faces are well away from
  // grazing incidence.
  box.rotation =
      Eigen::AngleAxisd(0.65 + 0.2 * unit(rng), Eigen::Vector3d::UnitY())
          .toRotationMatrix();
  box.texture = RandomTexture(rng, wavelength);
  spec.boxes.push_back(box);

  spec.trajectory.push_back(Pose::Identity());
  // Mean reference depth from a coarse render.
  SceneSpec probe = spec;
  probe.intr = MakeIntrinsics(40, 30, options.hfov_deg);
  const double mean_depth = MeanDepth(RenderFrame(probe, Pose::Identity(), seed));
  const Eigen::Vector3d focus(0.0, 0.0, mean_depth);
  const double baseline = baseline_ratio * mean_depth;
  std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
  const double phase = angle(rng);
  for (int k = 0; k < supporting_views; ++k) {
    const double phi = phase + 2.0 * M_PI * k / std::max(supporting_views, 1) +
                       0.3 * unit(rng);
    Eigen::Vector3d offset(std::cos(phi), 0.6 * std::sin(phi), 0.3 * unit(rng));
    offset = baseline * offset.normalized();
    spec.trajectory.push_back(LookAt(offset, focus + 0.05 * mean_depth *
                                                   Eigen::Vector3d(unit(rng),
                                                                   unit(rng),
                                                                   0.0)));
  }
  return spec;
}

namespace {

void AddFurniture(SceneSpec* spec, std::mt19937_64& rng, double wavelength) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  spec->spheres.push_back({Eigen::Vector3d(-1.1 + 0.2 * unit(rng),
                                           0.5 + 0.1 * unit(rng),
                                           3.8 + 0.3 * unit(rng)),
                           0.7 + 0.1 * unit(rng),
                           RandomTexture(rng, wavelength)});
  BoxSurface box;
  box.center = Eigen::Vector3d(1.0 + 0.2 * unit(rng), 0.7, 3.3 + 0.3 * unit(rng));
  box.half_extents = Eigen::Vector3d(0.45, 0.6, 0.45);
  box.rotation =
      Eigen::AngleAxisd(0.5 + 0.3 * unit(rng), Eigen::Vector3d::UnitY())
          .toRotationMatrix();
  box.texture = RandomTexture(rng, wavelength);
  spec->boxes.push_back(box);
}

}  // namespace

SceneSpec MakeOrbitScene(std::uint64_t seed, const SceneOptions& options) {
  std::mt19937_64 rng(SplitMix(seed ^ 0x0AB1ull));
  SceneSpec spec;
  spec.intr = MakeIntrinsics(options.width, options.height, options.hfov_deg);
  spec.segment_cell = options.segment_cell > 0 ? options.segment_cell : 24;
  AddRoom(&spec, rng, 0.35);
  AddFurniture(&spec, rng, 0.3);
  spec.trajectory = Arc({0.0, 0.0, 3.5}, 3.5, 30.0, options.frames, 0.08);
  return spec;
}

SceneSpec MakeStaticScene(std::uint64_t seed, const SceneOptions& options) {
  SceneSpec spec = MakeOrbitScene(seed, options);
  spec.trajectory.assign(options.frames, spec.trajectory.front());
  return spec;
}

SceneSpec MakeCurvedScene(std::uint64_t seed, const SceneOptions& options) {
  std::mt19937_64 rng(SplitMix(seed ^ 0xC0FEull));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  SceneSpec spec;
  spec.intr = MakeIntrinsics(options.width, options.height, options.hfov_deg);
  spec.segment_cell = options.segment_cell;
  AddRoom(&spec, rng, 0.35);
  spec.spheres.push_back({Eigen::Vector3d(-0.9 + 0.15 * unit(rng),
                                          0.2 + 0.1 * unit(rng),
                                          3.6 + 0.2 * unit(rng)),
                          0.95 + 0.1 * unit(rng),
                          RandomTexture(rng, 0.3)});
  spec.spheres.push_back({Eigen::Vector3d(1.0 + 0.15 * unit(rng),
                                          0.1 * unit(rng),
                                          4.2 + 0.2 * unit(rng)),
                          1.0 + 0.1 * unit(rng),
                          RandomTexture(rng, 0.3)});
  spec.trajectory = Arc({0.0, 0.0, 3.8}, 3.8, 24.0, options.frames, 0.06);
  return spec;
}

double MeanDepth(const FrameBundle& bundle) {
  if (!bundle.gt_depth) {
    throw DomainError("mean depth: bundle has no ground-truth depth");
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (float d : bundle.gt_depth->data()) {
    if (d > 0.0f) {
      sum += d;
      ++n;
    }
  }
  if (n == 0) throw DegenerateError("mean depth: no valid depth");
  return sum / static_cast<double>(n);
}

}  // namespace sprim
