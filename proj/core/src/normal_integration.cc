#include "sprim/normal_integration.h"

#include <algorithm>
#include <cmath>

#include <Eigen/SparseCore>

#include "sprim/error.h"

namespace sprim {

namespace {

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

double Dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

// Index of the pixel (u, v) in a row-major sorted pixel list, or -1.
int FindPixel(std::span<const Pixel> pixels, Pixel p) {
  const auto it = std::lower_bound(pixels.begin(), pixels.end(), p);
  if (it == pixels.end() || *it != p) return -1;
  return static_cast<int>(it - pixels.begin());
}

EdgeEquation MakeEquation(int i, int j, const Eigen::Vector3d& ni,
                          const Eigen::Vector3d& nj, const Eigen::Vector3d& ray_i,
                          const Eigen::Vector3d& ray_j, double focal, int axis,
                          double eps) {
  Eigen::Vector3d n = ni + nj;
  const double norm = n.norm();
  n = norm > 1e-12 ? Eigen::Vector3d(n / norm) : ni;
  const double gi = n.dot(ray_i);
  const double gj = n.dot(ray_j);
  const double coeff = 0.5 * focal * (gi + gj);
  EdgeEquation eq;
  eq.i = i;
  eq.j = j;
  if (std::abs(coeff) >= eps && gi * gj > 0.0) {
    eq.coeff = coeff;
    eq.rhs = -coeff * std::log(gi / gj);
  } else {
    eq.coeff = coeff < 0.0 || coeff == 0.0 ? -eps : eps;
    eq.rhs = n[axis];
  }
  return eq;
}

std::vector<Eigen::Vector3d> GatherNormals(const Segment& segment,
                                           const Image& normals) {
  if (normals.channels() != 3) {
    throw DomainError("normal integration: normal image needs 3 channels");
  }
  std::vector<Eigen::Vector3d> out;
  out.reserve(segment.area());
  for (const Pixel& p : segment.pixels) {
    if (p.u < 0 || p.v < 0 || p.u >= normals.width() ||
        p.v >= normals.height()) {
      throw DomainError("normal integration: segment pixel outside image");
    }
    const float* n = normals.pixel(p.u, p.v);
    out.emplace_back(n[0], n[1], n[2]);
  }
  return out;
}

int MaxIterations(const IntegrationOptions& options, std::size_t unknowns) {
  if (options.cg_maxiter > 0) return options.cg_maxiter;
  return static_cast<int>(10.0 * std::sqrt(static_cast<double>(unknowns))) +
         200;
}

SuperPrimitive ConstantDepth(const Segment& segment, IntegrationStatus status) {
  SuperPrimitive p;
  p.segment = segment;
  p.log_udepth.assign(segment.area(), 0.0);
  p.status = status;
  return p;
}

int AnchorOrFirst(const Segment& segment) {
  return std::max(segment.AnchorIndex(), 0);
}

}  // namespace

double SuperPrimitive::AtAnchor() const {
  const int k = segment.AnchorIndex();
  if (k < 0) throw DomainError("primitive anchor is not a segment pixel");
  return log_udepth[static_cast<std::size_t>(k)];
}

double NormalSystem::Functional(std::span<const double> z) const {
  double f = 0.0;
  for (const EdgeEquation& e : equations) {
    const double r = e.coeff * (z[e.j] - z[e.i]) + e.rhs;
    f += r * r;
  }
  return f;
}

Eigen::VectorXd NormalSystem::Residuals(std::span<const double> z) const {
  Eigen::VectorXd r(static_cast<Eigen::Index>(equations.size()));
  for (std::size_t k = 0; k < equations.size(); ++k) {
    const EdgeEquation& e = equations[k];
    r[static_cast<Eigen::Index>(k)] = e.coeff * (z[e.j] - z[e.i]) + e.rhs;
  }
  return r;
}

NormalSystem Assemble(const Segment& segment, const Image& normals,
                      const Intrinsics& intr,
                      const IntegrationOptions& options) {
  const std::vector<Eigen::Vector3d> n = GatherNormals(segment, normals);
  return Assemble(segment, n, intr, options);
}

NormalSystem Assemble(const Segment& segment,
                      std::span<const Eigen::Vector3d> pixel_normals,
                      const Intrinsics& intr,
                      const IntegrationOptions& options) {
  if (pixel_normals.size() != segment.area()) {
    throw DomainError("normal integration: one normal per pixel required");
  }
  for (const Eigen::Vector3d& n : pixel_normals) {
    if (!n.allFinite()) {
      throw DomainError("normal integration: non-finite normal");
    }
  }
  NormalSystem sys;
  sys.num_unknowns = segment.area();
  const std::span<const Pixel> pixels = segment.pixels;
  const double eps_u = options.clamp_ratio * intr.fu;
  const double eps_v = options.clamp_ratio * intr.fv;
  for (std::size_t k = 0; k < pixels.size(); ++k) {
    const Pixel p = pixels[k];
    const int i = static_cast<int>(k);
    const Eigen::Vector3d ray_i = PixelRay(p.u, p.v, intr);
    // The +u neighbor, if present, directly follows in row-major order.
    if (k + 1 < pixels.size() && pixels[k + 1] == Pixel{p.u + 1, p.v}) {
      sys.equations.push_back(MakeEquation(
          i, i + 1, pixel_normals[k], pixel_normals[k + 1], ray_i,
          PixelRay(p.u + 1, p.v, intr), intr.fu, 0, eps_u));
    }
    const int j = FindPixel(pixels.subspan(k), Pixel{p.u, p.v + 1});
    if (j >= 0) {
      sys.equations.push_back(MakeEquation(
          i, i + j, pixel_normals[k], pixel_normals[k + j], ray_i,
          PixelRay(p.u, p.v + 1, intr), intr.fv, 1, eps_v));
    }
  }
  return sys;
}

std::vector<SolveReport> SolveBatch(std::span<const NormalSystem> systems,
                                    const IntegrationOptions& options) {
  std::vector<std::size_t> offset(systems.size() + 1, 0);
  std::size_t nnz = 0;
  for (std::size_t s = 0; s < systems.size(); ++s) {
    offset[s + 1] = offset[s] + systems[s].num_unknowns;
    nnz += 4 * systems[s].equations.size();
  }
  const std::size_t n = offset.back();

  // Normal equations of all blocks: a weighted graph Laplacian.
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(nnz);
  std::vector<double> b(n, 0.0);
  for (std::size_t s = 0; s < systems.size(); ++s) {
    const auto base = static_cast<int>(offset[s]);
    for (const EdgeEquation& e : systems[s].equations) {
      const double w = e.coeff * e.coeff;
      const int i = base + e.i;
      const int j = base + e.j;
      triplets.emplace_back(i, i, w);
      triplets.emplace_back(j, j, w);
      triplets.emplace_back(i, j, -w);
      triplets.emplace_back(j, i, -w);
      b[i] += e.coeff * e.rhs;
      b[j] -= e.coeff * e.rhs;
    }
  }
  SparseRowMatrix a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  a.setFromTriplets(triplets.begin(), triplets.end());
  a.makeCompressed();

  std::vector<double> inv_diag(n, 1.0);
  for (Eigen::Index r = 0; r < a.outerSize(); ++r) {
    for (SparseRowMatrix::InnerIterator it(a, r); it; ++it) {
      if (it.col() == r && it.value() > 0.0) inv_diag[r] = 1.0 / it.value();
    }
  }

  std::vector<double> x(n, 0.0), r = b, z(n, 0.0), p(n, 0.0), q(n, 0.0);
  auto range = [&](std::vector<double>& v, std::size_t s) {
    return std::span<double>(v.data() + offset[s], systems[s].num_unknowns);
  };
  auto apply = [&](std::size_t s) {
    for (std::size_t row = offset[s]; row < offset[s + 1]; ++row) {
      double acc = 0.0;
      for (SparseRowMatrix::InnerIterator it(a, static_cast<Eigen::Index>(row));
           it; ++it) {
        acc += it.value() * p[it.col()];
      }
      q[row] = acc;
    }
  };

  std::vector<SolveReport> reports(systems.size());
  std::vector<double> rz(systems.size(), 0.0), threshold(systems.size(), 0.0);
  std::vector<int> maxiter(systems.size(), 0);
  std::vector<char> active(systems.size(), 0);
  for (std::size_t s = 0; s < systems.size(); ++s) {
    const double bnorm = std::sqrt(Dot(range(b, s), range(b, s)));
    maxiter[s] = MaxIterations(options, systems[s].num_unknowns);
    threshold[s] = options.cg_tol * bnorm;
    if (bnorm == 0.0) continue;
    for (std::size_t k = offset[s]; k < offset[s + 1]; ++k) {
      z[k] = inv_diag[k] * r[k];
      p[k] = z[k];
    }
    rz[s] = Dot(range(r, s), range(z, s));
    active[s] = 1;
    reports[s].converged = false;
  }

  bool any_active = std::any_of(active.begin(), active.end(),
                                [](char c) { return c != 0; });
  for (int iter = 0; any_active; ++iter) {
    any_active = false;
    for (std::size_t s = 0; s < systems.size(); ++s) {
      if (!active[s]) continue;
      if (iter >= maxiter[s]) {
        active[s] = 0;
        continue;
      }
      apply(s);
      const double pq = Dot(range(p, s), range(q, s));
      if (!(pq > 0.0)) {
        active[s] = 0;
        continue;
      }
      const double alpha = rz[s] / pq;
      for (std::size_t k = offset[s]; k < offset[s + 1]; ++k) {
        x[k] += alpha * p[k];
        r[k] -= alpha * q[k];
      }
      reports[s].iterations = iter + 1;
      if (std::sqrt(Dot(range(r, s), range(r, s))) <= threshold[s]) {
        reports[s].converged = true;
        active[s] = 0;
        continue;
      }
      for (std::size_t k = offset[s]; k < offset[s + 1]; ++k) {
        z[k] = inv_diag[k] * r[k];
      }
      const double rz_next = Dot(range(r, s), range(z, s));
      const double beta = rz_next / rz[s];
      rz[s] = rz_next;
      for (std::size_t k = offset[s]; k < offset[s + 1]; ++k) {
        p[k] = z[k] + beta * p[k];
      }
      any_active = true;
    }
  }

  for (std::size_t s = 0; s < systems.size(); ++s) {
    reports[s].solution.assign(x.begin() + offset[s], x.begin() + offset[s + 1]);
    for (double v : reports[s].solution) {
      if (!std::isfinite(v)) {
        reports[s].converged = false;
        break;
      }
    }
  }
  return reports;
}

std::vector<SuperPrimitive> IntegrateBatch(std::span<const Segment> segments,
                                           const Image& normals,
                                           const Intrinsics& intr,
                                           const IntegrationOptions& options,
                                           IntegrationMode mode) {
  std::vector<SuperPrimitive> out(segments.size());
  std::vector<NormalSystem> systems;
  std::vector<std::size_t> solved;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const Segment& seg = segments[s];
    if (mode == IntegrationMode::kConstantDepth) {
      out[s] = ConstantDepth(seg, IntegrationStatus::kConverged);
      continue;
    }
    std::vector<Eigen::Vector3d> n = GatherNormals(seg, normals);
    if (mode == IntegrationMode::kConstantNormal) {
      Eigen::Vector3d mean = Eigen::Vector3d::Zero();
      for (const Eigen::Vector3d& v : n) mean += v;
      if (!mean.allFinite() || mean.norm() < 1e-6 * static_cast<double>(n.size())) {
        out[s] = ConstantDepth(seg, IntegrationStatus::kConstantDepthFallback);
        continue;
      }
      mean.normalize();
      std::fill(n.begin(), n.end(), mean);
    }
    systems.push_back(Assemble(seg, n, intr, options));
    solved.push_back(s);
  }
  std::vector<SolveReport> reports = SolveBatch(systems, options);
  for (std::size_t k = 0; k < solved.size(); ++k) {
    const Segment& seg = segments[solved[k]];
    SuperPrimitive& prim = out[solved[k]];
    prim.segment = seg;
    prim.log_udepth = std::move(reports[k].solution);
    prim.iterations = reports[k].iterations;
    prim.status = reports[k].converged ? IntegrationStatus::kConverged
                                       : IntegrationStatus::kNotConverged;
    if (!prim.log_udepth.empty()) {
      const double shift = prim.log_udepth[AnchorOrFirst(seg)];
      for (double& v : prim.log_udepth) v -= shift;
    }
  }
  return out;
}

SuperPrimitive FlattenConstantDepth(const SuperPrimitive& primitive) {
  SuperPrimitive p = primitive;
  std::fill(p.log_udepth.begin(), p.log_udepth.end(), 0.0);
  p.status = IntegrationStatus::kConverged;
  p.iterations = 0;
  return p;
}

SuperPrimitive FlattenConstantNormal(const Segment& segment,
                                     const Image& normals,
                                     const Intrinsics& intr,
                                     const IntegrationOptions& options) {
  return IntegrateBatch(std::span<const Segment>(&segment, 1), normals, intr,
                        options, IntegrationMode::kConstantNormal)
      .front();
}

}  // namespace sprim
