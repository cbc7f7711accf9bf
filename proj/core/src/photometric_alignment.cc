#include "sprim/photometric_alignment.h"

#include <algorithm>
#include <limits>
#include <cmath>

#include "sprim/error.h"

namespace sprim {

namespace {

struct Loss {
  RobustLoss kind;
  double eps;

  double Value(double d) const {
    if (kind == RobustLoss::kL1) return std::abs(d);
    return std::sqrt(d * d + eps * eps) - eps;
  }
  double Derivative(double d) const {
    if (kind == RobustLoss::kL1) return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
    return d / std::sqrt(d * d + eps * eps);
  }
};

bool ProjectInto(const Eigen::Vector3d& x, const Intrinsics& intr,
                 double min_depth, double* u, double* v) {
  if (!(x.z() > min_depth)) return false;
  *u = intr.fu * x.x() / x.z() + intr.cu;
  *v = intr.fv * x.y() / x.z() + intr.cv;
  // Round-off must not push border pixels out of the sampling domain.
  constexpr double kSlack = 1e-9;
  if (!(*u >= -kSlack && *v >= -kSlack && *u <= intr.width - 1 + kSlack &&
        *v <= intr.height - 1 + kSlack)) {
    return false;
  }
  *u = std::clamp(*u, 0.0, intr.width - 1.0);
  *v = std::clamp(*v, 0.0, intr.height - 1.0);
  return true;
}

int EffectiveLevels(const PhotometricProblem& problem,
                    const PhotometricOptions& options) {
  int levels = std::max(options.levels, 1);
  for (const PhotometricFrame& f : problem.frames) {
    int l = 1;
    while (l < levels && (f.image.width() >> l) >= options.min_level_size &&
           (f.image.height() >> l) >= options.min_level_size) {
      ++l;
    }
    levels = std::min(levels, l);
  }
  return levels;
}

}  // namespace

WarpResult WarpPrimitive(const ScaledPrimitive& sp, const Pose& target_from_ref,
                         const Intrinsics& intr_ref,
                         const Intrinsics& intr_target, double min_depth) {
  WarpResult out;
  const std::vector<Pixel>& pixels = sp.prim.segment.pixels;
  out.coords.resize(pixels.size());
  out.valid.assign(pixels.size(), 0);
  for (std::size_t k = 0; k < pixels.size(); ++k) {
    const Eigen::Vector3d x =
        target_from_ref * (sp.DepthAt(k) * PixelRay(pixels[k].u, pixels[k].v,
                                                    intr_ref));
    double u = 0.0, v = 0.0;
    const bool ok = ProjectInto(x, intr_target, min_depth, &u, &v);
    if (ok) {
      out.coords[k] = Eigen::Vector2d(u, v);
    } else if (x.z() > min_depth) {
      out.coords[k] = Eigen::Vector2d(intr_target.fu * x.x() / x.z() + intr_target.cu,
                                      intr_target.fv * x.y() / x.z() + intr_target.cv);
    } else {
      out.coords[k].setConstant(std::numeric_limits<double>::quiet_NaN());
    }
    out.valid[k] = ok ? 1 : 0;
  }
  return out;
}

PrimitiveResidual ComputePrimitiveResidual(
    const ScaledPrimitive& sp, const Image& image_ref, const Image& image_target,
    const Pose& target_from_ref, const Intrinsics& intr_ref,
    const Intrinsics& intr_target, const PhotometricOptions& options) {
  if (image_ref.channels() != 3 || image_target.channels() != 3) {
    throw DomainError("photometric residual: images need 3 channels");
  }
  const Loss loss{options.loss, options.charbonnier_eps};
  const WarpResult warp = WarpPrimitive(sp, target_from_ref, intr_ref,
                                        intr_target, options.min_depth);
  PrimitiveResidual res;
  res.total = warp.coords.size();
  double sum = 0.0;
  for (std::size_t k = 0; k < warp.coords.size(); ++k) {
    if (!warp.valid[k]) continue;
    double value[3], du[3], dv[3];
    if (!SampleWithGradient3(image_target, warp.coords[k].x(),
                             warp.coords[k].y(), value, du, dv)) {
      continue;
    }
    const Pixel p = sp.prim.segment.pixels[k];
    const float* ref = image_ref.pixel(p.u, p.v);
    for (int c = 0; c < 3; ++c) sum += loss.Value(value[c] - ref[c]);
    ++res.valid;
  }
  res.active = res.total > 0 && res.valid > 0 &&
               res.valid_fraction() >= options.min_valid_fraction;
  res.value = res.valid > 0 ? sum / static_cast<double>(res.valid) : 0.0;
  return res;
}

void PhotometricProblem::Validate() const {
  const auto num_frames = static_cast<int>(frames.size());
  for (const PhotometricFrame& f : frames) {
    if (f.image.channels() != 3) {
      throw DomainError("photometric problem: images need 3 channels");
    }
    if (f.image.width() != f.intr.width || f.image.height() != f.intr.height) {
      throw DomainError("photometric problem: image and intrinsics disagree");
    }
  }
  for (const PrimitiveSet& s : sets) {
    if (s.frame < 0 || s.frame >= num_frames) {
      throw DomainError("photometric problem: set frame out of range");
    }
    if (!s.log_scale_init.empty() &&
        s.log_scale_init.size() != s.primitives.size()) {
      throw DomainError("photometric problem: scale anchors size mismatch");
    }
    for (const ScaledPrimitive& sp : s.primitives) {
      if (sp.prim.log_udepth.size() != sp.prim.segment.area()) {
        throw DomainError("photometric problem: primitive not integrated");
      }
    }
  }
  if (edges.empty()) throw DomainError("photometric problem: no targets");
  for (const PhotometricEdge& e : edges) {
    if (e.set < 0 || e.set >= static_cast<int>(sets.size()) || e.target < 0 ||
        e.target >= num_frames) {
      throw DomainError("photometric problem: edge index out of range");
    }
    if (sets[e.set].frame == e.target) {
      throw DomainError("photometric problem: edge targets its own frame");
    }
  }
}

PhotometricObjective::PhotometricObjective(const PhotometricProblem& problem,
                                           const PhotometricOptions& options)
    : problem_(problem), options_(options) {
  problem.Validate();
  num_levels_ = EffectiveLevels(problem, options);

  pose_offset_.assign(problem.frames.size(), -1);
  for (std::size_t f = 0; f < problem.frames.size(); ++f) {
    if (!problem.frames[f].pose_fixed) {
      pose_offset_[f] = num_parameters_;
      num_parameters_ += 6;
    }
  }
  scale_offset_.assign(problem.sets.size(), -1);
  for (std::size_t s = 0; s < problem.sets.size(); ++s) {
    if (!problem.sets[s].scales_fixed && !problem.sets[s].primitives.empty()) {
      scale_offset_[s] = num_parameters_;
      num_parameters_ += static_cast<int>(problem.sets[s].primitives.size());
    }
  }

  for (const PhotometricFrame& f : problem.frames) {
    pyramids_.push_back(BuildPyramid(f.image, num_levels_));
    std::vector<Intrinsics> intr;
    for (int l = 0; l < num_levels_; ++l) intr.push_back(f.intr.AtLevel(l));
    intrinsics_.push_back(std::move(intr));
  }

  for (const PrimitiveSet& set : problem.sets) {
    std::vector<double> init = set.log_scale_init;
    if (init.empty()) {
      for (const ScaledPrimitive& sp : set.primitives) {
        init.push_back(sp.log_scale);
      }
    }
    log_scale_init_.push_back(std::move(init));

    std::vector<std::vector<LevelPrimitive>> per_level(num_levels_);
    for (int l = 0; l < num_levels_; ++l) {
      const Image& img = pyramids_[set.frame][l];
      const Intrinsics& intr = intrinsics_[set.frame][l];
      const int block = 1 << l;
      for (const ScaledPrimitive& sp : set.primitives) {
        LevelPrimitive lp;
        const std::vector<Pixel>& pixels = sp.prim.segment.pixels;
        // Row-major pixels group naturally into coarse rows; collect the
        // coarse cells of each coarse row with a small map.
        std::vector<std::pair<Pixel, std::pair<int, double>>> cells;
        for (std::size_t k = 0; k < pixels.size(); ++k) {
          const Pixel c{pixels[k].u >> l, pixels[k].v >> l};
          cells.push_back({c, {1, sp.prim.log_udepth[k]}});
        }
        std::stable_sort(cells.begin(), cells.end(),
                         [](const auto& a, const auto& b) {
                           return a.first < b.first;
                         });
        for (std::size_t k = 0; k < cells.size();) {
          std::size_t e = k;
          int count = 0;
          double sum = 0.0;
          while (e < cells.size() && cells[e].first == cells[k].first) {
            count += cells[e].second.first;
            sum += cells[e].second.second;
            ++e;
          }
          const Pixel c = cells[k].first;
          k = e;
          if (c.u >= img.width() || c.v >= img.height()) continue;
          if (2 * count < block * block) continue;
          LevelPixel px;
          px.ray = PixelRay(c.u, c.v, intr);
          px.udepth = std::exp(sum / count);
          const float* color = img.pixel(c.u, c.v);
          std::copy(color, color + 3, px.color);
          lp.pixels.push_back(px);
        }
        per_level[l].push_back(std::move(lp));
      }
    }
    levels_.push_back(std::move(per_level));
  }
}

PhotometricState PhotometricObjective::InitialState() const {
  PhotometricState state;
  for (const PhotometricFrame& f : problem_.frames) {
    state.world_to_camera.push_back(f.pose.Inverse());
  }
  for (const PrimitiveSet& s : problem_.sets) {
    std::vector<double> ls;
    for (const ScaledPrimitive& sp : s.primitives) ls.push_back(sp.log_scale);
    state.log_scales.push_back(std::move(ls));
  }
  return state;
}

PhotometricState PhotometricObjective::Apply(const PhotometricState& state,
                                             const Eigen::VectorXd& delta) const {
  PhotometricState out = state;
  for (std::size_t f = 0; f < out.world_to_camera.size(); ++f) {
    if (pose_offset_[f] < 0) continue;
    out.world_to_camera[f] = Retract(out.world_to_camera[f],
                                     delta.segment<6>(pose_offset_[f]));
  }
  for (std::size_t s = 0; s < out.log_scales.size(); ++s) {
    if (scale_offset_[s] < 0) continue;
    for (std::size_t i = 0; i < out.log_scales[s].size(); ++i) {
      out.log_scales[s][i] += delta[scale_offset_[s] + static_cast<int>(i)];
    }
  }
  return out;
}

PhotometricObjective::Evaluation PhotometricObjective::Evaluate(
    const PhotometricState& state, int level, bool with_gradient) const {
  const Loss loss{options_.loss, options_.charbonnier_eps};
  Evaluation eval;
  if (with_gradient) eval.gradient = Eigen::VectorXd::Zero(num_parameters_);

  struct Partial {
    double value = 0.0;
    double d_scale = 0.0;
    Vector6d d_pose = Vector6d::Zero();  // target-frame increment
  };

  for (const PhotometricEdge& edge : problem_.edges) {
    const PrimitiveSet& set = problem_.sets[edge.set];
    const Pose t_rel = state.world_to_camera[edge.target] *
                       state.world_to_camera[set.frame].Inverse();
    const Eigen::Matrix3d& r = t_rel.rotation();
    const Eigen::Vector3d& t = t_rel.translation();
    const Image& target = pyramids_[edge.target][level];
    const Intrinsics& intr = intrinsics_[edge.target][level];
    const std::vector<LevelPrimitive>& prims = levels_[edge.set][level];

    std::vector<PrimitiveResidual> residuals(prims.size());
    std::vector<Partial> partials(prims.size());
    std::size_t active = 0;
    for (std::size_t i = 0; i < prims.size(); ++i) {
      const double scale = std::exp(state.log_scales[edge.set][i]);
      PrimitiveResidual& res = residuals[i];
      Partial& part = partials[i];
      res.total = prims[i].pixels.size();
      double sum = 0.0;
      double d_scale = 0.0;
      Eigen::Vector3d d_trans = Eigen::Vector3d::Zero();
      Eigen::Vector3d d_rot = Eigen::Vector3d::Zero();
      for (const LevelPixel& px : prims[i].pixels) {
        const Eigen::Vector3d rx = r * ((scale * px.udepth) * px.ray);
        const Eigen::Vector3d xt = rx + t;
        double u = 0.0, v = 0.0;
        if (!ProjectInto(xt, intr, options_.min_depth, &u, &v)) continue;
        double value[3], du[3], dv[3];
        if (!SampleWithGradient3(target, u, v, value, du, dv)) continue;
        ++res.valid;
        double gu = 0.0, gv = 0.0;
        for (int c = 0; c < 3; ++c) {
          const double d = value[c] - px.color[c];
          sum += loss.Value(d);
          if (with_gradient) {
            const double w = loss.Derivative(d);
            gu += w * du[c];
            gv += w * dv[c];
          }
        }
        if (!with_gradient) continue;
        const double iz = 1.0 / xt.z();
        const Eigen::Vector3d gx(intr.fu * gu * iz, intr.fv * gv * iz,
                                 -(intr.fu * gu * xt.x() + intr.fv * gv * xt.y()) *
                                     iz * iz);
        d_scale += gx.dot(rx);
        d_trans += gx;
        d_rot += xt.cross(gx);
      }
      res.active = res.total > 0 && res.valid > 0 &&
                   res.valid_fraction() >= options_.min_valid_fraction;
      if (res.valid > 0) {
        const double inv = 1.0 / static_cast<double>(res.valid);
        res.value = sum * inv;
        part.value = res.value;
        part.d_scale = d_scale * inv;
        part.d_pose << d_trans * inv, d_rot * inv;
      }
      if (res.active) ++active;
    }

    eval.active += active;
    if (active > 0) {
      const double weight =
          options_.normalization == CostNormalization::kMeanPerEdge
              ? 1.0 / static_cast<double>(active)
              : 1.0;
      Vector6d d_pose = Vector6d::Zero();
      for (std::size_t i = 0; i < prims.size(); ++i) {
        if (!residuals[i].active) continue;
        eval.cost += weight * partials[i].value;
        if (!with_gradient) continue;
        d_pose += weight * partials[i].d_pose;
        if (scale_offset_[edge.set] >= 0) {
          eval.gradient[scale_offset_[edge.set] + static_cast<int>(i)] +=
              weight * partials[i].d_scale;
        }
      }
      if (with_gradient) {
        if (pose_offset_[edge.target] >= 0) {
          eval.gradient.segment<6>(pose_offset_[edge.target]) += d_pose;
        }
        if (pose_offset_[set.frame] >= 0) {
          eval.gradient.segment<6>(pose_offset_[set.frame]) -=
              Adjoint(t_rel).transpose() * d_pose;
        }
      }
    }
    eval.residuals.push_back(std::move(residuals));
  }
  if (eval.active == 0) {
    throw DegenerateError("photometric cost: no active primitives");
  }

  for (std::size_t s = 0; s < problem_.sets.size(); ++s) {
    if (scale_offset_[s] < 0) continue;
    for (std::size_t i = 0; i < state.log_scales[s].size(); ++i) {
      const double d = state.log_scales[s][i] - log_scale_init_[s][i];
      eval.cost += options_.scale_penalty * d * d;
      if (with_gradient) {
        eval.gradient[scale_offset_[s] + static_cast<int>(i)] +=
            2.0 * options_.scale_penalty * d;
      }
    }
  }
  if (!std::isfinite(eval.cost) ||
      (with_gradient && !eval.gradient.allFinite())) {
    throw ConvergenceError("photometric cost is not finite");
  }
  return eval;
}

PhotometricReport OptimizePhotometric(PhotometricProblem* problem,
                                      const PhotometricOptions& options) {
  const PhotometricObjective objective(*problem, options);
  const int n = objective.num_parameters();
  const PhotometricState initial = objective.InitialState();
  PhotometricState state = initial;
  PhotometricReport report;

  Eigen::VectorXd lr(n);
  lr.setConstant(options.scale_step);
  for (std::size_t f = 0; f < problem->frames.size(); ++f) {
    const int off = objective.PoseOffset(static_cast<int>(f));
    if (off >= 0) lr.segment<6>(off).setConstant(options.pose_step);
  }

  const int top = objective.num_levels() - 1;
  for (int level = top; level >= 0; --level) {
    PhotometricObjective::Evaluation eval =
        objective.Evaluate(state, level, true);
    if (level == 0) {
      PhotometricObjective::Evaluation at_init =
          top == 0 ? eval : objective.Evaluate(initial, 0, true);
      report.initial_cost = at_init.cost;
      if (at_init.cost < eval.cost) {
        state = initial;
        eval = std::move(at_init);
      }
    }
    if (n == 0) {
      if (level == 0) {
        report.final_cost = eval.cost;
        report.active = eval.active;
        report.residuals = std::move(eval.residuals);
      }
      continue;
    }

    // Adam on the current iterate with a geometrically decaying step; the
    // best state seen so far is kept.
    Eigen::VectorXd m = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd step(n);
    PhotometricState current = state;
    PhotometricObjective::Evaluation current_eval = eval;
    for (int it = 0; it < options.iterations; ++it) {
      ++report.iterations;
      const int t = it + 1;
      m = options.beta1 * m + (1.0 - options.beta1) * current_eval.gradient;
      v = options.beta2 * v +
          (1.0 - options.beta2) * current_eval.gradient.cwiseAbs2();
      const double c1 = 1.0 - std::pow(options.beta1, t);
      const double c2 = 1.0 - std::pow(options.beta2, t);
      const double schedule =
          options.iterations > 1
              ? std::pow(options.lr_decay,
                         static_cast<double>(it) / (options.iterations - 1))
              : 1.0;
      for (int k = 0; k < n; ++k) {
        step[k] = -schedule * lr[k] * (m[k] / c1) /
                  (std::sqrt(v[k] / c2) + options.adam_eps);
      }
      current = objective.Apply(current, step);
      try {
        current_eval = objective.Evaluate(current, level, true);
      } catch (const DegenerateError&) {
        current = state;
        current_eval = eval;
        continue;
      }
      if (current_eval.cost < eval.cost) {
        state = current;
        eval = current_eval;
      }
    }
    if (level == 0) {
      report.final_cost = eval.cost;
      report.active = eval.active;
      report.residuals = std::move(eval.residuals);
    }
  }

  for (std::size_t f = 0; f < problem->frames.size(); ++f) {
    problem->frames[f].pose = state.world_to_camera[f].Inverse();
  }
  for (std::size_t s = 0; s < problem->sets.size(); ++s) {
    for (std::size_t i = 0; i < problem->sets[s].primitives.size(); ++i) {
      problem->sets[s].primitives[i].log_scale = state.log_scales[s][i];
    }
  }
  return report;
}

namespace {

PhotometricProblem ToProblem(const AlignmentProblem& problem) {
  if (problem.targets.empty()) {
    throw DomainError("alignment: at least one target is required");
  }
  PhotometricProblem p;
  PhotometricFrame ref;
  ref.image = problem.reference_image;
  ref.intr = problem.reference_intr;
  ref.pose_fixed = true;
  p.frames.push_back(std::move(ref));
  PrimitiveSet set;
  set.frame = 0;
  set.primitives = problem.primitives;
  p.sets.push_back(std::move(set));
  for (const AlignmentTarget& t : problem.targets) {
    PhotometricFrame f;
    f.image = t.image;
    f.intr = t.intr;
    f.pose = t.target_from_ref.Inverse();
    f.pose_fixed = t.pose_fixed;
    p.edges.push_back({0, static_cast<int>(p.frames.size())});
    p.frames.push_back(std::move(f));
  }
  return p;
}

}  // namespace

AlignmentResult Align(const AlignmentProblem& problem) {
  PhotometricProblem p = ToProblem(problem);
  const PhotometricReport report = OptimizePhotometric(&p, problem.options);
  AlignmentResult result;
  for (const ScaledPrimitive& sp : p.sets[0].primitives) {
    result.log_scales.push_back(sp.log_scale);
  }
  for (std::size_t f = 1; f < p.frames.size(); ++f) {
    result.target_from_ref.push_back(p.frames[f].pose.Inverse());
  }
  result.initial_cost = report.initial_cost;
  result.final_cost = report.final_cost;
  result.valid_fraction.assign(p.sets[0].primitives.size(), 0.0);
  for (const auto& edge : report.residuals) {
    for (std::size_t i = 0; i < edge.size(); ++i) {
      result.valid_fraction[i] +=
          edge[i].valid_fraction() / static_cast<double>(report.residuals.size());
    }
  }
  return result;
}

double AlignmentCost(const AlignmentProblem& problem) {
  const PhotometricProblem p = ToProblem(problem);
  const PhotometricObjective objective(p, problem.options);
  return objective.Evaluate(objective.InitialState(), 0, false).cost;
}

std::vector<ScaledPrimitive> UnitScalePrimitives(
    const std::vector<SuperPrimitive>& primitives) {
  std::vector<ScaledPrimitive> out;
  for (const SuperPrimitive& p : primitives) {
    if (p.usable()) out.push_back({p, 0.0});
  }
  return out;
}

}  // namespace sprim
