#pragma once

#include <optional>
#include <vector>

#include "seedsplat/fields.hpp"
#include "seedsplat/scene.hpp"

namespace seedsplat {

struct RasterizeConfig {
  double near_plane = 0.01;
  int tile_size = 16;
  double alpha_min = 1.0 / 255.0;  // contributions below this are skipped
  double alpha_max = 0.99;         // alpha clamp
  double footprint_sigma = 3.0;    // gaussians end at this many std-devs
  double dilation = 0.3;           // px^2 added to the 2D covariance diagonal
};

// A 3D gaussian projected into screen space. cov2d is stored as the three
// scalars (a, b, c) of [[a, b], [b, c]].
struct Splat2D {
  Vec2 mean2d = Vec2::Zero();
  double cov_a = 1.0, cov_b = 0.0, cov_c = 1.0;
  double depth = 0.0;
  Vec3 color = Vec3::Zero();
  double opacity = 0.0;
  int32_t seed_index = -1;
  int32_t local_index = -1;
  int32_t tg_index = -1;  // seed_index * k + local_index
};

// EWA-style perspective projection of one gaussian. Returns nullopt when the
// gaussian is culled (behind the near plane or footprint off-screen).
std::optional<Splat2D> project(const TemporalGaussian& gaussian, const Camera& camera,
                               const RasterizeConfig& cfg);

// Projects every active gaussian of a batch; culled entries are dropped.
std::vector<Splat2D> project_gaussians(const TemporalGaussians& gaussians, const Camera& camera,
                                       const RasterizeConfig& cfg);

// Opacity-weighted gaussian falloff at a pixel position, clamped to
// alpha_max. Returns 0 outside the footprint_sigma ellipse; callers skip
// contributions below alpha_min.
double alpha_at(const Splat2D& splat, const Vec2& p, const RasterizeConfig& cfg);

struct RenderOutputs {
  Image image;
  std::vector<double> transmittance;  // per pixel, remaining after all splats
  std::vector<double> color_no_bg;    // per pixel RGB before background
  Vec3 background = Vec3::Zero();

  // Retained forward state consumed by render_backward.
  bool buffers_retained = false;
  std::vector<Splat2D> sorted;             // global depth order
  std::vector<std::vector<int32_t>> tile_bins;  // indices into `sorted`
  int tiles_x = 0, tiles_y = 0;
};

// Depth-sorts the splats (ties broken by source index), bins them into
// tiles, and alpha-blends front to back; remaining transmittance is filled
// with the background color.
RenderOutputs render(const std::vector<Splat2D>& splats, int width, int height,
                     const Vec3& background, const RasterizeConfig& cfg,
                     bool retain_buffers = true);

// Per-splat gradients, aligned with RenderOutputs::sorted.
struct SplatGrads {
  std::vector<double> mean2d;       // 2 per splat
  std::vector<double> cov;          // (a, b, c) per splat
  std::vector<double> color;        // 3 per splat
  std::vector<double> opacity;      // 1 per splat
  std::vector<double> mean2d_norm;  // ||dL/dmean2d||_2, feeds seed growing
};

// Backward through the blending recurrence. upstream is dL/dimage.
SplatGrads render_backward(const RenderOutputs& outputs, const Image& upstream,
                           const RasterizeConfig& cfg);

// Gradients of one projection with respect to the gaussian's 3D parameters.
struct ProjectGrads {
  Vec3 mean = Vec3::Zero();
  Vec4 quat = Vec4::Zero();
  Vec3 scale = Vec3::Zero();
};

// Chains screen-space gradients {dL/dmean2d, dL/dcov2d(a,b,c)} back to the
// gaussian's mean, quaternion and scale. Color and opacity pass through the
// projection unchanged, so their gradients map directly.
ProjectGrads project_backward(const TemporalGaussian& gaussian, const Camera& camera,
                              const RasterizeConfig& cfg, const Vec2& grad_mean2d,
                              const Vec3& grad_cov);

}  // namespace seedsplat
