#include "seedsplat/rasterizer.hpp"

#include <algorithm>
#include <cmath>

namespace seedsplat {

namespace {

struct SplatLocal {
  double inv_a, inv_b, inv_c;  // inverse 2D covariance
  int x0, x1, y0, y1;          // pixel bounding box, inclusive
};

double footprint_radius(const Splat2D& s, const RasterizeConfig& cfg) {
  double mid = 0.5 * (s.cov_a + s.cov_c);
  double half = std::sqrt(std::max(0.0, 0.25 * (s.cov_a - s.cov_c) * (s.cov_a - s.cov_c) +
                                            s.cov_b * s.cov_b));
  double lambda_max = mid + half;
  return cfg.footprint_sigma * std::sqrt(std::max(lambda_max, 0.0));
}

bool inverse_cov(const Splat2D& s, SplatLocal* out) {
  double det = s.cov_a * s.cov_c - s.cov_b * s.cov_b;
  if (!(det > 1e-12)) return false;  // dilation guarantees this in practice
  out->inv_a = s.cov_c / det;
  out->inv_b = -s.cov_b / det;
  out->inv_c = s.cov_a / det;
  return true;
}

bool splat_local(const Splat2D& s, int width, int height, const RasterizeConfig& cfg,
                 SplatLocal* out) {
  if (!inverse_cov(s, out)) return false;
  double r = footprint_radius(s, cfg);
  out->x0 = std::max(0, static_cast<int>(std::floor(s.mean2d.x() - r)));
  out->x1 = std::min(width - 1, static_cast<int>(std::ceil(s.mean2d.x() + r)));
  out->y0 = std::max(0, static_cast<int>(std::floor(s.mean2d.y() - r)));
  out->y1 = std::min(height - 1, static_cast<int>(std::ceil(s.mean2d.y() + r)));
  return out->x0 <= out->x1 && out->y0 <= out->y1;
}

// Shared alpha evaluation so the tiled path, the backward pass and alpha_at
// agree bitwise. Returns the clamped alpha; also exposes the quadratic form
// value and the whitened offset u = cov2d^-1 (p - mean).
inline double alpha_eval(const Splat2D& s, const SplatLocal& loc, double px, double py,
                         const RasterizeConfig& cfg, double* u0_out, double* u1_out,
                         double* unclamped) {
  double dx = px - s.mean2d.x();
  double dy = py - s.mean2d.y();
  double u0 = loc.inv_a * dx + loc.inv_b * dy;
  double u1 = loc.inv_b * dx + loc.inv_c * dy;
  double m = dx * u0 + dy * u1;
  double limit = cfg.footprint_sigma * cfg.footprint_sigma;
  if (!(m <= limit)) return 0.0;  // gaussians end at the footprint ellipse
  double a = s.opacity * std::exp(-0.5 * m);
  if (u0_out) *u0_out = u0;
  if (u1_out) *u1_out = u1;
  if (unclamped) *unclamped = a;
  return a > cfg.alpha_max ? cfg.alpha_max : a;
}

}  // namespace

std::optional<Splat2D> project(const TemporalGaussian& gaussian, const Camera& camera,
                               const RasterizeConfig& cfg) {
  Vec3 p_cam = camera.world_to_camera(gaussian.mean);
  double z = p_cam.z();
  if (!(z > cfg.near_plane)) return std::nullopt;

  Splat2D s;
  s.depth = z;
  s.mean2d.x() = camera.fx * p_cam.x() / z + camera.cx;
  s.mean2d.y() = camera.fy * p_cam.y() / z + camera.cy;

  Mat3 sigma = covariance_from(gaussian.rotation, gaussian.scale);
  Mat3 m = camera.rotation * sigma * camera.rotation.transpose();
  // Perspective-affine Jacobian at the mean
  double iz = 1.0 / z, iz2 = iz * iz;
  Eigen::Matrix<double, 2, 3> j;
  j << camera.fx * iz, 0.0, -camera.fx * p_cam.x() * iz2,
       0.0, camera.fy * iz, -camera.fy * p_cam.y() * iz2;
  Mat2 cov = j * m * j.transpose();
  s.cov_a = cov(0, 0) + cfg.dilation;
  s.cov_b = cov(0, 1);
  s.cov_c = cov(1, 1) + cfg.dilation;

  s.color = gaussian.color;
  s.opacity = gaussian.opacity;
  s.seed_index = gaussian.seed_index;
  s.local_index = gaussian.local_index;

  double r = footprint_radius(s, cfg);
  if (s.mean2d.x() + r < 0.0 || s.mean2d.x() - r > camera.width ||
      s.mean2d.y() + r < 0.0 || s.mean2d.y() - r > camera.height)
    return std::nullopt;
  return s;
}

std::vector<Splat2D> project_gaussians(const TemporalGaussians& gaussians, const Camera& camera,
                                       const RasterizeConfig& cfg) {
  std::vector<Splat2D> splats;
  splats.reserve(gaussians.count());
  for (int i = 0; i < gaussians.count(); ++i) {
    if (!gaussians.active[i]) continue;
    TemporalGaussian g;
    g.mean = Vec3(gaussians.mean[3 * i], gaussians.mean[3 * i + 1], gaussians.mean[3 * i + 2]);
    g.rotation = Vec4(gaussians.quat[4 * i], gaussians.quat[4 * i + 1], gaussians.quat[4 * i + 2],
                      gaussians.quat[4 * i + 3]);
    g.scale = Vec3(gaussians.scale[3 * i], gaussians.scale[3 * i + 1], gaussians.scale[3 * i + 2]);
    g.opacity = gaussians.opacity[i];
    g.color = Vec3(gaussians.color[3 * i], gaussians.color[3 * i + 1], gaussians.color[3 * i + 2]);
    g.seed_index = i / gaussians.k;
    g.local_index = i % gaussians.k;
    if (auto s = project(g, camera, cfg)) {
      s->tg_index = i;
      splats.push_back(*s);
    }
  }
  return splats;
}

double alpha_at(const Splat2D& splat, const Vec2& p, const RasterizeConfig& cfg) {
  SplatLocal loc;
  if (!inverse_cov(splat, &loc)) return 0.0;
  return alpha_eval(splat, loc, p.x(), p.y(), cfg, nullptr, nullptr, nullptr);
}

RenderOutputs render(const std::vector<Splat2D>& splats, int width, int height,
                     const Vec3& background, const RasterizeConfig& cfg, bool retain_buffers) {
  if (width <= 0 || height <= 0) throw DataError("render target must have positive dimensions");
  RenderOutputs out;
  out.background = background;
  out.image = Image(width, height);
  out.transmittance.assign(static_cast<size_t>(width) * height, 1.0);
  out.color_no_bg.assign(static_cast<size_t>(width) * height * 3, 0.0);

  // Global front-to-back order; ties broken by the source index so the image
  // is independent of the input permutation.
  out.sorted = splats;
  std::sort(out.sorted.begin(), out.sorted.end(), [](const Splat2D& a, const Splat2D& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.tg_index < b.tg_index;
  });

  const int ts = cfg.tile_size;
  out.tiles_x = (width + ts - 1) / ts;
  out.tiles_y = (height + ts - 1) / ts;
  out.tile_bins.assign(static_cast<size_t>(out.tiles_x) * out.tiles_y, {});

  std::vector<SplatLocal> locals(out.sorted.size());
  for (size_t i = 0; i < out.sorted.size(); ++i) {
    if (!splat_local(out.sorted[i], width, height, cfg, &locals[i])) {
      locals[i].x0 = 1;
      locals[i].x1 = 0;  // empty box: never visited
      continue;
    }
    const SplatLocal& loc = locals[i];
    for (int ty = loc.y0 / ts; ty <= loc.y1 / ts; ++ty)
      for (int tx = loc.x0 / ts; tx <= loc.x1 / ts; ++tx)
        out.tile_bins[static_cast<size_t>(ty) * out.tiles_x + tx].push_back(
            static_cast<int32_t>(i));
  }

  for (int ty = 0; ty < out.tiles_y; ++ty) {
    for (int tx = 0; tx < out.tiles_x; ++tx) {
      const auto& bin = out.tile_bins[static_cast<size_t>(ty) * out.tiles_x + tx];
      const int px0 = tx * ts, px1 = std::min(width - 1, px0 + ts - 1);
      const int py0 = ty * ts, py1 = std::min(height - 1, py0 + ts - 1);
      for (int32_t si : bin) {
        const Splat2D& s = out.sorted[si];
        const SplatLocal& loc = locals[si];
        const int x0 = std::max(px0, loc.x0), x1 = std::min(px1, loc.x1);
        const int y0 = std::max(py0, loc.y0), y1 = std::min(py1, loc.y1);
        for (int py = y0; py <= y1; ++py) {
          for (int px = x0; px <= x1; ++px) {
            double a = alpha_eval(s, loc, px + 0.5, py + 0.5, cfg, nullptr, nullptr, nullptr);
            if (a < cfg.alpha_min) continue;
            size_t pi = static_cast<size_t>(py) * width + px;
            double t = out.transmittance[pi];
            double w = a * t;
            out.color_no_bg[3 * pi + 0] += s.color[0] * w;
            out.color_no_bg[3 * pi + 1] += s.color[1] * w;
            out.color_no_bg[3 * pi + 2] += s.color[2] * w;
            out.transmittance[pi] = t * (1.0 - a);
          }
        }
      }
    }
  }

  for (size_t pi = 0; pi < out.transmittance.size(); ++pi) {
    double t = out.transmittance[pi];
    for (int c = 0; c < 3; ++c) {
      double v = out.color_no_bg[3 * pi + c] + t * background[c];
      if (!std::isfinite(v)) throw NumericError("render produced a non-finite pixel");
      out.image.data[3 * pi + c] = v;
    }
  }

  out.buffers_retained = retain_buffers;
  if (!retain_buffers) {
    out.sorted.clear();
    out.tile_bins.clear();
  }
  return out;
}

SplatGrads render_backward(const RenderOutputs& outputs, const Image& upstream,
                           const RasterizeConfig& cfg) {
  if (!outputs.buffers_retained)
    throw std::logic_error("render_backward requires forward buffers (retain_buffers was false)");
  const int width = outputs.image.width, height = outputs.image.height;
  if (upstream.width != width || upstream.height != height)
    throw DataError("upstream image gradient has the wrong dimensions");

  const size_t n = outputs.sorted.size();
  SplatGrads grads;
  grads.mean2d.assign(n * 2, 0.0);
  grads.cov.assign(n * 3, 0.0);
  grads.color.assign(n * 3, 0.0);
  grads.opacity.assign(n, 0.0);
  grads.mean2d_norm.assign(n, 0.0);

  std::vector<SplatLocal> locals(n);
  std::vector<uint8_t> visible(n, 0);
  for (size_t i = 0; i < n; ++i)
    visible[i] = splat_local(outputs.sorted[i], width, height, cfg, &locals[i]) ? 1 : 0;

  // Front-to-back replay with running transmittance and color prefix. The
  // suffix sum needed for d(alpha) falls out of color_no_bg minus the prefix.
  std::vector<double> run_t(static_cast<size_t>(width) * height, 1.0);
  std::vector<double> prefix(static_cast<size_t>(width) * height * 3, 0.0);

  const int ts = cfg.tile_size;
  for (int ty = 0; ty < outputs.tiles_y; ++ty) {
    for (int tx = 0; tx < outputs.tiles_x; ++tx) {
      const auto& bin = outputs.tile_bins[static_cast<size_t>(ty) * outputs.tiles_x + tx];
      const int px0 = tx * ts, px1 = std::min(width - 1, px0 + ts - 1);
      const int py0 = ty * ts, py1 = std::min(height - 1, py0 + ts - 1);
      for (int32_t si : bin) {
        if (!visible[si]) continue;
        const Splat2D& s = outputs.sorted[si];
        const SplatLocal& loc = locals[si];
        const int x0 = std::max(px0, loc.x0), x1 = std::min(px1, loc.x1);
        const int y0 = std::max(py0, loc.y0), y1 = std::min(py1, loc.y1);
        for (int py = y0; py <= y1; ++py) {
          for (int px = x0; px <= x1; ++px) {
            double u0 = 0.0, u1 = 0.0, raw = 0.0;
            double a = alpha_eval(s, loc, px + 0.5, py + 0.5, cfg, &u0, &u1, &raw);
            if (a < cfg.alpha_min) continue;
            size_t pi = static_cast<size_t>(py) * width + px;
            double t = run_t[pi];
            Vec3 g(upstream.data[3 * pi + 0], upstream.data[3 * pi + 1],
                   upstream.data[3 * pi + 2]);

            // color gradient and prefix update
            double w = a * t;
            for (int c = 0; c < 3; ++c) {
              grads.color[3 * si + c] += g[c] * w;
              prefix[3 * pi + c] += s.color[c] * w;
            }

            // d(loss)/d(alpha): own contribution minus the occlusion of
            // everything behind, including the background term.
            double suffix_dot = 0.0;
            for (int c = 0; c < 3; ++c)
              suffix_dot += g[c] * (outputs.color_no_bg[3 * pi + c] - prefix[3 * pi + c]);
            double bg_dot = g.dot(outputs.background) * outputs.transmittance[pi];
            double d_alpha = g.dot(s.color) * t - (suffix_dot + bg_dot) / (1.0 - a);

            if (raw <= cfg.alpha_max) {  // clamped alphas have zero local slope
              grads.opacity[si] += d_alpha * a / s.opacity;
              grads.mean2d[2 * si + 0] += d_alpha * a * u0;
              grads.mean2d[2 * si + 1] += d_alpha * a * u1;
              grads.cov[3 * si + 0] += d_alpha * 0.5 * a * u0 * u0;
              grads.cov[3 * si + 1] += d_alpha * a * u0 * u1;
              grads.cov[3 * si + 2] += d_alpha * 0.5 * a * u1 * u1;
            }
            run_t[pi] = t * (1.0 - a);
          }
        }
      }
    }
  }

  for (size_t i = 0; i < n; ++i)
    grads.mean2d_norm[i] =
        std::sqrt(grads.mean2d[2 * i] * grads.mean2d[2 * i] +
                  grads.mean2d[2 * i + 1] * grads.mean2d[2 * i + 1]);
  return grads;
}

ProjectGrads project_backward(const TemporalGaussian& gaussian, const Camera& camera,
                              const RasterizeConfig& cfg, const Vec2& grad_mean2d,
                              const Vec3& grad_cov) {
  Vec3 p_cam = camera.world_to_camera(gaussian.mean);
  double z = p_cam.z();
  if (!(z > cfg.near_plane))
    throw std::logic_error("project_backward called for a culled gaussian");

  Mat3 sigma = covariance_from(gaussian.rotation, gaussian.scale);
  Mat3 m = camera.rotation * sigma * camera.rotation.transpose();
  double iz = 1.0 / z, iz2 = iz * iz;
  Eigen::Matrix<double, 2, 3> j;
  j << camera.fx * iz, 0.0, -camera.fx * p_cam.x() * iz2,
       0.0, camera.fy * iz, -camera.fy * p_cam.y() * iz2;

  // Upstream grads on the symmetric cov2d scalars (a, b, c) as an
  // entrywise-gradient matrix.
  Mat2 gm;
  gm << grad_cov[0], 0.5 * grad_cov[1], 0.5 * grad_cov[1], grad_cov[2];

  Mat3 d_m = j.transpose() * gm * j;                     // dL/d(cam-space cov)
  Mat3 d_sigma = camera.rotation.transpose() * d_m * camera.rotation;
  Eigen::Matrix<double, 2, 3> d_j = 2.0 * gm * j * m;    // dL/dJ (gm, m symmetric)

  // dL/d(p_cam): the projected mean and the Jacobian both depend on it.
  Vec3 d_pcam;
  d_pcam.x() = grad_mean2d.x() * camera.fx * iz + d_j(0, 2) * (-camera.fx * iz2);
  d_pcam.y() = grad_mean2d.y() * camera.fy * iz + d_j(1, 2) * (-camera.fy * iz2);
  d_pcam.z() = -grad_mean2d.x() * camera.fx * p_cam.x() * iz2 -
               grad_mean2d.y() * camera.fy * p_cam.y() * iz2 +
               d_j(0, 0) * (-camera.fx * iz2) + d_j(1, 1) * (-camera.fy * iz2) +
               d_j(0, 2) * (2.0 * camera.fx * p_cam.x() * iz2 * iz) +
               d_j(1, 2) * (2.0 * camera.fy * p_cam.y() * iz2 * iz);

  ProjectGrads out;
  out.mean = camera.rotation.transpose() * d_pcam;
  covariance_from_backward(gaussian.rotation, gaussian.scale, d_sigma, &out.quat, &out.scale);
  return out;
}

}  // namespace seedsplat
