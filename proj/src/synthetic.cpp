#include "seedsplat/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "seedsplat/io.hpp"

namespace seedsplat {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Smooth low-frequency color over the enclosing sphere's surface.
Vec3 sphere_color(const Vec3& p) {
  double r = 0.55 + 0.35 * std::sin(1.3 * p.x() + 0.7 * p.y());
  double g = 0.55 + 0.35 * std::sin(1.1 * p.y() + 0.5 * p.z() + 2.0);
  double b = 0.55 + 0.35 * std::sin(0.9 * p.z() + 0.6 * p.x() + 4.0);
  return Vec3(r, g, b);
}

// Quad texture over local coordinates (u, v) in [0,1]^2: a smooth bump
// pattern with a gradient, visually distinct from the sphere behind it.
Vec3 quad_color(double u, double v) {
  double r = 0.5 + 0.45 * std::sin(2.0 * kPi * 1.5 * u) * std::cos(kPi * v);
  double g = 0.15 + 0.6 * v;
  double b = 0.85 - 0.5 * u;
  return Vec3(r, g, b);
}

struct QuadHit {
  bool hit = false;
  double t = 0.0;
  double u = 0.0, v = 0.0;
};

// The quad is the horizontal square y = 0, |x - cx| <= half, |z| <= half.
QuadHit intersect_quad(const SyntheticConfig& cfg, double frame_time, const Vec3& origin,
                       const Vec3& dir) {
  QuadHit out;
  if (!cfg.with_quad || std::abs(dir.y()) < 1e-12) return out;
  double t = -origin.y() / dir.y();
  if (t <= 1e-6) return out;
  Vec3 p = origin + t * dir;
  Vec3 center = synthetic_quad_center(cfg, frame_time);
  if (std::abs(p.x() - center.x()) > cfg.quad_half || std::abs(p.z()) > cfg.quad_half) return out;
  out.hit = true;
  out.t = t;
  out.u = (p.x() - center.x() + cfg.quad_half) / (2.0 * cfg.quad_half);
  out.v = (p.z() + cfg.quad_half) / (2.0 * cfg.quad_half);
  return out;
}

// First hit of |p| = R for a ray starting inside the sphere.
double intersect_sphere(const SyntheticConfig& cfg, const Vec3& origin, const Vec3& dir) {
  double b = origin.dot(dir);
  double c = origin.squaredNorm() - cfg.sphere_radius * cfg.sphere_radius;
  double disc = b * b - c;
  return -b + std::sqrt(std::max(disc, 0.0));
}

std::string frame_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", index);
  return buf;
}

}  // namespace

std::vector<Camera> synthetic_cameras(const SyntheticConfig& cfg) {
  if (cfg.camera_count < 1) throw DataError("synthetic scene needs at least one camera");
  if (cfg.test_cameras < 0 || cfg.test_cameras >= cfg.camera_count)
    throw DataError("synthetic test camera count must leave at least one training camera");
  double rig = std::sqrt(cfg.ring_radius * cfg.ring_radius + cfg.ring_height * cfg.ring_height);
  if (rig >= cfg.sphere_radius)
    throw DataError("synthetic cameras must sit inside the background sphere");

  std::vector<Camera> cams;
  for (int i = 0; i < cfg.camera_count; ++i) {
    double angle = 2.0 * kPi * i / cfg.camera_count;
    Vec3 eye(cfg.ring_radius * std::cos(angle), cfg.ring_height,
             cfg.ring_radius * std::sin(angle));
    Camera cam = Camera::look_at(eye, Vec3::Zero(), cfg.width, cfg.height, cfg.focal,
                                 "cam" + std::to_string(i));
    cam.split = (i >= cfg.camera_count - cfg.test_cameras) ? "test" : "train";
    cams.push_back(std::move(cam));
  }
  return cams;
}

Vec3 synthetic_quad_center(const SyntheticConfig& cfg, double frame_time) {
  double s = cfg.frame_count > 1 ? frame_time / (cfg.frame_count - 1) : 0.5;
  return Vec3(-cfg.quad_travel + 2.0 * cfg.quad_travel * s, 0.0, 0.0);
}

Image render_synthetic_view(const SyntheticConfig& cfg, const Camera& camera,
                            double frame_time) {
  Image image(camera.width, camera.height);
  Vec3 origin = camera.center();
  Mat3 rot_t = camera.rotation.transpose();
  for (int y = 0; y < camera.height; ++y)
    for (int x = 0; x < camera.width; ++x) {
      Vec3 dir_cam((x + 0.5 - camera.cx) / camera.fx, (y + 0.5 - camera.cy) / camera.fy, 1.0);
      Vec3 dir = (rot_t * dir_cam).normalized();
      QuadHit quad = intersect_quad(cfg, frame_time, origin, dir);
      double t_sphere = intersect_sphere(cfg, origin, dir);
      Vec3 color;
      if (quad.hit && quad.t < t_sphere)
        color = quad_color(quad.u, quad.v);
      else
        color = sphere_color(origin + t_sphere * dir);
      for (int c = 0; c < 3; ++c) image.at(y, x, c) = std::clamp(color[c], 0.0, 1.0);
    }
  return image;
}

void gen_synthetic(const SyntheticConfig& cfg, const std::string& root) {
  if (cfg.frame_count < 1) throw DataError("synthetic scene needs at least one frame");
  if (cfg.width < 1 || cfg.height < 1) throw DataError("synthetic image size must be positive");
  if (cfg.sphere_points < 0 || cfg.quad_points < 0)
    throw DataError("synthetic sample counts must be non-negative");
  if (cfg.sphere_points + cfg.quad_points == 0)
    throw DataError("synthetic scene needs surface samples for the point clouds");

  std::vector<Camera> cams = synthetic_cameras(cfg);
  write_cameras_json(root + "/cameras.json", cams);

  for (const Camera& cam : cams)
    for (int f = 0; f < cfg.frame_count; ++f) {
      Image img = render_synthetic_view(cfg, cam, static_cast<double>(f));
      write_png(root + "/frames/" + cam.id + "/" + frame_name(f) + ".png", img);
    }

  // Quad samples stop after the covered fraction of the motion so partial
  // initializations can be produced deliberately.
  int last_quad_frame = cfg.frame_count - 1;
  if (cfg.point_coverage < 1.0)
    last_quad_frame =
        static_cast<int>(std::floor(cfg.point_coverage * (cfg.frame_count - 1) + 1e-9));

  Rng rng(cfg.rng_seed);
  for (int f = 0; f < cfg.frame_count; ++f) {
    std::vector<Vec3> points;
    for (int i = 0; i < cfg.sphere_points; ++i) {
      double z = rng.uniform(-1.0, 1.0);
      double phi = rng.uniform(0.0, 2.0 * kPi);
      double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      points.push_back(cfg.sphere_radius * Vec3(r * std::cos(phi), z, r * std::sin(phi)));
    }
    if (cfg.with_quad) {
      Vec3 center = synthetic_quad_center(cfg, static_cast<double>(f));
      for (int i = 0; i < cfg.quad_points; ++i) {
        // Draw every frame's samples so coverage does not change the stream.
        double dx = rng.uniform(-cfg.quad_half, cfg.quad_half);
        double dz = rng.uniform(-cfg.quad_half, cfg.quad_half);
        if (f <= last_quad_frame) points.push_back(center + Vec3(dx, 0.0, dz));
      }
    }
    write_ply(root + "/points/frame_" + frame_name(f) + ".ply", points);
  }
}

}  // namespace seedsplat
