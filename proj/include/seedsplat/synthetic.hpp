#pragma once

#include <string>
#include <vector>

#include "seedsplat/common.hpp"
#include "seedsplat/scene.hpp"

namespace seedsplat {

// A small ray-traced capture: cameras on a ring inside a large textured
// sphere, watching a textured quad slide along the x axis. Ground-truth
// images come from exact ray casts, per-frame point clouds from surface
// samples, so a reconstruction can be scored against a known answer.
struct SyntheticConfig {
  int width = 96;
  int height = 96;
  double focal = 110.0;

  int camera_count = 8;
  int test_cameras = 1;  // the last cameras of the ring are the test split
  double ring_radius = 2.0;
  double ring_height = 1.6;

  int frame_count = 10;
  double sphere_radius = 3.2;
  bool with_quad = true;     // false gives a fully static scene
  double quad_half = 0.35;   // half edge length of the square
  double quad_travel = 0.45; // quad center moves x = -travel .. +travel

  int sphere_points = 150;  // surface samples per frame
  int quad_points = 40;
  // Fraction of the frame range whose point clouds include the quad; 1.0
  // covers the whole motion, 0.5 leaves the second half of the path without
  // initialization points.
  double point_coverage = 1.0;

  uint64_t rng_seed = 1234;
};

// Ring cameras looking at the origin, ids cam0..camN-1.
std::vector<Camera> synthetic_cameras(const SyntheticConfig& config);

// Quad center at a (possibly fractional) frame time.
Vec3 synthetic_quad_center(const SyntheticConfig& config, double frame_time);

// Exact ray-cast view of the scene at a frame time.
Image render_synthetic_view(const SyntheticConfig& config, const Camera& camera,
                            double frame_time);

// Writes cameras.json, frames/<id>/<index>.png and points/frame_<index>.ply
// under root. Deterministic for a fixed config.
void gen_synthetic(const SyntheticConfig& config, const std::string& root);

}  // namespace seedsplat
