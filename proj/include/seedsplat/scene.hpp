#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "seedsplat/common.hpp"

namespace seedsplat {

// Axis-aligned scene bounds plus the time range covered by the capture.
// Spatial queries are normalized against an AABB expanded by 5% per side so
// that points on the hull never land exactly on the unit-cube boundary.
struct SceneBounds {
  Vec3 aabb_min = Vec3::Zero();
  Vec3 aabb_max = Vec3::Ones();
  double t_min = 0.0;
  double t_max = 1.0;
  int frame_count = 1;

  static SceneBounds from_points(const std::vector<Vec3>& points, int frame_count);

  Vec3 expanded_min() const;
  Vec3 expanded_max() const;
};

// Normalized space-time query in [0,1]^4. Time uses the frame grid
// (frame_index / (frame_count - 1)) so the finest hash resolution can be
// matched to the capture frame rate.
Eigen::Vector4d normalize_query(const SceneBounds& bounds, const Vec3& pos, double frame_time);

// A seed anchors one local space: a position, a static feature vector and a
// per-axis scale used to bound the offsets of the gaussians it emits.
struct Seed {
  Vec3 position = Vec3::Zero();
  VecX feature;  // learnable static feature
  Vec3 scale = Vec3::Ones();  // learnable positive lengths (scene units)
  bool active = true;
};

// One time-varying gaussian decoded from a seed at a fixed query time.
struct TemporalGaussian {
  Vec3 mean = Vec3::Zero();
  Vec4 rotation = Vec4(1, 0, 0, 0);  // unit quaternion, (w, x, y, z)
  Vec3 scale = Vec3::Ones();         // positive std-devs along local axes
  double opacity = 0.0;              // in [0, 1]
  Vec3 color = Vec3::Zero();         // RGB in [0, 1]
  double query_time = 0.0;           // normalized time the decode was made at
  bool active = true;
  int32_t seed_index = -1;
  int32_t local_index = -1;
};

// Rotation matrix from a quaternion (w, x, y, z). The quaternion is
// normalized internally, so callers may pass raw network outputs.
Mat3 rotation_from_quat(const Vec4& q);

// Backward of rotation_from_quat: given dL/dR, returns dL/dq including the
// internal normalization.
Vec4 rotation_from_quat_backward(const Vec4& q, const Mat3& grad_rot);

// 3x3 world-space covariance R * diag(s)^2 * R^T. Symmetric PSD by
// construction for any finite inputs.
Mat3 covariance_from(const Vec4& rotation, const Vec3& scale);

// Backward of covariance_from. grad_cov is dL/dSigma with all nine entries
// treated independently (callers symmetrize upstream gradients accordingly).
void covariance_from_backward(const Vec4& rotation, const Vec3& scale, const Mat3& grad_cov,
                              Vec4* grad_rotation, Vec3* grad_scale);

// Unnormalized gaussian density exp(-0.5 (x-mean)^T Sigma^-1 (x-mean)).
double eval_gaussian(const Vec3& x, const Vec3& mean, const Mat3& cov);

// Pinhole camera with row-major world-to-camera rotation and translation.
// Camera axes: x right, y down, z forward; a world point p maps to
// p_cam = R p + t, then u = fx px/pz + cx, v = fy py/pz + cy.
struct Camera {
  std::string id;
  int width = 0;
  int height = 0;
  double fx = 0, fy = 0, cx = 0, cy = 0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  std::string split = "train";

  Vec3 center() const { return -rotation.transpose() * translation; }
  Vec3 world_to_camera(const Vec3& p) const { return rotation * p + translation; }

  // Throws DataError when the rotation is not orthonormal within tol.
  void validate(double tol = 1e-6) const;

  // Builds a camera at `eye` looking at `target` with world up (0,1,0).
  static Camera look_at(const Vec3& eye, const Vec3& target, int width, int height,
                        double focal, const std::string& id);
};

}  // namespace seedsplat
