#include "seedsplat/scene.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace seedsplat {

SceneBounds SceneBounds::from_points(const std::vector<Vec3>& points, int frame_count) {
  if (points.empty()) throw DataError("cannot derive scene bounds from an empty point set");
  SceneBounds b;
  b.aabb_min = points.front();
  b.aabb_max = points.front();
  for (const Vec3& p : points) {
    b.aabb_min = b.aabb_min.cwiseMin(p);
    b.aabb_max = b.aabb_max.cwiseMax(p);
  }
  b.t_min = 0.0;
  b.t_max = 1.0;
  b.frame_count = frame_count < 1 ? 1 : frame_count;
  return b;
}

// The expansion keeps hull points strictly inside the normalized cube. A
// degenerate axis (zero extent) still gets a nonzero margin so the division
// below stays well defined.
static Vec3 expansion(const SceneBounds& b) {
  Vec3 extent = b.aabb_max - b.aabb_min;
  Vec3 margin = 0.05 * extent;
  for (int i = 0; i < 3; ++i)
    if (margin[i] <= 0.0) margin[i] = 0.05;
  return margin;
}

Vec3 SceneBounds::expanded_min() const { return aabb_min - expansion(*this); }
Vec3 SceneBounds::expanded_max() const { return aabb_max + expansion(*this); }

Eigen::Vector4d normalize_query(const SceneBounds& bounds, const Vec3& pos, double frame_time) {
  if (!pos.allFinite() || !std::isfinite(frame_time))
    throw DataError("space-time query contains non-finite values");
  Vec3 lo = bounds.expanded_min();
  Vec3 hi = bounds.expanded_max();
  Eigen::Vector4d out;
  for (int i = 0; i < 3; ++i) out[i] = (pos[i] - lo[i]) / (hi[i] - lo[i]);
  double denom = bounds.frame_count > 1 ? static_cast<double>(bounds.frame_count - 1) : 1.0;
  out[3] = frame_time / denom;
  for (int i = 0; i < 4; ++i) out[i] = std::clamp(out[i], 0.0, 1.0);
  return out;
}

Mat3 rotation_from_quat(const Vec4& q) {
  double n = q.norm();
  if (!(n > 0.0) || !std::isfinite(n))
    throw NumericError("cannot build a rotation from a zero or non-finite quaternion");
  double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Vec4 rotation_from_quat_backward(const Vec4& q, const Mat3& g) {
  double n = q.norm();
  double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
  // dL/d(unit quaternion) from the nine rotation entries
  Vec4 gu;
  gu[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
  gu[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) +
               z * g(2, 0) + w * g(2, 1) - 2 * x * g(2, 2));
  gu[2] = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) -
               w * g(2, 0) + z * g(2, 1) - 2 * y * g(2, 2));
  gu[3] = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) +
               y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
  // chain through the normalization q_unit = q / |q|
  Vec4 qu(w, x, y, z);
  return (gu - qu * qu.dot(gu)) / n;
}

Mat3 covariance_from(const Vec4& rotation, const Vec3& scale) {
  Mat3 r = rotation_from_quat(rotation);
  return r * scale.cwiseProduct(scale).asDiagonal() * r.transpose();
}

void covariance_from_backward(const Vec4& rotation, const Vec3& scale, const Mat3& grad_cov,
                              Vec4* grad_rotation, Vec3* grad_scale) {
  Mat3 r = rotation_from_quat(rotation);
  // Sigma = R D R^T with D = diag(s^2). For entrywise upstream grads A:
  // dL/ds_i = 2 s_i r_i^T A r_i, dL/dR = (A + A^T) R D.
  Mat3 a = grad_cov;
  Vec3 s2 = scale.cwiseProduct(scale);
  if (grad_scale) {
    for (int i = 0; i < 3; ++i) {
      Vec3 ri = r.col(i);
      (*grad_scale)[i] = 2.0 * scale[i] * ri.dot(a * ri);
    }
  }
  if (grad_rotation) {
    Mat3 grad_r = (a + a.transpose()) * r * s2.asDiagonal();
    *grad_rotation = rotation_from_quat_backward(rotation, grad_r);
  }
}

double eval_gaussian(const Vec3& x, const Vec3& mean, const Mat3& cov) {
  Vec3 d = x - mean;
  Eigen::LDLT<Mat3> solver(cov);
  if (solver.info() != Eigen::Success)
    throw NumericError("gaussian covariance is not positive semi-definite");
  double m = d.dot(solver.solve(d));
  if (!std::isfinite(m)) throw NumericError("gaussian evaluation produced a non-finite value");
  return std::exp(-0.5 * m);
}

void Camera::validate(double tol) const {
  if (width <= 0 || height <= 0)
    throw DataError("camera '" + id + "' has non-positive image dimensions");
  if (!(fx > 0.0) || !(fy > 0.0))
    throw DataError("camera '" + id + "' has non-positive focal lengths");
  Mat3 should_be_identity = rotation.transpose() * rotation;
  double err = (should_be_identity - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!(err <= tol))
    throw DataError("camera '" + id + "' rotation is not orthonormal (max deviation " +
                    std::to_string(err) + ")");
  if (!rotation.allFinite() || !translation.allFinite())
    throw DataError("camera '" + id + "' has non-finite extrinsics");
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, int width, int height, double focal,
                       const std::string& id) {
  Vec3 forward = (target - eye).normalized();
  Vec3 world_up(0, 1, 0);
  Vec3 right = forward.cross(world_up);
  if (right.norm() < 1e-9) right = Vec3(1, 0, 0);  // looking straight up/down
  right.normalize();
  Vec3 down = forward.cross(right);  // y axis points down in the image
  Camera cam;
  cam.id = id;
  cam.width = width;
  cam.height = height;
  cam.fx = cam.fy = focal;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.rotation.row(0) = right.transpose();
  cam.rotation.row(1) = down.transpose();
  cam.rotation.row(2) = forward.transpose();
  cam.translation = -cam.rotation * eye;
  return cam;
}

}  // namespace seedsplat
