#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace seedsplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using RowMatX = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Unrecoverable problems with input data (missing files, bad formats,
// inconsistent datasets). Maps to CLI exit code 3.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric breakdowns (non-finite values where finite ones are required).
// Maps to CLI exit code 4.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Learnable state is kept on the float32 grid at all times so that the
// 32-bit checkpoint format round-trips bitwise.
// The volatile store blocks the optimizer from eliding the narrowing cast
// (gcc 11 at -O3 drops double->float->double chains in vectorized contexts),
// which would silently break the float32-grid guarantee on stored parameters.
inline double quantize_f32(double v) {
  volatile float f = static_cast<float>(v);
  return static_cast<double>(f);
}

inline bool finite(double v) { return std::isfinite(v); }

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

// Deterministic RNG. std::mt19937 is standardized but the <random>
// distributions are not, so the mappings to uniform/normal are explicit here.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) { reseed(seed); }

  void reseed(uint64_t seed) {
    // splitmix64 scramble of the seed into the 64-bit state
    state_ = seed + 0x9e3779b97f4a7c15ull;
    has_spare_ = false;
  }

  uint64_t next_u64() {
    // xorshift* generator
    uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545f4914f6cdd1dull;
  }

  // Uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n)
  uint64_t uniform_index(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  // Standard normal via Box-Muller
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 1e-300) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  uint64_t state_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Dense RGB image, row-major, channel-interleaved, values nominally in [0,1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // height * width * 3

  Image() = default;
  Image(int w, int h, double fill = 0.0) : width(w), height(h) {
    data.assign(static_cast<size_t>(w) * h * 3, fill);
  }
  double& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  double at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  size_t pixel_count() const { return static_cast<size_t>(width) * height; }
};

inline double sigmoid(double x) {
  if (x >= 0.0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace seedsplat
