#pragma once

#include <vector>

#include "seedsplat/hashfield.hpp"
#include "seedsplat/mlp.hpp"
#include "seedsplat/scene.hpp"

namespace seedsplat {

// Seed storage in structure-of-arrays form. Positions are fixed once grown;
// features and scales are learnable.
struct SeedStore {
  std::vector<double> positions;  // 3 per seed, f32 grid
  ParamTensor features;           // feature_dim per seed
  ParamTensor scales;             // 3 per seed, strictly positive
  std::vector<uint8_t> active;
  int feature_dim = 64;

  int count() const { return static_cast<int>(active.size()); }
  Vec3 position(int i) const {
    return Vec3(positions[3 * i], positions[3 * i + 1], positions[3 * i + 2]);
  }
  Vec3 scale(int i) const {
    return Vec3(scales.value[3 * i], scales.value[3 * i + 1], scales.value[3 * i + 2]);
  }
  Seed get(int i) const;
  void append(const Vec3& position, const VecX& feature, const Vec3& scale);
};

struct FieldConfig {
  int feature_dim = 64;  // length of f_s and f_d
  int hidden_dim = 64;
  int k = 10;              // gaussians decoded per seed
  double tau_alpha = 0.01;  // deactivation threshold on opacity
  bool no_static = false;   // ablation: drop the static term from fusion
};

// Gaussians decoded from every seed at one query time, stored flat with
// stride k: entry seed*k + i belongs to seed `seed`.
struct TemporalGaussians {
  int seed_count = 0;
  int k = 0;
  std::vector<double> mean;     // 3 per gaussian
  std::vector<double> quat;     // 4 per gaussian, unit (w, x, y, z)
  std::vector<double> scale;    // 3 per gaussian, positive
  std::vector<double> opacity;  // 1 per gaussian
  std::vector<double> color;    // 3 per gaussian
  std::vector<uint8_t> active;

  int count() const { return seed_count * k; }
  int active_count() const;
  void resize(int seeds, int k_per_seed);
};

// Per-seed cached intermediates from one derivation, consumed by backward.
struct SeedDerivation {
  Eigen::Vector4d x4;
  VecX f_h;
  VecX f_d;
  VecX f_w;
  double w_s = 0.0, w_d = 0.0;
  Vec3 dir = Vec3(0, 0, 1);
  MlpCache phi_cache, fw_cache, fmu_cache, fo_cache, fq_cache, fs_cache, fc_cache;
};

struct DerivationCache {
  std::vector<SeedDerivation> per_seed;
  int fallback_direction_count = 0;  // seeds coinciding with the camera center
};

// Upstream gradients on decoded gaussian parameters, same layout as
// TemporalGaussians. Quaternion gradients are with respect to the normalized
// quaternion.
struct GaussianGrads {
  std::vector<double> mean;
  std::vector<double> quat;
  std::vector<double> scale;
  std::vector<double> opacity;
  std::vector<double> color;

  void resize_zero(int count);
};

// Gradients produced by fields_backward.
struct FieldGrads {
  std::vector<double> features;  // matches SeedStore::features
  std::vector<double> scales;    // matches SeedStore::scales
  std::vector<HashSlotGrad> hash;
  MlpGrads phi, fw, fmu, fo, fq, fs, fc;

  void reset(const struct FieldStack& stack, int seed_count);
};

// The full spatio-temporal decoding stack: hash encoding, dynamic residual
// network, weight network, and the five gaussian-parameter decoders.
struct FieldStack {
  FieldConfig config;
  HashField4D hash;
  Mlp phi;   // f_h -> f_d
  Mlp f_w;   // f_h -> (w_s, w_d), sigmoid
  Mlp f_mu;  // f_w -> k*3 offsets, identity
  Mlp f_o;   // (f_w, d) -> k opacities, sigmoid
  Mlp f_q;   // (f_w, d) -> k*4 quaternions, unit-normalized
  Mlp f_s;   // (f_w, d) -> k*3 scale factors, sigmoid
  Mlp f_c;   // (f_w, d) -> k*3 colors, sigmoid

  static FieldStack create(const FieldConfig& config, const HashFieldConfig& hash_config,
                           Rng& rng);

  // Dynamic residual feature of one query point (Eq.-style phi of the hash
  // encoding); used directly by tests and inspection tools.
  VecX dynamic_residual(const SceneBounds& bounds, const Vec3& pos, double frame_time) const;

  // Fusion weights for one query point.
  Vec2 fusion_weights(const SceneBounds& bounds, const Vec3& pos, double frame_time) const;

  // Fused feature for one seed.
  VecX fuse_features(const VecX& f_s, const VecX& f_d, const SceneBounds& bounds, const Vec3& pos,
                     double frame_time) const;
};

// Weighted fusion helper: w_s * f_s + w_d * f_d (static term dropped when
// no_static is set by the caller passing w_s = 0).
VecX fuse_weighted(const VecX& f_s, const VecX& f_d, double w_s, double w_d);

// Unit vector from the camera center toward the point. Falls back to
// (0, 0, 1) when the point coincides with the camera center.
Vec3 view_direction(const Vec3& pos, const Camera& camera, bool* fallback = nullptr);

struct DeriveOptions {
  bool apply_deactivation = true;
};

// Decodes the gaussians of every active seed at one frame time. frame_time is
// in frame units (0 .. frame_count-1, fractional values allowed).
void derive_all(const FieldStack& stack, const SeedStore& seeds, const SceneBounds& bounds,
                double frame_time, const Camera& camera, const DeriveOptions& opts,
                TemporalGaussians* out, DerivationCache* cache);

// Convenience single-seed entry point mirroring derive_all for one seed;
// returns only the gaussians that survive deactivation.
std::vector<TemporalGaussian> derive_temporal_gaussians(const FieldStack& stack, const Seed& seed,
                                                        const SceneBounds& bounds,
                                                        double frame_time, const Camera& camera,
                                                        const DeriveOptions& opts = {});

// Full-chain backward from gaussian-parameter gradients to seed features,
// seed scales, hash table slots, and every MLP. Gradients accumulate into
// `grads`, which must have been reset to the current shapes.
void fields_backward(const FieldStack& stack, const SeedStore& seeds,
                     const DerivationCache& cache, const TemporalGaussians& gaussians,
                     const GaussianGrads& upstream, FieldGrads* grads);

}  // namespace seedsplat
