#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "seedsplat/common.hpp"

namespace seedsplat {

// Per-level grid resolutions. A resolution of N means N cells (N+1 nodes)
// along that axis over the [0,1] range.
struct LevelResolution {
  std::array<uint32_t, 4> res = {1, 1, 1, 1};  // x, y, z, t
};

struct HashFieldConfig {
  int levels = 16;              // L
  int features_per_entry = 2;   // m
  uint32_t table_size = 1u << 17;  // entries per level, power of two
  uint32_t base_resolution = 16;
  uint32_t max_resolution = 512;
  uint32_t time_base_resolution = 2;
  uint32_t time_max_resolution = 32;  // clamped to the frame grid by callers

  int output_dim() const { return levels * features_per_entry; }
};

// Sparse gradient on the hash table: (flat slot index, per-feature grads).
struct HashSlotGrad {
  uint32_t flat_index = 0;  // level * table_size * m + slot * m
  std::vector<double> grad;  // length m
};

// Multi-resolution space-time hash encoding. Each level interpolates the
// 16 corners of the enclosing 4D cell; corner features live in a fixed-size
// hash table per level, addressed by a prime-multiply XOR hash.
class HashField4D {
 public:
  HashField4D() = default;
  HashField4D(const HashFieldConfig& config, Rng& rng);

  const HashFieldConfig& config() const { return config_; }
  const std::vector<LevelResolution>& resolutions() const { return resolutions_; }

  // Flat table storage, level-major: level l occupies
  // [l * table_size * m, (l+1) * table_size * m).
  std::vector<double>& table() { return table_; }
  const std::vector<double>& table() const { return table_; }

  // Slot index for integer corner coordinates at one level: the XOR of the
  // coordinates times the per-axis primes {1, 2654435761, 805459861,
  // 3674653429}, masked to the table size. Every level hashes, even when its
  // node count would fit densely; collisions are tolerated.
  uint32_t hash_index(int level, const std::array<uint32_t, 4>& coords) const;

  // Encodes one level: quadrilinear interpolation of the 16 enclosing corner
  // entries. x must lie in [0,1]^4; writes m values to out.
  void encode_level(int level, const Eigen::Vector4d& x, double* out) const;

  // Full encoding: concatenation of all level outputs (length L * m).
  void encode_full(const Eigen::Vector4d& x, VecX* out) const;

  // Backward for one query: scatters upstream gradients (length L * m) into
  // sparse per-slot gradients, at most 16 per level. Gradients for corners
  // hashing to the same slot are accumulated into one entry.
  void encode_backward(const Eigen::Vector4d& x, const VecX& upstream,
                       std::vector<HashSlotGrad>* grads) const;

  // Spatial cell edge length of the finest level, in normalized units.
  double finest_cell_size() const;

 private:
  struct CornerWeights {
    std::array<uint32_t, 16> slots;
    std::array<double, 16> weights;
  };
  CornerWeights corners(int level, const Eigen::Vector4d& x) const;

  HashFieldConfig config_;
  std::vector<LevelResolution> resolutions_;
  std::vector<double> table_;  // values stay on the f32 grid
};

}  // namespace seedsplat
