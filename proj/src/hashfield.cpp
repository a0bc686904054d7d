#include "seedsplat/hashfield.hpp"

#include <cmath>

namespace seedsplat {

namespace {

constexpr std::array<uint32_t, 4> kPrimes = {1u, 2654435761u, 805459861u, 3674653429u};

// Per-level resolutions follow a geometric progression from base to max.
uint32_t level_resolution(uint32_t base, uint32_t max, int level, int levels) {
  if (levels <= 1 || max <= base) return base;
  double growth = std::exp(std::log(static_cast<double>(max) / base) / (levels - 1));
  double r = base * std::pow(growth, level);
  uint32_t n = static_cast<uint32_t>(std::floor(r + 1e-9));
  if (n < base) n = base;
  if (n > max) n = max;
  return n;
}

}  // namespace

HashField4D::HashField4D(const HashFieldConfig& config, Rng& rng) : config_(config) {
  if (config_.levels < 1) throw DataError("hash field needs at least one level");
  if (config_.features_per_entry < 1) throw DataError("hash field needs at least one feature per entry");
  if (config_.table_size == 0 || (config_.table_size & (config_.table_size - 1)) != 0)
    throw DataError("hash table size must be a power of two");
  resolutions_.resize(config_.levels);
  for (int l = 0; l < config_.levels; ++l) {
    uint32_t spatial = level_resolution(config_.base_resolution, config_.max_resolution, l, config_.levels);
    uint32_t temporal = level_resolution(config_.time_base_resolution, config_.time_max_resolution, l, config_.levels);
    resolutions_[l].res = {spatial, spatial, spatial, temporal};
  }
  size_t total = static_cast<size_t>(config_.levels) * config_.table_size * config_.features_per_entry;
  table_.resize(total);
  for (double& v : table_) v = quantize_f32(rng.uniform(-1e-4, 1e-4));
}

uint32_t HashField4D::hash_index(int level, const std::array<uint32_t, 4>& coords) const {
  (void)level;  // every level hashes the same way; collisions are tolerated
  uint32_t h = 0;
  for (int i = 0; i < 4; ++i) h ^= coords[i] * kPrimes[i];
  return h & (config_.table_size - 1);
}

HashField4D::CornerWeights HashField4D::corners(int level, const Eigen::Vector4d& x) const {
  const auto& res = resolutions_[level].res;
  std::array<uint32_t, 4> base;
  std::array<double, 4> frac;
  for (int i = 0; i < 4; ++i) {
    double scaled = x[i] * res[i];
    double fl = std::floor(scaled);
    // Clamp so queries at exactly 1.0 (or slightly outside) use the last cell.
    if (fl < 0.0) fl = 0.0;
    if (fl > res[i] - 1.0) fl = res[i] - 1.0;
    base[i] = static_cast<uint32_t>(fl);
    double f = scaled - fl;
    frac[i] = f < 0.0 ? 0.0 : (f > 1.0 ? 1.0 : f);
  }
  CornerWeights cw;
  for (int c = 0; c < 16; ++c) {
    std::array<uint32_t, 4> coords;
    double w = 1.0;
    for (int i = 0; i < 4; ++i) {
      int bit = (c >> i) & 1;
      coords[i] = base[i] + bit;
      w *= bit ? frac[i] : (1.0 - frac[i]);
    }
    cw.slots[c] = hash_index(level, coords);
    cw.weights[c] = w;
  }
  return cw;
}

void HashField4D::encode_level(int level, const Eigen::Vector4d& x, double* out) const {
  const int m = config_.features_per_entry;
  const size_t level_base = static_cast<size_t>(level) * config_.table_size * m;
  CornerWeights cw = corners(level, x);
  for (int f = 0; f < m; ++f) out[f] = 0.0;
  for (int c = 0; c < 16; ++c) {
    const double w = cw.weights[c];
    if (w == 0.0) continue;
    const double* entry = table_.data() + level_base + static_cast<size_t>(cw.slots[c]) * m;
    for (int f = 0; f < m; ++f) out[f] += w * entry[f];
  }
}

void HashField4D::encode_full(const Eigen::Vector4d& x, VecX* out) const {
  const int m = config_.features_per_entry;
  out->resize(config_.levels * m);
  for (int l = 0; l < config_.levels; ++l) encode_level(l, x, out->data() + static_cast<size_t>(l) * m);
}

void HashField4D::encode_backward(const Eigen::Vector4d& x, const VecX& upstream,
                                  std::vector<HashSlotGrad>* grads) const {
  const int m = config_.features_per_entry;
  if (upstream.size() != config_.levels * m)
    throw DataError("hash encode upstream gradient has wrong length");
  for (int l = 0; l < config_.levels; ++l) {
    const size_t level_base = static_cast<size_t>(l) * config_.table_size * m;
    CornerWeights cw = corners(l, x);
    // Corners may collide inside one cell; merge their contributions so each
    // slot appears at most once per level of this query.
    const size_t level_start = grads->size();
    for (int c = 0; c < 16; ++c) {
      const double w = cw.weights[c];
      if (w == 0.0) continue;
      uint32_t flat = static_cast<uint32_t>(level_base + static_cast<size_t>(cw.slots[c]) * m);
      bool merged = false;
      for (size_t i = level_start; i < grads->size(); ++i) {
        if ((*grads)[i].flat_index == flat) {
          for (int f = 0; f < m; ++f) (*grads)[i].grad[f] += w * upstream[l * m + f];
          merged = true;
          break;
        }
      }
      if (!merged) {
        HashSlotGrad g;
        g.flat_index = flat;
        g.grad.resize(m);
        for (int f = 0; f < m; ++f) g.grad[f] = w * upstream[l * m + f];
        grads->push_back(std::move(g));
      }
    }
  }
}

double HashField4D::finest_cell_size() const {
  uint32_t finest = resolutions_.back().res[0];
  return 1.0 / static_cast<double>(finest);
}

}  // namespace seedsplat
