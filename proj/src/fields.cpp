#include "seedsplat/fields.hpp"

#include <cmath>

namespace seedsplat {

Seed SeedStore::get(int i) const {
  Seed s;
  s.position = position(i);
  s.feature = Eigen::Map<const VecX>(features.value.data() + static_cast<size_t>(i) * feature_dim,
                                     feature_dim);
  s.scale = scale(i);
  s.active = active[i] != 0;
  return s;
}

void SeedStore::append(const Vec3& position, const VecX& feature, const Vec3& scale) {
  if (feature.size() != feature_dim) throw DataError("seed feature has the wrong length");
  for (int j = 0; j < 3; ++j) positions.push_back(quantize_f32(position[j]));
  features.append({feature.data(), feature.data() + feature.size()});
  scales.append({scale[0], scale[1], scale[2]});
  active.push_back(1);
}

int TemporalGaussians::active_count() const {
  int n = 0;
  for (uint8_t a : active) n += a != 0;
  return n;
}

void TemporalGaussians::resize(int seeds, int k_per_seed) {
  seed_count = seeds;
  k = k_per_seed;
  size_t n = static_cast<size_t>(seeds) * k_per_seed;
  mean.assign(n * 3, 0.0);
  quat.assign(n * 4, 0.0);
  scale.assign(n * 3, 0.0);
  opacity.assign(n, 0.0);
  color.assign(n * 3, 0.0);
  active.assign(n, 0);
}

void GaussianGrads::resize_zero(int count) {
  size_t n = static_cast<size_t>(count);
  mean.assign(n * 3, 0.0);
  quat.assign(n * 4, 0.0);
  scale.assign(n * 3, 0.0);
  opacity.assign(n, 0.0);
  color.assign(n * 3, 0.0);
}

void FieldGrads::reset(const FieldStack& stack, int seed_count) {
  features.assign(static_cast<size_t>(seed_count) * stack.config.feature_dim, 0.0);
  scales.assign(static_cast<size_t>(seed_count) * 3, 0.0);
  hash.clear();
  phi.reset_like(stack.phi);
  fw.reset_like(stack.f_w);
  fmu.reset_like(stack.f_mu);
  fo.reset_like(stack.f_o);
  fq.reset_like(stack.f_q);
  fs.reset_like(stack.f_s);
  fc.reset_like(stack.f_c);
}

FieldStack FieldStack::create(const FieldConfig& config, const HashFieldConfig& hash_config,
                              Rng& rng) {
  if (config.k < 1) throw DataError("at least one gaussian per seed is required");
  if (!(config.tau_alpha >= 0.0 && config.tau_alpha < 1.0))
    throw DataError("deactivation threshold must lie in [0, 1)");
  FieldStack stack;
  stack.config = config;
  stack.hash = HashField4D(hash_config, rng);
  const int enc = hash_config.output_dim();
  const int fd = config.feature_dim;
  const int h = config.hidden_dim;
  const int k = config.k;
  stack.phi = Mlp::create({enc, h, fd}, OutputActivation::kIdentity, rng);
  stack.f_w = Mlp::create({enc, h, 2}, OutputActivation::kSigmoid, rng);
  stack.f_mu = Mlp::create({fd, h, 3 * k}, OutputActivation::kIdentity, rng);
  stack.f_o = Mlp::create({fd + 3, h, k}, OutputActivation::kSigmoid, rng);
  stack.f_q = Mlp::create({fd + 3, h, 4 * k}, OutputActivation::kUnitNorm4, rng);
  stack.f_s = Mlp::create({fd + 3, h, 3 * k}, OutputActivation::kSigmoid, rng);
  stack.f_c = Mlp::create({fd + 3, h, 3 * k}, OutputActivation::kSigmoid, rng);
  // Bias the quaternion decoder toward the identity rotation so raw outputs
  // start far from the zero vector the normalization cannot handle.
  for (int i = 0; i < k; ++i) stack.f_q.layers.back().bias.value[4 * i] = 1.0;
  return stack;
}

VecX FieldStack::dynamic_residual(const SceneBounds& bounds, const Vec3& pos,
                                  double frame_time) const {
  Eigen::Vector4d x4 = normalize_query(bounds, pos, frame_time);
  VecX f_h;
  hash.encode_full(x4, &f_h);
  return phi.forward(f_h, nullptr);
}

Vec2 FieldStack::fusion_weights(const SceneBounds& bounds, const Vec3& pos,
                                double frame_time) const {
  Eigen::Vector4d x4 = normalize_query(bounds, pos, frame_time);
  VecX f_h;
  hash.encode_full(x4, &f_h);
  VecX w = f_w.forward(f_h, nullptr);
  return Vec2(w[0], w[1]);
}

VecX FieldStack::fuse_features(const VecX& f_s, const VecX& f_d, const SceneBounds& bounds,
                               const Vec3& pos, double frame_time) const {
  Vec2 w = fusion_weights(bounds, pos, frame_time);
  return fuse_weighted(f_s, f_d, config.no_static ? 0.0 : w[0], w[1]);
}

VecX fuse_weighted(const VecX& f_s, const VecX& f_d, double w_s, double w_d) {
  if (f_s.size() != f_d.size())
    throw DataError("static and dynamic features have mismatched lengths");
  return w_s * f_s + w_d * f_d;
}

Vec3 view_direction(const Vec3& pos, const Camera& camera, bool* fallback) {
  Vec3 d = pos - camera.center();
  double n = d.norm();
  if (fallback) *fallback = false;
  if (!(n > 1e-12)) {
    if (fallback) *fallback = true;
    return Vec3(0, 0, 1);
  }
  return d / n;
}

namespace {

void derive_one(const FieldStack& stack, const SeedStore& seeds, int s, const SceneBounds& bounds,
                double frame_time, const Camera& camera, const DeriveOptions& opts,
                TemporalGaussians* out, SeedDerivation* sd, int* fallback_count) {
  const int k = stack.config.k;
  const int fd = stack.config.feature_dim;
  const Vec3 pos = seeds.position(s);
  const Vec3 v = seeds.scale(s);

  sd->x4 = normalize_query(bounds, pos, frame_time);
  stack.hash.encode_full(sd->x4, &sd->f_h);
  sd->f_d = stack.phi.forward(sd->f_h, &sd->phi_cache);
  VecX w = stack.f_w.forward(sd->f_h, &sd->fw_cache);
  sd->w_s = stack.config.no_static ? 0.0 : w[0];
  sd->w_d = w[1];

  Eigen::Map<const VecX> f_static(seeds.features.value.data() + static_cast<size_t>(s) * fd, fd);
  sd->f_w = sd->w_s * f_static + sd->w_d * sd->f_d;

  bool fb = false;
  sd->dir = view_direction(pos, camera, &fb);
  if (fb) ++(*fallback_count);

  VecX dir_input(fd + 3);
  dir_input.head(fd) = sd->f_w;
  dir_input.tail<3>() = sd->dir;

  VecX offsets = stack.f_mu.forward(sd->f_w, &sd->fmu_cache);
  VecX opacities = stack.f_o.forward(dir_input, &sd->fo_cache);
  VecX quats = stack.f_q.forward(dir_input, &sd->fq_cache);
  VecX scale_factors = stack.f_s.forward(dir_input, &sd->fs_cache);
  VecX colors = stack.f_c.forward(dir_input, &sd->fc_cache);

  for (int i = 0; i < k; ++i) {
    const size_t tg = static_cast<size_t>(s) * k + i;
    for (int j = 0; j < 3; ++j) {
      out->mean[3 * tg + j] = pos[j] + v[j] * offsets[3 * i + j];
      out->scale[3 * tg + j] = v[j] * scale_factors[3 * i + j];
      out->color[3 * tg + j] = colors[3 * i + j];
    }
    for (int j = 0; j < 4; ++j) out->quat[4 * tg + j] = quats[4 * i + j];
    out->opacity[tg] = opacities[i];
    out->active[tg] = (!opts.apply_deactivation || opacities[i] >= stack.config.tau_alpha) ? 1 : 0;
  }
}

}  // namespace

void derive_all(const FieldStack& stack, const SeedStore& seeds, const SceneBounds& bounds,
                double frame_time, const Camera& camera, const DeriveOptions& opts,
                TemporalGaussians* out, DerivationCache* cache) {
  const int n = seeds.count();
  out->resize(n, stack.config.k);
  cache->per_seed.resize(n);
  cache->fallback_direction_count = 0;
  for (int s = 0; s < n; ++s) {
    if (!seeds.active[s]) continue;  // slots stay zeroed and inactive
    derive_one(stack, seeds, s, bounds, frame_time, camera, opts, out, &cache->per_seed[s],
               &cache->fallback_direction_count);
  }
}

std::vector<TemporalGaussian> derive_temporal_gaussians(const FieldStack& stack, const Seed& seed,
                                                        const SceneBounds& bounds,
                                                        double frame_time, const Camera& camera,
                                                        const DeriveOptions& opts) {
  SeedStore store;
  store.feature_dim = stack.config.feature_dim;
  store.append(seed.position, seed.feature, seed.scale);
  TemporalGaussians tg;
  DerivationCache cache;
  derive_all(stack, store, bounds, frame_time, camera, opts, &tg, &cache);
  std::vector<TemporalGaussian> result;
  for (int i = 0; i < tg.count(); ++i) {
    if (!tg.active[i]) continue;
    TemporalGaussian g;
    g.mean = Vec3(tg.mean[3 * i], tg.mean[3 * i + 1], tg.mean[3 * i + 2]);
    g.rotation = Vec4(tg.quat[4 * i], tg.quat[4 * i + 1], tg.quat[4 * i + 2], tg.quat[4 * i + 3]);
    g.scale = Vec3(tg.scale[3 * i], tg.scale[3 * i + 1], tg.scale[3 * i + 2]);
    g.opacity = tg.opacity[i];
    g.color = Vec3(tg.color[3 * i], tg.color[3 * i + 1], tg.color[3 * i + 2]);
    g.query_time = cache.per_seed[0].x4[3];
    g.seed_index = 0;
    g.local_index = i;
    result.push_back(g);
  }
  return result;
}

void fields_backward(const FieldStack& stack, const SeedStore& seeds,
                     const DerivationCache& cache, const TemporalGaussians& gaussians,
                     const GaussianGrads& upstream, FieldGrads* grads) {
  const int k = stack.config.k;
  const int fd = stack.config.feature_dim;
  if (gaussians.seed_count != seeds.count() ||
      static_cast<int>(cache.per_seed.size()) != seeds.count())
    throw DataError("fields backward called with mismatched forward state");

  for (int s = 0; s < seeds.count(); ++s) {
    if (!seeds.active[s]) continue;
    const SeedDerivation& sd = cache.per_seed[s];
    const Vec3 v = seeds.scale(s);
    const VecX& offsets = sd.fmu_cache.output;
    const VecX& scale_factors = sd.fs_cache.output;

    VecX g_off = VecX::Zero(3 * k);
    VecX g_op = VecX::Zero(k);
    VecX g_q = VecX::Zero(4 * k);
    VecX g_sf = VecX::Zero(3 * k);
    VecX g_col = VecX::Zero(3 * k);
    Vec3 dv = Vec3::Zero();

    for (int i = 0; i < k; ++i) {
      const size_t tg = static_cast<size_t>(s) * k + i;
      for (int j = 0; j < 3; ++j) {
        const double dmean = upstream.mean[3 * tg + j];
        g_off[3 * i + j] = v[j] * dmean;
        dv[j] += offsets[3 * i + j] * dmean;
        const double dscale = upstream.scale[3 * tg + j];
        g_sf[3 * i + j] = v[j] * dscale;
        dv[j] += scale_factors[3 * i + j] * dscale;
        g_col[3 * i + j] = upstream.color[3 * tg + j];
      }
      for (int j = 0; j < 4; ++j) g_q[4 * i + j] = upstream.quat[4 * tg + j];
      g_op[i] = upstream.opacity[tg];
    }

    VecX dfw = stack.f_mu.backward(sd.fmu_cache, g_off, &grads->fmu);
    VecX din = stack.f_o.backward(sd.fo_cache, g_op, &grads->fo);
    dfw += din.head(fd);
    din = stack.f_q.backward(sd.fq_cache, g_q, &grads->fq);
    dfw += din.head(fd);
    din = stack.f_s.backward(sd.fs_cache, g_sf, &grads->fs);
    dfw += din.head(fd);
    din = stack.f_c.backward(sd.fc_cache, g_col, &grads->fc);
    dfw += din.head(fd);
    // The view direction inputs are constants per (seed, camera); their
    // gradient slices are dropped.

    Eigen::Map<const VecX> f_static(seeds.features.value.data() + static_cast<size_t>(s) * fd, fd);
    Eigen::Map<VecX> g_static(grads->features.data() + static_cast<size_t>(s) * fd, fd);
    g_static += sd.w_s * dfw;
    const double dws = stack.config.no_static ? 0.0 : f_static.dot(dfw);
    const double dwd = sd.f_d.dot(dfw);
    VecX dfd = sd.w_d * dfw;

    VecX dfh = stack.phi.backward(sd.phi_cache, dfd, &grads->phi);
    Vec2 dw(dws, dwd);
    dfh += stack.f_w.backward(sd.fw_cache, dw, &grads->fw);
    stack.hash.encode_backward(sd.x4, dfh, &grads->hash);

    for (int j = 0; j < 3; ++j) grads->scales[3 * s + j] += dv[j];
  }
}

}  // namespace seedsplat
