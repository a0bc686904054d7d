#include "seedsplat/trainer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <sstream>

#include "seedsplat/losses.hpp"

namespace seedsplat {

namespace {

// Grown seeds and deactivation keep every scale strictly positive; Adam can
// momentarily push a component at or below zero, so clamp after each step.
constexpr double kMinSeedScale = 1e-6;

// Decoded scales start near v * sigmoid(kScaleBiasInit) so freshly
// initialized gaussians stay small; growth toward v is learned where needed.
constexpr double kScaleBiasInit = -2.5;

TemporalGaussian gaussian_at(const TemporalGaussians& tgs, int i) {
  TemporalGaussian g;
  g.mean = Vec3(tgs.mean[3 * i], tgs.mean[3 * i + 1], tgs.mean[3 * i + 2]);
  g.rotation = Vec4(tgs.quat[4 * i], tgs.quat[4 * i + 1], tgs.quat[4 * i + 2], tgs.quat[4 * i + 3]);
  g.scale = Vec3(tgs.scale[3 * i], tgs.scale[3 * i + 1], tgs.scale[3 * i + 2]);
  g.opacity = tgs.opacity[i];
  g.color = Vec3(tgs.color[3 * i], tgs.color[3 * i + 1], tgs.color[3 * i + 2]);
  g.active = tgs.active[i] != 0;
  g.seed_index = i / tgs.k;
  g.local_index = i % tgs.k;
  return g;
}

std::string format_row(const MetricsRow& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d, %.6f, %.6f, %.6f, %d, %d", r.iter, r.psnr, r.ssim, r.l1,
                r.seeds, r.active_gaussians);
  return buf;
}

}  // namespace

std::string TrainConfig::echo() const {
  std::ostringstream out;
  out << "iterations=" << iterations << "\n"
      << "rng_seed=" << rng_seed << "\n"
      << "lambda_ssim=" << lambda_ssim << "\n"
      << "lambda_volume=" << lambda_volume << "\n"
      << "k=" << k << "\n"
      << "feature_dim=" << feature_dim << "\n"
      << "hidden_dim=" << hidden_dim << "\n"
      << "tau_alpha=" << tau_alpha << "\n"
      << "hash_levels=" << hash.levels << "\n"
      << "hash_features=" << hash.features_per_entry << "\n"
      << "hash_table_size=" << hash.table_size << "\n"
      << "hash_base_resolution=" << hash.base_resolution << "\n"
      << "hash_max_resolution=" << hash.max_resolution << "\n"
      << "hash_time_base_resolution=" << hash.time_base_resolution << "\n"
      << "hash_time_max_resolution=" << hash.time_max_resolution << "\n"
      << "init_frames=" << init_frames << "\n"
      << "lr_features=" << lr_features << "\n"
      << "lr_scales=" << lr_scales << "\n"
      << "lr_hash=" << lr_hash << "\n"
      << "lr_mlp=" << lr_mlp << "\n"
      << "lr_mlp_final=" << lr_mlp_final << "\n"
      << "tau_grow=" << tau_grow << "\n"
      << "asg_interval=" << asg_interval << "\n"
      << "asg_start=" << asg_start << "\n"
      << "asg_end=" << asg_end << "\n"
      << "no_static=" << (no_static ? 1 : 0) << "\n"
      << "no_deactivation=" << (no_deactivation ? 1 : 0) << "\n"
      << "no_asg=" << (no_asg ? 1 : 0) << "\n"
      << "background=" << background.x() << "," << background.y() << "," << background.z()
      << "\n";
  return out.str();
}

std::string format_metrics(const std::vector<MetricsRow>& rows) {
  std::string out = "iter, psnr, ssim, l1, seeds, active_gaussians\n";
  for (const MetricsRow& r : rows) {
    out += format_row(r);
    out += "\n";
  }
  return out;
}

void AsgTracker::resize(int count) {
  grad_max.resize(count, 0.0);
  position_at_max.resize(count, Vec3::Zero());
}

void AsgTracker::reset() {
  std::fill(grad_max.begin(), grad_max.end(), 0.0);
  std::fill(position_at_max.begin(), position_at_max.end(), Vec3::Zero());
}

void AsgTracker::update(const TemporalGaussians& gaussians, const std::vector<Splat2D>& sorted,
                        const std::vector<double>& mean2d_norm) {
  if (sorted.size() != mean2d_norm.size())
    throw DataError("growth tracker update has mismatched splat/gradient counts");
  for (size_t p = 0; p < sorted.size(); ++p) {
    int tg = sorted[p].tg_index;
    if (tg < 0 || tg >= static_cast<int>(grad_max.size()))
      throw DataError("growth tracker update saw an out-of-range gaussian index");
    if (mean2d_norm[p] > grad_max[tg]) {
      grad_max[tg] = mean2d_norm[p];
      position_at_max[tg] =
          Vec3(gaussians.mean[3 * tg], gaussians.mean[3 * tg + 1], gaussians.mean[3 * tg + 2]);
    }
  }
}

int asg_grow(const AsgTracker& tracker, double tau_grow, const FieldStack& stack,
             const SceneBounds& bounds, SeedStore* seeds) {
  // Dedup voxels: the finest hash cell, scaled from normalized to world units
  // per axis.
  double cell = stack.hash.finest_cell_size();
  Vec3 lo = bounds.expanded_min();
  Vec3 extent = bounds.expanded_max() - lo;
  std::array<double, 3> edge;
  for (int c = 0; c < 3; ++c) edge[c] = std::max(cell * extent[c], 1e-12);

  auto voxel_of = [&](const Vec3& p) {
    std::array<int64_t, 3> key;
    for (int c = 0; c < 3; ++c) key[c] = static_cast<int64_t>(std::floor((p[c] - lo[c]) / edge[c]));
    return key;
  };

  std::map<std::array<int64_t, 3>, bool> occupied;
  for (int s = 0; s < seeds->count(); ++s) occupied[voxel_of(seeds->position(s))] = true;

  int k = stack.config.k;
  int grown = 0;
  for (size_t tg = 0; tg < tracker.grad_max.size(); ++tg) {
    if (!(tracker.grad_max[tg] > tau_grow)) continue;
    const Vec3& pos = tracker.position_at_max[tg];
    auto key = voxel_of(pos);
    if (occupied.count(key)) continue;

    int parent = static_cast<int>(tg) / k;
    // Scale from the 3 nearest current seeds, matching initialization.
    std::vector<double> dist;
    dist.reserve(seeds->count());
    for (int s = 0; s < seeds->count(); ++s) dist.push_back((seeds->position(s) - pos).norm());
    double v;
    if (dist.size() >= 3) {
      std::nth_element(dist.begin(), dist.begin() + 2, dist.end());
      v = (dist[0] + dist[1] + dist[2]) / 3.0;
    } else {
      v = 0.0;
    }
    Vec3 scale = v > 0 ? Vec3::Constant(v) : seeds->scale(parent);

    VecX feature(seeds->feature_dim);
    for (int f = 0; f < seeds->feature_dim; ++f)
      feature[f] = seeds->features.value[static_cast<size_t>(parent) * seeds->feature_dim + f];

    seeds->append(pos, feature, scale);
    occupied[key] = true;
    ++grown;
  }
  return grown;
}

Checkpoint init_model(const FrameDataset& dataset, const TrainConfig& config,
                      bool* scale_fallback) {
  if (config.iterations < 0) throw DataError("iteration count must be non-negative");
  if (config.k <= 0 || config.feature_dim <= 0 || config.hidden_dim <= 0)
    throw DataError("model dimensions must be positive");
  if (config.init_frames < 1) throw DataError("initialization needs at least one frame cloud");
  if (dataset.point_clouds.empty()) throw DataError("dataset has no point clouds");

  // Evenly spaced subset of the available per-frame clouds.
  int avail = static_cast<int>(dataset.point_clouds.size());
  int n = std::min(config.init_frames, avail);
  std::vector<std::vector<Vec3>> selected;
  for (int j = 0; j < n; ++j) {
    int idx = n == 1 ? 0 : static_cast<int>((static_cast<long>(j) * (avail - 1)) / (n - 1));
    selected.push_back(dataset.point_clouds[idx].points);
  }

  double voxel = default_fusion_voxel(selected);
  std::vector<Vec3> fused = fuse_point_clouds(selected, voxel);
  std::vector<Seed> seed_list = init_seeds(fused, config.feature_dim, voxel, scale_fallback);

  // Bounds cover every available cloud, not only the fused subset.
  std::vector<Vec3> all_points;
  for (const FramePoints& fp : dataset.point_clouds)
    all_points.insert(all_points.end(), fp.points.begin(), fp.points.end());

  Checkpoint model;
  model.bounds = SceneBounds::from_points(all_points, dataset.frame_count);

  FieldConfig field_config;
  field_config.feature_dim = config.feature_dim;
  field_config.hidden_dim = config.hidden_dim;
  field_config.k = config.k;
  field_config.tau_alpha = config.tau_alpha;
  field_config.no_static = config.no_static;

  HashFieldConfig hash_config = config.hash;
  // The finest useful time resolution is one cell per frame interval.
  uint32_t max_time = static_cast<uint32_t>(std::max(1, dataset.frame_count - 1));
  hash_config.time_max_resolution = std::min(hash_config.time_max_resolution, max_time);
  hash_config.time_base_resolution =
      std::min(hash_config.time_base_resolution, hash_config.time_max_resolution);

  Rng rng(config.rng_seed);
  model.stack = FieldStack::create(field_config, hash_config, rng);
  for (double& b : model.stack.f_s.layers.back().bias.value) b = quantize_f32(kScaleBiasInit);

  model.seeds.feature_dim = config.feature_dim;
  for (const Seed& s : seed_list) model.seeds.append(s.position, s.feature, s.scale);

  model.config_echo = config.echo();
  return model;
}

Image render_model(const Checkpoint& model, const Camera& camera, double frame_time,
                   const RasterizeConfig& raster, const Vec3& background, bool keep_inactive) {
  DeriveOptions opts;
  opts.apply_deactivation = !keep_inactive;
  TemporalGaussians tgs;
  DerivationCache cache;
  derive_all(model.stack, model.seeds, model.bounds, frame_time, camera, opts, &tgs, &cache);
  std::vector<Splat2D> splats = project_gaussians(tgs, camera, raster);
  RenderOutputs out = render(splats, camera.width, camera.height, background, raster, false);
  return out.image;
}

TrainOutput train(const FrameDataset& dataset, const TrainConfig& config,
                  std::ostream* progress) {
  std::vector<int> train_cams = dataset.camera_indices("train");
  if (train_cams.empty()) throw DataError("dataset has no training cameras");
  if (dataset.frame_count < 1) throw DataError("dataset has no frames");

  TrainOutput result;
  result.model = init_model(dataset, config);
  Checkpoint& model = result.model;

  if (config.iterations == 0) return result;

  // All training images up front; a desk-scale capture fits in memory.
  std::vector<std::vector<Image>> images(dataset.cameras.size());
  for (int ci : train_cams) {
    images[ci].reserve(dataset.frame_count);
    for (int f = 0; f < dataset.frame_count; ++f) images[ci].push_back(dataset.load_frame(ci, f));
  }

  RasterizeConfig raster;
  LossWeights weights;
  weights.lambda_ssim = config.lambda_ssim;
  weights.lambda_volume = config.lambda_volume;

  AdamConfig adam_features, adam_scales, adam_hash, adam_mlp;
  adam_features.lr = config.lr_features;
  adam_scales.lr = config.lr_scales;
  adam_hash.lr = config.lr_hash;

  // Optimizer state for the hash table lives here; the table itself stays
  // inside the field stack and is patched after every sparse step.
  ParamTensor hash_param;
  hash_param.value = model.stack.hash.table();
  hash_param.m1.assign(hash_param.value.size(), 0.0);
  hash_param.m2.assign(hash_param.value.size(), 0.0);
  int hash_width = model.stack.hash.config().features_per_entry;

  Rng rng(config.rng_seed + 1);
  AsgTracker tracker;
  tracker.resize(model.seeds.count() * config.k);

  TemporalGaussians tgs;
  DerivationCache cache;
  DeriveOptions derive_opts;
  derive_opts.apply_deactivation = !config.no_deactivation;

  GaussianGrads ggrads;
  FieldGrads fgrads;

  for (int iter = 1; iter <= config.iterations; ++iter) {
    int ci = train_cams[static_cast<size_t>(rng.uniform_index(train_cams.size()))];
    int fi = static_cast<int>(rng.uniform_index(static_cast<size_t>(dataset.frame_count)));
    const Camera& cam = dataset.cameras[ci];
    const Image& target = images[ci][fi];

    derive_all(model.stack, model.seeds, model.bounds, fi, cam, derive_opts, &tgs, &cache);
    std::vector<Splat2D> splats = project_gaussians(tgs, cam, raster);
    RenderOutputs out = render(splats, cam.width, cam.height, config.background, raster, true);

    Image grad_l1(cam.width, cam.height), grad_ssim(cam.width, cam.height);
    double l1 = loss_l1_backward(out.image, target, &grad_l1);
    double ssim_loss = loss_ssim_backward(out.image, target, &grad_ssim);
    double volume = loss_volume(tgs);
    (void)total_loss(l1, ssim_loss, volume, weights);

    Image grad_image(cam.width, cam.height);
    for (size_t n = 0; n < grad_image.data.size(); ++n)
      grad_image.data[n] = (1.0 - config.lambda_ssim) * grad_l1.data[n] +
                           config.lambda_ssim * grad_ssim.data[n];

    SplatGrads sgrads = render_backward(out, grad_image, raster);

    ggrads.resize_zero(tgs.count());
    for (size_t p = 0; p < out.sorted.size(); ++p) {
      const Splat2D& s = out.sorted[p];
      int tg = s.tg_index;
      TemporalGaussian g = gaussian_at(tgs, tg);
      ProjectGrads pg = project_backward(
          g, cam, raster, Vec2(sgrads.mean2d[2 * p], sgrads.mean2d[2 * p + 1]),
          Vec3(sgrads.cov[3 * p], sgrads.cov[3 * p + 1], sgrads.cov[3 * p + 2]));
      for (int c = 0; c < 3; ++c) {
        ggrads.mean[3 * tg + c] += pg.mean[c];
        ggrads.scale[3 * tg + c] += pg.scale[c];
        ggrads.color[3 * tg + c] += sgrads.color[3 * p + c];
      }
      for (int c = 0; c < 4; ++c) ggrads.quat[4 * tg + c] += pg.quat[c];
      ggrads.opacity[tg] += sgrads.opacity[p];
    }
    loss_volume_backward(tgs, config.lambda_volume, &ggrads);

    if (!config.no_asg) tracker.update(tgs, out.sorted, sgrads.mean2d_norm);

    fgrads.reset(model.stack, model.seeds.count());
    fields_backward(model.stack, model.seeds, cache, tgs, ggrads, &fgrads);

    // Parameter updates. The MLP rate decays exponentially over the run.
    adam_mlp.lr = config.lr_mlp *
                  std::pow(config.lr_mlp_final / config.lr_mlp,
                           static_cast<double>(iter) / config.iterations);

    if (!adam_step(model.seeds.features, fgrads.features, adam_features))
      ++result.skipped_updates;
    if (adam_step(model.seeds.scales, fgrads.scales, adam_scales)) {
      for (double& v : model.seeds.scales.value)
        if (v < kMinSeedScale) v = quantize_f32(kMinSeedScale);
    } else {
      ++result.skipped_updates;
    }

    // Hash gradients arrive per (seed, level) slot; merge duplicates before
    // the sparse step, in index order for determinism.
    std::map<uint32_t, std::vector<double>> merged;
    for (const HashSlotGrad& h : fgrads.hash) {
      auto [it, fresh] = merged.try_emplace(h.flat_index, h.grad);
      if (!fresh)
        for (size_t f = 0; f < it->second.size(); ++f) it->second[f] += h.grad[f];
    }
    std::vector<uint32_t> indices;
    std::vector<double> hash_grads;
    indices.reserve(merged.size());
    hash_grads.reserve(merged.size() * hash_width);
    for (auto& [idx, g] : merged) {
      indices.push_back(idx);
      hash_grads.insert(hash_grads.end(), g.begin(), g.end());
    }
    if (adam_step_sparse(hash_param, indices, hash_grads, hash_width, adam_hash)) {
      std::vector<double>& table = model.stack.hash.table();
      for (uint32_t base : indices)
        for (int f = 0; f < hash_width; ++f) table[base + f] = hash_param.value[base + f];
    } else {
      ++result.skipped_updates;
    }

    result.skipped_updates += model.stack.phi.adam_step_all(fgrads.phi, adam_mlp);
    result.skipped_updates += model.stack.f_w.adam_step_all(fgrads.fw, adam_mlp);
    result.skipped_updates += model.stack.f_mu.adam_step_all(fgrads.fmu, adam_mlp);
    result.skipped_updates += model.stack.f_o.adam_step_all(fgrads.fo, adam_mlp);
    result.skipped_updates += model.stack.f_q.adam_step_all(fgrads.fq, adam_mlp);
    result.skipped_updates += model.stack.f_s.adam_step_all(fgrads.fs, adam_mlp);
    result.skipped_updates += model.stack.f_c.adam_step_all(fgrads.fc, adam_mlp);

    MetricsRow row;
    row.iter = iter;
    row.psnr = psnr(out.image, target);
    row.ssim = 1.0 - ssim_loss;
    row.l1 = l1;
    row.seeds = model.seeds.count();
    row.active_gaussians = tgs.active_count();
    result.metrics.push_back(row);

    if (!config.no_asg && iter >= config.asg_start && iter <= config.asg_end &&
        config.asg_interval > 0 && (iter - config.asg_start) % config.asg_interval == 0) {
      int grown = asg_grow(tracker, config.tau_grow, model.stack, model.bounds, &model.seeds);
      result.grown_seeds += grown;
      tracker.resize(model.seeds.count() * config.k);
      tracker.reset();
    }

    if (progress && config.progress_interval > 0 &&
        (iter % config.progress_interval == 0 || iter == config.iterations)) {
      *progress << "iter " << iter << "/" << config.iterations << "  " << format_row(row)
                << "\n";
      progress->flush();
    }
  }
  return result;
}

std::vector<EvalRow> evaluate_model(const Checkpoint& model, const FrameDataset& dataset,
                                    const std::string& split, const RasterizeConfig& raster,
                                    const Vec3& background) {
  std::vector<EvalRow> rows;
  for (int ci : dataset.camera_indices(split)) {
    const Camera& cam = dataset.cameras[ci];
    for (int f = 0; f < dataset.frame_count; ++f) {
      Image target = dataset.load_frame(ci, f);
      Image rendered = render_model(model, cam, f, raster, background, false);
      EvalRow row;
      row.frame = f;
      row.cam = cam.id;
      row.psnr = psnr(rendered, target);
      row.ssim = 1.0 - loss_ssim(rendered, target);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace seedsplat
