#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "seedsplat/io.hpp"
#include "seedsplat/rasterizer.hpp"

namespace seedsplat {

struct TrainConfig {
  int iterations = 3000;
  uint64_t rng_seed = 42;

  // Loss: (1 - lambda_ssim) L1 + lambda_ssim (1 - SSIM) + lambda_volume sum(prod(s)).
  double lambda_ssim = 0.2;
  double lambda_volume = 0.001;

  // Model shape.
  int k = 10;
  int feature_dim = 64;
  int hidden_dim = 64;
  double tau_alpha = 0.01;
  HashFieldConfig hash;

  // Initialization: number of per-frame clouds fused for the seed layout.
  int init_frames = 6;

  // Learning rates. MLP rate decays exponentially to lr_mlp_final over the
  // run; the other groups stay constant.
  double lr_features = 0.0075;
  double lr_scales = 0.005;
  double lr_hash = 0.01;
  double lr_mlp = 0.002;
  double lr_mlp_final = 0.0002;

  // Seed growing: every asg_interval iterations within [asg_start, asg_end],
  // gaussians whose peak view-space positional gradient exceeded tau_grow
  // spawn a seed at the position where the peak occurred.
  double tau_grow = 0.001;
  int asg_interval = 100;
  int asg_start = 3000;
  int asg_end = 15000;

  // Ablations.
  bool no_static = false;
  bool no_deactivation = false;
  bool no_asg = false;

  Vec3 background = Vec3::Zero();
  int progress_interval = 100;  // progress stream cadence, 0 silences it

  // Human-readable key=value dump, embedded in checkpoints.
  std::string echo() const;
};

// One per-iteration metrics record; ssim is the similarity (not the loss).
struct MetricsRow {
  int iter = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double l1 = 0.0;
  int seeds = 0;
  int active_gaussians = 0;
};

// "iter, psnr, ssim, l1, seeds, active_gaussians" header plus one line per
// row, fixed six-decimal formatting so identical runs produce identical
// bytes.
std::string format_metrics(const std::vector<MetricsRow>& rows);

// Peak view-space positional gradient per temporal gaussian, and the world
// position the gaussian had when the peak was observed. Maxima accumulate
// until reset (after each growth event).
struct AsgTracker {
  std::vector<double> grad_max;
  std::vector<Vec3> position_at_max;

  void resize(int count);
  void reset();
  void update(const TemporalGaussians& gaussians, const std::vector<Splat2D>& sorted,
              const std::vector<double>& mean2d_norm);
};

// Grows one seed per gaussian whose tracked peak exceeds tau_grow, skipping
// candidates that land in an occupied voxel of the finest hash resolution
// (occupied by an existing seed or an earlier candidate). New seeds copy the
// parent's static feature, take their scale from the 3 nearest existing
// seeds, and start with fresh optimizer state. Returns the number grown.
int asg_grow(const AsgTracker& tracker, double tau_grow, const FieldStack& stack,
             const SceneBounds& bounds, SeedStore* seeds);

// Fuses the configured number of per-frame clouds, derives bounds from all
// available points, and builds seeds plus a fresh field stack.
Checkpoint init_model(const FrameDataset& dataset, const TrainConfig& config,
                      bool* scale_fallback = nullptr);

// Renders the model from one camera at a frame time (fractional allowed;
// values outside [0, frame_count-1] extrapolate). keep_inactive bypasses the
// opacity-threshold deactivation.
Image render_model(const Checkpoint& model, const Camera& camera, double frame_time,
                   const RasterizeConfig& raster = {}, const Vec3& background = Vec3::Zero(),
                   bool keep_inactive = false);

struct TrainOutput {
  Checkpoint model;
  std::vector<MetricsRow> metrics;  // one row per iteration
  int grown_seeds = 0;
  int skipped_updates = 0;  // optimizer steps dropped due to non-finite gradients
};

// Full optimization loop: uniformly samples a (training camera, frame) pair
// per iteration, renders, backpropagates through rasterization and the field
// stack, and steps every parameter group. Deterministic for a fixed config.
TrainOutput train(const FrameDataset& dataset, const TrainConfig& config,
                  std::ostream* progress = nullptr);

struct EvalRow {
  int frame = 0;
  std::string cam;
  double psnr = 0.0;
  double ssim = 0.0;
};

// Scores every (camera in split, frame) pair against the stored images.
std::vector<EvalRow> evaluate_model(const Checkpoint& model, const FrameDataset& dataset,
                                    const std::string& split,
                                    const RasterizeConfig& raster = {},
                                    const Vec3& background = Vec3::Zero());

}  // namespace seedsplat
