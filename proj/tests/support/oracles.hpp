#pragma once

#include <vector>

#include "seedsplat/fields.hpp"
#include "seedsplat/rasterizer.hpp"

namespace seedsplat::testing {

// Brute-force compositor: global depth sort, then for every pixel a linear
// scan over all splats in order. No tiles, no bounding boxes. This is the
// reference the tiled renderer must match.
Image render_reference(const std::vector<Splat2D>& splats, int width, int height,
                       const Vec3& background, const RasterizeConfig& cfg);

// Direct SSIM from the definition: per valid window position, per channel,
// means/variances/covariance by explicit double loops over the window.
// Returns mean SSIM (not the loss).
double ssim_reference(const Image& a, const Image& b);

// Random scene helpers shared by unit and acceptance tests.
Image random_image(int width, int height, Rng& rng);
std::vector<Splat2D> random_splats(int count, int width, int height, Rng& rng);

// A miniature field stack plus a couple of seeds, sized for finite-difference
// work. Margin checks guard against rectifier/threshold kinks; callers should
// retry with the next RNG draw when ready() reports false.
struct MicroSetup {
  FieldConfig field_config;
  HashFieldConfig hash_config;
  FieldStack stack;
  SeedStore seeds;
  SceneBounds bounds;
  Camera camera;
  double frame_time = 0.0;
};

MicroSetup make_micro_setup(Rng& rng, int seed_count = 2, int k = 2);

}  // namespace seedsplat::testing
