#include "support/oracles.hpp"

#include <algorithm>
#include <cmath>

namespace seedsplat::testing {

Image render_reference(const std::vector<Splat2D>& splats, int width, int height,
                       const Vec3& background, const RasterizeConfig& cfg) {
  std::vector<Splat2D> sorted = splats;
  std::sort(sorted.begin(), sorted.end(), [](const Splat2D& a, const Splat2D& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.tg_index < b.tg_index;
  });
  Image image(width, height);
  for (int py = 0; py < height; ++py) {
    for (int px = 0; px < width; ++px) {
      double t = 1.0;
      Vec3 c = Vec3::Zero();
      Vec2 p(px + 0.5, py + 0.5);
      for (const Splat2D& s : sorted) {
        double a = alpha_at(s, p, cfg);
        if (a < cfg.alpha_min) continue;
        c += s.color * (a * t);
        t *= 1.0 - a;
      }
      c += t * background;
      for (int ch = 0; ch < 3; ++ch) image.at(py, px, ch) = c[ch];
    }
  }
  return image;
}

double ssim_reference(const Image& a, const Image& b) {
  constexpr int win = 11;
  constexpr double sigma = 1.5;
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double kernel[win][win];
  double ksum = 0.0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      double dy = i - 5.0, dx = j - 5.0;
      kernel[i][j] = std::exp(-0.5 * (dx * dx + dy * dy) / (sigma * sigma));
      ksum += kernel[i][j];
    }
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) kernel[i][j] /= ksum;

  double total = 0.0;
  size_t count = 0;
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y + win <= a.height; ++y) {
      for (int x = 0; x + win <= a.width; ++x) {
        double ux = 0, uy = 0, xx = 0, yy = 0, xy = 0;
        for (int i = 0; i < win; ++i)
          for (int j = 0; j < win; ++j) {
            double w = kernel[i][j];
            double va = a.at(y + i, x + j, c);
            double vb = b.at(y + i, x + j, c);
            ux += w * va;
            uy += w * vb;
            xx += w * va * va;
            yy += w * vb * vb;
            xy += w * va * vb;
          }
        double vx = xx - ux * ux, vy = yy - uy * uy, cov = xy - ux * uy;
        double s = ((2 * ux * uy + c1) * (2 * cov + c2)) /
                   ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        total += s;
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

Image random_image(int width, int height, Rng& rng) {
  Image img(width, height);
  for (double& v : img.data) v = rng.uniform();
  return img;
}

std::vector<Splat2D> random_splats(int count, int width, int height, Rng& rng) {
  std::vector<Splat2D> splats;
  for (int i = 0; i < count; ++i) {
    Splat2D s;
    s.mean2d = Vec2(rng.uniform(-3.0, width + 3.0), rng.uniform(-3.0, height + 3.0));
    // random SPD covariance: A A^T + dilation-ish floor
    double a11 = rng.uniform(-2.0, 2.0), a12 = rng.uniform(-2.0, 2.0);
    double a21 = rng.uniform(-2.0, 2.0), a22 = rng.uniform(-2.0, 2.0);
    s.cov_a = a11 * a11 + a12 * a12 + 0.3;
    s.cov_b = a11 * a21 + a12 * a22;
    s.cov_c = a21 * a21 + a22 * a22 + 0.3;
    s.depth = rng.uniform(0.5, 10.0);
    s.color = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
    s.opacity = rng.uniform(0.05, 0.95);
    s.tg_index = i;
    s.seed_index = i;
    s.local_index = 0;
    splats.push_back(s);
  }
  return splats;
}

MicroSetup make_micro_setup(Rng& rng, int seed_count, int k) {
  MicroSetup m;
  m.field_config.feature_dim = 8;
  m.field_config.hidden_dim = 16;
  m.field_config.k = k;
  m.field_config.tau_alpha = 0.01;
  m.hash_config.levels = 4;
  m.hash_config.features_per_entry = 2;
  m.hash_config.table_size = 64;
  m.hash_config.base_resolution = 2;
  m.hash_config.max_resolution = 8;
  m.hash_config.time_base_resolution = 1;
  m.hash_config.time_max_resolution = 4;
  m.stack = FieldStack::create(m.field_config, m.hash_config, rng);
  // Larger-than-init table entries so hash gradients are exercised at a
  // meaningful scale.
  for (double& v : m.stack.hash.table()) v = quantize_f32(rng.uniform(-0.5, 0.5));

  m.bounds.aabb_min = Vec3(-1, -1, -1);
  m.bounds.aabb_max = Vec3(1, 1, 1);
  m.bounds.frame_count = 4;

  m.seeds.feature_dim = m.field_config.feature_dim;
  for (int i = 0; i < seed_count; ++i) {
    Vec3 pos(rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8));
    VecX feat(m.field_config.feature_dim);
    for (int j = 0; j < feat.size(); ++j) feat[j] = rng.uniform(-0.5, 0.5);
    Vec3 scale(rng.uniform(0.1, 0.5), rng.uniform(0.1, 0.5), rng.uniform(0.1, 0.5));
    m.seeds.append(pos, feat, scale);
  }

  m.camera = Camera::look_at(Vec3(0, 0.3, -4.0), Vec3(0, 0, 0), 8, 8, 8.0, "micro");
  m.frame_time = rng.uniform(0.0, 3.0);
  return m;
}

}  // namespace seedsplat::testing
