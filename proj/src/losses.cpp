#include "seedsplat/losses.hpp"

#include <array>
#include <cmath>

namespace seedsplat {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;  // (k1 * data_range)^2
constexpr double kC2 = 0.03 * 0.03;

void check_same_shape(const Image& a, const Image& b, const char* what) {
  if (a.width != b.width || a.height != b.height)
    throw DataError(std::string(what) + ": image dimensions differ (" + std::to_string(a.width) +
                    "x" + std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                    std::to_string(b.height) + ")");
}

std::array<double, kWindow> gaussian_kernel() {
  std::array<double, kWindow> k;
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    double d = i - (kWindow - 1) / 2.0;
    k[i] = std::exp(-0.5 * d * d / (kSigma * kSigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Valid-region separable filtering of one channel plane (stride 3 source).
// out has dimensions (h - kWindow + 1) x (w - kWindow + 1).
void filter_valid(const double* src, int w, int h, const std::array<double, kWindow>& k,
                  std::vector<double>& tmp, std::vector<double>& out) {
  const int vw = w - kWindow + 1;
  const int vh = h - kWindow + 1;
  tmp.assign(static_cast<size_t>(h) * vw, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < vw; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWindow; ++i) acc += k[i] * src[(static_cast<size_t>(y) * w + x + i) * 3];
      tmp[static_cast<size_t>(y) * vw + x] = acc;
    }
  out.assign(static_cast<size_t>(vh) * vw, 0.0);
  for (int y = 0; y < vh; ++y)
    for (int x = 0; x < vw; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWindow; ++i) acc += k[i] * tmp[static_cast<size_t>(y + i) * vw + x];
      out[static_cast<size_t>(y) * vw + x] = acc;
    }
}

// Zero-padded "spread" convolution: places a valid-region map back onto the
// full image grid and convolves with the (symmetric) window, realizing the
// transpose of filter_valid.
void spread_full(const std::vector<double>& valid, int w, int h,
                 const std::array<double, kWindow>& k, std::vector<double>& tmp,
                 std::vector<double>& out) {
  const int vw = w - kWindow + 1;
  const int vh = h - kWindow + 1;
  tmp.assign(static_cast<size_t>(vh) * w, 0.0);
  for (int y = 0; y < vh; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      const int i0 = std::max(0, x - vw + 1), i1 = std::min(kWindow - 1, x);
      for (int i = i0; i <= i1; ++i) acc += k[i] * valid[static_cast<size_t>(y) * vw + (x - i)];
      tmp[static_cast<size_t>(y) * w + x] = acc;
    }
  out.assign(static_cast<size_t>(h) * w, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      const int i0 = std::max(0, y - vh + 1), i1 = std::min(kWindow - 1, y);
      for (int i = i0; i <= i1; ++i) acc += k[i] * tmp[static_cast<size_t>(y - i) * w + x];
      out[static_cast<size_t>(y) * w + x] = acc;
    }
}

struct SsimMaps {
  std::vector<double> ux, uy, exx, eyy, exy;
  int vw = 0, vh = 0;
};

void compute_maps(const Image& x, const Image& y, int channel,
                  const std::array<double, kWindow>& k, SsimMaps* maps) {
  const int w = x.width, h = x.height;
  maps->vw = w - kWindow + 1;
  maps->vh = h - kWindow + 1;
  const size_t n = static_cast<size_t>(w) * h;
  std::vector<double> xx(n * 3, 0.0), yy(n * 3, 0.0), xy(n * 3, 0.0);
  for (size_t p = 0; p < n; ++p) {
    double a = x.data[3 * p + channel], b = y.data[3 * p + channel];
    xx[3 * p] = a * a;
    yy[3 * p] = b * b;
    xy[3 * p] = a * b;
  }
  std::vector<double> tmp;
  filter_valid(x.data.data() + channel, w, h, k, tmp, maps->ux);
  filter_valid(y.data.data() + channel, w, h, k, tmp, maps->uy);
  filter_valid(xx.data(), w, h, k, tmp, maps->exx);
  filter_valid(yy.data(), w, h, k, tmp, maps->eyy);
  filter_valid(xy.data(), w, h, k, tmp, maps->exy);
}

}  // namespace

double loss_l1(const Image& rendered, const Image& target) {
  check_same_shape(rendered, target, "l1 loss");
  double acc = 0.0;
  for (size_t i = 0; i < rendered.data.size(); ++i)
    acc += std::abs(rendered.data[i] - target.data[i]);
  return acc / static_cast<double>(rendered.data.size());
}

double loss_l1_backward(const Image& rendered, const Image& target, Image* grad) {
  check_same_shape(rendered, target, "l1 loss");
  *grad = Image(rendered.width, rendered.height);
  const double inv_n = 1.0 / static_cast<double>(rendered.data.size());
  double acc = 0.0;
  for (size_t i = 0; i < rendered.data.size(); ++i) {
    double d = rendered.data[i] - target.data[i];
    acc += std::abs(d);
    grad->data[i] = d > 0.0 ? inv_n : (d < 0.0 ? -inv_n : 0.0);
  }
  return acc * inv_n;
}

double loss_ssim(const Image& rendered, const Image& target) {
  return loss_ssim_backward(rendered, target, nullptr);
}

double loss_ssim_backward(const Image& rendered, const Image& target, Image* grad) {
  check_same_shape(rendered, target, "ssim loss");
  if (rendered.width < kWindow || rendered.height < kWindow)
    throw DataError("ssim loss needs images of at least " + std::to_string(kWindow) + "x" +
                    std::to_string(kWindow) + " pixels");
  const auto k = gaussian_kernel();
  const int w = rendered.width, h = rendered.height;
  if (grad) *grad = Image(w, h);

  double total = 0.0;
  SsimMaps maps;
  std::vector<double> g_ux, g_exx, g_exy, tmp, full;
  for (int c = 0; c < 3; ++c) {
    compute_maps(rendered, target, c, k, &maps);
    const size_t vn = static_cast<size_t>(maps.vw) * maps.vh;
    const double inv_n = 1.0 / (3.0 * static_cast<double>(vn));
    if (grad) {
      g_ux.assign(vn, 0.0);
      g_exx.assign(vn, 0.0);
      g_exy.assign(vn, 0.0);
    }
    for (size_t q = 0; q < vn; ++q) {
      const double ux = maps.ux[q], uy = maps.uy[q];
      const double vx = maps.exx[q] - ux * ux;
      const double vy = maps.eyy[q] - uy * uy;
      const double cov = maps.exy[q] - ux * uy;
      const double a1 = 2.0 * ux * uy + kC1;
      const double a2 = 2.0 * cov + kC2;
      const double b1 = ux * ux + uy * uy + kC1;
      const double b2 = vx + vy + kC2;
      const double s = (a1 * a2) / (b1 * b2);
      total += s;
      if (grad) {
        // d(mean SSIM)/d{ux, Exx, Exy}; uy/Eyy/Exy-by-target not needed.
        const double d_ux =
            2.0 * uy * (a2 - a1) / (b1 * b2) - 2.0 * ux * s * (1.0 / b1 - 1.0 / b2);
        const double d_exx = -s / b2;
        const double d_exy = 2.0 * a1 / (b1 * b2);
        g_ux[q] = d_ux * inv_n;
        g_exx[q] = d_exx * inv_n;
        g_exy[q] = d_exy * inv_n;
      }
    }
    if (grad) {
      // Chain each map's gradient back through the window filtering. The
      // final sign flips because the loss is 1 - mean SSIM.
      spread_full(g_ux, w, h, k, tmp, full);
      for (size_t p = 0; p < static_cast<size_t>(w) * h; ++p) grad->data[3 * p + c] -= full[p];
      spread_full(g_exx, w, h, k, tmp, full);
      for (size_t p = 0; p < static_cast<size_t>(w) * h; ++p)
        grad->data[3 * p + c] -= 2.0 * rendered.data[3 * p + c] * full[p];
      spread_full(g_exy, w, h, k, tmp, full);
      for (size_t p = 0; p < static_cast<size_t>(w) * h; ++p)
        grad->data[3 * p + c] -= target.data[3 * p + c] * full[p];
    }
  }
  const size_t vn = static_cast<size_t>(maps.vw) * maps.vh;
  return 1.0 - total / (3.0 * static_cast<double>(vn));
}

double psnr(const Image& rendered, const Image& target) {
  check_same_shape(rendered, target, "psnr");
  double mse = 0.0;
  for (size_t i = 0; i < rendered.data.size(); ++i) {
    double d = rendered.data[i] - target.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(rendered.data.size());
  if (mse <= 0.0) return 99.0;
  double value = -10.0 * std::log10(mse);
  return value > 99.0 ? 99.0 : value;
}

double loss_volume(const TemporalGaussians& gaussians) {
  double acc = 0.0;
  for (int i = 0; i < gaussians.count(); ++i) {
    if (!gaussians.active[i]) continue;
    acc += gaussians.scale[3 * i] * gaussians.scale[3 * i + 1] * gaussians.scale[3 * i + 2];
  }
  return acc;
}

void loss_volume_backward(const TemporalGaussians& gaussians, double weight,
                          GaussianGrads* grads) {
  for (int i = 0; i < gaussians.count(); ++i) {
    if (!gaussians.active[i]) continue;
    const double s0 = gaussians.scale[3 * i], s1 = gaussians.scale[3 * i + 1],
                 s2 = gaussians.scale[3 * i + 2];
    grads->scale[3 * i] += weight * s1 * s2;
    grads->scale[3 * i + 1] += weight * s0 * s2;
    grads->scale[3 * i + 2] += weight * s0 * s1;
  }
}

double mean_scale_product(const TemporalGaussians& gaussians) {
  double acc = 0.0;
  int n = 0;
  for (int i = 0; i < gaussians.count(); ++i) {
    if (!gaussians.active[i]) continue;
    acc += gaussians.scale[3 * i] * gaussians.scale[3 * i + 1] * gaussians.scale[3 * i + 2];
    ++n;
  }
  return n == 0 ? 0.0 : acc / n;
}

double total_loss(double l1, double ssim, double volume, const LossWeights& weights) {
  return (1.0 - weights.lambda_ssim) * l1 + weights.lambda_ssim * ssim +
         weights.lambda_volume * volume;
}

}  // namespace seedsplat
