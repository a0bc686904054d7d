#include "seedsplat/mlp.hpp"

#include <cmath>

namespace seedsplat {

namespace {

bool grads_finite(const std::vector<double>& g) {
  for (double v : g)
    if (!std::isfinite(v)) return false;
  return true;
}

void adam_update_entry(ParamTensor& t, size_t i, double g, const AdamConfig& cfg, double bc1,
                       double bc2) {
  t.m1[i] = cfg.beta1 * t.m1[i] + (1.0 - cfg.beta1) * g;
  t.m2[i] = cfg.beta2 * t.m2[i] + (1.0 - cfg.beta2) * g * g;
  double mhat = t.m1[i] / bc1;
  double vhat = t.m2[i] / bc2;
  double updated = t.value[i] - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  if (!std::isfinite(updated)) throw NumericError("optimizer produced a non-finite parameter");
  t.value[i] = quantize_f32(updated);
}

}  // namespace

bool adam_step(ParamTensor& tensor, const std::vector<double>& grad, const AdamConfig& cfg) {
  if (grad.size() != tensor.value.size())
    throw DataError("optimizer gradient length does not match parameter tensor");
  if (!grads_finite(grad)) return false;
  tensor.step += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(tensor.step));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(tensor.step));
  for (size_t i = 0; i < grad.size(); ++i) adam_update_entry(tensor, i, grad[i], cfg, bc1, bc2);
  return true;
}

bool adam_step_sparse(ParamTensor& tensor, const std::vector<uint32_t>& indices,
                      const std::vector<double>& grads, int entry_width, const AdamConfig& cfg) {
  if (indices.size() * static_cast<size_t>(entry_width) != grads.size())
    throw DataError("sparse optimizer update has mismatched index/gradient lengths");
  if (!grads_finite(grads)) return false;
  tensor.step += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(tensor.step));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(tensor.step));
  for (size_t n = 0; n < indices.size(); ++n) {
    size_t base = indices[n];
    for (int f = 0; f < entry_width; ++f)
      adam_update_entry(tensor, base + f, grads[n * entry_width + f], cfg, bc1, bc2);
  }
  return true;
}

Mlp Mlp::create(const std::vector<int>& dims, OutputActivation act, Rng& rng) {
  if (dims.size() < 2) throw DataError("an MLP needs at least an input and an output dimension");
  Mlp mlp;
  mlp.activation = act;
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    DenseLayer layer;
    layer.in = dims[i];
    layer.out = dims[i + 1];
    if (layer.in <= 0 || layer.out <= 0) throw DataError("MLP layer dimensions must be positive");
    layer.weight.resize(static_cast<size_t>(layer.out) * layer.in);
    layer.bias.resize(static_cast<size_t>(layer.out));
    double bound = std::sqrt(6.0 / layer.in);
    for (double& w : layer.weight.value) w = quantize_f32(rng.uniform(-bound, bound));
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

size_t Mlp::parameter_count() const {
  size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

VecX Mlp::forward(const VecX& x, MlpCache* cache) const {
  if (x.size() != input_dim())
    throw DataError("MLP input has length " + std::to_string(x.size()) + ", expected " +
                    std::to_string(input_dim()));
  if (cache) {
    cache->inputs.resize(layers.size());
    cache->preacts.resize(layers.size());
  }
  VecX h = x;
  for (size_t li = 0; li < layers.size(); ++li) {
    const DenseLayer& layer = layers[li];
    if (cache) cache->inputs[li] = h;
    Eigen::Map<const RowMatX> w(layer.weight.value.data(), layer.out, layer.in);
    Eigen::Map<const VecX> b(layer.bias.value.data(), layer.out);
    VecX z = w * h + b;
    if (cache) cache->preacts[li] = z;
    if (li + 1 < layers.size()) {
      h = z.cwiseMax(0.0);  // rectifier on hidden layers
    } else {
      switch (activation) {
        case OutputActivation::kIdentity:
          h = z;
          break;
        case OutputActivation::kSigmoid:
          h = z.unaryExpr([](double v) { return sigmoid(v); });
          break;
        case OutputActivation::kUnitNorm4: {
          if (z.size() % 4 != 0)
            throw DataError("unit-normalized MLP output length must be a multiple of 4");
          h = z;
          for (Eigen::Index g = 0; g < z.size(); g += 4) {
            double n = h.segment<4>(g).norm();
            if (!(n > 0.0) || !std::isfinite(n))
              throw NumericError("cannot normalize a zero or non-finite quaternion output");
            h.segment<4>(g) /= n;
          }
          break;
        }
      }
    }
  }
  if (cache) cache->output = h;
  return h;
}

VecX Mlp::backward(const MlpCache& cache, const VecX& upstream, MlpGrads* grads) const {
  if (cache.inputs.size() != layers.size())
    throw DataError("MLP backward called without a matching forward cache");
  if (upstream.size() != output_dim())
    throw DataError("MLP upstream gradient has the wrong length");

  VecX g = upstream;
  for (size_t li = layers.size(); li-- > 0;) {
    const DenseLayer& layer = layers[li];
    const VecX& z = cache.preacts[li];
    VecX dz;
    if (li + 1 < layers.size()) {
      dz = g;
      for (Eigen::Index i = 0; i < z.size(); ++i)
        if (z[i] <= 0.0) dz[i] = 0.0;
    } else {
      switch (activation) {
        case OutputActivation::kIdentity:
          dz = g;
          break;
        case OutputActivation::kSigmoid: {
          VecX y = cache.output;
          dz = g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix()));
          break;
        }
        case OutputActivation::kUnitNorm4: {
          dz.resize(z.size());
          for (Eigen::Index gi = 0; gi < z.size(); gi += 4) {
            Vec4 raw = z.segment<4>(gi);
            double n = raw.norm();
            Vec4 u = raw / n;
            Vec4 gy = g.segment<4>(gi);
            dz.segment<4>(gi) = (gy - u * u.dot(gy)) / n;
          }
          break;
        }
      }
    }
    if (grads) {
      Eigen::Map<RowMatX> dw(grads->weight[li].data(), layer.out, layer.in);
      Eigen::Map<VecX> db(grads->bias[li].data(), layer.out);
      dw.noalias() += dz * cache.inputs[li].transpose();
      db += dz;
    }
    Eigen::Map<const RowMatX> w(layer.weight.value.data(), layer.out, layer.in);
    g.noalias() = w.transpose() * dz;
  }
  return g;
}

void MlpGrads::reset_like(const Mlp& mlp) {
  weight.resize(mlp.layers.size());
  bias.resize(mlp.layers.size());
  for (size_t i = 0; i < mlp.layers.size(); ++i) {
    weight[i].assign(mlp.layers[i].weight.size(), 0.0);
    bias[i].assign(mlp.layers[i].bias.size(), 0.0);
  }
}

void MlpGrads::set_zero() {
  for (auto& w : weight) std::fill(w.begin(), w.end(), 0.0);
  for (auto& b : bias) std::fill(b.begin(), b.end(), 0.0);
}

int Mlp::adam_step_all(const MlpGrads& grads, const AdamConfig& cfg) {
  int skipped = 0;
  for (size_t i = 0; i < layers.size(); ++i) {
    if (!adam_step(layers[i].weight, grads.weight[i], cfg)) ++skipped;
    if (!adam_step(layers[i].bias, grads.bias[i], cfg)) ++skipped;
  }
  return skipped;
}

}  // namespace seedsplat
