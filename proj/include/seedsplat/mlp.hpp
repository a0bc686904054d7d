#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seedsplat/common.hpp"

namespace seedsplat {

// One learnable tensor with its Adam state. Values stay on the f32 grid
// (see quantize_f32) so checkpoints round-trip bitwise.
struct ParamTensor {
  std::vector<double> value;
  std::vector<double> m1;  // first moment
  std::vector<double> m2;  // second moment
  int64_t step = 0;

  void resize(size_t n) {
    value.assign(n, 0.0);
    m1.assign(n, 0.0);
    m2.assign(n, 0.0);
  }
  // Appends new entries with zero-initialized optimizer state.
  void append(const std::vector<double>& extra) {
    for (double v : extra) value.push_back(quantize_f32(v));
    m1.resize(value.size(), 0.0);
    m2.resize(value.size(), 0.0);
  }
  size_t size() const { return value.size(); }
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-15;
};

// Bias-corrected Adam update over the whole tensor. Returns false (and leaves
// the tensor untouched) when the gradient contains non-finite values.
bool adam_step(ParamTensor& tensor, const std::vector<double>& grad, const AdamConfig& cfg);

// Adam update restricted to touched entries (hash tables see only a small
// subset of slots per iteration). Untouched entries keep their moments as-is;
// the step counter advances once per call.
bool adam_step_sparse(ParamTensor& tensor, const std::vector<uint32_t>& indices,
                      const std::vector<double>& grads, int entry_width, const AdamConfig& cfg);

enum class OutputActivation : uint8_t {
  kIdentity = 0,
  kSigmoid = 1,
  kUnitNorm4 = 2,  // normalize each consecutive group of 4 outputs
};

struct DenseLayer {
  int in = 0;
  int out = 0;
  ParamTensor weight;  // out x in, row-major
  ParamTensor bias;    // out
};

// Cached intermediate values from one forward call, required by backward.
struct MlpCache {
  std::vector<VecX> inputs;   // input to each layer
  std::vector<VecX> preacts;  // pre-activation z of each layer
  VecX output;
};

// Gradient accumulator matching an Mlp's parameter shapes.
struct MlpGrads {
  std::vector<std::vector<double>> weight;
  std::vector<std::vector<double>> bias;

  void reset_like(const struct Mlp& mlp);
  void set_zero();
};

// Small fully-connected network: rectifier on hidden layers, configurable
// output activation. Two layers by default throughout this codebase.
struct Mlp {
  std::vector<DenseLayer> layers;
  OutputActivation activation = OutputActivation::kIdentity;

  // dims = {in, hidden..., out}. Kaiming-style uniform fan-in init for
  // weights, zero biases.
  static Mlp create(const std::vector<int>& dims, OutputActivation act, Rng& rng);

  int input_dim() const { return layers.front().in; }
  int output_dim() const { return layers.back().out; }
  size_t parameter_count() const;

  VecX forward(const VecX& x, MlpCache* cache) const;

  // Accumulates parameter gradients into grads (+=) and returns the input
  // gradient. cache must come from a forward call on this network.
  VecX backward(const MlpCache& cache, const VecX& upstream, MlpGrads* grads) const;

  // One Adam step over every layer. Returns the number of tensors skipped
  // because of non-finite gradients.
  int adam_step_all(const MlpGrads& grads, const AdamConfig& cfg);
};

}  // namespace seedsplat
