#pragma once

#include <cstddef>
#include <map>

#include "suta/model.hpp"
#include "suta/tensor.hpp"

namespace suta {

struct AdamWConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-4;
};

// Moment accumulators keyed by parameter index.
struct OptState {
  std::size_t step = 0;
  std::map<std::size_t, Tensor> first_moment;
  std::map<std::size_t, Tensor> second_moment;
};

// One AdamW update (decoupled weight decay, bias-corrected moments) applied to
// the trainable parameters of `model`. Every trainable parameter needs a
// gradient of its own shape in `grads`; frozen parameters are never touched.
void adamw_step(ModelState& model, const std::map<std::size_t, Tensor>& grads, OptState& state,
                const AdamWConfig& config);

}  // namespace suta
