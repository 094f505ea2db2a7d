#include "suta/optim.hpp"

#include <cmath>

#include "suta/errors.hpp"

namespace suta {

void adamw_step(ModelState& model, const std::map<std::size_t, Tensor>& grads, OptState& state,
                const AdamWConfig& config) {
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    const auto& p = model.params[i];
    if (!p.trainable) continue;
    auto it = grads.find(i);
    SUTA_REQUIRE(it != grads.end(), "adamw: no gradient for trainable parameter '" + p.name + "'");
    SUTA_REQUIRE(it->second.same_shape(p.value),
                 "adamw: gradient shape " + it->second.shape_string() + " does not match '" +
                     p.name + "' " + p.value.shape_string());
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(config.beta1, t);
  const double bias2 = 1.0 - std::pow(config.beta2, t);
  const double decay = 1.0 - config.learning_rate * config.weight_decay;

  for (std::size_t i = 0; i < model.params.size(); ++i) {
    auto& p = model.params[i];
    if (!p.trainable) continue;
    const Tensor& g = grads.at(i);
    auto& m = state.first_moment.try_emplace(i, p.value.rows, p.value.cols).first->second;
    auto& v = state.second_moment.try_emplace(i, p.value.rows, p.value.cols).first->second;
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double gk = g.values[k];
      m.values[k] = config.beta1 * m.values[k] + (1.0 - config.beta1) * gk;
      v.values[k] = config.beta2 * v.values[k] + (1.0 - config.beta2) * gk * gk;
      const double mhat = m.values[k] / bias1;
      const double vhat = v.values[k] / bias2;
      double& w = p.value.values[k];
      w *= decay;
      w -= config.learning_rate * mhat / (std::sqrt(vhat) + config.epsilon);
    }
  }
}

}  // namespace suta
