#pragma once

#include <vector>

#include "lexsimp/autograd.hpp"

namespace lexsimp {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Global gradient-norm clip; <= 0 disables.
  double clip_norm = 1.0;
};

class Adam {
 public:
  Adam(std::vector<nn::Parameter*> params, AdamConfig config);

  // Applies one update from `grads` scaled by `scale` (e.g. 1 / batch size).
  // Frozen parameters and parameters without a gradient are skipped.
  void step(const nn::GradBuffer& grads, double scale);

  const AdamConfig& config() const { return config_; }

 private:
  struct State {
    nn::Matrix m, v;
    long steps = 0;
  };
  std::vector<nn::Parameter*> params_;
  std::vector<State> state_;
  AdamConfig config_;
};

}  // namespace lexsimp
