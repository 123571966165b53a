#include "lexsimp/optim.hpp"

#include <cmath>

namespace lexsimp {

Adam::Adam(std::vector<nn::Parameter*> params, AdamConfig config)
    : params_(std::move(params)), state_(params_.size()), config_(config) {}

void Adam::step(const nn::GradBuffer& grads, double scale) {
  double sq = 0.0;
  for (auto* p : params_) {
    if (p->frozen) continue;
    if (const auto* g = grads.find(p)) sq += g->squaredNorm();
  }
  const double norm = std::sqrt(sq) * std::abs(scale);
  double factor = scale;
  if (config_.clip_norm > 0.0 && norm > config_.clip_norm) factor *= config_.clip_norm / norm;

  for (std::size_t i = 0; i < params_.size(); ++i) {
    nn::Parameter* p = params_[i];
    if (p->frozen) continue;
    const auto* g = grads.find(p);
    if (!g) continue;
    State& s = state_[i];
    if (s.m.size() == 0) {
      s.m = nn::Matrix::Zero(p->value.rows(), p->value.cols());
      s.v = nn::Matrix::Zero(p->value.rows(), p->value.cols());
    }
    ++s.steps;
    const nn::Matrix gs = *g * factor;
    s.m = config_.beta1 * s.m + (1.0 - config_.beta1) * gs;
    s.v = config_.beta2 * s.v + (1.0 - config_.beta2) * gs.cwiseProduct(gs);
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(s.steps));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(s.steps));
    p->value.array() -=
        config_.learning_rate * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + config_.epsilon);
  }
}

}  // namespace lexsimp
