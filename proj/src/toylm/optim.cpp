#include "selfcon/toylm/optim.hpp"

#include <cmath>

#include "selfcon/core/error.hpp"

namespace selfcon::toylm {

AdamW::AdamW(std::size_t size, AdamWConfig config) : config_(config), m_(size, 0.0), v_(size, 0.0) {}

double AdamW::step(std::span<double> params, std::span<const double> grad, double lr_scale) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    fail(ErrorKind::kInvalidArgument, "AdamW: parameter/gradient size mismatch");
  }
  double norm_sq = 0.0;
  for (double g : grad) norm_sq += g * g;
  const double norm = std::sqrt(norm_sq);
  if (!std::isfinite(norm)) fail(ErrorKind::kDivergence, "AdamW: non-finite gradient at step " + std::to_string(steps_));
  const double clip = (config_.grad_clip > 0.0 && norm > config_.grad_clip) ? config_.grad_clip / norm : 1.0;

  ++steps_;
  const double lr = config_.lr * lr_scale;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i] * clip;
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g * g;
    const double mhat = m_[i] / bc1;
    const double vhat = v_[i] / bc2;
    params[i] -= lr * (mhat / (std::sqrt(vhat) + config_.eps) + config_.weight_decay * params[i]);
  }
  return norm;
}

}  // namespace selfcon::toylm
