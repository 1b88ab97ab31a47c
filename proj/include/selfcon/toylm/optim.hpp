#pragma once

#include <span>
#include <vector>

namespace selfcon::toylm {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double grad_clip = 1.0;  // global L2 norm; <= 0 disables
};

/// Adaptive-moment optimizer with decoupled weight decay.
class AdamW {
 public:
  AdamW(std::size_t size, AdamWConfig config);

  /// Returns the pre-clip gradient norm.
  double step(std::span<double> params, std::span<const double> grad, double lr_scale = 1.0);
  long steps() const { return steps_; }

 private:
  AdamWConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  long steps_ = 0;
};

}  // namespace selfcon::toylm
