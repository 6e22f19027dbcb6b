#pragma once

#include <cstddef>
#include <vector>

#include "cbt/checkpoint.hpp"
#include "cbt/tensor.hpp"

namespace cbt {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  double clip_norm = 5.0;  // global gradient norm; <= 0 disables clipping
};

/// Adam with bias correction and global-norm clipping. Moments and updated
/// parameters are rounded to the active precision, so a saved state resumes
/// bit-exactly under float32.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config = {});

  /// Applies one update with learning rate `lr` from the accumulated
  /// gradients, then zeroes them. Returns the pre-clipping gradient norm.
  double step(double lr);

  std::size_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }

  std::vector<NamedTensor> state() const;
  void load_state(const std::vector<NamedTensor>& state, std::size_t steps);

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamConfig config_;
  std::size_t steps_ = 0;
};

}  // namespace cbt
