#include "cbt/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "cbt/tensor.hpp"

namespace cbt {

double lr_schedule(std::size_t step, std::size_t warmup, double base_lr) {
  if (step == 0) throw ContractError("learning-rate steps count from 1");
  if (warmup == 0) return base_lr;
  const double s = static_cast<double>(step), w = static_cast<double>(warmup);
  return base_lr * std::min(std::sqrt(w / s), s / w);
}

double scheduled_sampling_prob(std::size_t epoch, double increment, std::size_t every, double max_prob) {
  if (every == 0) return std::min(max_prob, 0.0);
  return std::min(max_prob, static_cast<double>(epoch / every) * increment);
}

}  // namespace cbt
