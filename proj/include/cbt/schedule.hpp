#pragma once

#include <cstddef>

namespace cbt {

/// Noam warmup: base_lr * min(sqrt(warmup / step), step / warmup).
///
/// This is the usual d_model^-0.5 * min(step^-0.5, step * warmup^-1.5) curve
/// rescaled so that its peak, at step == warmup, equals base_lr (the d_model
/// factor cancels in that rescaling). Steps count from 1.
double lr_schedule(std::size_t step, std::size_t warmup, double base_lr);

/// floor(epoch / every) * increment, clamped to max_prob. Epochs count from 0.
double scheduled_sampling_prob(std::size_t epoch, double increment = 0.05, std::size_t every = 5,
                               double max_prob = 0.25);

}  // namespace cbt
