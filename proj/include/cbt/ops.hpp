#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "cbt/tensor.hpp"

namespace cbt {

/// Matrix product over the last two axes. Leading (batch) axes must match, or
/// one operand may be a plain matrix that is broadcast over the other's batch.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Swaps the last two axes.
Tensor transpose(const Tensor& x);

/// Element-wise sum. `b` may also be a suffix-shaped tensor (e.g. a bias row)
/// broadcast over the leading axes of `a`.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);

/// Numerically stable softmax along `axis` (max-subtracted).
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor softmax(const Tensor& x);  // last axis
Tensor log_softmax(const Tensor& x);  // last axis

/// Normalizes over the last axis (biased variance), then applies gain/bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

/// Inverted dropout: kept units are scaled by 1/(1-p). Returns `x` itself when
/// not training or p == 0.
Tensor dropout(const Tensor& x, double p, bool training, Rng* rng);

/// Rows of `table` selected by `ids`; throws IndexError for ids outside the table.
Tensor embed(const Tensor& table, const std::vector<int>& ids);

enum class Reduction { kMean, kSum };

/// Negative log-likelihood of `targets` under softmax(logits) row by row.
/// Rows whose target equals `ignore_index` contribute nothing. kMean divides by
/// the number of non-ignored rows (0 when every row is ignored).
Tensor log_softmax_nll(const Tensor& logits, const std::vector<int>& targets, int ignore_index,
                       Reduction reduction = Reduction::kMean);

Tensor sum(const Tensor& x);

/// 2-D slicing and concatenation.
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);

/// Sum of equally shaped tensors.
Tensor add_n(const std::vector<Tensor>& parts);

}  // namespace cbt
