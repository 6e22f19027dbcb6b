#pragma once

#include <cstddef>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cbt {

using Rng = std::mt19937_64;
using Shape = std::vector<std::size_t>;

/// Dimension error; the message names the offending shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// A caller broke an API contract (non-scalar loss, mismatched state, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Arithmetic precision of forward values.
///
/// Storage is always `double`. Under kFloat32 every op rounds its result to
/// binary32 and parameter updates are rounded likewise, so values are exactly
/// representable as float and checkpoints round-trip bit-exactly. kFloat64
/// disables rounding and is what finite-difference checks run under.
enum class Precision { kFloat32, kFloat64 };

Precision precision();
void set_precision(Precision p);

/// Restores the previous precision on destruction.
class PrecisionScope {
 public:
  explicit PrecisionScope(Precision p);
  ~PrecisionScope();
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

 private:
  Precision saved_;
};

/// Rounds to the active precision.
double round_to_precision(double v);
void round_to_precision(std::span<double> v);

/// Graph recording is thread-local; inference code disables it.
bool grad_enabled();

class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  bool saved_;
};

std::string shape_string(const Shape& s);
std::size_t shape_numel(const Shape& s);

namespace detail {
struct Node;
}

/// Dense row-major array with an optional reverse-mode gradient.
///
/// A Tensor is a cheap handle; copies share storage. Values are treated as
/// immutable once an op has consumed them, except for leaf parameters which
/// the optimizer updates in place between graphs.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value);
  static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  double operator[](std::size_t flat) const { return values()[flat]; }
  double at(std::size_t row, std::size_t col) const;
  double item() const;

  bool requires_grad() const;
  bool is_leaf() const;

  /// In-place access for leaf tensors only (parameter updates, test fixtures).
  std::span<double> mutable_values();

  /// Accumulated gradient; all zeros when nothing reached this tensor.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Same values, cut from the graph.
  Tensor detach() const;

  /// Deep copy of the values into a fresh leaf.
  Tensor clone(bool requires_grad = false) const;

  const detail::Node* id() const { return node_.get(); }

  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

}  // namespace cbt
