#include "cbt/tensor.hpp"

#include <atomic>
#include <sstream>

#include "cbt/detail/node.hpp"

namespace cbt {

namespace {
std::atomic<Precision> g_precision{Precision::kFloat32};
thread_local bool t_grad_enabled = true;
}  // namespace

Precision precision() { return g_precision.load(std::memory_order_relaxed); }
void set_precision(Precision p) { g_precision.store(p, std::memory_order_relaxed); }

PrecisionScope::PrecisionScope(Precision p) : saved_(precision()) { set_precision(p); }
PrecisionScope::~PrecisionScope() { set_precision(saved_); }

double round_to_precision(double v) {
  if (precision() == Precision::kFloat32) return static_cast<double>(static_cast<float>(v));
  return v;
}

void round_to_precision(std::span<double> v) {
  if (precision() != Precision::kFloat32) return;
  for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

bool grad_enabled() { return t_grad_enabled; }
NoGradScope::NoGradScope() : saved_(t_grad_enabled) { t_grad_enabled = false; }
NoGradScope::~NoGradScope() { t_grad_enabled = saved_; }

std::string shape_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

namespace {

void check_shape(const Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
  }
}

std::shared_ptr<detail::Node> new_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return n;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  check_shape(shape);
  std::size_t n = shape_numel(shape);
  return Tensor(new_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value) {
  check_shape(shape);
  std::size_t n = shape_numel(shape);
  return Tensor(new_leaf(std::move(shape), std::vector<double>(n, round_to_precision(value)), false));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape);
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("shape " + shape_string(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  round_to_precision(values);
  return Tensor(new_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value) { return from_values({1}, {value}); }

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) {
    throw IndexError("axis " + std::to_string(axis) + " out of range for " + shape_string(node_->shape));
  }
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->value.size(); }

std::span<const double> Tensor::values() const { return node_->value; }

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw ShapeError("at(row, col) needs a matrix, got " + shape_string(shape()));
  if (row >= shape()[0] || col >= shape()[1]) {
    throw IndexError("index (" + std::to_string(row) + ", " + std::to_string(col) + ") out of range for " +
                     shape_string(shape()));
  }
  return node_->value[row * shape()[1] + col];
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::is_leaf() const { return node_->leaf; }

std::span<double> Tensor::mutable_values() {
  if (!node_->leaf) throw ContractError("mutable_values() on a non-leaf tensor");
  return node_->value;
}

std::span<const double> Tensor::grad() const { return node_->ensure_grad(); }
std::span<double> Tensor::mutable_grad() { return node_->ensure_grad(); }

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(new_leaf(node_->shape, node_->value, false)); }

Tensor Tensor::clone(bool requires_grad) const {
  return Tensor(new_leaf(node_->shape, node_->value, requires_grad));
}

namespace detail {

Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                   std::function<void(Node&)> backward) {
  round_to_precision(value);
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->leaf = false;
  bool needs = false;
  if (grad_enabled()) {
    for (const Tensor& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (const Tensor& p : parents) n->parents.push_back(p.node());
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

}  // namespace detail
}  // namespace cbt
