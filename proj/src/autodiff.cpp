#include "cbt/autodiff.hpp"

#include <cmath>
#include <unordered_set>

#include "cbt/detail/node.hpp"

namespace cbt {

using detail::Node;

BackwardStats backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
  }
  Node* root = loss.node().get();
  if (root->released) throw ContractError("backward called twice on a released graph");
  BackwardStats stats;
  if (!root->requires_grad) return stats;

  // Iterative post-order DFS gives a topological order over recorded ops.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && p->backward && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
      continue;
    }
    if (node->backward) order.push_back(node);
    stack.pop_back();
  }

  root->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    n->ensure_grad();
    n->backward(*n);
    ++stats.operations_visited;
  }
  for (Node* n : order) {
    n->backward = nullptr;
    n->parents.clear();
    n->grad.clear();
    n->grad.shrink_to_fit();
    n->released = true;
  }
  return stats;
}

double grad_norm(const std::vector<Tensor>& params) {
  double s = 0.0;
  for (const Tensor& p : params) {
    for (double g : p.grad()) s += g * g;
  }
  return std::sqrt(s);
}

GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params, double tolerance,
                           double step, double floor) {
  if (precision() != Precision::kFloat64) {
    throw ContractError("grad_check requires Precision::kFloat64");
  }
  for (Tensor& p : params) p.zero_grad();
  backward(f());
  std::vector<std::vector<double>> analytic;
  for (const Tensor& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

  GradCheckReport report;
  NoGradScope no_grad;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto vals = params[k].mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + step;
      const double up = f().item();
      vals[i] = orig - step;
      const double down = f().item();
      vals[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k][i];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), floor});
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst = std::to_string(k) + "#" + std::to_string(i);
      }
      ++report.elements_checked;
    }
  }
  for (Tensor& p : params) p.zero_grad();
  report.passed = report.max_relative_error < tolerance;
  return report;
}

}  // namespace cbt
