#include "cbt/optimizer.hpp"

#include <cmath>

#include "cbt/autodiff.hpp"

namespace cbt {

Adam::Adam(std::vector<Tensor> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const Tensor& p : params_) {
    if (!p.is_leaf() || !p.requires_grad()) throw ContractError("Adam optimizes trainable leaf tensors only");
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

double Adam::step(double lr) {
  const double norm = grad_norm(params_);
  if (!std::isfinite(norm)) throw std::runtime_error("non-finite gradient norm");
  const double clip = (config_.clip_norm > 0.0 && norm > config_.clip_norm) ? config_.clip_norm / norm : 1.0;
  ++steps_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto g = params_[i].grad();
    auto w = params_[i].mutable_values();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k] * clip;
      m[k] = round_to_precision(config_.beta1 * m[k] + (1.0 - config_.beta1) * gk);
      v[k] = round_to_precision(config_.beta2 * v[k] + (1.0 - config_.beta2) * gk * gk);
      const double update = lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.eps);
      w[k] = round_to_precision(w[k] - update);
    }
    params_[i].zero_grad();
  }
  return norm;
}

std::vector<NamedTensor> Adam::state() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.push_back({"m." + std::to_string(i), Tensor::from_values(params_[i].shape(), m_[i])});
    out.push_back({"v." + std::to_string(i), Tensor::from_values(params_[i].shape(), v_[i])});
  }
  return out;
}

void Adam::load_state(const std::vector<NamedTensor>& state, std::size_t steps) {
  if (state.size() != 2 * params_.size()) throw ContractError("optimizer state has the wrong number of tensors");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Tensor& m = state[2 * i].tensor;
    const Tensor& v = state[2 * i + 1].tensor;
    if (m.shape() != params_[i].shape() || v.shape() != params_[i].shape()) {
      throw ShapeError("optimizer state for parameter " + std::to_string(i) + " has shape " + shape_string(m.shape()));
    }
    m_[i].assign(m.values().begin(), m.values().end());
    v_[i].assign(v.values().begin(), v.values().end());
  }
  steps_ = steps;
}

}  // namespace cbt
