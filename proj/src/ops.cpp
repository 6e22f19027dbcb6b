#include "cbt/ops.hpp"

#include <algorithm>
#include <cmath>

#include "cbt/detail/node.hpp"

namespace cbt {

using detail::make_result;
using detail::Node;

namespace {

// C(n×m) += A(n×k)·B(k×m)
void gemm_nn(std::size_t n, std::size_t k, std::size_t m, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = c + i * m;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

// C(n×k) += A(n×m)·B(k×m)ᵀ
void gemm_nt(std::size_t n, std::size_t m, std::size_t k, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * m;
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += arow[j] * brow[j];
      c[i * k + p] += s;
    }
  }
}

// C(k×m) += A(n×k)ᵀ·B(n×m)
void gemm_tn(std::size_t n, std::size_t k, std::size_t m, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      double* crow = c + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

std::size_t leading(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t i = 0; i + 2 < s.size(); ++i) n *= s[i];
  return n;
}

Shape lead_shape(const Shape& s) { return Shape(s.begin(), s.end() - 2); }

bool needs(const Node& self, std::size_t i) { return self.parents[i]->requires_grad; }

void require_matrix(const Tensor& x, const char* op) {
  if (x.rank() != 2) throw ShapeError(std::string(op) + " needs a matrix, got " + shape_string(x.shape()));
}

template <typename F>
Tensor unary(const Tensor& x, F f, std::function<void(Node&)> back) {
  std::vector<double> out(x.numel());
  auto in = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make_result(x.shape(), std::move(out), {x}, std::move(back));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw ShapeError("matmul needs rank >= 2 operands, got " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const std::size_t n = sa[sa.size() - 2], k = sa.back();
  const std::size_t kb = sb[sb.size() - 2], m = sb.back();
  const Shape la = lead_shape(sa), lb = lead_shape(sb);
  if (k != kb || (!la.empty() && !lb.empty() && la != lb)) {
    throw ShapeError("matmul shape mismatch: " + shape_string(sa) + " x " + shape_string(sb));
  }
  const bool a_batched = !la.empty(), b_batched = !lb.empty();
  const std::size_t batch = a_batched ? leading(sa) : leading(sb);
  Shape out_shape = a_batched ? la : lb;
  out_shape.push_back(n);
  out_shape.push_back(m);

  std::vector<double> out(batch * n * m, 0.0);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t t = 0; t < batch; ++t) {
    gemm_nn(n, k, m, av + (a_batched ? t * n * k : 0), bv + (b_batched ? t * k * m : 0), out.data() + t * n * m);
  }
  return make_result(std::move(out_shape), std::move(out), {a, b},
                     [=](Node& self) {
                       Node& pa = *self.parents[0];
                       Node& pb = *self.parents[1];
                       for (std::size_t t = 0; t < batch; ++t) {
                         const double* g = self.grad.data() + t * n * m;
                         if (pa.requires_grad) {
                           gemm_nt(n, m, k, g, pb.value.data() + (b_batched ? t * k * m : 0),
                                   pa.ensure_grad().data() + (a_batched ? t * n * k : 0));
                         }
                         if (pb.requires_grad) {
                           gemm_tn(n, k, m, pa.value.data() + (a_batched ? t * n * k : 0), g,
                                   pb.ensure_grad().data() + (b_batched ? t * k * m : 0));
                         }
                       }
                     });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() < 2) throw ShapeError("transpose needs rank >= 2, got " + shape_string(x.shape()));
  Shape s = x.shape();
  const std::size_t r = s[s.size() - 2], c = s.back();
  const std::size_t batch = leading(s);
  std::swap(s[s.size() - 2], s[s.size() - 1]);
  std::vector<double> out(x.numel());
  auto in = x.values();
  for (std::size_t t = 0; t < batch; ++t) {
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) out[t * r * c + j * r + i] = in[t * r * c + i * c + j];
    }
  }
  return make_result(std::move(s), std::move(out), {x}, [=](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t t = 0; t < batch; ++t) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) g[t * r * c + i * c + j] += self.grad[t * r * c + j * r + i];
      }
    }
  });
}

namespace {

// Number of times `b` repeats across `a` when b's shape is a suffix of a's.
std::size_t broadcast_repeats(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return 1;
  if (b.size() < a.size() && std::equal(b.rbegin(), b.rend(), a.rbegin())) {
    return shape_numel(a) / shape_numel(b);
  }
  throw ShapeError(std::string(op) + " shape mismatch: " + shape_string(a) + " and " + shape_string(b));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  broadcast_repeats(a.shape(), b.shape(), "add");
  const std::size_t nb = b.numel();
  std::vector<double> out(a.values().begin(), a.values().end());
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % nb];
  return make_result(a.shape(), std::move(out), {a, b}, [nb](Node& self) {
    if (needs(self, 0)) {
      auto& g = self.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (needs(self, 1)) {
      auto& g = self.parents[1]->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % nb] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  broadcast_repeats(a.shape(), b.shape(), "sub");
  const std::size_t nb = b.numel();
  std::vector<double> out(a.values().begin(), a.values().end());
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i % nb];
  return make_result(a.shape(), std::move(out), {a, b}, [nb](Node& self) {
    if (needs(self, 0)) {
      auto& g = self.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (needs(self, 1)) {
      auto& g = self.parents[1]->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % nb] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mul shape mismatch: " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  std::vector<double> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(x, [factor](double v) { return v * factor; }, [factor](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](Node& self) {
    Node& p = *self.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (p.value[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

Tensor tanh(const Tensor& x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (1.0 - self.value[i] * self.value[i]);
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) {
    throw IndexError("softmax axis " + std::to_string(axis) + " out of range for " + shape_string(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  std::vector<double> out(x.numel());
  auto in = x.values();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t q = 0; q < inner; ++q) {
      const std::size_t base = o * len * inner + q;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, in[base + j * inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const double e = std::exp(in[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= total;
    }
  }
  return make_result(s, std::move(out), {x}, [=](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t q = 0; q < inner; ++q) {
        const std::size_t base = o * len * inner + q;
        double dot = 0.0;
        for (std::size_t j = 0; j < len; ++j) dot += self.grad[base + j * inner] * self.value[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t idx = base + j * inner;
          g[idx] += self.value[idx] * (self.grad[idx] - dot);
        }
      }
    }
  });
}

Tensor softmax(const Tensor& x) { return softmax(x, x.rank() - 1); }

Tensor log_softmax(const Tensor& x) {
  const std::size_t len = x.shape().back();
  const std::size_t rows = x.numel() / len;
  std::vector<double> out(x.numel());
  auto in = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * len;
    const double mx = *std::max_element(row, row + len);
    double total = 0.0;
    for (std::size_t j = 0; j < len; ++j) total += std::exp(row[j] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < len; ++j) out[r * len + j] = row[j] - lse;
  }
  return make_result(x.shape(), std::move(out), {x}, [=](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < len; ++j) gsum += self.grad[r * len + j];
      for (std::size_t j = 0; j < len; ++j) {
        const std::size_t idx = r * len + j;
        g[idx] += self.grad[idx] - std::exp(self.value[idx]) * gsum;
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t d = x.shape().back();
  if (gain.numel() != d || bias.numel() != d) {
    throw ShapeError("layer_norm gain/bias " + shape_string(gain.shape()) + "/" + shape_string(bias.shape()) +
                     " do not match input " + shape_string(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel());
  auto xh = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  auto in = x.values(), gv = gain.values(), bv = bias.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mean) * is;
      (*xh)[r * d + j] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gain, bias}, [=](Node& self) {
    Node& px = *self.parents[0];
    Node& pg = *self.parents[1];
    Node& pb = *self.parents[2];
    for (std::size_t r = 0; r < rows; ++r) {
      const double* gout = self.grad.data() + r * d;
      const double* h = xh->data() + r * d;
      if (pg.requires_grad) {
        auto& gg = pg.ensure_grad();
        for (std::size_t j = 0; j < d; ++j) gg[j] += gout[j] * h[j];
      }
      if (pb.requires_grad) {
        auto& gb = pb.ensure_grad();
        for (std::size_t j = 0; j < d; ++j) gb[j] += gout[j];
      }
      if (px.requires_grad) {
        auto& gx = px.ensure_grad();
        double mean_dh = 0.0, mean_dh_h = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double dh = gout[j] * pg.value[j];
          mean_dh += dh;
          mean_dh_h += dh * h[j];
        }
        mean_dh /= static_cast<double>(d);
        mean_dh_h /= static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
          const double dh = gout[j] * pg.value[j];
          gx[r * d + j] += (*inv_std)[r] * (dh - mean_dh - h[j] * mean_dh_h);
        }
      }
    }
  });
}

Tensor dropout(const Tensor& x, double p, bool training, Rng* rng) {
  if (!training || p <= 0.0) return x;
  if (p >= 1.0) throw ContractError("dropout probability must be < 1");
  if (rng == nullptr) throw ContractError("dropout in training mode needs a random-state handle");
  std::bernoulli_distribution keep(1.0 - p);
  const double factor = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  for (double& m : *mask) m = keep(*rng) ? factor : 0.0;
  std::vector<double> out(x.numel());
  auto in = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * (*mask)[i];
  return make_result(x.shape(), std::move(out), {x}, [mask](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (*mask)[i];
  });
}

Tensor embed(const Tensor& table, const std::vector<int>& ids) {
  require_matrix(table, "embed");
  const std::size_t rows = table.dim(0), d = table.dim(1);
  if (ids.empty()) throw ShapeError("embed needs at least one id");
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= rows) {
      throw IndexError("token id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(rows));
    }
  }
  std::vector<double> out(ids.size() * d);
  auto tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d, out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return make_result({ids.size(), d}, std::move(out), {table}, [ids, d](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) g[static_cast<std::size_t>(ids[i]) * d + j] += self.grad[i * d + j];
    }
  });
}

Tensor log_softmax_nll(const Tensor& logits, const std::vector<int>& targets, int ignore_index, Reduction reduction) {
  require_matrix(logits, "log_softmax_nll");
  const std::size_t n = logits.dim(0), v = logits.dim(1);
  if (targets.size() != n) {
    throw ShapeError("nll: " + std::to_string(targets.size()) + " targets for logits " + shape_string(logits.shape()));
  }
  auto probs = std::make_shared<std::vector<double>>(n * v);
  auto in = logits.values();
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = in.data() + r * v;
    const double mx = *std::max_element(row, row + v);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      const double e = std::exp(row[j] - mx);
      (*probs)[r * v + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < v; ++j) (*probs)[r * v + j] /= z;
    if (targets[r] == ignore_index) continue;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= v) {
      throw IndexError("target id " + std::to_string(targets[r]) + " outside " + std::to_string(v) + " classes");
    }
    total += -(row[targets[r]] - mx - std::log(z));
    ++counted;
  }
  const double denom = (reduction == Reduction::kMean && counted > 0) ? static_cast<double>(counted) : 1.0;
  return make_result({1}, {total / denom}, {logits}, [=](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    const double up = self.grad[0] / denom;
    for (std::size_t r = 0; r < n; ++r) {
      if (targets[r] == ignore_index) continue;
      for (std::size_t j = 0; j < v; ++j) g[r * v + j] += up * (*probs)[r * v + j];
      g[r * v + static_cast<std::size_t>(targets[r])] -= up;
    }
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_result({1}, {s}, {x}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (double& v : g) v += self.grad[0];
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  require_matrix(x, "slice_cols");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (count == 0 || begin + count > c) {
    throw IndexError("column slice [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") outside " + shape_string(x.shape()));
  }
  std::vector<double> out(r * count);
  auto in = x.values();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = in[i * c + begin + j];
  }
  return make_result({r, count}, std::move(out), {x}, [=](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < count; ++j) g[i * c + begin + j] += self.grad[i * count + j];
    }
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  require_matrix(x, "slice_rows");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (count == 0 || begin + count > r) {
    throw IndexError("row slice [" + std::to_string(begin) + ", " + std::to_string(begin + count) + ") outside " +
                     shape_string(x.shape()));
  }
  auto in = x.values();
  std::vector<double> out(in.begin() + static_cast<std::ptrdiff_t>(begin * c),
                          in.begin() + static_cast<std::ptrdiff_t>((begin + count) * c));
  return make_result({count, c}, std::move(out), {x}, [=](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < count * c; ++i) g[begin * c + i] += self.grad[i];
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  const std::size_t r = parts[0].rank() == 2 ? parts[0].dim(0) : 0;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != 2 || p.dim(0) != r) {
      throw ShapeError("concat_cols mismatch: " + shape_string(parts[0].shape()) + " vs " + shape_string(p.shape()));
    }
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<double> out(r * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto in = parts[k].values();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < widths[k]; ++j) out[i * total + off + j] = in[i * widths[k] + j];
    }
    off += widths[k];
  }
  return make_result({r, total}, std::move(out), parts, [=](Node& self) {
    std::size_t o = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node& p = *self.parents[k];
      if (p.requires_grad) {
        auto& g = p.ensure_grad();
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < widths[k]; ++j) g[i * widths[k] + j] += self.grad[i * total + o + j];
        }
      }
      o += widths[k];
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows of nothing");
  const std::size_t c = parts[0].rank() == 2 ? parts[0].dim(1) : 0;
  std::size_t rows = 0;
  std::vector<double> out;
  for (const Tensor& p : parts) {
    if (p.rank() != 2 || p.dim(1) != c) {
      throw ShapeError("concat_rows mismatch: " + shape_string(parts[0].shape()) + " vs " + shape_string(p.shape()));
    }
    rows += p.dim(0);
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  return make_result({rows, c}, std::move(out), parts, [](Node& self) {
    std::size_t o = 0;
    for (auto& pp : self.parents) {
      Node& p = *pp;
      if (p.requires_grad) {
        auto& g = p.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[o + i];
      }
      o += p.value.size();
    }
  });
}

Tensor add_n(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("add_n of nothing");
  std::vector<double> out(parts[0].numel(), 0.0);
  for (const Tensor& p : parts) {
    if (p.shape() != parts[0].shape()) {
      throw ShapeError("add_n mismatch: " + shape_string(parts[0].shape()) + " vs " + shape_string(p.shape()));
    }
    auto v = p.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  }
  return make_result(parts[0].shape(), std::move(out), parts, [](Node& self) {
    for (auto& pp : self.parents) {
      if (!pp->requires_grad) continue;
      auto& g = pp->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

}  // namespace cbt
