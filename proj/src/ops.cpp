#include "tprs/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tprs {

namespace {

using detail::Node;

Tensor make_op(Shape shape, std::vector<double> value,
               std::vector<Tensor> inputs,
               std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool rg = false;
  n->parents.reserve(inputs.size());
  for (auto& t : inputs) {
    rg = rg || t.node()->requires_grad;
    n->parents.push_back(t.node());
  }
  n->requires_grad = rg;
  if (rg) n->backward_fn = std::move(backward);
  return Tensor::from_node(std::move(n));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

// Elementwise op from value fn + derivative fn (derivative sees input x and
// output y).
template <typename F, typename D>
Tensor unary_op(const Tensor& a, F f, D dfdx) {
  const auto& x = a.data();
  std::vector<double> y(x.size());
  for (size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return make_op(a.shape(), std::move(y), {a}, [dfdx](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) {
      p.grad[i] += self.grad[i] * dfdx(p.value[i], self.value[i]);
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  const auto &xa = a.data(), &xb = b.data();
  std::vector<double> y(xa.size());
  for (size_t i = 0; i < y.size(); ++i) y[i] = xa[i] + xb[i];
  return make_op(a.shape(), std::move(y), {a, b}, [](Node& self) {
    for (int s = 0; s < 2; ++s) {
      Node& p = *self.parents[s];
      if (!p.requires_grad) continue;
      p.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  const auto &xa = a.data(), &xb = b.data();
  std::vector<double> y(xa.size());
  for (size_t i = 0; i < y.size(); ++i) y[i] = xa[i] - xb[i];
  return make_op(a.shape(), std::move(y), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  const auto &xa = a.data(), &xb = b.data();
  std::vector<double> y(xa.size());
  for (size_t i = 0; i < y.size(); ++i) y[i] = xa[i] * xb[i];
  return make_op(a.shape(), std::move(y), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i)
        pa.grad[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i)
        pb.grad[i] += self.grad[i] * pa.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  return unary_op(
      a, [c](double x) { return c * x; },
      [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary_op(
      a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  // exact erf form: x * Phi(x)
  return unary_op(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); },
      [](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
        const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
        return cdf + x * pdf;
      });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a,
      [](double x) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                        : std::exp(x) / (1.0 + std::exp(x));
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor pow_const(const Tensor& a, double p) {
  return unary_op(
      a, [p](double x) { return std::pow(x, p); },
      [p](double x, double) { return p == 0.0 ? 0.0 : p * std::pow(x, p - 1.0); });
}

Tensor clamp_min(const Tensor& a, double c) {
  return unary_op(
      a, [c](double x) { return x > c ? x : c; },
      [c](double x, double) { return x > c ? 1.0 : 0.0; });
}

Tensor softmax(const Tensor& a, int axis) {
  const int r = a.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw std::invalid_argument("softmax: bad axis");

  // View the tensor as `outer` slices of length `len` with stride `stride`.
  const auto& s = a.shape();
  const int len = s[static_cast<size_t>(axis)];
  int64_t inner = 1, outer = 1;
  for (int i = axis + 1; i < r; ++i) inner *= s[static_cast<size_t>(i)];
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];

  const auto& x = a.data();
  std::vector<double> y(x.size());
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      const int64_t base = o * len * inner + in;
      double mx = -HUGE_VAL;
      for (int i = 0; i < len; ++i) mx = std::max(mx, x[base + i * inner]);
      double denom = 0.0;
      for (int i = 0; i < len; ++i) {
        const double e = std::exp(x[base + i * inner] - mx);
        y[base + i * inner] = e;
        denom += e;
      }
      for (int i = 0; i < len; ++i) y[base + i * inner] /= denom;
    }
  }
  return make_op(a.shape(), std::move(y), {a},
                 [len, inner, outer](Node& self) {
                   Node& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   p.ensure_grad();
                   for (int64_t o = 0; o < outer; ++o) {
                     for (int64_t in = 0; in < inner; ++in) {
                       const int64_t base = o * len * inner + in;
                       double dot = 0.0;
                       for (int i = 0; i < len; ++i) {
                         dot += self.grad[base + i * inner] *
                                self.value[base + i * inner];
                       }
                       for (int i = 0; i < len; ++i) {
                         const int64_t idx = base + i * inner;
                         p.grad[idx] +=
                             self.value[idx] * (self.grad[idx] - dot);
                       }
                     }
                   }
                 });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_op({1}, {s}, {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (double& g : p.grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_op({1}, {s / n}, {a}, [n](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (double& g : p.grad) g += self.grad[0] / n;
  });
}

Tensor mean_rows(const Tensor& a) {
  if (a.rank() != 2) throw std::invalid_argument("mean_rows: rank-2 expected");
  const int n = a.dim(0), m = a.dim(1);
  std::vector<double> y(static_cast<size_t>(m), 0.0);
  const auto& x = a.data();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) y[j] += x[static_cast<size_t>(i) * m + j];
  for (double& v : y) v /= n;
  return make_op({m}, std::move(y), {a}, [n, m](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j)
        p.grad[static_cast<size_t>(i) * m + j] += self.grad[j] / n;
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("matmul: incompatible shapes " +
                                shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  const int n = a.dim(0), k = a.dim(1), m = b.dim(1);
  const auto &xa = a.data(), &xb = b.data();
  std::vector<double> y(static_cast<size_t>(n) * m, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int l = 0; l < k; ++l) {
      const double av = xa[static_cast<size_t>(i) * k + l];
      if (av == 0.0) continue;
      const size_t brow = static_cast<size_t>(l) * m;
      const size_t yrow = static_cast<size_t>(i) * m;
      for (int j = 0; j < m; ++j) y[yrow + j] += av * xb[brow + j];
    }
  }
  return make_op({n, m}, std::move(y), {a, b}, [n, k, m](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();  // dA = G . B^T
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
          const double g = self.grad[static_cast<size_t>(i) * m + j];
          if (g == 0.0) continue;
          for (int l = 0; l < k; ++l)
            pa.grad[static_cast<size_t>(i) * k + l] +=
                g * pb.value[static_cast<size_t>(l) * m + j];
        }
    }
    if (pb.requires_grad) {
      pb.ensure_grad();  // dB = A^T . G
      for (int i = 0; i < n; ++i)
        for (int l = 0; l < k; ++l) {
          const double av = pa.value[static_cast<size_t>(i) * k + l];
          if (av == 0.0) continue;
          for (int j = 0; j < m; ++j)
            pb.grad[static_cast<size_t>(l) * m + j] +=
                av * self.grad[static_cast<size_t>(i) * m + j];
        }
    }
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw std::invalid_argument("transpose: rank-2 expected");
  const int n = a.dim(0), m = a.dim(1);
  const auto& x = a.data();
  std::vector<double> y(x.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      y[static_cast<size_t>(j) * n + i] = x[static_cast<size_t>(i) * m + j];
  return make_op({m, n}, std::move(y), {a}, [n, m](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j)
        p.grad[static_cast<size_t>(i) * m + j] +=
            self.grad[static_cast<size_t>(j) * n + i];
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  const bool vec = x.rank() == 1;
  const int n = vec ? 1 : x.dim(0);
  const int in = vec ? x.dim(0) : x.dim(1);
  if (w.rank() != 2 || w.dim(0) != in) {
    throw std::invalid_argument("linear: weight shape " + shape_str(w.shape()) +
                                " does not accept input width " +
                                std::to_string(in));
  }
  const int out = w.dim(1);
  if (b.rank() != 1 || b.dim(0) != out) {
    throw std::invalid_argument("linear: bias shape mismatch");
  }
  const auto &xd = x.data(), &wd = w.data(), &bd = b.data();
  std::vector<double> y(static_cast<size_t>(n) * out);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < out; ++j) y[static_cast<size_t>(i) * out + j] = bd[j];
    for (int l = 0; l < in; ++l) {
      const double xv = xd[static_cast<size_t>(i) * in + l];
      if (xv == 0.0) continue;
      const size_t wrow = static_cast<size_t>(l) * out;
      const size_t yrow = static_cast<size_t>(i) * out;
      for (int j = 0; j < out; ++j) y[yrow + j] += xv * wd[wrow + j];
    }
  }
  Shape oshape = vec ? Shape{out} : Shape{n, out};
  return make_op(std::move(oshape), std::move(y), {x, w, b},
                 [n, in, out](Node& self) {
                   Node& px = *self.parents[0];
                   Node& pw = *self.parents[1];
                   Node& pb = *self.parents[2];
                   if (px.requires_grad) {
                     px.ensure_grad();
                     for (int i = 0; i < n; ++i)
                       for (int j = 0; j < out; ++j) {
                         const double g =
                             self.grad[static_cast<size_t>(i) * out + j];
                         if (g == 0.0) continue;
                         for (int l = 0; l < in; ++l)
                           px.grad[static_cast<size_t>(i) * in + l] +=
                               g * pw.value[static_cast<size_t>(l) * out + j];
                       }
                   }
                   if (pw.requires_grad) {
                     pw.ensure_grad();
                     for (int i = 0; i < n; ++i)
                       for (int l = 0; l < in; ++l) {
                         const double xv =
                             px.value[static_cast<size_t>(i) * in + l];
                         if (xv == 0.0) continue;
                         for (int j = 0; j < out; ++j)
                           pw.grad[static_cast<size_t>(l) * out + j] +=
                               xv * self.grad[static_cast<size_t>(i) * out + j];
                       }
                   }
                   if (pb.requires_grad) {
                     pb.ensure_grad();
                     for (int i = 0; i < n; ++i)
                       for (int j = 0; j < out; ++j)
                         pb.grad[j] += self.grad[static_cast<size_t>(i) * out + j];
                   }
                 });
}

Tensor reshape(const Tensor& a, Shape s) {
  if (shape_numel(s) != a.numel()) {
    throw std::invalid_argument("reshape: numel mismatch");
  }
  return make_op(std::move(s), a.data(), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

Tensor row(const Tensor& a, int i) {
  if (a.rank() != 2 || i < 0 || i >= a.dim(0)) {
    throw std::invalid_argument("row: index out of range");
  }
  const int m = a.dim(1);
  const auto& x = a.data();
  std::vector<double> y(x.begin() + static_cast<size_t>(i) * m,
                        x.begin() + static_cast<size_t>(i + 1) * m);
  return make_op({m}, std::move(y), {a}, [i, m](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (int j = 0; j < m; ++j)
      p.grad[static_cast<size_t>(i) * m + j] += self.grad[j];
  });
}

Tensor slice_cols(const Tensor& a, int c0, int len) {
  if (a.rank() != 2 || c0 < 0 || len <= 0 || c0 + len > a.dim(1)) {
    throw std::invalid_argument("slice_cols: range out of bounds");
  }
  const int n = a.dim(0), m = a.dim(1);
  const auto& x = a.data();
  std::vector<double> y(static_cast<size_t>(n) * len);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < len; ++j)
      y[static_cast<size_t>(i) * len + j] =
          x[static_cast<size_t>(i) * m + c0 + j];
  return make_op({n, len}, std::move(y), {a}, [n, m, c0, len](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < len; ++j)
        p.grad[static_cast<size_t>(i) * m + c0 + j] +=
            self.grad[static_cast<size_t>(i) * len + j];
  });
}

Tensor concat_vec(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_vec: empty");
  std::vector<double> y;
  std::vector<int> sizes;
  std::vector<Tensor> inputs;
  for (const auto& p : parts) {
    if (p.rank() != 1) throw std::invalid_argument("concat_vec: rank-1 only");
    sizes.push_back(p.dim(0));
    y.insert(y.end(), p.data().begin(), p.data().end());
    inputs.push_back(p);
  }
  const int total = static_cast<int>(y.size());
  return make_op({total}, std::move(y), std::move(inputs),
                 [sizes](Node& self) {
                   size_t off = 0;
                   for (size_t s = 0; s < sizes.size(); ++s) {
                     Node& p = *self.parents[s];
                     if (p.requires_grad) {
                       p.ensure_grad();
                       for (int j = 0; j < sizes[s]; ++j)
                         p.grad[j] += self.grad[off + j];
                     }
                     off += static_cast<size_t>(sizes[s]);
                   }
                 });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  const int m = parts[0].rank() == 2 ? parts[0].dim(1) : parts[0].dim(0);
  std::vector<double> y;
  std::vector<int> rows;
  std::vector<Tensor> inputs;
  int total = 0;
  for (const auto& p : parts) {
    const int pr = p.rank() == 2 ? p.dim(0) : 1;
    const int pm = p.rank() == 2 ? p.dim(1) : p.dim(0);
    if (pm != m) throw std::invalid_argument("concat_rows: width mismatch");
    rows.push_back(pr);
    total += pr;
    y.insert(y.end(), p.data().begin(), p.data().end());
    inputs.push_back(p);
  }
  return make_op({total, m}, std::move(y), std::move(inputs),
                 [rows, m](Node& self) {
                   size_t off = 0;
                   for (size_t s = 0; s < rows.size(); ++s) {
                     Node& p = *self.parents[s];
                     const size_t count = static_cast<size_t>(rows[s]) * m;
                     if (p.requires_grad) {
                       p.ensure_grad();
                       for (size_t j = 0; j < count; ++j)
                         p.grad[j] += self.grad[off + j];
                     }
                     off += count;
                   }
                 });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  const int n = parts[0].dim(0);
  std::vector<int> widths;
  std::vector<Tensor> inputs;
  int total = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != n) {
      throw std::invalid_argument("concat_cols: row count mismatch");
    }
    widths.push_back(p.dim(1));
    total += p.dim(1);
    inputs.push_back(p);
  }
  std::vector<double> y(static_cast<size_t>(n) * total);
  int coff = 0;
  for (size_t s = 0; s < inputs.size(); ++s) {
    const auto& x = inputs[s].data();
    const int w = widths[s];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < w; ++j)
        y[static_cast<size_t>(i) * total + coff + j] =
            x[static_cast<size_t>(i) * w + j];
    coff += w;
  }
  return make_op({n, total}, std::move(y), std::move(inputs),
                 [n, widths, total](Node& self) {
                   int coff2 = 0;
                   for (size_t s = 0; s < widths.size(); ++s) {
                     Node& p = *self.parents[s];
                     const int w = widths[s];
                     if (p.requires_grad) {
                       p.ensure_grad();
                       for (int i = 0; i < n; ++i)
                         for (int j = 0; j < w; ++j)
                           p.grad[static_cast<size_t>(i) * w + j] +=
                               self.grad[static_cast<size_t>(i) * total +
                                         coff2 + j];
                     }
                     coff2 += w;
                   }
                 });
}

Tensor pick(const Tensor& a, int flat_index) {
  if (flat_index < 0 || flat_index >= a.numel()) {
    throw std::invalid_argument("pick: index out of range");
  }
  return make_op({1}, {a.data()[static_cast<size_t>(flat_index)]}, {a},
                 [flat_index](Node& self) {
                   Node& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   p.ensure_grad();
                   p.grad[static_cast<size_t>(flat_index)] += self.grad[0];
                 });
}

Tensor im2patches(const Tensor& img, int patch) {
  if (img.rank() != 3) throw std::invalid_argument("im2patches: [S,S,C] expected");
  const int h = img.dim(0), w = img.dim(1), c = img.dim(2);
  if (patch <= 0 || h % patch != 0 || w % patch != 0) {
    throw std::invalid_argument("im2patches: image size not divisible by patch");
  }
  const int gy = h / patch, gx = w / patch;
  const int n = gy * gx, d = patch * patch * c;
  const auto& x = img.data();
  std::vector<double> y(static_cast<size_t>(n) * d);
  for (int py = 0; py < gy; ++py)
    for (int px = 0; px < gx; ++px) {
      const int r = py * gx + px;
      int o = 0;
      for (int dy = 0; dy < patch; ++dy)
        for (int dx = 0; dx < patch; ++dx)
          for (int ch = 0; ch < c; ++ch, ++o)
            y[static_cast<size_t>(r) * d + o] =
                x[(static_cast<size_t>(py * patch + dy) * w + px * patch + dx) *
                      c +
                  ch];
    }
  return make_op({n, d}, std::move(y), {img},
                 [patch, gy, gx, w, c, d](Node& self) {
                   Node& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   p.ensure_grad();
                   for (int py = 0; py < gy; ++py)
                     for (int px = 0; px < gx; ++px) {
                       const int r = py * gx + px;
                       int o = 0;
                       for (int dy = 0; dy < patch; ++dy)
                         for (int dx = 0; dx < patch; ++dx)
                           for (int ch = 0; ch < c; ++ch, ++o)
                             p.grad[(static_cast<size_t>(py * patch + dy) * w +
                                     px * patch + dx) *
                                        c +
                                    ch] +=
                                 self.grad[static_cast<size_t>(r) * d + o];
                     }
                 });
}

Tensor dropout(const Tensor& a, double rate, DropoutMode mode, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw std::invalid_argument("dropout: rate must be in [0,1)");
  }
  if (mode == DropoutMode::kEval || rate == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - rate);
  const auto& x = a.data();
  std::vector<double> y(x.size());
  auto mask = std::make_shared<std::vector<uint8_t>>(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const bool keep = rng.uniform() >= rate;
    (*mask)[i] = keep;
    y[i] = keep ? x[i] * keep_scale : 0.0;
  }
  return make_op(a.shape(), std::move(y), {a},
                 [mask, keep_scale](Node& self) {
                   Node& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   p.ensure_grad();
                   for (size_t i = 0; i < self.grad.size(); ++i)
                     if ((*mask)[i]) p.grad[i] += self.grad[i] * keep_scale;
                 });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  const bool vec = x.rank() == 1;
  const int n = vec ? 1 : x.dim(0);
  const int m = vec ? x.dim(0) : x.dim(1);
  if (gamma.dim(0) != m || beta.dim(0) != m) {
    throw std::invalid_argument("layer_norm: parameter width mismatch");
  }
  const auto &xd = x.data(), &gd = gamma.data(), &bd = beta.data();
  std::vector<double> y(xd.size());
  auto inv_std = std::make_shared<std::vector<double>>(n);
  auto xhat = std::make_shared<std::vector<double>>(xd.size());
  for (int i = 0; i < n; ++i) {
    const size_t base = static_cast<size_t>(i) * m;
    double mu = 0.0;
    for (int j = 0; j < m; ++j) mu += xd[base + j];
    mu /= m;
    double var = 0.0;
    for (int j = 0; j < m; ++j) var += (xd[base + j] - mu) * (xd[base + j] - mu);
    var /= m;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[static_cast<size_t>(i)] = is;
    for (int j = 0; j < m; ++j) {
      const double xh = (xd[base + j] - mu) * is;
      (*xhat)[base + j] = xh;
      y[base + j] = gd[j] * xh + bd[j];
    }
  }
  return make_op(x.shape(), std::move(y), {x, gamma, beta},
                 [n, m, inv_std, xhat](Node& self) {
                   Node& px = *self.parents[0];
                   Node& pg = *self.parents[1];
                   Node& pb = *self.parents[2];
                   if (pg.requires_grad) {
                     pg.ensure_grad();
                     for (int i = 0; i < n; ++i)
                       for (int j = 0; j < m; ++j)
                         pg.grad[j] += self.grad[static_cast<size_t>(i) * m + j] *
                                       (*xhat)[static_cast<size_t>(i) * m + j];
                   }
                   if (pb.requires_grad) {
                     pb.ensure_grad();
                     for (int i = 0; i < n; ++i)
                       for (int j = 0; j < m; ++j)
                         pb.grad[j] += self.grad[static_cast<size_t>(i) * m + j];
                   }
                   if (px.requires_grad) {
                     px.ensure_grad();
                     for (int i = 0; i < n; ++i) {
                       const size_t base = static_cast<size_t>(i) * m;
                       double mean_g = 0.0, mean_gx = 0.0;
                       for (int j = 0; j < m; ++j) {
                         const double gy =
                             self.grad[base + j] * pg.value[j];
                         mean_g += gy;
                         mean_gx += gy * (*xhat)[base + j];
                       }
                       mean_g /= m;
                       mean_gx /= m;
                       const double is = (*inv_std)[static_cast<size_t>(i)];
                       for (int j = 0; j < m; ++j) {
                         const double gy = self.grad[base + j] * pg.value[j];
                         px.grad[base + j] +=
                             is * (gy - mean_g - (*xhat)[base + j] * mean_gx);
                       }
                     }
                   }
                 });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad) {
  if (x.rank() != 3 || w.rank() != 4) {
    throw std::invalid_argument("conv2d: x [H,W,Ci], w [Kh,Kw,Ci,Co] expected");
  }
  const int h = x.dim(0), wd = x.dim(1), ci = x.dim(2);
  const int kh = w.dim(0), kw = w.dim(1), wci = w.dim(2), co = w.dim(3);
  if (wci != ci) throw std::invalid_argument("conv2d: channel mismatch");
  if (b.dim(0) != co) throw std::invalid_argument("conv2d: bias mismatch");
  const int ho = (h + 2 * pad - kh) / stride + 1;
  const int wo = (wd + 2 * pad - kw) / stride + 1;
  if (ho <= 0 || wo <= 0) throw std::invalid_argument("conv2d: empty output");

  const auto &xd = x.data(), &wdat = w.data(), &bd = b.data();
  std::vector<double> y(static_cast<size_t>(ho) * wo * co);
  for (int oy = 0; oy < ho; ++oy)
    for (int ox = 0; ox < wo; ++ox) {
      const size_t obase = (static_cast<size_t>(oy) * wo + ox) * co;
      for (int oc = 0; oc < co; ++oc) y[obase + oc] = bd[oc];
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = oy * stride + ky - pad;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < kw; ++kx) {
          const int ix = ox * stride + kx - pad;
          if (ix < 0 || ix >= wd) continue;
          const size_t ibase = (static_cast<size_t>(iy) * wd + ix) * ci;
          const size_t wbase = (static_cast<size_t>(ky) * kw + kx) * ci * co;
          for (int ic = 0; ic < ci; ++ic) {
            const double xv = xd[ibase + ic];
            if (xv == 0.0) continue;
            const size_t wrow = wbase + static_cast<size_t>(ic) * co;
            for (int oc = 0; oc < co; ++oc)
              y[obase + oc] += xv * wdat[wrow + oc];
          }
        }
      }
    }
  return make_op(
      {ho, wo, co}, std::move(y), {x, w, b},
      [h, wd, ci, kh, kw, co, ho, wo, stride, pad](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node& pb = *self.parents[2];
        if (px.requires_grad) px.ensure_grad();
        if (pw.requires_grad) pw.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        for (int oy = 0; oy < ho; ++oy)
          for (int ox = 0; ox < wo; ++ox) {
            const size_t obase = (static_cast<size_t>(oy) * wo + ox) * co;
            if (pb.requires_grad) {
              for (int oc = 0; oc < co; ++oc) pb.grad[oc] += self.grad[obase + oc];
            }
            for (int ky = 0; ky < kh; ++ky) {
              const int iy = oy * stride + ky - pad;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < kw; ++kx) {
                const int ix = ox * stride + kx - pad;
                if (ix < 0 || ix >= wd) continue;
                const size_t ibase = (static_cast<size_t>(iy) * wd + ix) * ci;
                const size_t wbase =
                    (static_cast<size_t>(ky) * kw + kx) * ci * co;
                for (int ic = 0; ic < ci; ++ic) {
                  const size_t wrow = wbase + static_cast<size_t>(ic) * co;
                  if (px.requires_grad) {
                    double acc = 0.0;
                    for (int oc = 0; oc < co; ++oc)
                      acc += self.grad[obase + oc] * pw.value[wrow + oc];
                    px.grad[ibase + ic] += acc;
                  }
                  if (pw.requires_grad) {
                    const double xv = px.value[ibase + ic];
                    if (xv == 0.0) continue;
                    for (int oc = 0; oc < co; ++oc)
                      pw.grad[wrow + oc] += xv * self.grad[obase + oc];
                  }
                }
              }
            }
          }
      });
}

AttentionParams AttentionParams::init(int dim, Rng& rng) {
  AttentionParams p;
  p.wq = init_uniform_fanin({dim, dim}, dim, rng);
  p.bq = Tensor::zeros({dim}, true);
  p.wk = init_uniform_fanin({dim, dim}, dim, rng);
  p.bk = Tensor::zeros({dim}, true);
  p.wv = init_uniform_fanin({dim, dim}, dim, rng);
  p.bv = Tensor::zeros({dim}, true);
  p.wo = init_uniform_fanin({dim, dim}, dim, rng);
  p.bo = Tensor::zeros({dim}, true);
  return p;
}

std::vector<Tensor*> AttentionParams::params() {
  return {&wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo};
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            int heads, const AttentionParams& p) {
  const int dm = q.dim(q.rank() - 1);
  if (heads <= 0 || dm % heads != 0) {
    throw std::invalid_argument(
        "multi_head_attention: model dim not divisible by head count");
  }
  if (k.dim(k.rank() - 1) != dm || v.dim(v.rank() - 1) != dm) {
    throw std::invalid_argument("multi_head_attention: width mismatch");
  }
  const int dh = dm / heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor qp = linear(q, p.wq, p.bq);
  Tensor kp = linear(k, p.wk, p.bk);
  Tensor vp = linear(v, p.wv, p.bv);

  std::vector<Tensor> head_outs;
  head_outs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(qp, h * dh, dh);
    Tensor kh = slice_cols(kp, h * dh, dh);
    Tensor vh = slice_cols(vp, h * dh, dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), att_scale);
    Tensor attn = softmax(scores, -1);
    head_outs.push_back(matmul(attn, vh));
  }
  return linear(concat_cols(head_outs), p.wo, p.bo);
}

Tensor init_uniform_fanin(Shape shape, int fan_in, Rng& rng) {
  // Kaiming-style bound, uniform with variance 2/fan_in
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Tensor t = Tensor::zeros(shape, true);
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

Tensor init_normal(Shape shape, double sigma, Rng& rng) {
  Tensor t = Tensor::zeros(shape, true);
  for (double& v : t.data()) v = rng.normal(0.0, sigma);
  return t;
}

}  // namespace tprs
