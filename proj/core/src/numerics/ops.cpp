// Copyright 2026 The xmoe Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "xmoe/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "xmoe/errors.hpp"

namespace xmoe::ops {

namespace {

// Gradient buffer of an input, or nullptr when it does not need one.
Tensor* gbuf(const Var& v) { return v.requires_grad() ? &v.node()->grad_buffer() : nullptr; }

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_rank2(const char* op, const Var& a) {
  if (a.value().rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
  }
}

template <typename Fwd, typename Deriv>
Var unary(std::string_view name, const Var& a, Fwd fwd, Deriv deriv) {
  Tensor out(a.shape());
  const auto& x = a.value().storage();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  return make_op(name, std::move(out), {a}, [a, deriv](Node& self, const Tensor& g) {
    Tensor* ga = gbuf(a);
    if (!ga) return;
    const auto& x = a.value().storage();
    const auto& y = self.value.storage();
    for (std::size_t i = 0; i < x.size(); ++i) (*ga)[i] += g[i] * deriv(x[i], y[i]);
  });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape("add", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_op("add", std::move(out), {a, b}, [a, b](const Tensor& g) {
    if (Tensor* ga = gbuf(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    if (Tensor* gb = gbuf(b))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i];
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_op("sub", std::move(out), {a, b}, [a, b](const Tensor& g) {
    if (Tensor* ga = gbuf(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    if (Tensor* gb = gbuf(b))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_op("mul", std::move(out), {a, b}, [a, b](const Tensor& g) {
    if (Tensor* ga = gbuf(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * b.value()[i];
    if (Tensor* gb = gbuf(b))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * a.value()[i];
  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double s) {
  return unary("scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary("add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var exp(const Var& a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  for (double v : a.value().values()) {
    if (!(v > 0.0)) throw DomainError("log of non-positive value");
  }
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(const Var& a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sigmoid(const Var& a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var gelu(const Var& a) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double k = 0.044715;
  return unary(
      "gelu", a, [](double x) { return 0.5 * x * (1.0 + std::tanh(c * (x + k * x * x * x))); },
      [](double x, double) {
        const double t = std::tanh(c * (x + k * x * x * x));
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * k * x * x);
      });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary(
      "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return make_op("sum", Tensor::scalar(s), {a}, [a](const Tensor& g) {
    if (Tensor* ga = gbuf(a))
      for (auto& v : ga->values()) v += g[0];
  });
}

Var mean(const Var& a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var dot(const Var& a, const Var& b) { return sum(mul(a, b)); }

Var sum_rows(const Var& a) {
  const std::size_t m = a.value().rows(), n = a.value().cols();
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += a.value()[i * n + j];
    out[i] = s;
  }
  return make_op("sum_rows", std::move(out), {a}, [a, m, n](const Tensor& g) {
    if (Tensor* ga = gbuf(a))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += g[i];
  });
}

Var reshape(const Var& a, Shape shape) {
  if (shape_size(shape) != a.value().size()) {
    throw DimensionError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  Tensor out = a.value().reshaped(std::move(shape));
  return make_op("reshape", std::move(out), {a}, [a](const Tensor& g) {
    if (Tensor* ga = gbuf(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
  });
}

Var matmul(const Var& a, const Var& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor out({m, n});
  const double* A = a.value().storage().data();
  const double* B = b.value().storage().data();
  double* C = out.storage().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = B + p * n;
      double* crow = C + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  return make_op("matmul", std::move(out), {a, b}, [a, b, m, k, n](const Tensor& g) {
    const double* G = g.storage().data();
    if (Tensor* ga = gbuf(a)) {
      const double* B = b.value().storage().data();
      double* GA = ga->storage().data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          const double* grow = G + i * n;
          const double* brow = B + p * n;
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
          GA[i * k + p] += s;
        }
    }
    if (Tensor* gb = gbuf(b)) {
      const double* A = a.value().storage().data();
      double* GB = gb->storage().data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          if (aip == 0.0) continue;
          const double* grow = G + i * n;
          double* gbrow = GB + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
        }
    }
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require_rank2("matmul_nt", a);
  require_rank2("matmul_nt", b);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  if (b.shape()[1] != k) {
    throw DimensionError("matmul_nt: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + "^T");
  }
  Tensor out({m, n});
  const double* A = a.value().storage().data();
  const double* B = b.value().storage().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += A[i * k + p] * B[j * k + p];
      out[i * n + j] = s;
    }
  return make_op("matmul_nt", std::move(out), {a, b}, [a, b, m, k, n](const Tensor& g) {
    const double* G = g.storage().data();
    if (Tensor* ga = gbuf(a)) {
      const double* B = b.value().storage().data();
      double* GA = ga->storage().data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double gij = G[i * n + j];
          if (gij == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p) GA[i * k + p] += gij * B[j * k + p];
        }
    }
    if (Tensor* gb = gbuf(b)) {
      const double* A = a.value().storage().data();
      double* GB = gb->storage().data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double gij = G[i * n + j];
          if (gij == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p) GB[j * k + p] += gij * A[i * k + p];
        }
    }
  });
}

Var add_row_vector(const Var& a, const Var& v) {
  const std::size_t m = a.value().rows(), n = a.value().cols();
  if (v.value().size() != n) {
    throw DimensionError("add_row_vector: " + shape_str(a.shape()) + " + " + shape_str(v.shape()));
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += v.value()[j];
  return make_op("add_row_vector", std::move(out), {a, v}, [a, v, m, n](const Tensor& g) {
    if (Tensor* ga = gbuf(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    if (Tensor* gv = gbuf(v))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*gv)[j] += g[i * n + j];
  });
}

Var mul_row_vector(const Var& a, const Var& v) {
  const std::size_t m = a.value().rows(), n = a.value().cols();
  if (v.value().size() != n) {
    throw DimensionError("mul_row_vector: " + shape_str(a.shape()) + " * " + shape_str(v.shape()));
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] *= v.value()[j];
  return make_op("mul_row_vector", std::move(out), {a, v}, [a, v, m, n](const Tensor& g) {
    if (Tensor* ga = gbuf(a))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += g[i * n + j] * v.value()[j];
    if (Tensor* gv = gbuf(v))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*gv)[j] += g[i * n + j] * a.value()[i * n + j];
  });
}

Var row_scale(const Var& a, const Var& w) {
  const std::size_t m = a.value().rows(), n = a.value().cols();
  if (w.value().size() != m) {
    throw DimensionError("row_scale: " + shape_str(a.shape()) + " by " + shape_str(w.shape()));
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] *= w.value()[i];
  return make_op("row_scale", std::move(out), {a, w}, [a, w, m, n](const Tensor& g) {
    if (Tensor* ga = gbuf(a))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += g[i * n + j] * w.value()[i];
    if (Tensor* gw = gbuf(w))
      for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * a.value()[i * n + j];
        (*gw)[i] += s;
      }
  });
}

namespace {

// Softmax over columns [0, width(i)) of each row; remaining columns are 0.
template <typename Width>
Tensor softmax_rows(const Tensor& x, Width width) {
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t w = width(i);
    const double* row = x.storage().data() + i * n;
    double mx = row[0];
    for (std::size_t j = 1; j < w; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < w; ++j) z += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < w; ++j) out[i * n + j] = std::exp(row[j] - mx) / z;
  }
  return out;
}

void softmax_backward(const Var& x, const Node& self, const Tensor& g) {
  Tensor* gx = gbuf(x);
  if (!gx) return;
  const std::size_t m = self.value.rows(), n = self.value.cols();
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * self.value[i * n + j];
    for (std::size_t j = 0; j < n; ++j) (*gx)[i * n + j] += self.value[i * n + j] * (g[i * n + j] - s);
  }
}

}  // namespace

Var softmax(const Var& x) {
  if (x.value().empty()) throw DimensionError("softmax of empty input");
  const std::size_t n = x.value().cols();
  Tensor out = softmax_rows(x.value(), [n](std::size_t) { return n; });
  return make_op("softmax", std::move(out), {x}, [x](Node& self, const Tensor& g) { softmax_backward(x, self, g); });
}

Var causal_softmax(const Var& scores) {
  require_rank2("causal_softmax", scores);
  if (scores.shape()[0] != scores.shape()[1] || scores.value().empty()) {
    throw DimensionError("causal_softmax: expected square scores, got " + shape_str(scores.shape()));
  }
  Tensor out = softmax_rows(scores.value(), [](std::size_t i) { return i + 1; });
  return make_op("causal_softmax", std::move(out), {scores},
                 [scores](Node& self, const Tensor& g) { softmax_backward(scores, self, g); });
}

Var log_softmax(const Var& x) {
  if (x.value().empty()) throw DimensionError("log_softmax of empty input");
  const std::size_t m = x.value().rows(), n = x.value().cols();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.value().storage().data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = row[j] - lz;
  }
  return make_op("log_softmax", std::move(out), {x}, [x, m, n](Node& self, const Tensor& g) {
    Tensor* gx = gbuf(x);
    if (!gx) return;
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += g[i * n + j];
      for (std::size_t j = 0; j < n; ++j) (*gx)[i * n + j] += g[i * n + j] - std::exp(self.value[i * n + j]) * s;
    }
  });
}

Var gather_rows(const Var& table, std::span<const std::size_t> index) {
  const std::size_t rows = table.value().rows(), n = table.value().cols();
  std::vector<std::size_t> idx(index.begin(), index.end());
  Tensor out({idx.size(), n});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= rows) {
      throw LookupError("row " + std::to_string(idx[r]) + " outside table of " + std::to_string(rows) + " rows");
    }
    std::copy_n(table.value().storage().data() + idx[r] * n, n, out.storage().data() + r * n);
  }
  return make_op("gather_rows", std::move(out), {table}, [table, idx, n](const Tensor& g) {
    if (Tensor* gt = gbuf(table))
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < n; ++j) (*gt)[idx[r] * n + j] += g[r * n + j];
  });
}

Var scatter_rows(const Var& src, std::span<const std::size_t> index, std::size_t rows) {
  const std::size_t n = src.value().cols();
  std::vector<std::size_t> idx(index.begin(), index.end());
  if (idx.size() != src.value().rows()) throw DimensionError("scatter_rows: index length differs from row count");
  Tensor out({rows, n});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= rows) throw LookupError("scatter_rows: target row out of range");
    for (std::size_t j = 0; j < n; ++j) out[idx[r] * n + j] += src.value()[r * n + j];
  }
  return make_op("scatter_rows", std::move(out), {src}, [src, idx, n](const Tensor& g) {
    if (Tensor* gs = gbuf(src))
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < n; ++j) (*gs)[r * n + j] += g[idx[r] * n + j];
  });
}

Var pick(const Var& a, std::span<const std::size_t> flat_index) {
  std::vector<std::size_t> idx(flat_index.begin(), flat_index.end());
  Tensor out({idx.size()});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= a.value().size()) throw LookupError("pick: index out of range");
    out[r] = a.value()[idx[r]];
  }
  return make_op("pick", std::move(out), {a}, [a, idx](const Tensor& g) {
    if (Tensor* ga = gbuf(a))
      for (std::size_t r = 0; r < idx.size(); ++r) (*ga)[idx[r]] += g[r];
  });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  const std::size_t m = a.value().rows(), n = a.value().cols();
  if (begin > end || end > n) throw DimensionError("slice_cols: range outside " + shape_str(a.shape()));
  const std::size_t w = end - begin;
  Tensor out(a.value().rank() == 1 ? Shape{w} : Shape{m, w});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = a.value()[i * n + begin + j];
  return make_op("slice_cols", std::move(out), {a}, [a, m, n, w, begin](const Tensor& g) {
    if (Tensor* ga = gbuf(a))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) (*ga)[i * n + begin + j] += g[i * w + j];
  });
}

Var slice_rows(const Var& a, std::size_t begin, std::size_t end) {
  require_rank2("slice_rows", a);
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (begin > end || end > m) throw DimensionError("slice_rows: range outside " + shape_str(a.shape()));
  Tensor out({end - begin, n});
  std::copy(a.value().storage().begin() + begin * n, a.value().storage().begin() + end * n, out.storage().begin());
  return make_op("slice_rows", std::move(out), {a}, [a, n, begin](const Tensor& g) {
    if (Tensor* ga = gbuf(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[begin * n + i] += g[i];
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const bool vectors = std::all_of(parts.begin(), parts.end(), [](const Var& p) { return p.value().rank() == 1; });
  const std::size_t m = parts[0].value().rows();
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.value().rows() != m) throw DimensionError("concat_cols: row counts differ");
    n += p.value().cols();
  }
  Tensor out(vectors ? Shape{n} : Shape{m, n});
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.value().cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * n + off + j] = p.value()[i * w + j];
    offsets.push_back(off);
    off += w;
  }
  return make_op("concat_cols", std::move(out), parts, [parts, offsets, m, n](const Tensor& g) {
    for (std::size_t k = 0; k < parts.size(); ++k) {
      Tensor* gp = gbuf(parts[k]);
      if (!gp) continue;
      const std::size_t w = parts[k].value().cols();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) (*gp)[i * w + j] += g[i * n + offsets[k] + j];
    }
  });
}

Var rms_norm(const Var& x, const Var& gain, double eps) {
  const std::size_t m = x.value().rows(), n = x.value().cols();
  if (gain.value().size() != n) throw DimensionError("rms_norm: gain size differs from row width");
  Tensor out(x.shape());
  std::vector<double> inv_rms(m);
  for (std::size_t i = 0; i < m; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) ss += x.value()[i * n + j] * x.value()[i * n + j];
    inv_rms[i] = 1.0 / std::sqrt(ss / static_cast<double>(n) + eps);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.value()[i * n + j] * inv_rms[i] * gain.value()[j];
  }
  return make_op("rms_norm", std::move(out), {x, gain}, [x, gain, inv_rms, m, n](const Tensor& g) {
    Tensor* gx = gbuf(x);
    Tensor* gg = gbuf(gain);
    for (std::size_t i = 0; i < m; ++i) {
      const double r = inv_rms[i];
      if (gg)
        for (std::size_t j = 0; j < n; ++j) (*gg)[j] += g[i * n + j] * x.value()[i * n + j] * r;
      if (gx) {
        // d xhat = g * gain; dx = r * (d xhat - xhat * mean(d xhat * xhat))
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * gain.value()[j] * x.value()[i * n + j] * r;
        s /= static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) {
          const double xhat = x.value()[i * n + j] * r;
          (*gx)[i * n + j] += r * (g[i * n + j] * gain.value()[j] - xhat * s);
        }
      }
    }
  });
}

Var cross_entropy(const Var& logits, std::span<const std::size_t> targets) {
  const std::size_t m = logits.value().rows(), n = logits.value().cols();
  if (targets.size() != m) throw DimensionError("cross_entropy: one target per row required");
  if (m == 0) throw DimensionError("cross_entropy: no rows");
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  Tensor probs(logits.shape());
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (tgt[i] >= n) throw LookupError("cross_entropy: target outside vocabulary");
    const double* row = logits.value().storage().data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < n; ++j) probs[i * n + j] = std::exp(row[j] - mx) / z;
    loss += -(row[tgt[i]] - mx - std::log(z));
  }
  loss /= static_cast<double>(m);
  return make_op("cross_entropy", Tensor::scalar(loss), {logits},
                 [logits, probs = std::move(probs), tgt, m, n](const Tensor& g) {
                   Tensor* gl = gbuf(logits);
                   if (!gl) return;
                   const double s = g[0] / static_cast<double>(m);
                   for (std::size_t i = 0; i < m; ++i) {
                     for (std::size_t j = 0; j < n; ++j) (*gl)[i * n + j] += s * probs[i * n + j];
                     (*gl)[i * n + tgt[i]] -= s;
                   }
                 });
}

Var bce_with_logits(const Var& logits, const Tensor& targets) {
  const std::size_t n = logits.value().size();
  if (targets.size() != n || n == 0) throw DimensionError("bce_with_logits: target count differs from logits");
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = logits.value()[i], t = targets[i];
    if (t < 0.0 || t > 1.0) throw DataError("bce target outside [0, 1]: " + std::to_string(t));
    loss += std::max(x, 0.0) - t * x + std::log1p(std::exp(-std::abs(x)));
  }
  loss /= static_cast<double>(n);
  return make_op("bce_with_logits", Tensor::scalar(loss), {logits}, [logits, targets, n](const Tensor& g) {
    Tensor* gl = gbuf(logits);
    if (!gl) return;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = logits.value()[i];
      const double p = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      (*gl)[i] += g[0] * (p - targets[i]) / static_cast<double>(n);
    }
  });
}

Var log_normal_diag(const Var& z, const Var& mu, const Var& var) {
  require_same_shape("log_normal_diag", z, mu);
  require_same_shape("log_normal_diag", z, var);
  constexpr double half_log_2pi = 0.91893853320467274178;
  double s = 0.0;
  for (std::size_t d = 0; d < z.value().size(); ++d) {
    const double v = var.value()[d];
    if (!(v > 0.0)) throw DomainError("log_normal_diag: variance must be strictly positive");
    const double diff = z.value()[d] - mu.value()[d];
    s += -half_log_2pi - 0.5 * std::log(v) - diff * diff / (2.0 * v);
  }
  return make_op("log_normal_diag", Tensor::scalar(s), {z, mu, var}, [z, mu, var](const Tensor& g) {
    Tensor* gz = gbuf(z);
    Tensor* gm = gbuf(mu);
    Tensor* gv = gbuf(var);
    for (std::size_t d = 0; d < z.value().size(); ++d) {
      const double v = var.value()[d];
      const double diff = z.value()[d] - mu.value()[d];
      if (gz) (*gz)[d] += -g[0] * diff / v;
      if (gm) (*gm)[d] += g[0] * diff / v;
      if (gv) (*gv)[d] += g[0] * (-0.5 / v + diff * diff / (2.0 * v * v));
    }
  });
}

}  // namespace xmoe::ops
