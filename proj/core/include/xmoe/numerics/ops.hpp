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

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "xmoe/numerics/autodiff.hpp"

// Differentiable operations. "Row" operations treat a rank-1 tensor as a
// single row; everything else expects rank-2 matrices where it says so.
// No implicit broadcasting: the *_row_vector / row_scale helpers are the
// only broadcasting forms.

namespace xmoe::ops {

// Elementwise, identical shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);

Var neg(const Var& a);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var gelu(const Var& a);  // tanh approximation
// Gradient passes only strictly inside (lo, hi).
Var clamp(const Var& a, double lo, double hi);

Var sum(const Var& a);   // -> shape (1)
Var mean(const Var& a);  // -> shape (1)
Var dot(const Var& a, const Var& b);
Var sum_rows(const Var& a);  // (m x n) -> (m)

Var reshape(const Var& a, Shape shape);

// (m x k) . (k x n)
Var matmul(const Var& a, const Var& b);
// (m x k) . (n x k)^T
Var matmul_nt(const Var& a, const Var& b);

// (m x n) + v(n) added to every row
Var add_row_vector(const Var& a, const Var& v);
// (m x n) * v(n) per column
Var mul_row_vector(const Var& a, const Var& v);
// (m x n) with row i multiplied by w(i)
Var row_scale(const Var& a, const Var& w);

// Row-wise softmax with max subtraction. Rank-1 input gives rank-1 output.
Var softmax(const Var& x);
Var log_softmax(const Var& x);
// Square (T x T) scores; row t normalizes over columns 0..t only, later
// columns are exactly zero.
Var causal_softmax(const Var& scores);

// Rows of `table` selected by `index` -> (len(index) x cols).
Var gather_rows(const Var& table, std::span<const std::size_t> index);
// Adds row r of `src` into row index[r] of a zero (rows x cols) result.
Var scatter_rows(const Var& src, std::span<const std::size_t> index, std::size_t rows);
// Flat-index element gather -> (len(index)).
Var pick(const Var& a, std::span<const std::size_t> flat_index);

Var slice_cols(const Var& a, std::size_t begin, std::size_t end);
Var slice_rows(const Var& a, std::size_t begin, std::size_t end);
// Column concatenation; all-rank-1 inputs concatenate as vectors.
Var concat_cols(const std::vector<Var>& parts);
// Row-wise RMS normalization with per-column gain.
Var rms_norm(const Var& x, const Var& gain, double eps = 1e-6);

// Mean over rows of -log softmax(logits)[t, targets[t]].
Var cross_entropy(const Var& logits, std::span<const std::size_t> targets);
// Mean binary cross-entropy of sigmoid(logits) against targets in [0, 1].
Var bce_with_logits(const Var& logits, const Tensor& targets);

/// Diagonal Gaussian log-density sum_d log N(z_d | mu_d, var_d). Throws
/// DomainError when any variance is not strictly positive.
Var log_normal_diag(const Var& z, const Var& mu, const Var& var);

}  // namespace xmoe::ops
