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

#include "xmoe/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "xmoe/errors.hpp"

namespace xmoe {

namespace {

double eval_scalar(const std::function<double()>& f) {
  const double v = f();
  if (!std::isfinite(v)) throw DomainError("grad_check: function is not finite near the probe point");
  return v;
}

double max_relative_error(const Tensor& analytic, const Tensor& numeric) {
  if (analytic.shape() != numeric.shape()) throw DimensionError("grad_check: gradient shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    const double err = std::abs(analytic[i] - numeric[i]) / std::max(1.0, std::abs(numeric[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace

Tensor numeric_gradient(const ScalarFn& f, const Tensor& x, double h) {
  NoGradGuard no_grad;
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = eval_scalar([&] { return f(Var::constant(probe)).item(); });
    probe[i] = x[i] - h;
    const double down = eval_scalar([&] { return f(Var::constant(probe)).item(); });
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double gradient_error(const ScalarFn& f, const Tensor& x, const Tensor& analytic, double h) {
  return max_relative_error(analytic, numeric_gradient(f, x, h));
}

double grad_check(const ScalarFn& f, const Tensor& x, double h) {
  Var p = Var::parameter(x);
  Var loss = f(p);
  backward(loss);
  return gradient_error(f, x, p.grad(), h);
}

double grad_check_parameter(const std::function<Var()>& loss, Var& parameter, double h) {
  const Tensor saved_grad = parameter.grad();
  parameter.zero_grad();
  backward(loss());
  const Tensor analytic = parameter.grad();
  parameter.node()->grad = saved_grad;

  Tensor& value = parameter.mutable_value();
  Tensor numeric(value.shape());
  {
    NoGradGuard no_grad;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double orig = value[i];
      value[i] = orig + h;
      const double up = eval_scalar([&] { return loss().item(); });
      value[i] = orig - h;
      const double down = eval_scalar([&] { return loss().item(); });
      value[i] = orig;
      numeric[i] = (up - down) / (2.0 * h);
    }
  }
  return max_relative_error(analytic, numeric);
}

}  // namespace xmoe
