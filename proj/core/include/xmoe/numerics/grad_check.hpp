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

#include <functional>

#include "xmoe/numerics/autodiff.hpp"

namespace xmoe {

using ScalarFn = std::function<Var(const Var&)>;

/// Central-difference gradient of f at x, one coordinate at a time.
/// Throws DomainError if f is non-finite at any probe point.
Tensor numeric_gradient(const ScalarFn& f, const Tensor& x, double h = 1e-5);

/// max_i |analytic_i - numeric_i| / max(1, |numeric_i|).
double gradient_error(const ScalarFn& f, const Tensor& x, const Tensor& analytic, double h = 1e-5);

/// Runs f on a fresh parameter copy of x, backpropagates, and compares the
/// result with numeric_gradient.
double grad_check(const ScalarFn& f, const Tensor& x, double h = 1e-5);

/// Checks the gradient of `loss` with respect to an existing parameter in
/// place. The parameter value is perturbed and restored; its accumulated
/// gradient is left as it was found.
double grad_check_parameter(const std::function<Var()>& loss, Var& parameter, double h = 1e-5);

}  // namespace xmoe
