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

#include <cstdint>
#include <functional>
#include <memory>
#include <string_view>
#include <vector>

#include "xmoe/numerics/tensor.hpp"

namespace xmoe {

/// One value in the computation graph. Every node gets a sequence number at
/// creation, so a node's inputs always carry smaller numbers than the node
/// itself; the tape relies on this for its ordering.
struct Node {
  Tensor value;
  Tensor grad;  // empty until first written
  bool requires_grad = false;
  bool leaf = true;
  std::uint64_t seq = 0;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Tensor& grad_out)> backward_fn;

  // Returns the gradient buffer, allocating zeros on first use.
  Tensor& grad_buffer();
};

/// Handle to a graph node. Cheap to copy; copies alias the same node.
class Var {
 public:
  Var() = default;

  static Var parameter(Tensor value);
  static Var constant(Tensor value);

  const Tensor& value() const { return node_->value; }
  // Leaves only; used by optimizers and checkpoint loading.
  Tensor& mutable_value();
  const Shape& shape() const { return node_->value.shape(); }
  double item() const { return node_->value.item(); }

  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  bool defined() const noexcept { return static_cast<bool>(node_); }

  /// Accumulated gradient; a zero tensor of matching shape if nothing has
  /// been accumulated yet.
  Tensor grad() const;
  bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }
  void zero_grad();

  Node* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const noexcept { return node_; }

 private:
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  friend Var make_op(std::string_view, Tensor, std::vector<Var>, std::function<void(const Tensor&)>);
  friend Var make_op(std::string_view, Tensor, std::vector<Var>,
                     std::function<void(Node& self, const Tensor&)>);

  std::shared_ptr<Node> node_;
};

/// Records an op result. When recording is disabled, or no input requires a
/// gradient, the result is a constant and the backward rule is dropped.
/// Throws DomainError if `value` holds a NaN or infinity.
Var make_op(std::string_view op, Tensor value, std::vector<Var> inputs,
            std::function<void(const Tensor& grad_out)> backward_fn);

/// Variant whose backward rule also receives the result node (for rules that
/// need the output value without copying it into the closure).
Var make_op(std::string_view op, Tensor value, std::vector<Var> inputs,
            std::function<void(Node& self, const Tensor& grad_out)> backward_fn);

/// Ordered list of the differentiable nodes reachable from a scalar loss,
/// inputs before outputs.
class Tape {
 public:
  static Tape record(const Var& loss);

  const std::vector<Node*>& nodes() const noexcept { return nodes_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and runs each backward rule once, last node
  /// first. Leaf gradients accumulate onto whatever they already hold;
  /// interior gradients are reset first so a tape can be replayed.
  void backward();

  /// Number of backward rules executed by the last backward() call.
  std::size_t visits() const noexcept { return visits_; }

 private:
  Node* loss_ = nullptr;
  std::vector<Node*> nodes_;
  std::size_t visits_ = 0;
};

/// Convenience: Tape::record(loss).backward(). Throws ContractError unless
/// loss holds exactly one value.
void backward(const Var& loss);

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled() noexcept;

}  // namespace xmoe
