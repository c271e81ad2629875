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

#include "xmoe/numerics/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <string>
#include <unordered_set>

#include "xmoe/errors.hpp"

namespace xmoe {

namespace {

std::atomic<std::uint64_t> g_next_seq{1};
thread_local bool t_grad_enabled = true;

std::shared_ptr<Node> new_node(Tensor value, std::string_view op) {
  if (!value.all_finite()) {
    throw DomainError("non-finite value produced by '" + std::string(op) + "'");
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  node->seq = g_next_seq.fetch_add(1, std::memory_order_relaxed);
  return node;
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty() && !value.empty()) grad = Tensor(value.shape());
  if (grad.shape() != value.shape()) grad = Tensor(value.shape());
  return grad;
}

Var Var::parameter(Tensor value) {
  auto node = new_node(std::move(value), "parameter");
  node->requires_grad = true;
  return Var(std::move(node));
}

Var Var::constant(Tensor value) { return Var(new_node(std::move(value), "constant")); }

Tensor& Var::mutable_value() {
  if (!node_->leaf) throw ContractError("mutable_value() on interior node '" + std::string(node_->op) + "'");
  return node_->value;
}

Tensor Var::grad() const {
  if (node_->grad.empty()) return Tensor(node_->value.shape());
  return node_->grad;
}

void Var::zero_grad() {
  if (node_ && !node_->grad.empty()) node_->grad.fill(0.0);
}

Var make_op(std::string_view op, Tensor value, std::vector<Var> inputs,
            std::function<void(const Tensor&)> backward_fn) {
  auto node = new_node(std::move(value), op);
  const bool any = t_grad_enabled && std::any_of(inputs.begin(), inputs.end(),
                                                 [](const Var& v) { return v.requires_grad(); });
  if (any) {
    node->requires_grad = true;
    node->leaf = false;
    node->parents.reserve(inputs.size());
    for (auto& in : inputs) node->parents.push_back(in.node_ptr());
    node->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(node));
}

Var make_op(std::string_view op, Tensor value, std::vector<Var> inputs,
            std::function<void(Node&, const Tensor&)> backward_fn) {
  Var out = make_op(op, std::move(value), std::move(inputs), std::function<void(const Tensor&)>{});
  if (out.requires_grad()) {
    Node* self = out.node();
    out.node()->backward_fn = [self, fn = std::move(backward_fn)](const Tensor& g) { fn(*self, g); };
  }
  return out;
}

Tape Tape::record(const Var& loss) {
  Tape tape;
  if (!loss.defined() || loss.value().size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  tape.loss_ = loss.node();
  if (!loss.requires_grad()) return tape;

  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{loss.node()};
  seen.insert(loss.node());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    tape.nodes_.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(tape.nodes_.begin(), tape.nodes_.end(), [](const Node* a, const Node* b) { return a->seq < b->seq; });
  return tape;
}

void Tape::backward() {
  visits_ = 0;
  if (nodes_.empty()) return;
  for (Node* n : nodes_) {
    if (!n->leaf) n->grad = Tensor(n->value.shape());
  }
  loss_->grad_buffer()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node* n = *it;
    if (n->leaf || !n->backward_fn) continue;
    n->backward_fn(n->grad);
    ++visits_;
  }
}

void backward(const Var& loss) { Tape::record(loss).backward(); }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() noexcept { return t_grad_enabled; }

}  // namespace xmoe
