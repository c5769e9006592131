// SPDX-License-Identifier: Apache-2.0
#include "ekt/tape.hpp"

#include <algorithm>
#include <stdexcept>

namespace ekt {

Var Tape::push(std::size_t rows, std::size_t cols, const double* external, bool requires_grad) {
  if (rows == 0 || cols == 0) throw std::invalid_argument("tape node dimensions must be positive");
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.external = external;
  n.requires_grad = requires_grad;
  if (!external) {
    n.value_offset = values_.size();
    values_.resize(values_.size() + rows * cols, 0.0);
  }
  n.grad_offset = grad_size_;
  if (requires_grad) grad_size_ += rows * cols;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(std::span<const double> value, std::size_t rows, std::size_t cols) {
  if (value.size() != rows * cols) throw std::invalid_argument("constant: size mismatch");
  Var v = push(rows, cols, nullptr, false);
  std::copy(value.begin(), value.end(), values_.begin() + nodes_[v.id].value_offset);
  return v;
}

Var Tape::input(std::span<const double> value, std::size_t rows, std::size_t cols) {
  if (value.size() != rows * cols) throw std::invalid_argument("input: size mismatch");
  Var v = push(rows, cols, nullptr, grad_enabled_);
  std::copy(value.begin(), value.end(), values_.begin() + nodes_[v.id].value_offset);
  return v;
}

Var Tape::param(std::size_t index) {
  if (!params_) throw std::logic_error("tape has no parameter store");
  if (index >= params_->size()) throw std::out_of_range("parameter index out of range");
  if (param_nodes_.size() < params_->size()) param_nodes_.resize(params_->size(), UINT32_MAX);
  if (param_nodes_[index] != UINT32_MAX) return Var{param_nodes_[index]};
  const Param& p = (*params_)[index];
  const std::size_t rows = p.value.rows();
  const std::size_t cols = p.value.cols();
  Var v = push(rows, cols, p.value.data().data(), p.trainable && grad_enabled_);
  param_nodes_[index] = v.id;
  return v;
}

Var Tape::param(std::string_view name) {
  if (!params_) throw std::logic_error("tape has no parameter store");
  return param(params_->index(name));
}

Var Tape::make(std::size_t rows, std::size_t cols, std::initializer_list<Var> inputs, BackwardFn backward) {
  return make(rows, cols, std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::make(std::size_t rows, std::size_t cols, std::span<const Var> inputs, BackwardFn backward) {
  bool rg = false;
  for (Var in : inputs) rg = rg || nodes_[in.id].requires_grad;
  Var v = push(rows, cols, nullptr, rg);
  if (rg) nodes_[v.id].backward = std::move(backward);
  return v;
}

std::span<const double> Tape::value(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.external) return {n.external, n.rows * n.cols};
  return {values_.data() + n.value_offset, n.rows * n.cols};
}

std::span<double> Tape::value_mut(Var v) {
  Node& n = nodes_[v.id];
  if (n.external) throw std::logic_error("parameter views are read-only");
  return {values_.data() + n.value_offset, n.rows * n.cols};
}

std::span<const double> Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (!n.requires_grad || grads_.empty()) return {};
  return {grads_.data() + n.grad_offset, n.rows * n.cols};
}

std::span<double> Tape::grad_mut(Var v) {
  Node& n = nodes_[v.id];
  if (!n.requires_grad) return {};
  return {grads_.data() + n.grad_offset, n.rows * n.cols};
}

bool Tape::has_param(std::size_t index) const {
  return index < param_nodes_.size() && param_nodes_[index] != UINT32_MAX;
}

std::span<const double> Tape::param_grad(std::size_t index) const {
  if (!has_param(index)) return {};
  return grad(Var{param_nodes_[index]});
}

void Tape::backward(Var out, double seed) {
  if (swept_) throw std::logic_error("backward may only run once per tape");
  grads_.assign(grad_size_, 0.0);
  auto g = grad_mut(out);
  for (double& x : g) x = seed;
  sweep();
}

void Tape::backward(std::span<const Var> outs, std::span<const std::vector<double>> seeds) {
  if (swept_) throw std::logic_error("backward may only run once per tape");
  if (outs.size() != seeds.size()) throw std::invalid_argument("backward: outputs/seeds mismatch");
  grads_.assign(grad_size_, 0.0);
  for (std::size_t i = 0; i < outs.size(); ++i) {
    auto g = grad_mut(outs[i]);
    if (g.empty()) continue;
    if (seeds[i].size() != g.size()) throw std::invalid_argument("backward: seed size mismatch");
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += seeds[i][j];
  }
  sweep();
}

void Tape::sweep() {
  swept_ = true;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward) n.backward(*this, Var{static_cast<std::uint32_t>(i)});
  }
}

}  // namespace ekt
