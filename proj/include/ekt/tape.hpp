// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

#include "ekt/params.hpp"

namespace ekt {

/// Handle to a node on a Tape.
struct Var {
  std::uint32_t id = UINT32_MAX;
  bool valid() const { return id != UINT32_MAX; }
};

/// Reverse-mode differentiation tape. Nodes are appended in evaluation
/// order, so reverse creation order is a valid topological order for the
/// backward sweep. Values and gradients live in two flat arenas.
///
/// Parameter nodes are views onto a ParamStore (no copy); their gradients
/// are readable through param_grad() after backward().
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, Var)>;

  explicit Tape(const ParamStore* params = nullptr, bool grad_enabled = true)
      : params_(params), grad_enabled_(grad_enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  /// Leaf without gradient.
  Var constant(std::span<const double> value, std::size_t rows, std::size_t cols = 1);
  /// Leaf whose gradient is tracked (readable via grad()).
  Var input(std::span<const double> value, std::size_t rows, std::size_t cols = 1);
  /// Parameter view; repeated calls return the same node. Frozen parameters
  /// behave like constants.
  Var param(std::size_t index);
  Var param(std::string_view name);

  /// Allocates a zero-filled node of rows x cols whose inputs are `inputs`.
  /// The backward function is kept only when some input requires a gradient.
  Var make(std::size_t rows, std::size_t cols, std::initializer_list<Var> inputs, BackwardFn backward);
  Var make(std::size_t rows, std::size_t cols, std::span<const Var> inputs, BackwardFn backward);

  std::span<const double> value(Var v) const;
  std::span<double> value_mut(Var v);
  double scalar(Var v) const { return value(v)[0]; }
  std::size_t rows(Var v) const { return nodes_[v.id].rows; }
  std::size_t cols(Var v) const { return nodes_[v.id].cols; }
  std::size_t size(Var v) const { return nodes_[v.id].rows * nodes_[v.id].cols; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t node_count() const { return nodes_.size(); }
  const ParamStore* params() const { return params_; }
  /// False for inference tapes: nothing requires a gradient, no closures kept.
  bool grad_enabled() const { return grad_enabled_; }

  /// Seeds d(out)/d(out) = seed and sweeps backward. May be called once.
  void backward(Var out, double seed = 1.0);
  /// Seeds several outputs with explicit upstream gradients.
  void backward(std::span<const Var> outs, std::span<const std::vector<double>> seeds);

  /// Gradient of a node (valid after backward; zeros if unreached).
  std::span<const double> grad(Var v) const;
  /// Mutable gradient accumulator, for use inside backward functions.
  std::span<double> grad_mut(Var v);
  /// Gradient of a parameter; empty when the parameter is not on this tape
  /// or is frozen.
  std::span<const double> param_grad(std::size_t index) const;
  bool has_param(std::size_t index) const;

 private:
  struct Node {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t value_offset = 0;
    std::size_t grad_offset = 0;
    const double* external = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(std::size_t rows, std::size_t cols, const double* external, bool requires_grad);
  void sweep();

  const ParamStore* params_ = nullptr;
  bool grad_enabled_ = true;
  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<double> grads_;
  std::size_t grad_size_ = 0;
  std::vector<std::uint32_t> param_nodes_;
  bool swept_ = false;
};

}  // namespace ekt
