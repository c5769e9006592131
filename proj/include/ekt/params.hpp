// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ekt/rng.hpp"
#include "ekt/tensor.hpp"

namespace ekt {

/// Model dimensions and optimizer scalars. Dimension defaults follow the
/// published configuration; lr/beta/eps are ordinary Adam defaults.
struct Hyper {
  std::size_t d0 = 50;   // word embedding
  std::size_t dv = 100;  // exercise encoder hidden (per direction)
  std::size_t dh = 100;  // student state
  std::size_t dk = 25;   // concept embedding
  std::size_t dy = 50;   // prediction hidden
  std::size_t K = 37;    // concept count
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double dropout_p = 0.1;
  std::size_t batch = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Param {
  std::string name;
  Tensor value;
  Tensor m1;  // Adam first moment
  Tensor m2;  // Adam second moment
  bool trainable = true;
};

/// Named parameters plus Adam state. Indices are stable once assigned.
class ParamStore {
 public:
  std::size_t add(std::string name, Tensor value, bool trainable = true);

  bool contains(std::string_view name) const;
  std::size_t index(std::string_view name) const;

  Param& operator[](std::size_t i) { return params_[i]; }
  const Param& operator[](std::size_t i) const { return params_[i]; }
  Param& get(std::string_view name) { return params_[index(name)]; }
  const Param& get(std::string_view name) const { return params_[index(name)]; }

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t s) { step_ = s; }

 private:
  std::vector<Param> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::uint64_t step_ = 0;
};

using GradMap = std::map<std::string, Tensor, std::less<>>;

/// Uniform Xavier/Glorot initialization on (-sqrt(6/(fan_in+fan_out)), +...).
Tensor xavier_init(std::size_t fan_in, std::size_t fan_out, std::vector<std::size_t> shape, Rng& rng);

/// One bias-corrected Adam update in place. Every trainable parameter must
/// have a gradient; frozen parameters are skipped. When clip_norm is set,
/// gradients are rescaled so their global L2 norm is at most clip_norm.
void adam_step(ParamStore& params, const GradMap& grads, const Hyper& hyper,
               std::optional<double> clip_norm = std::nullopt);

/// Same update with gradients indexed by parameter position (empty vector =
/// zero gradient). Used by the training loop.
void adam_step(ParamStore& params, const std::vector<std::vector<double>>& grads, const Hyper& hyper,
               std::optional<double> clip_norm = std::nullopt);

}  // namespace ekt
