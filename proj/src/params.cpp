// SPDX-License-Identifier: Apache-2.0
#include "ekt/params.hpp"

#include <cmath>
#include <stdexcept>

#include "ekt/errors.hpp"

namespace ekt {

void Hyper::validate() const {
  if (d0 == 0 || dv == 0 || dh == 0 || dk == 0 || dy == 0 || K == 0 || batch == 0) {
    throw std::invalid_argument("all dimensions and the batch size must be >= 1");
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
    throw std::invalid_argument("dropout probability must lie in [0, 1)");
  }
  if (!(lr > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0)) {
    throw std::invalid_argument("invalid Adam settings");
  }
}

std::size_t ParamStore::add(std::string name, Tensor value, bool trainable) {
  if (index_.contains(name)) throw std::invalid_argument("duplicate parameter: " + name);
  Param p;
  p.name = name;
  p.m1 = Tensor(value.shape(), 0.0);
  p.m2 = Tensor(value.shape(), 0.0);
  p.value = std::move(value);
  p.trainable = trainable;
  params_.push_back(std::move(p));
  index_.emplace(std::move(name), params_.size() - 1);
  return params_.size() - 1;
}

bool ParamStore::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

std::size_t ParamStore::index(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("unknown parameter: " + std::string(name));
  return it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

Tensor xavier_init(std::size_t fan_in, std::size_t fan_out, std::vector<std::size_t> shape, Rng& rng) {
  if (fan_in + fan_out == 0) throw std::invalid_argument("xavier_init: zero fan sum");
  if (fan_in == 0 || fan_out == 0) throw std::invalid_argument("xavier_init: fans must be >= 1");
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  for (double& v : t.vec()) {
    // Open interval: redraw the (measure-zero) lower endpoint.
    double u;
    do {
      u = rng.uniform();
    } while (u == 0.0);
    v = (2.0 * u - 1.0) * bound;
  }
  return t;
}

namespace {

void apply_adam(Param& p, std::span<const double> g, double scale, const Hyper& h, std::uint64_t t) {
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  auto& w = p.value.vec();
  auto& m = p.m1.vec();
  auto& v = p.m2.vec();
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double gi = g.empty() ? 0.0 : g[i] * scale;
    m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * gi;
    v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * gi * gi;
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    w[i] -= h.lr * mhat / (std::sqrt(vhat) + h.eps);
  }
}

double clip_scale(double sq_norm, std::optional<double> clip_norm) {
  if (!clip_norm) return 1.0;
  const double norm = std::sqrt(sq_norm);
  return norm > *clip_norm ? *clip_norm / norm : 1.0;
}

void check_finite(const std::string& name, std::span<const double> g) {
  for (double x : g) {
    if (!std::isfinite(x)) throw NumericError("non-finite gradient for parameter " + name);
  }
}

}  // namespace

void adam_step(ParamStore& params, const GradMap& grads, const Hyper& hyper, std::optional<double> clip_norm) {
  for (const auto& [name, g] : grads) {
    if (!params.contains(name)) throw std::invalid_argument("gradient for unknown parameter " + name);
  }
  double sq = 0.0;
  for (auto& p : params) {
    if (!p.trainable) continue;
    auto it = grads.find(p.name);
    if (it == grads.end()) throw std::invalid_argument("missing gradient for parameter " + p.name);
    if (it->second.size() != p.value.size()) {
      throw std::invalid_argument("gradient shape mismatch for parameter " + p.name);
    }
    check_finite(p.name, it->second.data());
    for (double x : it->second.data()) sq += x * x;
  }
  const double scale = clip_scale(sq, clip_norm);
  params.set_step(params.step() + 1);
  for (auto& p : params) {
    if (!p.trainable) continue;
    apply_adam(p, grads.find(p.name)->second.data(), scale, hyper, params.step());
  }
}

void adam_step(ParamStore& params, const std::vector<std::vector<double>>& grads, const Hyper& hyper,
               std::optional<double> clip_norm) {
  if (grads.size() != params.size()) throw std::invalid_argument("gradient list does not match parameters");
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable || grads[i].empty()) continue;
    if (grads[i].size() != params[i].value.size()) {
      throw std::invalid_argument("gradient shape mismatch for parameter " + params[i].name);
    }
    check_finite(params[i].name, grads[i]);
    for (double x : grads[i]) sq += x * x;
  }
  const double scale = clip_scale(sq, clip_norm);
  params.set_step(params.step() + 1);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    apply_adam(params[i], grads[i], scale, hyper, params.step());
  }
}

}  // namespace ekt
