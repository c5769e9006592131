// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ekt/functions.hpp"
#include "ekt/params.hpp"
#include "ekt/rng.hpp"
#include "ekt/tape.hpp"

namespace ekt::test {

using Build = std::function<Var(Tape&)>;

inline GradMap tape_grads(const ParamStore& ps, const Build& build) {
  Tape t(&ps);
  Var out = build(t);
  t.backward(out);
  GradMap g;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (!ps[i].trainable) continue;
    Tensor gt(ps[i].value.shape());
    auto pg = t.param_grad(i);
    for (std::size_t k = 0; k < pg.size(); ++k) gt[k] = pg[k];
    g.emplace(ps[i].name, std::move(gt));
  }
  return g;
}

inline double tape_value(const ParamStore& ps, const Build& build) {
  Tape t(&ps, false);
  return t.scalar(build(t));
}

/// Max relative error between tape gradients and central differences.
inline double check_tape(const ParamStore& ps, const Build& build, double eps = 1e-5) {
  const GradMap g = tape_grads(ps, build);
  return grad_check([&](const ParamStore& p) { return tape_value(p, build); }, ps, g, eps);
}

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.vec()) v = rng.uniform(-scale, scale);
  return t;
}

inline std::vector<double> random_vec(std::size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return v;
}

/// Weighted sum of all entries with fixed pseudo-random weights, so every
/// output coordinate contributes to the checked scalar.
inline Var probe(Tape& t, Var v, std::uint64_t seed = 99) {
  Rng rng(seed);
  const std::size_t n = t.size(v);
  std::vector<double> w(n);
  for (auto& x : w) x = rng.uniform(-1.0, 1.0);
  const auto vs = t.value(v);
  const std::vector<double> val(vs.begin(), vs.end());
  Var out = t.make(1, 1, {v}, [v, w](Tape& t, Var self) {
    const double g = t.grad(self)[0];
    auto gv = t.grad_mut(v);
    for (std::size_t i = 0; i < w.size(); ++i) gv[i] += g * w[i];
  });
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += w[i] * val[i];
  t.value_mut(out)[0] = acc;
  return out;
}

/// Spearman rank correlation (average ranks for ties).
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& x) {
    std::vector<std::size_t> idx(x.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j < idx.size() && x[idx[j]] == x[idx[i]]) ++j;
      for (std::size_t k = i; k < j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j - 1);
      i = j;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i] / n;
    mb += rb[i] / n;
  }
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return saa > 0 && sbb > 0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

}  // namespace ekt::test
