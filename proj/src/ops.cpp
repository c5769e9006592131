// SPDX-License-Identifier: Apache-2.0
#include "ekt/ops.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ekt/functions.hpp"

namespace ekt::ops {

namespace {

void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(std::string("shape mismatch: ") + what);
}

}  // namespace

Var add(Tape& t, Var a, Var b) {
  require(t.size(a) == t.size(b), "add");
  Var out = t.make(t.rows(a), t.cols(a), {a, b}, [a, b](Tape& t, Var self) {
    auto g = t.grad(self);
    for (Var in : {a, b}) {
      auto gi = t.grad_mut(in);
      if (gi.empty()) continue;
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
  auto o = t.value_mut(out);
  auto av = t.value(a), bv = t.value(b);
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + bv[i];
  return out;
}

Var mul(Tape& t, Var a, Var b) {
  require(t.size(a) == t.size(b), "mul");
  Var out = t.make(t.rows(a), t.cols(a), {a, b}, [a, b](Tape& t, Var self) {
    auto g = t.grad(self);
    auto av = t.value(a), bv = t.value(b);
    if (auto ga = t.grad_mut(a); !ga.empty())
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    if (auto gb = t.grad_mut(b); !gb.empty())
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
  });
  auto o = t.value_mut(out);
  auto av = t.value(a), bv = t.value(b);
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * bv[i];
  return out;
}

Var scale(Tape& t, Var a, double s) {
  Var out = t.make(t.rows(a), t.cols(a), {a}, [a, s](Tape& t, Var self) {
    auto g = t.grad(self);
    auto ga = t.grad_mut(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
  auto o = t.value_mut(out);
  auto av = t.value(a);
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = s * av[i];
  return out;
}

Var matvec(Tape& t, Var W, Var x) {
  const std::size_t r = t.rows(W), c = t.cols(W);
  require(t.size(x) == c, "matvec");
  Var out = t.make(r, 1, {W, x}, [W, x, r, c](Tape& t, Var self) {
    auto g = t.grad(self);
    auto wv = t.value(W), xv = t.value(x);
    if (auto gw = t.grad_mut(W); !gw.empty()) {
      for (std::size_t i = 0; i < r; ++i) {
        const double gi = g[i];
        if (gi == 0.0) continue;
        double* row = gw.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) row[j] += gi * xv[j];
      }
    }
    if (auto gx = t.grad_mut(x); !gx.empty()) {
      for (std::size_t i = 0; i < r; ++i) {
        const double gi = g[i];
        const double* row = wv.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) gx[j] += gi * row[j];
      }
    }
  });
  auto o = t.value_mut(out);
  auto wv = t.value(W), xv = t.value(x);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = wv.data() + i * c;
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) acc += row[j] * xv[j];
    o[i] = acc;
  }
  return out;
}

Var matvec_t(Tape& t, Var W, Var x) {
  const std::size_t r = t.rows(W), c = t.cols(W);
  require(t.size(x) == r, "matvec_t");
  Var out = t.make(c, 1, {W, x}, [W, x, r, c](Tape& t, Var self) {
    auto g = t.grad(self);
    auto wv = t.value(W), xv = t.value(x);
    if (auto gw = t.grad_mut(W); !gw.empty()) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gw[i * c + j] += xv[i] * g[j];
    }
    if (auto gx = t.grad_mut(x); !gx.empty()) {
      for (std::size_t i = 0; i < r; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < c; ++j) acc += wv[i * c + j] * g[j];
        gx[i] += acc;
      }
    }
  });
  auto o = t.value_mut(out);
  auto wv = t.value(W), xv = t.value(x);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) o[j] += wv[i * c + j] * xv[i];
  return out;
}

Var affine(Tape& t, Var W, Var x, Var b) { return add(t, matvec(t, W, x), b); }

Var sigmoid(Tape& t, Var a) {
  Var out = t.make(t.rows(a), t.cols(a), {a}, [a](Tape& t, Var self) {
    auto g = t.grad(self);
    auto y = t.value(self);
    auto ga = t.grad_mut(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
  auto o = t.value_mut(out);
  auto av = t.value(a);
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = ekt::sigmoid(av[i]);
  return out;
}

Var tanh(Tape& t, Var a) {
  Var out = t.make(t.rows(a), t.cols(a), {a}, [a](Tape& t, Var self) {
    auto g = t.grad(self);
    auto y = t.value(self);
    auto ga = t.grad_mut(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
  auto o = t.value_mut(out);
  auto av = t.value(a);
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::tanh(av[i]);
  return out;
}

Var relu(Tape& t, Var a) {
  Var out = t.make(t.rows(a), t.cols(a), {a}, [a](Tape& t, Var self) {
    auto g = t.grad(self);
    auto av = t.value(a);
    auto ga = t.grad_mut(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (av[i] > 0.0) ga[i] += g[i];
  });
  auto o = t.value_mut(out);
  auto av = t.value(a);
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] > 0.0 ? av[i] : 0.0;
  return out;
}

Var concat(Tape& t, std::span<const Var> parts) {
  require(!parts.empty(), "concat of nothing");
  std::size_t n = 0;
  for (Var p : parts) n += t.size(p);
  std::vector<Var> ps(parts.begin(), parts.end());
  Var out = t.make(n, 1, parts, [ps](Tape& t, Var self) {
    auto g = t.grad(self);
    std::size_t off = 0;
    for (Var p : ps) {
      auto gp = t.grad_mut(p);
      const std::size_t len = t.size(p);
      if (!gp.empty())
        for (std::size_t i = 0; i < len; ++i) gp[i] += g[off + i];
      off += len;
    }
  });
  auto o = t.value_mut(out);
  std::size_t off = 0;
  for (Var p : parts) {
    auto pv = t.value(p);
    for (std::size_t i = 0; i < pv.size(); ++i) o[off + i] = pv[i];
    off += pv.size();
  }
  return out;
}

Var slice(Tape& t, Var a, std::size_t begin, std::size_t len) {
  require(begin + len <= t.size(a) && len > 0, "slice");
  Var out = t.make(len, 1, {a}, [a, begin](Tape& t, Var self) {
    auto g = t.grad(self);
    auto ga = t.grad_mut(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin + i] += g[i];
  });
  auto o = t.value_mut(out);
  auto av = t.value(a);
  for (std::size_t i = 0; i < len; ++i) o[i] = av[begin + i];
  return out;
}

Var block(Tape& t, Var a, std::size_t begin, std::size_t width) {
  const std::size_t r = t.rows(a), c = t.cols(a);
  require(begin + width <= c && width > 0, "block");
  Var out = t.make(r, width, {a}, [a, begin, width, r, c](Tape& t, Var self) {
    auto g = t.grad(self);
    auto ga = t.grad_mut(a);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < width; ++j) ga[i * c + begin + j] += g[i * width + j];
  });
  auto o = t.value_mut(out);
  auto av = t.value(a);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < width; ++j) o[i * width + j] = av[i * c + begin + j];
  return out;
}

Var row(Tape& t, Var M, std::size_t r) {
  const std::size_t c = t.cols(M);
  require(r < t.rows(M), "row index");
  Var out = t.make(c, 1, {M}, [M, r, c](Tape& t, Var self) {
    auto g = t.grad(self);
    auto gm = t.grad_mut(M);
    for (std::size_t j = 0; j < c; ++j) gm[r * c + j] += g[j];
  });
  auto o = t.value_mut(out);
  auto mv = t.value(M);
  for (std::size_t j = 0; j < c; ++j) o[j] = mv[r * c + j];
  return out;
}

Var mean_rows(Tape& t, Var M, std::span<const int> rows) {
  require(!rows.empty(), "mean_rows of no rows");
  const std::size_t c = t.cols(M), nr = t.rows(M);
  for (int r : rows) require(r >= 0 && static_cast<std::size_t>(r) < nr, "mean_rows index");
  std::vector<int> rs(rows.begin(), rows.end());
  const double w = 1.0 / static_cast<double>(rows.size());
  Var out = t.make(c, 1, {M}, [M, rs, w, c](Tape& t, Var self) {
    auto g = t.grad(self);
    auto gm = t.grad_mut(M);
    for (int r : rs)
      for (std::size_t j = 0; j < c; ++j) gm[r * c + j] += w * g[j];
  });
  auto o = t.value_mut(out);
  auto mv = t.value(M);
  if (rows.size() == 1) {
    for (std::size_t j = 0; j < c; ++j) o[j] = mv[rows[0] * c + j];
  } else {
    for (int r : rows)
      for (std::size_t j = 0; j < c; ++j) o[j] += mv[r * c + j];
    for (std::size_t j = 0; j < c; ++j) o[j] *= w;
  }
  return out;
}

Var softmax(Tape& t, Var a) {
  Var out = t.make(t.rows(a), t.cols(a), {a}, [a](Tape& t, Var self) {
    auto g = t.grad(self);
    auto y = t.value(self);
    auto ga = t.grad_mut(a);
    double dot = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += y[i] * (g[i] - dot);
  });
  auto o = t.value_mut(out);
  ekt::softmax_into(t.value(a), o);
  return out;
}

Var cosine_scores(Tape& t, Var query, std::span<const Var> keys) {
  require(!keys.empty(), "cosine_scores with no keys");
  const std::size_t n = t.size(query);
  for (Var k : keys) require(t.size(k) == n, "cosine_scores");
  std::vector<Var> inputs(keys.begin(), keys.end());
  inputs.push_back(query);
  std::vector<Var> ks(keys.begin(), keys.end());
  Var out = t.make(keys.size(), 1, std::span<const Var>(inputs), [query, ks, n](Tape& t, Var self) {
    auto g = t.grad(self);
    auto alpha = t.value(self);
    auto q = t.value(query);
    auto gq = t.grad_mut(query);
    const double nq = ekt::norm(q);
    for (std::size_t j = 0; j < ks.size(); ++j) {
      auto k = t.value(ks[j]);
      const double nk = ekt::norm(k);
      if (nq < kCosineNormFloor || nk < kCosineNormFloor || g[j] == 0.0) continue;
      const double inv = 1.0 / (nq * nk);
      if (!gq.empty())
        for (std::size_t i = 0; i < n; ++i) gq[i] += g[j] * (k[i] * inv - alpha[j] * q[i] / (nq * nq));
      if (auto gk = t.grad_mut(ks[j]); !gk.empty())
        for (std::size_t i = 0; i < n; ++i) gk[i] += g[j] * (q[i] * inv - alpha[j] * k[i] / (nk * nk));
    }
  });
  auto o = t.value_mut(out);
  auto q = t.value(query);
  for (std::size_t j = 0; j < keys.size(); ++j) o[j] = ekt::cosine(q, t.value(keys[j]));
  return out;
}

Var weighted_sum(Tape& t, Var weights, std::span<const Var> items) {
  require(!items.empty() && t.size(weights) == items.size(), "weighted_sum");
  const std::size_t n = t.size(items[0]);
  for (Var it : items) require(t.size(it) == n, "weighted_sum items");
  std::vector<Var> inputs(items.begin(), items.end());
  inputs.push_back(weights);
  std::vector<Var> xs(items.begin(), items.end());
  Var out = t.make(t.rows(items[0]), t.cols(items[0]), std::span<const Var>(inputs),
                   [weights, xs, n](Tape& t, Var self) {
                     auto g = t.grad(self);
                     auto w = t.value(weights);
                     auto gw = t.grad_mut(weights);
                     for (std::size_t j = 0; j < xs.size(); ++j) {
                       auto x = t.value(xs[j]);
                       if (!gw.empty()) {
                         double acc = 0.0;
                         for (std::size_t i = 0; i < n; ++i) acc += g[i] * x[i];
                         gw[j] += acc;
                       }
                       if (auto gx = t.grad_mut(xs[j]); !gx.empty())
                         for (std::size_t i = 0; i < n; ++i) gx[i] += w[j] * g[i];
                     }
                   });
  auto o = t.value_mut(out);
  auto w = t.value(weights);
  for (std::size_t j = 0; j < items.size(); ++j) {
    auto x = t.value(items[j]);
    for (std::size_t i = 0; i < n; ++i) o[i] += w[j] * x[i];
  }
  return out;
}

Var aggregate_slots(Tape& t, Var H, Var beta) {
  const std::size_t k = t.rows(H), d = t.cols(H);
  require(t.size(beta) == k, "aggregate_slots");
  Var out = t.make(d, 1, {H, beta}, [H, beta, k, d](Tape& t, Var self) {
    auto g = t.grad(self);
    auto hv = t.value(H), bv = t.value(beta);
    auto gh = t.grad_mut(H);
    auto gb = t.grad_mut(beta);
    for (std::size_t s = 0; s < k; ++s) {
      if (!gb.empty()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < d; ++i) acc += g[i] * hv[s * d + i];
        gb[s] += acc;
      }
      if (!gh.empty())
        for (std::size_t i = 0; i < d; ++i) gh[s * d + i] += bv[s] * g[i];
    }
  });
  auto o = t.value_mut(out);
  auto hv = t.value(H), bv = t.value(beta);
  for (std::size_t s = 0; s < k; ++s)
    for (std::size_t i = 0; i < d; ++i) o[i] += bv[s] * hv[s * d + i];
  return out;
}

Var outer(Tape& t, Var a, Var b) {
  const std::size_t m = t.size(a), n = t.size(b);
  Var out = t.make(m, n, {a, b}, [a, b, m, n](Tape& t, Var self) {
    auto g = t.grad(self);
    auto av = t.value(a), bv = t.value(b);
    auto ga = t.grad_mut(a);
    auto gb = t.grad_mut(b);
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        acc += g[i * n + j] * bv[j];
        if (!gb.empty()) gb[j] += g[i * n + j] * av[i];
      }
      if (!ga.empty()) ga[i] += acc;
    }
  });
  auto o = t.value_mut(out);
  auto av = t.value(a), bv = t.value(b);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) o[i * n + j] = av[i] * bv[j];
  return out;
}

Var max_pool(Tape& t, std::span<const Var> items) {
  require(!items.empty(), "max_pool of nothing");
  const std::size_t n = t.size(items[0]);
  for (Var it : items) require(t.size(it) == n, "max_pool items");
  std::vector<std::uint32_t> arg(n, 0);
  std::vector<double> best(t.value(items[0]).begin(), t.value(items[0]).end());
  for (std::size_t j = 1; j < items.size(); ++j) {
    auto v = t.value(items[j]);
    for (std::size_t i = 0; i < n; ++i) {
      if (v[i] > best[i]) {
        best[i] = v[i];
        arg[i] = static_cast<std::uint32_t>(j);
      }
    }
  }
  std::vector<Var> xs(items.begin(), items.end());
  Var out = t.make(n, 1, items, [xs, arg](Tape& t, Var self) {
    auto g = t.grad(self);
    for (std::size_t i = 0; i < g.size(); ++i) {
      auto gx = t.grad_mut(xs[arg[i]]);
      if (!gx.empty()) gx[i] += g[i];
    }
  });
  auto o = t.value_mut(out);
  for (std::size_t i = 0; i < n; ++i) o[i] = best[i];
  return out;
}

Var dropout(Tape& t, Var a, std::span<const double> mask) {
  require(mask.size() == t.size(a), "dropout mask");
  std::vector<double> m(mask.begin(), mask.end());
  Var out = t.make(t.rows(a), t.cols(a), {a}, [a, m](Tape& t, Var self) {
    auto g = t.grad(self);
    auto ga = t.grad_mut(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * m[i];
  });
  auto o = t.value_mut(out);
  auto av = t.value(a);
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * mask[i];
  return out;
}

Var sum(Tape& t, std::span<const Var> scalars) {
  require(!scalars.empty(), "sum of nothing");
  for (Var s : scalars) require(t.size(s) == 1, "sum expects scalars");
  std::vector<Var> xs(scalars.begin(), scalars.end());
  Var out = t.make(1, 1, scalars, [xs](Tape& t, Var self) {
    const double g = t.grad(self)[0];
    for (Var x : xs)
      if (auto gx = t.grad_mut(x); !gx.empty()) gx[0] += g;
  });
  double acc = 0.0;
  for (Var s : scalars) acc += t.scalar(s);
  t.value_mut(out)[0] = acc;
  return out;
}

Var bce(Tape& t, Var p, double target, double eps) {
  require(t.size(p) == 1, "bce expects a scalar");
  if (target != 0.0 && target != 1.0) throw std::invalid_argument("bce target must be 0 or 1");
  const double raw = t.scalar(p);
  const double pc = std::min(std::max(raw, eps), 1.0 - eps);
  const bool clamped = pc != raw;
  Var out = t.make(1, 1, {p}, [p, pc, target, clamped](Tape& t, Var self) {
    if (clamped) return;
    const double g = t.grad(self)[0];
    t.grad_mut(p)[0] += g * (-target / pc + (1.0 - target) / (1.0 - pc));
  });
  t.value_mut(out)[0] = -(target * std::log(pc) + (1.0 - target) * std::log(1.0 - pc));
  return out;
}

LstmState lstm(Tape& t, Var input_pre, Var h_prev, Var c_prev, Var Zh, Var b, std::size_t slots) {
  require(slots > 0, "lstm slots");
  const std::size_t d = t.cols(Zh);
  const std::size_t g4 = 4 * d;
  const bool per_slot = t.rows(Zh) == slots * g4 && slots > 1;
  require(t.rows(Zh) == g4 || per_slot, "lstm recurrent weights");
  require(t.size(b) == (per_slot ? slots * g4 : g4), "lstm bias");
  require(t.size(input_pre) == slots * g4, "lstm input pre-activation");
  require(t.size(h_prev) == slots * d && t.size(c_prev) == slots * d, "lstm state");

  // Node layout per slot: [h, c, i, f, o, g, tanh(c)], each d wide.
  const std::size_t w = 7 * d;
  Var node = t.make(slots, w, {input_pre, h_prev, c_prev, Zh, b},
                    [=](Tape& t, Var self) {
                      auto G = t.grad(self);
                      auto V = t.value(self);
                      auto zh = t.value(Zh);
                      auto hp = t.value(h_prev);
                      auto cp = t.value(c_prev);
                      auto g_in = t.grad_mut(input_pre);
                      auto g_hp = t.grad_mut(h_prev);
                      auto g_cp = t.grad_mut(c_prev);
                      auto g_zh = t.grad_mut(Zh);
                      auto g_b = t.grad_mut(b);
                      std::vector<double> dpre(g4);
                      for (std::size_t s = 0; s < slots; ++s) {
                        const double* v = V.data() + s * w;
                        const double* gs = G.data() + s * w;
                        const double* in = v + 2 * d;
                        const double* fg = v + 3 * d;
                        const double* og = v + 4 * d;
                        const double* gg = v + 5 * d;
                        const double* tc = v + 6 * d;
                        for (std::size_t k = 0; k < d; ++k) {
                          const double dh = gs[k];
                          const double dc = gs[d + k] + dh * og[k] * (1.0 - tc[k] * tc[k]);
                          dpre[k] = dc * gg[k] * in[k] * (1.0 - in[k]);
                          dpre[d + k] = dc * cp[s * d + k] * fg[k] * (1.0 - fg[k]);
                          dpre[2 * d + k] = dh * tc[k] * og[k] * (1.0 - og[k]);
                          dpre[3 * d + k] = dc * in[k] * (1.0 - gg[k] * gg[k]);
                          if (!g_cp.empty()) g_cp[s * d + k] += dc * fg[k];
                        }
                        const std::size_t zoff = per_slot ? s * g4 * d : 0;
                        const std::size_t boff = per_slot ? s * g4 : 0;
                        if (!g_in.empty())
                          for (std::size_t r = 0; r < g4; ++r) g_in[s * g4 + r] += dpre[r];
                        if (!g_b.empty())
                          for (std::size_t r = 0; r < g4; ++r) g_b[boff + r] += dpre[r];
                        if (!g_zh.empty()) {
                          for (std::size_t r = 0; r < g4; ++r) {
                            const double dr = dpre[r];
                            if (dr == 0.0) continue;
                            double* zrow = g_zh.data() + zoff + r * d;
                            for (std::size_t k = 0; k < d; ++k) zrow[k] += dr * hp[s * d + k];
                          }
                        }
                        if (!g_hp.empty()) {
                          for (std::size_t r = 0; r < g4; ++r) {
                            const double dr = dpre[r];
                            const double* zrow = zh.data() + zoff + r * d;
                            for (std::size_t k = 0; k < d; ++k) g_hp[s * d + k] += dr * zrow[k];
                          }
                        }
                      }
                    });
  auto V = t.value_mut(node);
  auto zh = t.value(Zh);
  auto bv = t.value(b);
  auto ip = t.value(input_pre);
  auto hp = t.value(h_prev);
  auto cp = t.value(c_prev);
  std::vector<double> pre(g4);
  for (std::size_t s = 0; s < slots; ++s) {
    const std::size_t zoff = per_slot ? s * g4 * d : 0;
    const std::size_t boff = per_slot ? s * g4 : 0;
    for (std::size_t r = 0; r < g4; ++r) {
      const double* zrow = zh.data() + zoff + r * d;
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += zrow[k] * hp[s * d + k];
      pre[r] = ip[s * g4 + r] + acc + bv[boff + r];
    }
    double* v = V.data() + s * w;
    for (std::size_t k = 0; k < d; ++k) {
      const double ig = ekt::sigmoid(pre[k]);
      const double fg = ekt::sigmoid(pre[d + k]);
      const double og = ekt::sigmoid(pre[2 * d + k]);
      const double gg = std::tanh(pre[3 * d + k]);
      const double c = fg * cp[s * d + k] + ig * gg;
      const double tc = std::tanh(c);
      v[k] = og * tc;
      v[d + k] = c;
      v[2 * d + k] = ig;
      v[3 * d + k] = fg;
      v[4 * d + k] = og;
      v[5 * d + k] = gg;
      v[6 * d + k] = tc;
    }
  }
  return {block(t, node, 0, d), block(t, node, d, d)};
}

}  // namespace ekt::ops
