// SPDX-License-Identifier: Apache-2.0
#include "ekt/functions.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "ekt/errors.hpp"

namespace ekt {

double norm(std::span<const double> a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return std::sqrt(s);
}

void softmax_into(std::span<const double> x, std::span<double> out) {
  if (x.empty()) throw std::invalid_argument("softmax of an empty vector");
  if (out.size() != x.size()) throw std::invalid_argument("softmax: output size mismatch");
  const double m = *std::max_element(x.begin(), x.end());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - m);
    z += out[i];
  }
  for (double& v : out) v /= z;
}

std::vector<double> softmax(std::span<const double> x) {
  std::vector<double> out(x.size());
  softmax_into(x, out);
  return out;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine: length mismatch");
  const double na = norm(a), nb = norm(b);
  if (na < kCosineNormFloor || nb < kCosineNormFloor) return 0.0;
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

double grad_check(const std::function<double(std::span<const double>)>& f, std::span<const double> x,
                  std::span<const double> analytic, double epsilon) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) throw std::invalid_argument("grad_check: epsilon outside [1e-7, 1e-3]");
  if (x.size() != analytic.size()) throw std::invalid_argument("grad_check: gradient length mismatch");
  std::vector<double> probe(x.begin(), x.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double keep = probe[i];
    probe[i] = keep + epsilon;
    const double up = f(probe);
    probe[i] = keep - epsilon;
    const double down = f(probe);
    probe[i] = keep;
    if (!std::isfinite(up) || !std::isfinite(down)) throw NumericError("grad_check: non-finite objective");
    const double numeric = (up - down) / (2.0 * epsilon);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i])));
  }
  return worst;
}

double grad_check(const std::function<double(const ParamStore&)>& loss, const ParamStore& params,
                  const GradMap& analytic, double epsilon) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) throw std::invalid_argument("grad_check: epsilon outside [1e-7, 1e-3]");
  ParamStore probe = params;
  double worst = 0.0;
  for (std::size_t p = 0; p < probe.size(); ++p) {
    if (!probe[p].trainable) continue;
    auto it = analytic.find(probe[p].name);
    if (it == analytic.end()) throw std::invalid_argument("grad_check: no analytic gradient for " + probe[p].name);
    auto& w = probe[p].value.vec();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double keep = w[i];
      w[i] = keep + epsilon;
      const double up = loss(probe);
      w[i] = keep - epsilon;
      const double down = loss(probe);
      w[i] = keep;
      if (!std::isfinite(up) || !std::isfinite(down)) throw NumericError("grad_check: non-finite objective");
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = it->second[i];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

}  // namespace ekt
