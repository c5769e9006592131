// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "ekt/params.hpp"

namespace ekt {

inline constexpr double kCosineNormFloor = 1e-12;

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double norm(std::span<const double> a);

/// Max-subtracted softmax. Throws on empty input.
std::vector<double> softmax(std::span<const double> x);
void softmax_into(std::span<const double> x, std::span<double> out);

/// a.b / (|a||b|), or 0 when either norm is below kCosineNormFloor.
double cosine(std::span<const double> a, std::span<const double> b);

/// Largest |analytic - numeric| / max(1, |analytic|) over coordinates, with
/// central differences of step epsilon. f must be finite at every probe.
double grad_check(const std::function<double(std::span<const double>)>& f, std::span<const double> x,
                  std::span<const double> analytic, double epsilon);

/// Parameter-store form: perturbs every scalar of every trainable parameter.
/// `loss` evaluates the scalar objective at the given store; `analytic`
/// holds its gradient (keyed by parameter name).
double grad_check(const std::function<double(const ParamStore&)>& loss, const ParamStore& params,
                  const GradMap& analytic, double epsilon);

}  // namespace ekt
