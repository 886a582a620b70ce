#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "stackvs/errors.hpp"
#include "stackvs/tape.hpp"

namespace stackvs {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t tensor = 0;      // argument holding the worst coordinate
  std::size_t coordinate = 0;  // flat row-major index within it
  double analytic = 0.0;       // both gradients at that coordinate
  double numeric = 0.0;
};

/// |a - d| / max(|a|, |d|, 1e-8), maximised over all coordinates.
template <typename Scalar>
GradCheckResult max_relative_error(std::span<const Tensor<Scalar>> analytic, std::span<const Tensor<Scalar>> numeric) {
  if (analytic.size() != numeric.size()) throw ShapeError("grad_check: gradient list length mismatch");
  GradCheckResult out;
  for (std::size_t t = 0; t < analytic.size(); ++t) {
    if (analytic[t].shape() != numeric[t].shape()) {
      throw ShapeError(detail::mismatch("grad_check", analytic[t].shape(), numeric[t].shape()));
    }
    for (std::size_t i = 0; i < analytic[t].size(); ++i) {
      const double a = static_cast<double>(analytic[t][i]);
      const double d = static_cast<double>(numeric[t][i]);
      if (std::isnan(a) || std::isnan(d)) {
        throw NumericError("grad_check: NaN at argument " + std::to_string(t) + ", coordinate " + std::to_string(i));
      }
      const double err = std::abs(a - d) / std::max({std::abs(a), std::abs(d), 1e-8});
      if (err > out.max_rel_error) out = {err, t, i, a, d};
    }
  }
  return out;
}

/// Central differences of a scalar function of several tensors.
/// `value_of` maps the (perturbed) point to a scalar.
template <typename Scalar, typename ValueFn>
std::vector<Tensor<Scalar>> numeric_gradient(ValueFn&& value_of, std::vector<Tensor<Scalar>> point, Scalar eps) {
  std::vector<Tensor<Scalar>> out;
  out.reserve(point.size());
  for (std::size_t t = 0; t < point.size(); ++t) {
    Tensor<Scalar> g = Tensor<Scalar>::zeros(point[t].shape());
    for (std::size_t i = 0; i < point[t].size(); ++i) {
      const Scalar x0 = point[t][i];
      point[t][i] = x0 + eps;
      const Scalar up = value_of(std::span<const Tensor<Scalar>>(point));
      point[t][i] = x0 - eps;
      const Scalar down = value_of(std::span<const Tensor<Scalar>>(point));
      point[t][i] = x0;
      if (std::isnan(up) || std::isnan(down)) {
        throw NumericError("grad_check: NaN evaluating argument " + std::to_string(t) + ", coordinate " +
                           std::to_string(i));
      }
      g[i] = (up - down) / (Scalar(2) * eps);
    }
    out.push_back(std::move(g));
  }
  return out;
}

/// Compares tape gradients of `build` against central differences.
///
/// `build(tape, args)` records a scalar loss from leaves `args` (one per
/// entry of `point`) and returns it. eps must lie in [1e-7, 1e-3].
template <typename Scalar, typename BuildFn>
GradCheckResult grad_check(BuildFn&& build, const std::vector<Tensor<Scalar>>& point, Scalar eps) {
  if (!(eps >= Scalar(1e-7) && eps <= Scalar(1e-3))) {
    throw ConfigError("grad_check: eps " + std::to_string(static_cast<double>(eps)) + " outside [1e-7, 1e-3]");
  }
  std::vector<Tensor<Scalar>> analytic;
  {
    Tape<Scalar> tape;
    std::vector<Var<Scalar>> args;
    for (const auto& p : point) args.push_back(tape.leaf(p));
    Var<Scalar> loss = build(tape, std::span<const Var<Scalar>>(args));
    tape.backward(loss);
    for (const auto& a : args) analytic.push_back(tape.grad(a));
  }
  auto value_of = [&](std::span<const Tensor<Scalar>> at) {
    Tape<Scalar> tape;
    std::vector<Var<Scalar>> args;
    for (const auto& p : at) args.push_back(tape.leaf(p));
    return build(tape, std::span<const Var<Scalar>>(args)).value().item();
  };
  auto numeric = numeric_gradient<Scalar>(value_of, point, eps);
  return max_relative_error<Scalar>(analytic, numeric);
}

}  // namespace stackvs
