#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "hmagat/ad/tape.hpp"

namespace hmagat::ad {

template <typename S>
struct GradCheckResult {
  S max_rel_error = S(0);
  std::size_t input = 0;  // argument holding the worst entry
  Eigen::Index index = 0; // linear (column-major) index of the worst entry
  S analytic = S(0);
  S numeric = S(0);
};

// Central-difference check of a scalar function of several matrix arguments.
// `f(tape, vars)` must build the loss on `tape` from `vars` (one variable per point) and return it.
template <typename S, typename F>
GradCheckResult<S> finite_diff_check_all(F f, std::vector<typename BasicTape<S>::Matrix> points, S h = S(1e-5)) {
  using Mat = typename BasicTape<S>::Matrix;
  if (!(h > S(0))) throw std::invalid_argument("finite_diff_check: step must be positive");

  std::vector<Mat> analytic;
  {
    BasicTape<S> tape;
    std::vector<BasicVar<S>> vars;
    for (const Mat& p : points) vars.push_back(tape.variable(p));
    BasicVar<S> loss = f(tape, vars);
    tape.backward(loss);
    for (const auto& v : vars) analytic.push_back(v.grad());
  }

  auto evaluate = [&]() {
    BasicTape<S> tape;
    std::vector<BasicVar<S>> vars;
    for (const Mat& p : points) vars.push_back(tape.constant(p));
    return f(tape, vars).value()(0, 0);
  };

  GradCheckResult<S> result;
  for (std::size_t a = 0; a < points.size(); ++a) {
    for (Eigen::Index k = 0; k < points[a].size(); ++k) {
      S& slot = points[a].data()[k];
      const S saved = slot;
      slot = saved + h;
      const S up = evaluate();
      slot = saved - h;
      const S down = evaluate();
      slot = saved;
      const S numeric = (up - down) / (S(2) * h);
      const S exact = analytic[a].data()[k];
      const S denom = std::max({std::abs(exact), std::abs(numeric), S(1e-8)});
      const S err = std::abs(exact - numeric) / denom;
      if (err > result.max_rel_error) result = {err, a, k, exact, numeric};
    }
  }
  return result;
}

template <typename S, typename F>
S finite_diff_check(F f, std::vector<typename BasicTape<S>::Matrix> points, S h = S(1e-5)) {
  return finite_diff_check_all<S>(f, std::move(points), h).max_rel_error;
}

// Single-argument form: `f(tape, var)`.
template <typename S, typename F>
S finite_diff_check(F f, const typename BasicTape<S>::Matrix& point, S h = S(1e-5)) {
  auto wrapped = [&f](BasicTape<S>& tape, const std::vector<BasicVar<S>>& vars) { return f(tape, vars[0]); };
  return finite_diff_check_all<S>(wrapped, {point}, h).max_rel_error;
}

}  // namespace hmagat::ad
