#pragma once

#include <cmath>
#include <cstddef>

namespace satfl {

template <typename Scalar>
struct ScalarArgmax {
  Scalar x;
  Scalar value;
  std::size_t evaluations;
};

/// Golden-section search for the maximum of a unimodal f on [lo, hi].
/// Stops when the bracket is narrower than tol * (1 + |x|). The endpoints are
/// also evaluated so that boundary maxima are returned exactly.
template <typename Scalar, typename F>
ScalarArgmax<Scalar> golden_section_maximize(F&& f, Scalar lo, Scalar hi,
                                             Scalar tol = Scalar(1e-12),
                                             std::size_t max_iter = 500) {
  const Scalar inv_phi = (std::sqrt(Scalar(5)) - Scalar(1)) / Scalar(2);
  Scalar a = lo, b = hi;
  Scalar u = b - inv_phi * (b - a);
  Scalar v = a + inv_phi * (b - a);
  Scalar fu = f(u), fv = f(v);
  std::size_t evals = 2;
  for (std::size_t i = 0; i < max_iter; ++i) {
    if (b - a <= tol * (Scalar(1) + std::abs(a) + std::abs(b))) break;
    if (fu < fv) {
      a = u;
      u = v;
      fu = fv;
      v = a + inv_phi * (b - a);
      fv = f(v);
    } else {
      b = v;
      v = u;
      fv = fu;
      u = b - inv_phi * (b - a);
      fu = f(u);
    }
    ++evals;
  }
  ScalarArgmax<Scalar> best{(a + b) / Scalar(2), f((a + b) / Scalar(2)), evals + 1};
  const Scalar flo = f(lo), fhi = f(hi);
  best.evaluations += 2;
  if (flo > best.value) best = {lo, flo, best.evaluations};
  if (fhi > best.value) best = {hi, fhi, best.evaluations};
  return best;
}

}  // namespace satfl
