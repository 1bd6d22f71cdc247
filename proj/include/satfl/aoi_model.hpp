#pragma once

// Cycle-based freshness and latency model for a data-caching node.
//
// A node refreshes its cache every theta time units. Of the theta/t slots in
// a cycle, c = theta/t - a are spent collecting and processing data and a are
// spent idle or serving. All closed forms below take theta as a continuous
// variable; only discrete_cycle_oracle requires integral c.

#include <cmath>
#include <stdexcept>
#include <string>

namespace satfl {

/// Smallest admissible gap theta - a*t. Below this a cycle is degenerate.
inline constexpr double kMinCollectionSpan = 1e-9;

template <typename Scalar>
struct CycleParams {
  Scalar theta = Scalar(2);  // update period
  int a = 1;                 // non-collection slots per cycle
  Scalar t = Scalar(1);      // slot length
  Scalar T = Scalar(10);     // task duration
  Scalar d = Scalar(10);     // samples collected per slot

  Scalar collection_slots() const { return theta / t - Scalar(a); }
};

template <typename Scalar>
struct SatisfactionParams {
  Scalar tau = Scalar(1);     // quality conversion
  Scalar lambda = Scalar(1);  // latency conversion
  Scalar rho = Scalar(1);     // quality adjustment
};

template <typename Scalar>
struct CycleAverages {
  Scalar aoi;
  Scalar latency;
};

using CycleParamsd = CycleParams<double>;
using SatisfactionParamsd = SatisfactionParams<double>;

template <typename Scalar>
void validate(const CycleParams<Scalar>& p) {
  using std::isfinite;
  if (p.a < 1) throw std::invalid_argument("cycle: a must be >= 1");
  if (!(p.t > Scalar(0)) || !isfinite(p.t)) throw std::invalid_argument("cycle: t must be > 0");
  if (!(p.T > Scalar(0)) || !isfinite(p.T)) throw std::invalid_argument("cycle: T must be > 0");
  if (!(p.d > Scalar(0)) || !isfinite(p.d)) throw std::invalid_argument("cycle: d must be > 0");
  if (!isfinite(p.theta) || !(p.theta - Scalar(p.a) * p.t >= Scalar(kMinCollectionSpan)))
    throw std::domain_error("cycle: theta must exceed a*t (degenerate cycle)");
}

template <typename Scalar>
void validate(const SatisfactionParams<Scalar>& s) {
  using std::isfinite;
  if (!(s.tau >= Scalar(0)) || !isfinite(s.tau) || !(s.lambda >= Scalar(0)) ||
      !isfinite(s.lambda))
    throw std::invalid_argument("satisfaction: tau and lambda must be finite and >= 0");
  if (!(s.rho > Scalar(0)) || !isfinite(s.rho))
    throw std::invalid_argument("satisfaction: rho must be finite and > 0");
}

/// Average age of information over a cycle, in the theta-substituted form
///   t*theta/(theta - a t) + t^2/(theta - a t) * (a^2 - a)/2.
/// Every downstream formula (quality, reduced leader objective) builds on this form.
template <typename Scalar>
Scalar average_aoi(const CycleParams<Scalar>& p) {
  validate(p);
  const Scalar a = Scalar(p.a);
  const Scalar span = p.theta - a * p.t;
  return p.t * p.theta / span + p.t * p.t / span * (a * a - a) / Scalar(2);
}

/// Average service latency, theta-substituted form
///   (theta - a t)^3/(2 t theta) + 3 (theta - a t)^2/(2 theta) + a t^2/theta.
template <typename Scalar>
Scalar average_service_latency(const CycleParams<Scalar>& p) {
  validate(p);
  const Scalar a = Scalar(p.a);
  const Scalar span = p.theta - a * p.t;
  return span * span * span / (Scalar(2) * p.t * p.theta) +
         Scalar(3) * span * span / (Scalar(2) * p.theta) + a * p.t * p.t / p.theta;
}

/// Samples gathered over the task: D = (T/theta) d.
template <typename Scalar>
Scalar data_size(const CycleParams<Scalar>& p) {
  if (!(p.theta > Scalar(0))) throw std::domain_error("data_size: theta must be > 0");
  return p.T / p.theta * p.d;
}

/// Freshness-weighted contribution Q = rho D / A, written out in closed form.
template <typename Scalar>
Scalar model_quality(const CycleParams<Scalar>& p, const SatisfactionParams<Scalar>& s) {
  validate(p);
  validate(s);
  const Scalar a = Scalar(p.a);
  const Scalar span = p.theta - a * p.t;
  return s.rho * p.T * p.d * span /
         (p.theta * (p.t * p.theta + p.t * p.t * (a * a - a) / Scalar(2)));
}

/// G = tau Q - lambda E. May be negative when latency dominates.
template <typename Scalar>
Scalar satisfaction(const CycleParams<Scalar>& p, const SatisfactionParams<Scalar>& s) {
  return s.tau * model_quality(p, s) - s.lambda * average_service_latency(p);
}

/// Closed forms obtained by averaging the per-slot definitions directly over
/// the c + a equiprobable arrival slots. These do not agree with the
/// theta-substituted averages above; the two are kept side by side.
template <typename Scalar>
Scalar prose_average_aoi(int c, int a, Scalar t) {
  const Scalar cs = Scalar(c), as = Scalar(a);
  return (cs + Scalar(1) + (as - Scalar(1)) * (as + Scalar(2)) / Scalar(2)) * t / (cs + as);
}

template <typename Scalar>
Scalar prose_average_latency(int c, int a, Scalar t) {
  const Scalar cs = Scalar(c), as = Scalar(a);
  return (cs * (cs + Scalar(3)) / Scalar(2) + as) * t / (cs + as);
}

/// Brute-force enumeration of one cycle of c collection slots followed by a
/// non-collection slots. A request in collection slot n waits (c + 1 - (n - 1))
/// slots for its upload and sees age t; a request in slot l > c sees age
/// (l - c) t and waits a single slot.
template <typename Scalar>
CycleAverages<Scalar> discrete_cycle_oracle(int c, int a, Scalar t) {
  if (c < 1 || a < 1) throw std::invalid_argument("oracle: c and a must be >= 1");
  if (!(t > Scalar(0))) throw std::invalid_argument("oracle: t must be > 0");
  const int slots = c + a;
  Scalar aoi_sum = Scalar(0), latency_sum = Scalar(0);
  for (int l = 1; l <= slots; ++l) {
    if (l <= c) {
      aoi_sum += t;
      latency_sum += Scalar(c) * t + t - Scalar(l - 1) * t;
    } else if (l == c + 1) {
      aoi_sum += t;
      latency_sum += t;
    } else {
      aoi_sum += Scalar(l - (c + 1) + 1) * t;
      latency_sum += t;
    }
  }
  return {aoi_sum / Scalar(slots), latency_sum / Scalar(slots)};
}

}  // namespace satfl
