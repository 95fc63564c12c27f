#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <queue>
#include <vector>

#include <fmt/format.h>

#include "nce_lab/errors.hpp"
#include "nce_lab/numerics.hpp"

namespace nce_lab::numerics {

namespace {

// Kronrod abscissae on [0, 1]; odd indices are the 7-point Gauss nodes.
constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
  double a;
  double b;
  double value;
  double error;
  double abs_value;
  bool operator<(const Segment& other) const { return error < other.error; }
};

template <class F>
Segment gauss_kronrod_15(const F& g, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = g(center);
  double kronrod = fc * kWgk[7];
  double gauss = fc * kWg[3];
  double abs_sum = std::abs(kronrod);
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kXgk[j];
    const double f1 = g(center - dx);
    const double f2 = g(center + dx);
    kronrod += kWgk[j] * (f1 + f2);
    abs_sum += kWgk[j] * (std::abs(f1) + std::abs(f2));
    if (j % 2 == 1) {
      gauss += kWg[j / 2] * (f1 + f2);
    }
  }
  return {a, b, kronrod * half, std::abs((kronrod - gauss) * half), abs_sum * std::abs(half)};
}

}  // namespace

QuadResult integrate(const std::function<double(double)>& f, double lo, double hi, double tol,
                     int max_subdivisions) {
  if (!(tol > 0.0)) {
    throw DomainError(fmt::format("integrate: tol must be positive, got {}", tol));
  }
  if (std::isnan(lo) || std::isnan(hi) || lo > hi) {
    throw DomainError(fmt::format("integrate: invalid range [{}, {}]", lo, hi));
  }
  if (lo == hi) {
    return {0.0, 0.0, 1};
  }

  long evaluations = 0;
  // Zero-valued tails are returned as 0 so that 0 * (huge Jacobian) never
  // turns into NaN near the ends of a mapped interval.
  auto weighted = [&](double x, double jac) {
    ++evaluations;
    const double fx = f(x);
    return fx == 0.0 ? 0.0 : fx * jac;
  };

  std::function<double(double)> g;
  double a = lo;
  double b = hi;
  const bool lo_inf = std::isinf(lo);
  const bool hi_inf = std::isinf(hi);
  if (lo_inf && hi_inf) {
    g = [&](double t) { return weighted(std::atanh(t), 1.0 / (1.0 - t * t)); };
    a = -1.0;
    b = 1.0;
  } else if (hi_inf) {
    g = [&, lo](double t) {
      const double s = 1.0 - t;
      return weighted(lo + t / s, 1.0 / (s * s));
    };
    a = 0.0;
    b = 1.0;
  } else if (lo_inf) {
    g = [&, hi](double t) {
      const double s = 1.0 - t;
      return weighted(hi - t / s, 1.0 / (s * s));
    };
    a = 0.0;
    b = 1.0;
  } else {
    g = [&](double x) { return weighted(x, 1.0); };
  }

  std::priority_queue<Segment> heap;
  Segment first = gauss_kronrod_15(g, a, b);
  double total = first.value;
  double total_error = first.error;
  heap.push(first);

  auto converged = [&] {
    return total_error <= tol ||
           total_error <= 64.0 * std::numeric_limits<double>::epsilon() * std::abs(total);
  };

  int splits = 0;
  while (!converged()) {
    if (splits >= max_subdivisions) {
      throw AccuracyError(
          fmt::format("integrate: no convergence after {} subdivisions (error estimate {:.3e})",
                      splits, total_error),
          total, total_error);
    }
    const Segment worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) {
      throw AccuracyError("integrate: interval cannot be subdivided further", total, total_error);
    }
    const Segment left = gauss_kronrod_15(g, worst.a, mid);
    const Segment right = gauss_kronrod_15(g, mid, worst.b);
    total += left.value + right.value - worst.value;
    total_error += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
    ++splits;
  }

  // Re-sum to shed accumulated cancellation from the incremental updates.
  double value = 0.0;
  double error = 0.0;
  while (!heap.empty()) {
    value += heap.top().value;
    error += heap.top().error;
    heap.pop();
  }
  if (!std::isfinite(value)) {
    throw AccuracyError("integrate: non-finite integral", value, error);
  }
  return {value, error, evaluations};
}

}  // namespace nce_lab::numerics
