#include <cmath>

#include <fmt/format.h>

#include "nce_lab/errors.hpp"
#include "nce_lab/numerics.hpp"

namespace nce_lab::numerics {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(mix64(mix64(seed) ^ mix64(~stream_id))) {}

double RngStream::uniform() {
  // (k + 0.5) / 2^53 for k in [0, 2^53): never 0, never 1.
  const std::uint64_t k = engine_() >> 11;
  return (static_cast<double>(k) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u = 0.0;
  double v = 0.0;
  double s = 0.0;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double factor = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * factor;
  has_spare_ = true;
  return u * factor;
}

double gamma_sample(double shape, RngStream& rng) {
  if (!(shape > 0.0) || !std::isfinite(shape)) {
    throw DomainError(fmt::format("gamma_sample: shape must be finite and positive, got {}", shape));
  }
  if (shape < 1.0) {
    // If G ~ Gamma(shape + 1) and U ~ U(0,1) independent, G * U^{1/shape} ~ Gamma(shape).
    const double g = gamma_sample(shape + 1.0, rng);
    return g * std::pow(rng.uniform(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) {
      return d * v;
    }
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) {
      return d * v;
    }
  }
}

double gamma_quarter_sample(RngStream& rng) { return gamma_sample(0.25, rng); }

}  // namespace nce_lab::numerics
