#pragma once

#include <cstdint>
#include <functional>
#include <random>

#include <Eigen/Dense>

namespace nce_lab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// Row-major storage for point sets: one row per sample.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace numerics {

// ---------------------------------------------------------------------------
// Special functions

/// ln Gamma(z) for finite z > 0. Lanczos approximation (g = 7, 9 terms) with
/// the reflection formula below z = 1/2; relative error ~1e-15 on [1/8, 32].
double log_gamma(double z);

/// Standard normal CDF.
double normal_cdf(double x);

/// Inverse of normal_cdf for p in (0, 1).
double normal_quantile(double p);

// ---------------------------------------------------------------------------
// Logistic forms. All are overflow-free for any finite argument.

/// ln(1 / (1 + e^{-t})).
double log_sigmoid(double t);

/// ln(1 + e^{t}) == -log_sigmoid(-t).
double softplus(double t);

/// 1 / (1 + e^{-t}).
double sigmoid(double t);

// ---------------------------------------------------------------------------
// Quadrature

struct QuadResult {
  double value = 0.0;
  double abs_error_estimate = 0.0;
  long evaluations = 0;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Adaptive Gauss-Kronrod (7/15) integration of f over [lo, hi].
///
/// Either bound may be infinite. (-inf, inf) is mapped to (-1, 1) through
/// x = atanh(t); a half-line [a, inf) through x = a + t / (1 - t), and
/// (-inf, b] symmetrically. The interval with the largest local error is
/// bisected until the summed error estimate is <= tol.
///
/// Throws DomainError for tol <= 0 or lo > hi, AccuracyError (carrying the
/// best estimate) when max_subdivisions is exhausted.
QuadResult integrate(const std::function<double(double)>& f, double lo, double hi,
                     double tol = 1e-10, int max_subdivisions = 2000);

// ---------------------------------------------------------------------------
// Dense symmetric eigenvalues

struct EigExtremes {
  double lambda_max = 0.0;
  double lambda_min = 0.0;
};

/// Extreme eigenvalues of a symmetric matrix. Throws ShapeError for a
/// non-square matrix or when max|M - M^T| exceeds 1e-10 * max(1, max|M|).
EigExtremes sym_eig_extremes(const Matrix& m);

// ---------------------------------------------------------------------------
// Random numbers

/// SplitMix64 finalizer; a bijective avalanche mix of a 64-bit word.
std::uint64_t mix64(std::uint64_t x);

/// A single-owner random stream. Identical (seed, stream_id) pairs replay
/// identical sequences on every platform: only the raw 64-bit engine output
/// is used, never the implementation-defined std:: distributions.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on the open interval (0, 1), 53 random bits.
  double uniform();
  /// Standard normal (Marsaglia polar method).
  double normal();
  /// +1 or -1 with equal probability.
  double sign() { return (engine_() >> 63) != 0 ? 1.0 : -1.0; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Gamma(shape, 1) draw for any shape > 0 (Marsaglia-Tsang; shapes below one
/// use the boost G(shape + 1) * U^{1/shape}). Exact, no discretization.
double gamma_sample(double shape, RngStream& rng);

/// Gamma(1/4, 1) draw.
double gamma_quarter_sample(RngStream& rng);

}  // namespace numerics
}  // namespace nce_lab
