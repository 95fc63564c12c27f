#pragma once

#include <functional>

#include "nce_lab/numerics.hpp"

namespace nce_lab::theory {

/// Absolute tolerance used for the one-dimensional integrals below.
inline constexpr double kQuadTol = 1e-12;

/// Default Berry-Esseen constant. Only C_BE < 1 is known to hold; 0.8 is a
/// conservative choice, not a sharp value.
inline constexpr double kDefaultBerryEsseen = 0.8;

// ---------------------------------------------------------------------------
// Distances

/// Bhattacharyya coefficient rho = int sqrt(p q) of the 1-D quartic and the
/// standard normal, by quadrature.
double bhattacharyya_rho();

/// Bhattacharyya coefficient of two 1-D log-densities by quadrature.
double bhattacharyya(const std::function<double(double)>& log_p,
                     const std::function<double(double)>& log_q);

struct DistanceReport {
  int d = 0;
  double rho = 0.0;
  /// 2 (1 - rho^d).
  double hellinger_sq_d = 0.0;
  /// 1 - rho^d.
  double tv_lower_bound_d = 0.0;
};

/// rho^d is formed as exp(d ln rho) and subtracted with expm1.
DistanceReport tv_hellinger_report(int d);

// ---------------------------------------------------------------------------
// Log-ratio moments

enum class Direction {
  /// y = ln(q/p)(x) with x ~ p.
  DataVsNoise,
  /// y = ln(p/q)(x) with x ~ q.
  NoiseVsData,
};

const char* to_string(Direction direction);

struct LogRatioMoments {
  double mu_r = 0.0;
  double sigma_r = 0.0;
  /// Third absolute central moment.
  double gamma_r = 0.0;
};

/// mu_r, sigma_r, gamma_r of the per-coordinate log-ratio by 1-D quadrature.
LogRatioMoments kl_and_logratio_moments(Direction direction);

/// -KL in closed form: -(-1/4 - ln C + 1/2 + ln sqrt(2 pi)) for DataVsNoise,
/// -(-1/2 - ln sqrt(2 pi) + 3/sigma^4 + ln C) for NoiseVsData.
double mu_closed_form(Direction direction);

// ---------------------------------------------------------------------------
// Anti-concentration

struct AnticoncThresholds {
  int d = 0;
  double epsilon = 0.0;
  /// Phi^{-1}(1/2 + epsilon/2).
  double c = 0.0;
  double alpha = 0.0;
  double mu = 0.0;
  /// Thresholds as logs: mu d -/+ alpha sqrt(d).
  double L1 = 0.0;
  double L2 = 0.0;
  /// Berry-Esseen band C_BE gamma_r / (sigma_r^3 sqrt(d)).
  double be_band = 0.0;
  /// Smallest d with be_band <= epsilon / 2.
  long min_d_for_band = 0;
};

/// Throws DomainError unless 0 < epsilon <= 1/8 and d >= 1.
AnticoncThresholds anticonc_thresholds(int d, double epsilon, Direction direction,
                                       double c_be = kDefaultBerryEsseen);

struct AnticoncCheck {
  Direction direction = Direction::DataVsNoise;
  AnticoncThresholds thresholds;
  long n_mc = 0;
  double frac_below_L1 = 0.0;
  double frac_above_L2 = 0.0;
  /// Binomial standard errors of the two fractions.
  double stderr_below = 0.0;
  double stderr_above = 0.0;
  /// Empirical CDF of (ln R - mu d) / (sigma_r sqrt d) at zero.
  double standardized_cdf_at_zero = 0.0;
  bool pass = false;
};

/// Samples ln R for the given direction (n_mc >= 1e4 draws) and compares the
/// fraction on each side of L1/L2 with 1/2 - epsilon - 3 stderr.
AnticoncCheck verify_anticonc(int d, double epsilon, long n_mc, Direction direction,
                              numerics::RngStream& rng, double c_be = kDefaultBerryEsseen);

// ---------------------------------------------------------------------------
// Hessian upper bound

struct FisherBoundReport {
  int d = 0;
  /// int ||T T^T||_F^2 p* = d E[x^16] + d(d-1) E[x^8]^2 + 2d E[x^4] + 1.
  double exact_value = 0.0;
  double M_const = 0.0;
  /// d^2 M_const.
  double bound = 0.0;
};

/// M_const is the smallest power of two >= sup_d exact_value(d) / d^2; the
/// supremum is attained at fisher_sup_witness().
FisherBoundReport fisher_frobenius(int d);
double fisher_m_const();
int fisher_sup_witness();

struct HessianBound {
  /// ln( 1/2 rho^{d/2} sqrt(exact Fisher-Frobenius) ).
  double log_bound = 0.0;
  /// ln( 1/2 rho^{d/2} d sqrt(M_const) ).
  double log_loose_bound = 0.0;
};

HessianBound hessian_norm_bound(int d);

// ---------------------------------------------------------------------------
// Norm quantiles and chi-square tails

struct TUp {
  double data = 0.0;
  double noise = 0.0;
};

/// Empirical `quantile` quantiles of ||T(x)|| under P* and Q (n_mc >= 1e4).
TUp t_up_estimate(int d, double quantile, long n_mc, numerics::RngStream& rng);

struct ChiSquareTail {
  /// e^{-t}.
  double bound = 0.0;
  /// Fraction of ||g||^2 - d >= 2 sqrt(t d) + 2t over n_mc Gaussian draws.
  double empirical = 0.0;
  double stderr_empirical = 0.0;
};

ChiSquareTail chi_square_tail_check(int d, double t, long n_mc, numerics::RngStream& rng);

}  // namespace nce_lab::theory
