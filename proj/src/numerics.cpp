#include "nce_lab/numerics.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "nce_lab/errors.hpp"

namespace nce_lab::numerics {

namespace {

constexpr double kLanczosG = 7.0;
constexpr std::array<double, 9> kLanczosCoeffs = {
    0.99999999999980993,     676.5203681218851,     -1259.1392167224028,
    771.32342877765313,      -176.61502916214059,   12.507343278686905,
    -0.13857109526572012,    9.9843695780195716e-6, 1.5056327351493116e-7};

double log_gamma_lanczos(double z) {
  // Evaluates ln Gamma(z + 1).
  double series = kLanczosCoeffs[0];
  for (std::size_t i = 1; i < kLanczosCoeffs.size(); ++i) {
    series += kLanczosCoeffs[i] / (z + static_cast<double>(i));
  }
  const double t = z + kLanczosG + 0.5;
  return 0.5 * std::log(2.0 * std::numbers::pi) + (z + 0.5) * std::log(t) - t + std::log(series);
}

}  // namespace

double log_gamma(double z) {
  if (!std::isfinite(z) || z <= 0.0) {
    throw DomainError(fmt::format("log_gamma: argument must be finite and positive, got {}", z));
  }
  if (z < 0.5) {
    // Gamma(z) Gamma(1 - z) = pi / sin(pi z); sin(pi z) > 0 on (0, 1/2).
    return std::log(std::numbers::pi / std::sin(std::numbers::pi * z)) - log_gamma_lanczos(-z);
  }
  return log_gamma_lanczos(z - 1.0);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError(fmt::format("normal_quantile: p must lie in (0, 1), got {}", p));
  }
  // Acklam's rational approximation followed by two Halley corrections.
  static constexpr std::array<double, 6> a = {-3.969683028665376e+01, 2.209460984245205e+02,
                                              -2.759285104469687e+02, 1.383577518672690e+02,
                                              -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr std::array<double, 5> b = {-5.447609879822406e+01, 1.615858368580409e+02,
                                              -1.556989798598866e+02, 6.680131188771972e+01,
                                              -1.328068155288572e+01};
  static constexpr std::array<double, 6> c = {-7.784894002430293e-03, -3.223964580411365e-01,
                                              -2.400758277161838e+00, -2.549732539343734e+00,
                                              4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr std::array<double, 4> d = {7.784695709041462e-03, 3.224671290700398e-01,
                                              2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x = 0.0;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  for (int i = 0; i < 2; ++i) {
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
  }
  return x;
}

double log_sigmoid(double t) {
  if (t >= 0.0) {
    return -std::log1p(std::exp(-t));
  }
  return t - std::log1p(std::exp(t));
}

double softplus(double t) { return -log_sigmoid(-t); }

double sigmoid(double t) {
  if (t >= 0.0) {
    return 1.0 / (1.0 + std::exp(-t));
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

EigExtremes sym_eig_extremes(const Matrix& m) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw ShapeError(fmt::format("sym_eig_extremes: expected a non-empty square matrix, got {}x{}",
                                 m.rows(), m.cols()));
  }
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (!(asym <= 1e-10 * scale)) {
    throw ShapeError(fmt::format("sym_eig_extremes: matrix is not symmetric (max |M - M^T| = {})", asym));
  }
  // Householder tridiagonalization followed by implicit QL.
  Eigen::SelfAdjointEigenSolver<Matrix> solver(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  const auto& ev = solver.eigenvalues();
  return {ev(ev.size() - 1), ev(0)};
}

}  // namespace nce_lab::numerics
