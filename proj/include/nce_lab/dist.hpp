#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <span>
#include <string>

#include "nce_lab/numerics.hpp"

namespace nce_lab::dist {

/// The unit-variance quartic density p(x) = exp(-x^4 / sigma^4) / C on R.
///
/// sigma^2 = 4 Gamma(5/4) / Gamma(3/4) makes Var = 1, and C = 2 sigma Gamma(5/4).
/// Both are evaluated from log_gamma at construction; nothing is hard-coded.
class QuarticScalarDist {
 public:
  /// Builds the distribution. Debug builds re-check Var = 1 by quadrature.
  static QuarticScalarDist make();

  double sigma() const noexcept { return sigma_; }
  /// ln C.
  double log_norm() const noexcept { return log_norm_; }
  /// 1 / sigma^4, the coefficient of x^4 in -log p.
  double inv_sigma4() const noexcept { return inv_sigma4_; }

  double log_pdf(double x) const noexcept {
    const double x2 = x * x;
    return -x2 * x2 * inv_sigma4_ - log_norm_;
  }

  /// Exact draw: x = s * sigma * t^{1/4} with t ~ Gamma(1/4, 1), s a fair sign.
  double sample(numerics::RngStream& rng) const;

  /// E[x^{4k}] = sigma^{4k} * prod_{j<k} (1/4 + j), for k in {1, 2, 3, 4}.
  double moment_4k(int k) const;

 private:
  QuarticScalarDist(double sigma, double log_norm);

  double sigma_;
  double log_norm_;
  double inv_sigma4_;
};

enum class Source { Data, Noise };

std::string to_string(Source source);

/// n draws in R^d from either the data or the noise distribution.
struct SampleBatch {
  Source source = Source::Data;
  RowMatrix points;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;

  SampleBatch() = default;
  /// Validates n >= 1, d >= 1 and finiteness; throws ShapeError/DomainError.
  SampleBatch(Source source, RowMatrix points, std::uint64_t seed, std::uint64_t stream_id);

  Eigen::Index size() const noexcept { return points.rows(); }
  Eigen::Index dim() const noexcept { return points.cols(); }
};

/// P* = (quartic)^d.
class ProductQuartic {
 public:
  explicit ProductQuartic(int d, QuarticScalarDist scalar = QuarticScalarDist::make());

  int dim() const noexcept { return d_; }
  const QuarticScalarDist& scalar() const noexcept { return scalar_; }

  double log_pdf(std::span<const double> x) const;
  SampleBatch sample(Eigen::Index n, numerics::RngStream& rng) const;

 private:
  int d_;
  QuarticScalarDist scalar_;
};

/// Q = N(0, I_d).
class StandardGaussian {
 public:
  explicit StandardGaussian(int d);

  int dim() const noexcept { return d_; }

  double log_pdf(std::span<const double> x) const;
  SampleBatch sample(Eigen::Index n, numerics::RngStream& rng) const;

 private:
  int d_;
};

/// Per-coordinate term of the log-density ratio ln p*(x) - ln q(x).
inline double log_density_ratio_1d(const QuarticScalarDist& s, double x) noexcept {
  const double x2 = x * x;
  return -x2 * x2 * s.inv_sigma4() - s.log_norm() + 0.5 * x2 + 0.5 * std::log(2.0 * std::numbers::pi);
}

/// ell(x) = ln p*(x) - ln q(x), summed over coordinates; never exponentiated.
/// Throws ShapeError when the dimensions of pstar, q and x disagree.
double log_density_ratio(const ProductQuartic& pstar, const StandardGaussian& q,
                         std::span<const double> x);

/// ell for every row of a point matrix.
Vector log_density_ratio_rows(const QuarticScalarDist& s, const RowMatrix& points);

/// Writes `x1,...,xd` CSV rows and the sidecar JSON {source, seed, stream_id, n, d}.
void write_batch_csv(const SampleBatch& batch, const std::filesystem::path& csv_path);
void write_batch_sidecar(const SampleBatch& batch, const std::filesystem::path& json_path);

}  // namespace nce_lab::dist
