#pragma once

#include <span>

#include "json.hpp"
#include "nce_lab/dist.hpp"
#include "nce_lab/numerics.hpp"

namespace nce_lab::model {

/// Natural parameter of p_theta(x) = exp(theta^T T(x)), length d + 1.
///
/// The first d entries multiply x_i^4. The last entry is the negated
/// log-partition surrogate, theta_{d+1} = -c, so that log p_theta is a plain
/// inner product with T(x) = (x_1^4, ..., x_d^4, 1).
class ThetaVector {
 public:
  /// Throws ShapeError if coords.size() < 2, DomainError on non-finite entries.
  explicit ThetaVector(Vector coords);

  int dim() const noexcept { return static_cast<int>(coords_.size()) - 1; }
  const Vector& coords() const noexcept { return coords_; }
  /// c = -theta_{d+1}.
  double log_partition() const noexcept { return -coords_(coords_.size() - 1); }

 private:
  Vector coords_;
};

nlohmann::json to_json(const ThetaVector& theta);
ThetaVector theta_from_json(const nlohmann::json& j);

/// T(x) = (x_1^4, ..., x_d^4, 1).
Vector suff_stats(std::span<const double> x);

/// Rows of T for every row of `points`: an n x (d + 1) matrix.
Matrix suff_stats_rows(const RowMatrix& points);

/// theta^T T(x); no normalization beyond what theta carries.
double log_p_theta(const ThetaVector& theta, std::span<const double> x);

/// theta* = (-1/sigma^4, ..., -1/sigma^4, -d ln C), so that p_theta* is the
/// normalized product density.
ThetaVector theta_star(int d, const dist::QuarticScalarDist& scalar = dist::QuarticScalarDist::make());

}  // namespace nce_lab::model
