#include "nce_lab/model.hpp"

#include <fmt/format.h>

#include "nce_lab/errors.hpp"

namespace nce_lab::model {

ThetaVector::ThetaVector(Vector coords) : coords_(std::move(coords)) {
  if (coords_.size() < 2) {
    throw ShapeError(fmt::format("theta needs at least 2 coordinates, got {}", coords_.size()));
  }
  if (!coords_.allFinite()) {
    throw DomainError("theta has non-finite coordinates");
  }
}

nlohmann::json to_json(const ThetaVector& theta) {
  nlohmann::json arr = nlohmann::json::array();
  for (double v : theta.coords()) {
    arr.push_back(v);
  }
  return arr;
}

ThetaVector theta_from_json(const nlohmann::json& j) {
  if (!j.is_array()) {
    throw ConfigError("theta must be a JSON array of numbers");
  }
  Vector coords(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) {
      throw ConfigError(fmt::format("theta entry {} is not a number", i));
    }
    coords(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return ThetaVector(std::move(coords));
}

Vector suff_stats(std::span<const double> x) {
  const auto d = static_cast<Eigen::Index>(x.size());
  Vector t(d + 1);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double x2 = x[i] * x[i];
    t(i) = x2 * x2;
  }
  t(d) = 1.0;
  return t;
}

Matrix suff_stats_rows(const RowMatrix& points) {
  const Eigen::Index n = points.rows();
  const Eigen::Index d = points.cols();
  Matrix t(n, d + 1);
  t.leftCols(d) = points.array().square().square().matrix();
  t.col(d).setOnes();
  return t;
}

double log_p_theta(const ThetaVector& theta, std::span<const double> x) {
  if (static_cast<int>(x.size()) != theta.dim()) {
    throw ShapeError(fmt::format("log_p_theta: point has dimension {}, theta expects {}", x.size(),
                                 theta.dim()));
  }
  const Vector& c = theta.coords();
  double sum = c(theta.dim());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x2 = x[i] * x[i];
    sum += c(static_cast<Eigen::Index>(i)) * x2 * x2;
  }
  return sum;
}

ThetaVector theta_star(int d, const dist::QuarticScalarDist& scalar) {
  if (d < 1) {
    throw DomainError(fmt::format("theta_star: dimension must be >= 1, got {}", d));
  }
  Vector coords(d + 1);
  coords.head(d).setConstant(-scalar.inv_sigma4());
  coords(d) = -d * scalar.log_norm();
  return ThetaVector(std::move(coords));
}

}  // namespace nce_lab::model
