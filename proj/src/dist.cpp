#include "nce_lab/dist.hpp"

#include <cassert>
#include <cmath>
#include <fstream>
#include <numbers>

#include <fmt/format.h>
#include "json.hpp"

#include "nce_lab/errors.hpp"

namespace nce_lab::dist {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

void check_finite(const RowMatrix& m) {
  if (!m.allFinite()) {
    throw DomainError("sample batch contains non-finite entries");
  }
}

}  // namespace

QuarticScalarDist::QuarticScalarDist(double sigma, double log_norm)
    : sigma_(sigma), log_norm_(log_norm), inv_sigma4_(1.0 / (sigma * sigma * sigma * sigma)) {}

QuarticScalarDist QuarticScalarDist::make() {
  const double lg54 = numerics::log_gamma(1.25);
  const double lg34 = numerics::log_gamma(0.75);
  const double log_sigma = 0.5 * (std::log(4.0) + lg54 - lg34);
  const double sigma = std::exp(log_sigma);
  const double log_norm = std::log(2.0) + log_sigma + lg54;
  QuarticScalarDist dist(sigma, log_norm);
#ifndef NDEBUG
  const auto var = numerics::integrate(
      [&](double x) { return x * x * std::exp(dist.log_pdf(x)); }, -numerics::kInf,
      numerics::kInf, 1e-12);
  assert(std::abs(var.value - 1.0) <= 1e-8);
#endif
  return dist;
}

double QuarticScalarDist::sample(numerics::RngStream& rng) const {
  const double t = numerics::gamma_quarter_sample(rng);
  return rng.sign() * sigma_ * std::sqrt(std::sqrt(t));
}

double QuarticScalarDist::moment_4k(int k) const {
  if (k < 1 || k > 4) {
    throw DomainError(fmt::format("moment_4k: order k must be in 1..4, got {}", k));
  }
  const double s4 = sigma_ * sigma_ * sigma_ * sigma_;
  double value = 1.0;
  for (int j = 0; j < k; ++j) {
    value *= s4 * (0.25 + j);
  }
  return value;
}

std::string to_string(Source source) { return source == Source::Data ? "data" : "noise"; }

SampleBatch::SampleBatch(Source source_, RowMatrix points_, std::uint64_t seed_,
                         std::uint64_t stream_id_)
    : source(source_), points(std::move(points_)), seed(seed_), stream_id(stream_id_) {
  if (points.rows() < 1 || points.cols() < 1) {
    throw ShapeError(fmt::format("sample batch must be at least 1x1, got {}x{}", points.rows(),
                                 points.cols()));
  }
  check_finite(points);
}

ProductQuartic::ProductQuartic(int d, QuarticScalarDist scalar) : d_(d), scalar_(scalar) {
  if (d < 1) {
    throw DomainError(fmt::format("dimension must be >= 1, got {}", d));
  }
}

double ProductQuartic::log_pdf(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != d_) {
    throw ShapeError(fmt::format("point has dimension {}, expected {}", x.size(), d_));
  }
  double sum = 0.0;
  for (double xi : x) {
    sum += scalar_.log_pdf(xi);
  }
  return sum;
}

SampleBatch ProductQuartic::sample(Eigen::Index n, numerics::RngStream& rng) const {
  if (n < 1) {
    throw ShapeError("sample count must be >= 1");
  }
  RowMatrix points(n, d_);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < d_; ++j) {
      points(i, j) = scalar_.sample(rng);
    }
  }
  return SampleBatch(Source::Data, std::move(points), rng.seed(), rng.stream_id());
}

StandardGaussian::StandardGaussian(int d) : d_(d) {
  if (d < 1) {
    throw DomainError(fmt::format("dimension must be >= 1, got {}", d));
  }
}

double StandardGaussian::log_pdf(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != d_) {
    throw ShapeError(fmt::format("point has dimension {}, expected {}", x.size(), d_));
  }
  double sq = 0.0;
  for (double xi : x) {
    sq += xi * xi;
  }
  return -0.5 * sq - d_ * kHalfLog2Pi;
}

SampleBatch StandardGaussian::sample(Eigen::Index n, numerics::RngStream& rng) const {
  if (n < 1) {
    throw ShapeError("sample count must be >= 1");
  }
  RowMatrix points(n, d_);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < d_; ++j) {
      points(i, j) = rng.normal();
    }
  }
  return SampleBatch(Source::Noise, std::move(points), rng.seed(), rng.stream_id());
}

double log_density_ratio(const ProductQuartic& pstar, const StandardGaussian& q,
                         std::span<const double> x) {
  if (pstar.dim() != q.dim() || static_cast<int>(x.size()) != pstar.dim()) {
    throw ShapeError(fmt::format("log_density_ratio: dimensions disagree (p* {}, q {}, x {})",
                                 pstar.dim(), q.dim(), x.size()));
  }
  double sum = 0.0;
  for (double xi : x) {
    sum += log_density_ratio_1d(pstar.scalar(), xi);
  }
  return sum;
}

Vector log_density_ratio_rows(const QuarticScalarDist& s, const RowMatrix& points) {
  Vector ell(points.rows());
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < points.cols(); ++j) {
      sum += log_density_ratio_1d(s, points(i, j));
    }
    ell(i) = sum;
  }
  return ell;
}

void write_batch_csv(const SampleBatch& batch, const std::filesystem::path& csv_path) {
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) {
    throw ConfigError(fmt::format("cannot open {} for writing", csv_path.string()));
  }
  for (Eigen::Index j = 0; j < batch.dim(); ++j) {
    out << (j == 0 ? "" : ",") << "x" << (j + 1);
  }
  out << '\n';
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    for (Eigen::Index j = 0; j < batch.dim(); ++j) {
      out << (j == 0 ? "" : ",") << fmt::format("{}", batch.points(i, j));
    }
    out << '\n';
  }
}

void write_batch_sidecar(const SampleBatch& batch, const std::filesystem::path& json_path) {
  std::ofstream out(json_path, std::ios::binary);
  if (!out) {
    throw ConfigError(fmt::format("cannot open {} for writing", json_path.string()));
  }
  const nlohmann::ordered_json j = {{"source", to_string(batch.source)},
                                    {"seed", batch.seed},
                                    {"stream_id", batch.stream_id},
                                    {"n", batch.size()},
                                    {"d", batch.dim()}};
  out << j.dump(2) << '\n';
}

}  // namespace nce_lab::dist
