#include "nce_lab/nce.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "nce_lab/errors.hpp"

namespace nce_lab::nce {

using numerics::sigmoid;
using numerics::softplus;

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

Vector gaussian_log_pdf_rows(const RowMatrix& points) {
  const double offset = static_cast<double>(points.cols()) * kHalfLog2Pi;
  return (-0.5 * points.rowwise().squaredNorm().array() - offset).matrix();
}

// Sizes of kBatchSplits nearly equal chunks of n.
std::vector<long> split_sizes(long n) {
  std::vector<long> sizes(kBatchSplits, n / kBatchSplits);
  for (long i = 0; i < n % kBatchSplits; ++i) {
    ++sizes[static_cast<std::size_t>(i)];
  }
  return sizes;
}

// sqrt(w_i) * T(z_i) stacked, so that W^T W = sum_i w_i T T^T.
Matrix weighted_rows(const Matrix& t, const Vector& w) {
  return w.array().sqrt().matrix().asDiagonal() * t;
}

}  // namespace

NceObjective::NceObjective(const dist::SampleBatch& data, const dist::SampleBatch& noise) {
  if (data.source != dist::Source::Data || noise.source != dist::Source::Noise) {
    throw ShapeError("NCE objective expects a data batch and a noise batch");
  }
  if (data.size() != noise.size()) {
    throw ShapeError(fmt::format("data and noise counts differ ({} vs {})", data.size(), noise.size()));
  }
  if (data.dim() != noise.dim()) {
    throw ShapeError(fmt::format("data and noise dimensions differ ({} vs {})", data.dim(), noise.dim()));
  }
  tx_ = model::suff_stats_rows(data.points);
  ty_ = model::suff_stats_rows(noise.points);
  log_q_x_ = gaussian_log_pdf_rows(data.points);
  log_q_y_ = gaussian_log_pdf_rows(noise.points);
}

void NceObjective::check_theta(const Vector& theta) const {
  if (theta.size() != tx_.cols()) {
    throw ShapeError(fmt::format("theta has length {}, expected {}", theta.size(), tx_.cols()));
  }
  if (!theta.allFinite()) {
    throw DomainError("theta has non-finite coordinates");
  }
}

double NceObjective::loss(const model::ThetaVector& theta) const {
  check_theta(theta.coords());
  const Vector ell_x = tx_ * theta.coords() - log_q_x_;
  const Vector ell_y = ty_ * theta.coords() - log_q_y_;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < ell_x.size(); ++i) {
    sum += softplus(-ell_x(i)) + softplus(ell_y(i));
  }
  return sum / (2.0 * static_cast<double>(ell_x.size()));
}

double NceObjective::loss_and_grad(const Vector& theta, Vector& grad) const {
  check_theta(theta);
  const Vector ell_x = tx_ * theta - log_q_x_;
  const Vector ell_y = ty_ * theta - log_q_y_;
  const auto n = ell_x.size();
  Vector sx(n);
  Vector sy(n);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    sum += softplus(-ell_x(i)) + softplus(ell_y(i));
    sx(i) = sigmoid(-ell_x(i));
    sy(i) = sigmoid(ell_y(i));
  }
  const double scale = 1.0 / (2.0 * static_cast<double>(n));
  grad = scale * (ty_.transpose() * sy - tx_.transpose() * sx);
  return sum * scale;
}

Matrix NceObjective::hessian(const model::ThetaVector& theta) const {
  check_theta(theta.coords());
  auto curvature = [](const Vector& ell) {
    Vector w(ell.size());
    for (Eigen::Index i = 0; i < ell.size(); ++i) {
      w(i) = sigmoid(ell(i)) * sigmoid(-ell(i));
    }
    return w;
  };
  const Matrix wx = weighted_rows(tx_, curvature(tx_ * theta.coords() - log_q_x_));
  const Matrix wy = weighted_rows(ty_, curvature(ty_ * theta.coords() - log_q_y_));
  Matrix h = wx.transpose() * wx + wy.transpose() * wy;
  h /= 2.0 * static_cast<double>(tx_.rows());
  return 0.5 * (h + h.transpose());
}

NceEvaluation NceObjective::evaluate(const model::ThetaVector& theta, bool with_hessian) const {
  NceEvaluation eval;
  eval.loss = loss_and_grad(theta.coords(), eval.grad);
  if (with_hessian) {
    eval.hessian = hessian(theta);
  }
  return eval;
}

double empirical_loss(const model::ThetaVector& theta, const dist::SampleBatch& data,
                      const dist::SampleBatch& noise) {
  return NceObjective(data, noise).loss(theta);
}

Vector empirical_grad(const model::ThetaVector& theta, const dist::SampleBatch& data,
                      const dist::SampleBatch& noise) {
  Vector grad;
  NceObjective(data, noise).loss_and_grad(theta.coords(), grad);
  return grad;
}

Matrix empirical_hessian(const model::ThetaVector& theta, const dist::SampleBatch& data,
                         const dist::SampleBatch& noise) {
  return NceObjective(data, noise).hessian(theta);
}

// ---------------------------------------------------------------------------

std::pair<double, double> batch_mean_stderr(const std::vector<double>& values) {
  const auto k = static_cast<double>(values.size());
  if (values.size() < 2) {
    throw DomainError("batch_mean_stderr: need at least two batches");
  }
  double mean = 0.0;
  for (double v : values) {
    mean += v;
  }
  mean /= k;
  double ss = 0.0;
  for (double v : values) {
    ss += (v - mean) * (v - mean);
  }
  return {mean, std::sqrt(ss / (k - 1.0) / k)};
}

std::pair<double, double> PopulationHessian::quadratic_form(const Vector& v) const {
  std::vector<double> values;
  values.reserve(splits.size());
  for (const Matrix& h : splits) {
    values.push_back(v.dot(h * v));
  }
  return batch_mean_stderr(values);
}

PopulationHessian mc_population_hessian_at_star(int d, long n_mc, numerics::RngStream& rng,
                                                HessianSide side) {
  if (n_mc < 1000) {
    throw DomainError(fmt::format("mc_population_hessian_at_star: n_mc must be >= 1000, got {}", n_mc));
  }
  const dist::ProductQuartic pstar(d);
  const dist::StandardGaussian q(d);

  PopulationHessian out;
  out.n_mc = n_mc;
  for (long m : split_sizes(n_mc)) {
    const dist::SampleBatch batch =
        side == HessianSide::DataSide ? pstar.sample(m, rng) : q.sample(m, rng);
    const Vector ell = dist::log_density_ratio_rows(pstar.scalar(), batch.points);
    Vector w(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      w(i) = side == HessianSide::DataSide ? sigmoid(-ell(i)) : sigmoid(ell(i));
    }
    const Matrix wt = weighted_rows(model::suff_stats_rows(batch.points), w);
    Matrix h = wt.transpose() * wt;
    h /= 2.0 * static_cast<double>(m);
    out.splits.push_back(0.5 * (h + h.transpose()));
  }

  const auto k = static_cast<double>(out.splits.size());
  out.mean = Matrix::Zero(d + 1, d + 1);
  for (const Matrix& h : out.splits) {
    out.mean += h;
  }
  out.mean /= k;
  Matrix ss = Matrix::Zero(d + 1, d + 1);
  for (const Matrix& h : out.splits) {
    ss += (h - out.mean).cwiseAbs2();
  }
  out.std_error = (ss / ((k - 1.0) * k)).cwiseSqrt();
  return out;
}

// ---------------------------------------------------------------------------

void GdConfig::validate() const {
  if (!(step_size > 0.0) || !std::isfinite(step_size)) {
    throw ConfigError(fmt::format("gd.step_size must be positive, got {}", step_size));
  }
  if (!(grad_tol > 0.0) || !std::isfinite(grad_tol)) {
    throw ConfigError(fmt::format("gd.grad_tol must be positive, got {}", grad_tol));
  }
  if (max_iters < 0) {
    throw ConfigError(fmt::format("gd.max_iters must be >= 0, got {}", max_iters));
  }
  if (max_halvings < 0) {
    throw ConfigError(fmt::format("gd.max_halvings must be >= 0, got {}", max_halvings));
  }
  if (init.kind == InitKind::Perturbed && !(init.perturb_scale >= 0.0)) {
    throw ConfigError(fmt::format("gd.perturb_scale must be >= 0, got {}", init.perturb_scale));
  }
  if (init.kind == InitKind::Custom && !init.custom) {
    throw ConfigError("gd.init = custom requires an initial theta");
  }
}

namespace {

std::vector<double> decimate(const std::vector<double>& trace) {
  if (trace.size() <= kMaxTracePoints) {
    return trace;
  }
  std::vector<double> out;
  out.reserve(kMaxTracePoints);
  const double stride =
      static_cast<double>(trace.size() - 1) / static_cast<double>(kMaxTracePoints - 1);
  for (std::size_t i = 0; i < kMaxTracePoints; ++i) {
    const auto idx = static_cast<std::size_t>(std::llround(stride * static_cast<double>(i)));
    out.push_back(trace[std::min(idx, trace.size() - 1)]);
  }
  return out;
}

}  // namespace

GdReport minimize(const GdConfig& cfg, Vector theta0, const Objective& objective) {
  cfg.validate();
  Vector theta = std::move(theta0);
  Vector grad;
  double loss = objective(theta, grad);
  std::vector<double> trace{loss};
  if (!std::isfinite(loss) || !grad.allFinite()) {
    throw OptimizationError("gradient descent: non-finite loss at the initial point", trace,
                            std::vector<double>(theta.data(), theta.data() + theta.size()));
  }

  GdReport report;
  Vector candidate;
  Vector cand_grad;
  while (report.iters_used < cfg.max_iters && !(grad.norm() <= cfg.grad_tol)) {
    double step = cfg.step_size;
    bool accepted = false;
    bool any_finite = false;
    for (int halving = 0; halving <= cfg.max_halvings; ++halving, step *= 0.5) {
      candidate = theta - step * grad;
      const double cand_loss = objective(candidate, cand_grad);
      const bool finite = std::isfinite(cand_loss) && cand_grad.allFinite();
      any_finite = any_finite || finite;
      if (finite && cand_loss <= loss) {
        theta.swap(candidate);
        grad.swap(cand_grad);
        loss = cand_loss;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (!any_finite) {
        throw OptimizationError("gradient descent: loss diverged to a non-finite value", trace,
                                std::vector<double>(theta.data(), theta.data() + theta.size()));
      }
      break;  // stalled: no halving decreases the loss
    }
    trace.push_back(loss);
    ++report.iters_used;
  }

  report.final_grad_norm = grad.norm();
  report.converged = report.final_grad_norm <= cfg.grad_tol;
  report.theta_hat = std::move(theta);
  report.loss_trace = decimate(trace);
  return report;
}

GdReport gradient_descent(const GdConfig& cfg, const dist::SampleBatch& data,
                          const dist::SampleBatch& noise, numerics::RngStream& rng) {
  cfg.validate();
  const NceObjective objective(data, noise);
  const int d = objective.dim();

  Vector theta0;
  double perturb = 0.0;
  switch (cfg.init.kind) {
    case InitKind::AtThetaStar:
      theta0 = model::theta_star(d).coords();
      break;
    case InitKind::Perturbed:
      theta0 = model::theta_star(d).coords();
      perturb = cfg.init.perturb_scale;
      for (Eigen::Index i = 0; i < theta0.size(); ++i) {
        theta0(i) += perturb * rng.normal();
      }
      break;
    case InitKind::Custom:
      theta0 = *cfg.init.custom;
      if (theta0.size() != d + 1) {
        throw ShapeError(fmt::format("custom init has length {}, expected {}", theta0.size(), d + 1));
      }
      break;
  }

  GdReport report = minimize(cfg, std::move(theta0), [&](const Vector& theta, Vector& grad) {
    return objective.loss_and_grad(theta, grad);
  });
  report.perturb_scale = perturb;
  return report;
}

nlohmann::ordered_json to_json(const GdReport& report) {
  nlohmann::ordered_json j;
  j["theta_hat"] = std::vector<double>(report.theta_hat.data(),
                                       report.theta_hat.data() + report.theta_hat.size());
  j["iters"] = report.iters_used;
  j["final_grad_norm"] = report.final_grad_norm;
  j["converged"] = report.converged;
  j["perturb_scale"] = report.perturb_scale;
  j["loss_trace"] = report.loss_trace;
  return j;
}

// ---------------------------------------------------------------------------

namespace {

struct SideMoments {
  double mean = 0.0;
  double mean_sq = 0.0;
  double var = 0.0;
  std::vector<MomentBatch> batches;
};

SideMoments moments_by_batch(const std::vector<std::vector<double>>& batch_values) {
  SideMoments out;
  double sum = 0.0;
  double sum_sq = 0.0;
  long count = 0;
  for (const auto& values : batch_values) {
    MomentBatch b;
    double s = 0.0;
    double s2 = 0.0;
    for (double a : values) {
      s += a;
      s2 += a * a;
    }
    const auto m = static_cast<double>(values.size());
    b.mean = s / m;
    b.mean_sq = s2 / m;
    double ss = 0.0;
    for (double a : values) {
      ss += (a - b.mean) * (a - b.mean);
    }
    b.var = ss / (m - 1.0);
    out.batches.push_back(b);
    sum += s;
    sum_sq += s2;
    count += static_cast<long>(values.size());
  }
  const auto n = static_cast<double>(count);
  out.mean = sum / n;
  out.mean_sq = sum_sq / n;
  double ss = 0.0;
  for (const auto& values : batch_values) {
    for (double a : values) {
      ss += (a - out.mean) * (a - out.mean);
    }
  }
  out.var = ss / (n - 1.0);
  return out;
}

}  // namespace

DirectionalStats directional_stats(int d, long n_mc, numerics::RngStream& rng,
                                   const std::optional<Vector>& v) {
  if (n_mc < 1000) {
    throw DomainError(fmt::format("directional_stats: n_mc must be >= 1000, got {}", n_mc));
  }
  const Vector dir = v ? *v : Vector::Ones(d + 1);
  if (dir.size() != d + 1) {
    throw ShapeError(fmt::format("direction has length {}, expected {}", dir.size(), d + 1));
  }
  const dist::ProductQuartic pstar(d);
  const dist::StandardGaussian q(d);

  auto side_values = [&](bool data_side) {
    std::vector<std::vector<double>> out;
    for (long m : split_sizes(n_mc)) {
      const dist::SampleBatch batch = data_side ? pstar.sample(m, rng) : q.sample(m, rng);
      const Vector ell = dist::log_density_ratio_rows(pstar.scalar(), batch.points);
      const Vector proj = model::suff_stats_rows(batch.points) * dir;
      std::vector<double> values(static_cast<std::size_t>(m));
      for (Eigen::Index i = 0; i < m; ++i) {
        const double weight = data_side ? sigmoid(-ell(i)) : sigmoid(ell(i));
        values[static_cast<std::size_t>(i)] = weight * proj(i);
      }
      out.push_back(std::move(values));
    }
    return out;
  };

  const SideMoments a = moments_by_batch(side_values(true));
  const SideMoments b = moments_by_batch(side_values(false));

  DirectionalStats s;
  s.mean_A = a.mean;
  s.var_A = a.var;
  s.mean_sq_A = a.mean_sq;
  s.mean_B = b.mean;
  s.var_B = b.var;
  s.mean_sq_B = b.mean_sq;
  s.n_used = n_mc;
  s.batches_A = a.batches;
  s.batches_B = b.batches;
  auto se_of = [](const std::vector<MomentBatch>& batches) {
    std::vector<double> values;
    for (const auto& bt : batches) {
      values.push_back(bt.mean_sq);
    }
    return batch_mean_stderr(values).second;
  };
  s.stderr_mean_sq_A = se_of(a.batches);
  s.stderr_mean_sq_B = se_of(b.batches);
  return s;
}

}  // namespace nce_lab::nce
