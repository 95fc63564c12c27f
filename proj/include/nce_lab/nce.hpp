#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "json.hpp"
#include "nce_lab/dist.hpp"
#include "nce_lab/model.hpp"
#include "nce_lab/numerics.hpp"

namespace nce_lab::nce {

// ---------------------------------------------------------------------------
// Empirical NCE loss
//
//   L_n(theta) = 1/(2n) sum_i softplus(-ell(x_i)) + 1/(2n) sum_i softplus(ell(y_i)),
//   ell(z)     = theta^T T(z) - ln q(z),
//
// with x_i from the data batch and y_i from the noise batch. Every ratio
// q/(p+q) or p/(p+q) is a sigmoid of ell; raw densities are never formed.

struct NceEvaluation {
  double loss = 0.0;
  Vector grad;
  std::optional<Matrix> hessian;
};

/// Caches the sufficient statistics and ln q of both batches so repeated
/// evaluations (as in gradient descent) only cost two matrix-vector products.
class NceObjective {
 public:
  /// Requires a Data batch and a Noise batch of equal size and dimension.
  NceObjective(const dist::SampleBatch& data, const dist::SampleBatch& noise);

  int dim() const noexcept { return static_cast<int>(tx_.cols()) - 1; }
  Eigen::Index samples_per_side() const noexcept { return tx_.rows(); }

  double loss(const model::ThetaVector& theta) const;
  /// Loss and gradient in one pass over the data.
  double loss_and_grad(const Vector& theta, Vector& grad) const;
  Matrix hessian(const model::ThetaVector& theta) const;
  NceEvaluation evaluate(const model::ThetaVector& theta, bool with_hessian) const;

 private:
  void check_theta(const Vector& theta) const;

  Matrix tx_;
  Matrix ty_;
  Vector log_q_x_;
  Vector log_q_y_;
};

double empirical_loss(const model::ThetaVector& theta, const dist::SampleBatch& data,
                      const dist::SampleBatch& noise);
Vector empirical_grad(const model::ThetaVector& theta, const dist::SampleBatch& data,
                      const dist::SampleBatch& noise);
Matrix empirical_hessian(const model::ThetaVector& theta, const dist::SampleBatch& data,
                         const dist::SampleBatch& noise);

// ---------------------------------------------------------------------------
// Population Hessian at theta*
//
//   H = 1/2 int p* q / (p* + q) T T^T
//     = 1/2 E_{x~P*}[sigmoid(-ell(x)) T T^T]   (DataSide)
//     = 1/2 E_{y~Q }[sigmoid( ell(y)) T T^T]   (NoiseSide)

enum class HessianSide { DataSide, NoiseSide };

struct PopulationHessian {
  Matrix mean;
  /// Batch-means standard error of every entry.
  Matrix std_error;
  /// Per-split estimates; mean is their average.
  std::vector<Matrix> splits;
  long n_mc = 0;

  /// v^T H v with its batch-means standard error.
  std::pair<double, double> quadratic_form(const Vector& v) const;
};

inline constexpr int kBatchSplits = 10;

/// Monte-Carlo estimate of H with kBatchSplits batch means. n_mc >= 1000.
PopulationHessian mc_population_hessian_at_star(int d, long n_mc, numerics::RngStream& rng,
                                                HessianSide side = HessianSide::DataSide);

// ---------------------------------------------------------------------------
// Gradient descent

enum class InitKind { AtThetaStar, Perturbed, Custom };

struct GdInit {
  InitKind kind = InitKind::Perturbed;
  double perturb_scale = 0.1;
  std::optional<Vector> custom;
};

struct GdConfig {
  double step_size = 1e-2;
  int max_iters = 5000;
  double grad_tol = 1e-7;
  int max_halvings = 30;
  GdInit init;

  /// Throws ConfigError unless step_size, grad_tol > 0 and max_iters >= 0.
  void validate() const;
};

struct GdReport {
  Vector theta_hat;
  int iters_used = 0;
  double final_grad_norm = 0.0;
  bool converged = false;
  /// Loss after every accepted step, decimated to at most kMaxTracePoints.
  std::vector<double> loss_trace;
  /// Scale of the Gaussian perturbation applied at init (0 if none).
  double perturb_scale = 0.0;
};

inline constexpr std::size_t kMaxTracePoints = 200;

nlohmann::ordered_json to_json(const GdReport& report);

/// Objective callback: returns the loss at theta and writes the gradient.
using Objective = std::function<double(const Vector& theta, Vector& grad)>;

/// theta <- theta - h * grad, with h = step_size halved (up to max_halvings
/// times) whenever the loss would increase. Stops when |grad| <= grad_tol,
/// after max_iters accepted steps, or when no halving decreases the loss.
/// Throws OptimizationError if the loss is non-finite at theta0 or stays
/// non-finite for every trial step.
GdReport minimize(const GdConfig& cfg, Vector theta0, const Objective& objective);

/// Minimizes the empirical NCE loss. `rng` is only consumed by a Perturbed init.
GdReport gradient_descent(const GdConfig& cfg, const dist::SampleBatch& data,
                          const dist::SampleBatch& noise, numerics::RngStream& rng);

// ---------------------------------------------------------------------------
// Directional statistics along v (default: the all-ones vector)
//
//   A(x) = sigmoid(-ell(x)) v^T T(x),  x ~ P*
//   B(y) = sigmoid( ell(y)) v^T T(y),  y ~ Q

struct MomentBatch {
  double mean = 0.0;
  double mean_sq = 0.0;
  double var = 0.0;
};

struct DirectionalStats {
  double mean_A = 0.0;
  double var_A = 0.0;
  double mean_sq_A = 0.0;
  double mean_B = 0.0;
  double var_B = 0.0;
  double mean_sq_B = 0.0;
  long n_used = 0;
  /// Batch-means standard errors.
  double stderr_mean_sq_A = 0.0;
  double stderr_mean_sq_B = 0.0;
  /// Per-split moments, kBatchSplits entries each.
  std::vector<MomentBatch> batches_A;
  std::vector<MomentBatch> batches_B;
};

/// Monte-Carlo moments of A and B with n_mc >= 1000 draws per side.
DirectionalStats directional_stats(int d, long n_mc, numerics::RngStream& rng,
                                   const std::optional<Vector>& v = std::nullopt);

/// Mean and standard error (sd / sqrt(k)) of k batch values.
std::pair<double, double> batch_mean_stderr(const std::vector<double>& values);

}  // namespace nce_lab::nce
