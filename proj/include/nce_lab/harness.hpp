#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "nce_lab/nce.hpp"
#include "nce_lab/theory.hpp"

namespace nce_lab::harness {

enum class ExperimentKind { Mse, HessianDecay, Anticonc, Identity };

const char* to_string(ExperimentKind kind);
ExperimentKind kind_from_string(const std::string& name);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Mse;
  std::vector<int> dims;
  long n_samples = 500;
  int trials = 20;
  std::uint64_t master_seed = 7;
  nce::GdConfig gd;
  long mc_budget = 200000;

  /// Throws ConfigError: dims non-empty, positive and strictly increasing,
  /// trials >= 1, n_samples >= 2, mc_budget >= 1000, valid gd.
  void validate() const;
};

/// Defaults for each experiment kind (desk-scale grids).
ExperimentConfig default_config(ExperimentKind kind);

/// Parses {kind, dims, n_samples, trials, master_seed, gd: {step_size,
/// max_iters, grad_tol, init, perturb_scale}, mc_budget}. Missing keys take
/// the kind's defaults; unknown keys are rejected with ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const ExperimentConfig& cfg);

/// Applies a dotted `key=value` override (e.g. `gd.step_size=0.005`) to a
/// config JSON. The value is parsed as JSON when possible, else taken as a
/// string. Throws ConfigError for malformed overrides or undeclared keys.
void apply_override(nlohmann::json& config, const std::string& override_text);

/// Stateless SplitMix-style mix of (master, d, trial). Injective in (d, trial)
/// for a fixed master.
std::uint64_t derive_seed(std::uint64_t master, int d, int trial);

/// Worker count: NCE_LAB_THREADS if set and positive, else hardware concurrency.
int worker_count();

// ---------------------------------------------------------------------------
// Fits

struct FitReport {
  double slope = 0.0;
  double intercept = 0.0;
  /// 1 - SS_res / SS_tot; defined as 1 when SS_tot = 0.
  double r_squared = 0.0;
  int n_points = 0;
};

/// Ordinary least squares. Needs >= 3 points with x not all equal.
FitReport linear_fit(const std::vector<std::pair<double, double>>& points);

nlohmann::ordered_json to_json(const FitReport& fit);

// ---------------------------------------------------------------------------
// MSE versus dimension

struct TrialRecord {
  int d = 0;
  int trial = 0;
  std::uint64_t seed_used = 0;
  double sq_error = 0.0;
  int iters = 0;
  double final_grad_norm = 0.0;
  bool converged = false;
};

struct SummaryRow {
  int d = 0;
  double mean = 0.0;
  double stderr_mean = 0.0;
};

struct MseResult {
  /// Sorted by (d, trial).
  std::vector<TrialRecord> records;
  /// theta_hat of each record, same order.
  std::vector<Vector> theta_hats;
  std::vector<SummaryRow> summary;
  FitReport fit;
};

MseResult run_mse_experiment(const ExperimentConfig& cfg, int threads = 0);

/// mean ||theta_hat - theta*||^2 = trace(Cov) + ||mean(theta_hat) - theta*||^2,
/// with the 1/T covariance of the T estimates.
struct MseDecomposition {
  double mean_sq_error = 0.0;
  double trace_cov = 0.0;
  double bias_sq = 0.0;
  /// Expected bias_sq under zero bias: trace of the unbiased covariance / T.
  double bias_sq_null = 0.0;
};

MseDecomposition mse_decomposition(const std::vector<Vector>& theta_hats, const Vector& theta_star);

// ---------------------------------------------------------------------------
// Hessian spectrum versus dimension

struct SpectrumRecord {
  int d = 0;
  long mc_samples = 0;
  double lambda_max = 0.0;
  double lambda_min = 0.0;
  double lambda_max_stderr = 0.0;
  double bound_log = 0.0;
};

struct HessianDecayResult {
  std::vector<SpectrumRecord> records;
  /// OLS of ln lambda_max against d.
  FitReport fit;
};

HessianDecayResult run_hessian_decay(const ExperimentConfig& cfg, int threads = 0);

// ---------------------------------------------------------------------------
// E[A^2] + E[B^2] = 2 v^T H v

struct IdentityRow {
  int d = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  double combined_stderr = 0.0;
  bool pass = false;
};

/// Monte-Carlo on both sides from independent streams; pass when
/// |lhs - rhs| <= 3 combined_stderr.
std::vector<IdentityRow> run_identity_check(const ExperimentConfig& cfg, int threads = 0);

/// Both sides at d = 1 by quadrature, along a direction v of length 2.
std::pair<double, double> identity_by_quadrature(const Vector& v);

// ---------------------------------------------------------------------------
// Anti-concentration

inline constexpr double kDefaultEpsilon = 0.125;

/// Both ratio directions for every d, ordered by (d, direction).
std::vector<theory::AnticoncCheck> run_anticonc_experiment(const ExperimentConfig& cfg,
                                                           double epsilon = kDefaultEpsilon,
                                                           int threads = 0);

// ---------------------------------------------------------------------------
// Result files. Numbers use the shortest round-trip representation, so equal
// inputs give byte-identical text.

std::string mse_csv(const std::vector<TrialRecord>& records);
std::string summary_csv(const std::vector<SummaryRow>& rows);
std::string hessian_csv(const std::vector<SpectrumRecord>& records);
std::string identity_csv(const std::vector<IdentityRow>& rows);
/// `d,epsilon,L1,L2,frac_below_L1,frac_above_L2,be_band` for one direction.
std::string anticonc_csv(const std::vector<theory::AnticoncCheck>& checks,
                         theory::Direction direction);
std::string fit_json(const FitReport& fit);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace nce_lab::harness
