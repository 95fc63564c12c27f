#include "nce_lab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "nce_lab/dist.hpp"
#include "nce_lab/errors.hpp"
#include "nce_lab/model.hpp"

namespace nce_lab::harness {

namespace {

// Runs task(i) for i in [0, n) on up to `threads` workers. The first
// exception thrown by any task is rethrown after all workers join.
template <class Task>
void parallel_for(std::size_t n, int threads, Task task) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      task(i);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) {
            failure = std::current_exception();
          }
        }
      }
    });
  }
  for (auto& t : pool) {
    t.join();
  }
  if (failure) {
    std::rethrow_exception(failure);
  }
}

int resolve_threads(int threads) { return threads > 0 ? threads : worker_count(); }

std::string num(double v) { return fmt::format("{}", v); }

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

const char* to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Mse:
      return "mse";
    case ExperimentKind::HessianDecay:
      return "hessian";
    case ExperimentKind::Anticonc:
      return "anticonc";
    case ExperimentKind::Identity:
      return "identity";
  }
  return "?";
}

ExperimentKind kind_from_string(const std::string& name) {
  for (auto kind : {ExperimentKind::Mse, ExperimentKind::HessianDecay, ExperimentKind::Anticonc,
                    ExperimentKind::Identity}) {
    if (name == to_string(kind)) {
      return kind;
    }
  }
  throw ConfigError(fmt::format("unknown experiment kind '{}'", name));
}

void ExperimentConfig::validate() const {
  if (dims.empty()) {
    throw ConfigError("dims must not be empty");
  }
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (dims[i] < 1) {
      throw ConfigError(fmt::format("dims must be positive, got {}", dims[i]));
    }
    if (i > 0 && dims[i] <= dims[i - 1]) {
      throw ConfigError("dims must be strictly increasing");
    }
  }
  if (trials < 1) {
    throw ConfigError(fmt::format("trials must be >= 1, got {}", trials));
  }
  if (n_samples < 2) {
    throw ConfigError(fmt::format("n_samples must be >= 2, got {}", n_samples));
  }
  if (mc_budget < 1000) {
    throw ConfigError(fmt::format("mc_budget must be >= 1000, got {}", mc_budget));
  }
  gd.validate();
}

ExperimentConfig default_config(ExperimentKind kind) {
  ExperimentConfig cfg;
  cfg.kind = kind;
  switch (kind) {
    case ExperimentKind::Mse:
      cfg.dims = {70, 80, 90, 100, 110, 120};
      break;
    case ExperimentKind::HessianDecay:
      cfg.dims = {10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
      cfg.mc_budget = 200000;
      break;
    case ExperimentKind::Anticonc:
      cfg.dims = {50, 100, 200};
      cfg.mc_budget = 100000;
      break;
    case ExperimentKind::Identity:
      cfg.dims = {1, 20};
      cfg.mc_budget = 100000;
      break;
  }
  return cfg;
}

nlohmann::ordered_json to_json(const ExperimentConfig& cfg) {
  nlohmann::ordered_json gd;
  gd["step_size"] = cfg.gd.step_size;
  gd["max_iters"] = cfg.gd.max_iters;
  gd["grad_tol"] = cfg.gd.grad_tol;
  gd["init"] = cfg.gd.init.kind == nce::InitKind::AtThetaStar ? "at_theta_star" : "perturbed";
  gd["perturb_scale"] = cfg.gd.init.perturb_scale;

  nlohmann::ordered_json j;
  j["kind"] = to_string(cfg.kind);
  j["dims"] = cfg.dims;
  j["n_samples"] = cfg.n_samples;
  j["trials"] = cfg.trials;
  j["master_seed"] = cfg.master_seed;
  j["gd"] = gd;
  j["mc_budget"] = cfg.mc_budget;
  return j;
}

namespace {

template <class T>
T get_typed(const nlohmann::json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(fmt::format("config key '{}' has the wrong type", key));
  }
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
  for (const auto& item : j.items()) {
    if (!allowed.contains(item.key())) {
      throw ConfigError(fmt::format("unknown config key '{}{}'", where, item.key()));
    }
  }
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) {
    throw ConfigError("config must be a JSON object");
  }
  reject_unknown(j, {"kind", "dims", "n_samples", "trials", "master_seed", "gd", "mc_budget"}, "");
  if (!j.contains("kind")) {
    throw ConfigError("config is missing 'kind'");
  }
  ExperimentConfig cfg = default_config(kind_from_string(get_typed<std::string>(j["kind"], "kind")));
  if (j.contains("dims")) {
    cfg.dims = get_typed<std::vector<int>>(j["dims"], "dims");
  }
  if (j.contains("n_samples")) {
    cfg.n_samples = get_typed<long>(j["n_samples"], "n_samples");
  }
  if (j.contains("trials")) {
    cfg.trials = get_typed<int>(j["trials"], "trials");
  }
  if (j.contains("master_seed")) {
    cfg.master_seed = get_typed<std::uint64_t>(j["master_seed"], "master_seed");
  }
  if (j.contains("mc_budget")) {
    cfg.mc_budget = get_typed<long>(j["mc_budget"], "mc_budget");
  }
  if (j.contains("gd")) {
    const auto& gd = j["gd"];
    if (!gd.is_object()) {
      throw ConfigError("config key 'gd' must be an object");
    }
    reject_unknown(gd, {"step_size", "max_iters", "grad_tol", "init", "perturb_scale"}, "gd.");
    if (gd.contains("step_size")) {
      cfg.gd.step_size = get_typed<double>(gd["step_size"], "gd.step_size");
    }
    if (gd.contains("max_iters")) {
      cfg.gd.max_iters = get_typed<int>(gd["max_iters"], "gd.max_iters");
    }
    if (gd.contains("grad_tol")) {
      cfg.gd.grad_tol = get_typed<double>(gd["grad_tol"], "gd.grad_tol");
    }
    if (gd.contains("perturb_scale")) {
      cfg.gd.init.perturb_scale = get_typed<double>(gd["perturb_scale"], "gd.perturb_scale");
    }
    if (gd.contains("init")) {
      const auto init = get_typed<std::string>(gd["init"], "gd.init");
      if (init == "perturbed") {
        cfg.gd.init.kind = nce::InitKind::Perturbed;
      } else if (init == "at_theta_star") {
        cfg.gd.init.kind = nce::InitKind::AtThetaStar;
      } else {
        throw ConfigError(fmt::format("gd.init must be 'perturbed' or 'at_theta_star', got '{}'", init));
      }
    }
  }
  cfg.validate();
  return cfg;
}

void apply_override(nlohmann::json& config, const std::string& override_text) {
  const auto eq = override_text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError(fmt::format("override '{}' is not of the form key=value", override_text));
  }
  const std::string key = override_text.substr(0, eq);
  const std::string raw = override_text.substr(eq + 1);

  nlohmann::json* node = &config;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) {
      throw ConfigError(fmt::format("override touches undeclared config key '{}'", key));
    }
    node = &(*node)[part];
    if (dot == std::string::npos) {
      break;
    }
    start = dot + 1;
  }

  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) {
    value = raw;
  }
  *node = value;
}

std::uint64_t derive_seed(std::uint64_t master, int d, int trial) {
  const std::uint64_t cell =
      (static_cast<std::uint64_t>(static_cast<std::uint32_t>(d)) << 32) |
      static_cast<std::uint32_t>(trial);
  return numerics::mix64(master ^ numerics::mix64(cell));
}

int worker_count() {
  if (const char* env = std::getenv("NCE_LAB_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) {
      return n;
    }
  }
  return static_cast<int>(std::max(1U, std::thread::hardware_concurrency()));
}

// ---------------------------------------------------------------------------
// Fits

FitReport linear_fit(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3) {
    throw DomainError(fmt::format("linear_fit: need at least 3 points, got {}", points.size()));
  }
  const auto n = static_cast<double>(points.size());
  double mx = 0.0;
  double my = 0.0;
  for (const auto& [x, y] : points) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (const auto& [x, y] : points) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
  }
  if (!(sxx > 0.0)) {
    throw DomainError("linear_fit: x values are all equal");
  }
  FitReport fit;
  fit.n_points = static_cast<int>(points.size());
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (syy == 0.0) {
    fit.r_squared = 1.0;  // constant data: the fit is exact
  } else {
    double ss_res = 0.0;
    for (const auto& [x, y] : points) {
      const double r = y - (fit.intercept + fit.slope * x);
      ss_res += r * r;
    }
    fit.r_squared = std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
  }
  return fit;
}

nlohmann::ordered_json to_json(const FitReport& fit) {
  nlohmann::ordered_json j;
  j["slope"] = fit.slope;
  j["intercept"] = fit.intercept;
  j["r_squared"] = fit.r_squared;
  j["n_points"] = fit.n_points;
  return j;
}

// ---------------------------------------------------------------------------
// MSE

MseResult run_mse_experiment(const ExperimentConfig& cfg, int threads) {
  if (cfg.kind != ExperimentKind::Mse) {
    throw ConfigError("run_mse_experiment needs kind = mse");
  }
  cfg.validate();

  struct Cell {
    int d;
    int trial;
  };
  std::vector<Cell> cells;
  for (int d : cfg.dims) {
    for (int t = 0; t < cfg.trials; ++t) {
      cells.push_back({d, t});
    }
  }

  MseResult result;
  result.records.resize(cells.size());
  result.theta_hats.resize(cells.size());
  parallel_for(cells.size(), resolve_threads(threads), [&](std::size_t i) {
    const auto [d, trial] = cells[i];
    const std::uint64_t seed = derive_seed(cfg.master_seed, d, trial);
    numerics::RngStream data_rng(seed, 0);
    numerics::RngStream noise_rng(seed, 1);
    numerics::RngStream init_rng(seed, 2);
    const dist::SampleBatch data = dist::ProductQuartic(d).sample(cfg.n_samples, data_rng);
    const dist::SampleBatch noise = dist::StandardGaussian(d).sample(cfg.n_samples, noise_rng);
    const Vector star = model::theta_star(d).coords();

    TrialRecord rec;
    rec.d = d;
    rec.trial = trial;
    rec.seed_used = seed;
    Vector theta_hat;
    try {
      const nce::GdReport report = nce::gradient_descent(cfg.gd, data, noise, init_rng);
      theta_hat = report.theta_hat;
      rec.iters = report.iters_used;
      rec.final_grad_norm = report.final_grad_norm;
      rec.converged = report.converged;
    } catch (const OptimizationError& e) {
      const auto& last = e.last_theta();
      theta_hat = last.empty() ? star : Eigen::Map<const Vector>(last.data(), static_cast<Eigen::Index>(last.size()));
      rec.iters = static_cast<int>(e.trace().size()) - 1;
      rec.final_grad_norm = std::numeric_limits<double>::quiet_NaN();
      rec.converged = false;
    }
    rec.sq_error = (theta_hat - star).squaredNorm();
    result.records[i] = rec;
    result.theta_hats[i] = std::move(theta_hat);
  });

  // cells were generated in (d, trial) order, so records already are too.
  std::vector<std::pair<double, double>> fit_points;
  for (int d : cfg.dims) {
    std::vector<double> errs;
    for (const auto& r : result.records) {
      if (r.d == d) {
        errs.push_back(r.sq_error);
      }
    }
    const double mean = std::accumulate(errs.begin(), errs.end(), 0.0) / static_cast<double>(errs.size());
    double ss = 0.0;
    for (double e : errs) {
      ss += (e - mean) * (e - mean);
    }
    const double k = static_cast<double>(errs.size());
    const double se = errs.size() > 1 ? std::sqrt(ss / (k - 1.0) / k) : 0.0;
    result.summary.push_back({d, mean, se});
    fit_points.emplace_back(d, std::log(mean));
  }
  if (fit_points.size() >= 3) {
    result.fit = linear_fit(fit_points);
  } else {
    result.fit.n_points = static_cast<int>(fit_points.size());
  }
  return result;
}

MseDecomposition mse_decomposition(const std::vector<Vector>& theta_hats, const Vector& theta_star) {
  if (theta_hats.size() < 2) {
    throw DomainError("mse_decomposition: need at least two estimates");
  }
  const auto t = static_cast<double>(theta_hats.size());
  Vector mean = Vector::Zero(theta_star.size());
  MseDecomposition out;
  for (const Vector& th : theta_hats) {
    mean += th;
    out.mean_sq_error += (th - theta_star).squaredNorm();
  }
  mean /= t;
  out.mean_sq_error /= t;
  for (const Vector& th : theta_hats) {
    out.trace_cov += (th - mean).squaredNorm();
  }
  out.trace_cov /= t;
  out.bias_sq = (mean - theta_star).squaredNorm();
  out.bias_sq_null = out.trace_cov * t / (t - 1.0) / t;
  return out;
}

// ---------------------------------------------------------------------------
// Hessian decay

HessianDecayResult run_hessian_decay(const ExperimentConfig& cfg, int threads) {
  if (cfg.kind != ExperimentKind::HessianDecay) {
    throw ConfigError("run_hessian_decay needs kind = hessian");
  }
  cfg.validate();
  HessianDecayResult result;
  result.records.resize(cfg.dims.size());
  parallel_for(cfg.dims.size(), resolve_threads(threads), [&](std::size_t i) {
    const int d = cfg.dims[i];
    numerics::RngStream rng(derive_seed(cfg.master_seed, d, 0), 0);
    const nce::PopulationHessian h = nce::mc_population_hessian_at_star(d, cfg.mc_budget, rng);
    const numerics::EigExtremes ev = numerics::sym_eig_extremes(h.mean);
    std::vector<double> split_max;
    for (const Matrix& s : h.splits) {
      split_max.push_back(numerics::sym_eig_extremes(s).lambda_max);
    }
    SpectrumRecord rec;
    rec.d = d;
    rec.mc_samples = cfg.mc_budget;
    rec.lambda_max = ev.lambda_max;
    rec.lambda_min = ev.lambda_min;
    rec.lambda_max_stderr = nce::batch_mean_stderr(split_max).second;
    rec.bound_log = theory::hessian_norm_bound(d).log_bound;
    result.records[i] = rec;
  });
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : result.records) {
    pts.emplace_back(r.d, std::log(r.lambda_max));
  }
  if (pts.size() >= 3) {
    result.fit = linear_fit(pts);
  } else {
    result.fit.n_points = static_cast<int>(pts.size());
  }
  return result;
}

// ---------------------------------------------------------------------------
// Identity

std::vector<IdentityRow> run_identity_check(const ExperimentConfig& cfg, int threads) {
  if (cfg.kind != ExperimentKind::Identity) {
    throw ConfigError("run_identity_check needs kind = identity");
  }
  cfg.validate();
  std::vector<IdentityRow> rows(cfg.dims.size());
  parallel_for(cfg.dims.size(), resolve_threads(threads), [&](std::size_t i) {
    const int d = cfg.dims[i];
    const std::uint64_t seed = derive_seed(cfg.master_seed, d, 0);
    numerics::RngStream stats_rng(seed, 0);
    numerics::RngStream hess_rng(seed, 1);
    const nce::DirectionalStats s = nce::directional_stats(d, cfg.mc_budget, stats_rng);
    const nce::PopulationHessian h = nce::mc_population_hessian_at_star(d, cfg.mc_budget, hess_rng);
    const auto [vhv, vhv_se] = h.quadratic_form(Vector::Ones(d + 1));

    IdentityRow row;
    row.d = d;
    row.lhs = s.mean_sq_A + s.mean_sq_B;
    row.rhs = 2.0 * vhv;
    const double lhs_se = std::hypot(s.stderr_mean_sq_A, s.stderr_mean_sq_B);
    row.combined_stderr = std::hypot(lhs_se, 2.0 * vhv_se);
    row.pass = std::abs(row.lhs - row.rhs) <= 3.0 * row.combined_stderr;
    rows[i] = row;
  });
  return rows;
}

std::pair<double, double> identity_by_quadrature(const Vector& v) {
  if (v.size() != 2) {
    throw ShapeError(fmt::format("identity_by_quadrature: v must have length 2, got {}", v.size()));
  }
  const auto s = dist::QuarticScalarDist::make();
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  auto proj = [&](double x) {
    const double x2 = x * x;
    return v(0) * x2 * x2 + v(1);
  };
  auto log_q = [&](double x) { return -0.5 * x * x - half_log_2pi; };
  constexpr double tol = 1e-13;
  const double ea2 = numerics::integrate(
                         [&](double x) {
                           const double w = numerics::sigmoid(-dist::log_density_ratio_1d(s, x));
                           const double a = w * proj(x);
                           return a * a * std::exp(s.log_pdf(x));
                         },
                         -numerics::kInf, numerics::kInf, tol)
                         .value;
  const double eb2 = numerics::integrate(
                         [&](double x) {
                           const double w = numerics::sigmoid(dist::log_density_ratio_1d(s, x));
                           const double b = w * proj(x);
                           return b * b * std::exp(log_q(x));
                         },
                         -numerics::kInf, numerics::kInf, tol)
                         .value;
  // 2 v^T H v = int p q / (p + q) (v^T T)^2 = int p sigmoid(-ell) (v^T T)^2.
  const double two_vhv = numerics::integrate(
                             [&](double x) {
                               const double w = numerics::sigmoid(-dist::log_density_ratio_1d(s, x));
                               const double pr = proj(x);
                               return w * pr * pr * std::exp(s.log_pdf(x));
                             },
                             -numerics::kInf, numerics::kInf, tol)
                             .value;
  return {ea2 + eb2, two_vhv};
}

// ---------------------------------------------------------------------------
// Anti-concentration

std::vector<theory::AnticoncCheck> run_anticonc_experiment(const ExperimentConfig& cfg,
                                                           double epsilon, int threads) {
  if (cfg.kind != ExperimentKind::Anticonc) {
    throw ConfigError("run_anticonc_experiment needs kind = anticonc");
  }
  cfg.validate();
  const std::size_t n = cfg.dims.size();
  std::vector<theory::AnticoncCheck> checks(2 * n);
  parallel_for(2 * n, resolve_threads(threads), [&](std::size_t i) {
    const int d = cfg.dims[i / 2];
    const bool forward = i % 2 == 0;
    numerics::RngStream rng(derive_seed(cfg.master_seed, d, 0), forward ? 0 : 1);
    checks[i] = theory::verify_anticonc(
        d, epsilon, cfg.mc_budget,
        forward ? theory::Direction::DataVsNoise : theory::Direction::NoiseVsData, rng);
  });
  return checks;
}

// ---------------------------------------------------------------------------
// Result files

std::string mse_csv(const std::vector<TrialRecord>& records) {
  std::string out = "d,trial,seed,sq_error,iters,final_grad_norm,converged\n";
  for (const auto& r : records) {
    out += fmt::format("{},{},{},{},{},{},{}\n", r.d, r.trial, r.seed_used, num(r.sq_error), r.iters,
                       num(r.final_grad_norm), r.converged ? "true" : "false");
  }
  return out;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out = "d,mean,stderr\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{}\n", r.d, num(r.mean), num(r.stderr_mean));
  }
  return out;
}

std::string hessian_csv(const std::vector<SpectrumRecord>& records) {
  std::string out = "d,mc_samples,lambda_max,lambda_min,lambda_max_stderr,bound_log\n";
  for (const auto& r : records) {
    out += fmt::format("{},{},{},{},{},{}\n", r.d, r.mc_samples, num(r.lambda_max), num(r.lambda_min),
                       num(r.lambda_max_stderr), num(r.bound_log));
  }
  return out;
}

std::string identity_csv(const std::vector<IdentityRow>& rows) {
  std::string out = "d,lhs,rhs,combined_stderr,pass\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{}\n", r.d, num(r.lhs), num(r.rhs), num(r.combined_stderr),
                       r.pass ? "true" : "false");
  }
  return out;
}

std::string anticonc_csv(const std::vector<theory::AnticoncCheck>& checks,
                         theory::Direction direction) {
  std::string out = "d,epsilon,L1,L2,frac_below_L1,frac_above_L2,be_band\n";
  for (const auto& c : checks) {
    if (c.direction != direction) {
      continue;
    }
    const auto& t = c.thresholds;
    out += fmt::format("{},{},{},{},{},{},{}\n", t.d, num(t.epsilon), num(t.L1), num(t.L2),
                       num(c.frac_below_L1), num(c.frac_above_L2), num(t.be_band));
  }
  return out;
}

std::string fit_json(const FitReport& fit) { return to_json(fit).dump(2) + "\n"; }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw ConfigError(fmt::format("cannot open {} for writing", path.string()));
  }
  out << text;
  if (!out) {
    throw ConfigError(fmt::format("failed writing {}", path.string()));
  }
}

}  // namespace nce_lab::harness
