// One PASS/FAIL line per acceptance criterion. Exit status is non-zero when
// any criterion fails.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <numbers>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "nce_lab/dist.hpp"
#include "nce_lab/harness.hpp"
#include "nce_lab/model.hpp"
#include "nce_lab/nce.hpp"
#include "nce_lab/numerics.hpp"
#include "nce_lab/theory.hpp"
#include "reference.hpp"

using namespace nce_lab;
using harness::ExperimentKind;
using theory::Direction;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  double time_limit_s;
  std::function<Verdict()> body;
};

double integrate_line(const std::function<double(double)>& f) {
  return numerics::integrate(f, -numerics::kInf, numerics::kInf, 1e-12).value;
}

Verdict rho_check() {
  const double rho = theory::bhattacharyya_rho();
  return {std::abs(rho - 0.9905) <= 5e-4, fmt::format("rho = {:.10f}, target 0.9905 +- 5e-4", rho)};
}

Verdict constants_check() {
  const auto s = dist::QuarticScalarDist::make();
  const double sigma_gamma = std::sqrt(4.0 * std::tgamma(1.25) / std::tgamma(0.75));
  const double var = integrate_line([&](double x) { return x * x * std::exp(s.log_pdf(x)); });
  double worst_moment = 0.0;
  for (int k : {1, 2, 4}) {
    const double quad = integrate_line([&](double x) { return std::pow(x, 4 * k) * std::exp(s.log_pdf(x)); });
    worst_moment = std::max(worst_moment, std::abs(s.moment_4k(k) - quad) / quad);
  }
  const double sigma_err = std::abs(s.sigma() - sigma_gamma);
  const bool pass = sigma_err <= 1e-8 && std::abs(var - 1.0) <= 1e-8 && worst_moment <= 1e-6;
  return {pass, fmt::format("sigma = {:.12f} (|err| {:.1e}), quadrature Var = {:.12f}, worst moment rel err {:.1e}",
                            s.sigma(), sigma_err, var, worst_moment)};
}

Verdict calculus_check() {
  numerics::RngStream rng(2, 0);
  double worst_g = 0.0;
  double worst_h = 0.0;
  double min_eig = numerics::kInf;
  int draws = 0;
  for (int d : {1, 3, 5}) {
    for (int k = 0; k < 20; ++k, ++draws) {
      const auto data = dist::ProductQuartic(d).sample(50, rng);
      const auto noise = dist::StandardGaussian(d).sample(50, rng);
      Vector t = model::theta_star(d).coords();
      for (Eigen::Index i = 0; i < t.size(); ++i) {
        t(i) += 0.05 * rng.normal();
      }
      const model::ThetaVector theta(t);
      const Vector g = nce::empirical_grad(theta, data, noise);
      const Matrix h = nce::empirical_hessian(theta, data, noise);
      Vector g_fd(t.size());
      Matrix h_fd(t.size(), t.size());
      for (Eigen::Index i = 0; i < t.size(); ++i) {
        Vector tp = t;
        Vector tm = t;
        tp(i) += 1e-6;
        tm(i) -= 1e-6;
        g_fd(i) = (nce::empirical_loss(model::ThetaVector(tp), data, noise) -
                   nce::empirical_loss(model::ThetaVector(tm), data, noise)) /
                  2e-6;
        tp = t;
        tm = t;
        tp(i) += 1e-5;
        tm(i) -= 1e-5;
        h_fd.col(i) = (nce::empirical_grad(model::ThetaVector(tp), data, noise) -
                       nce::empirical_grad(model::ThetaVector(tm), data, noise)) /
                      2e-5;
      }
      worst_g = std::max(worst_g, (g_fd - g).cwiseAbs().maxCoeff() / g.cwiseAbs().maxCoeff());
      worst_h = std::max(worst_h, (h_fd - h).cwiseAbs().maxCoeff() / h.cwiseAbs().maxCoeff());
      min_eig = std::min(min_eig, numerics::sym_eig_extremes(h).lambda_min);
    }
  }
  const bool pass = worst_g <= 1e-6 && worst_h <= 1e-5 && min_eig >= -1e-10;
  return {pass, fmt::format("{} draws, worst grad rel err {:.2e}, worst Hessian rel err {:.2e}, min eigenvalue {:.3e}",
                            draws, worst_g, worst_h, min_eig)};
}

// H = 1/2 int p q / (p + q) T T^T at d = 1, by quadrature.
Matrix quadrature_hessian_d1() {
  const auto s = dist::QuarticScalarDist::make();
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  auto weight = [&](double x) {
    const double lp = s.log_pdf(x);
    const double lq = -0.5 * x * x - half_log_2pi;
    // p q / (p + q) = p sigmoid(ln q - ln p)
    return 0.5 * std::exp(lp) * numerics::sigmoid(lq - lp);
  };
  Matrix h(2, 2);
  h(0, 0) = integrate_line([&](double x) { return weight(x) * std::pow(x, 8); });
  h(0, 1) = integrate_line([&](double x) { return weight(x) * std::pow(x, 4); });
  h(1, 1) = integrate_line(weight);
  h(1, 0) = h(0, 1);
  return h;
}

Verdict hessian_oracle_check() {
  const Matrix quad = quadrature_hessian_d1();
  const double frozen[2][2] = {{ref::kH11, ref::kH12}, {ref::kH12, ref::kH22}};
  numerics::RngStream rng(7, 0);
  const auto mc = nce::mc_population_hessian_at_star(1, 200000, rng);
  bool pass = true;
  double worst_z = 0.0;
  double worst_frozen = 0.0;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double z = std::abs(mc.mean(i, j) - quad(i, j)) / mc.std_error(i, j);
      worst_z = std::max(worst_z, z);
      worst_frozen = std::max(worst_frozen, std::abs(quad(i, j) - frozen[i][j]));
      pass = pass && z <= 3.0;
    }
  }
  pass = pass && worst_frozen <= 1e-8;
  return {pass, fmt::format("mc = 2e5, H11 {:.6f} vs {:.6f}, worst |MC - quad| / stderr = {:.2f} (limit 3), "
                            "quadrature vs frozen oracle {:.1e}",
                            mc.mean(0, 0), quad(0, 0), worst_z, worst_frozen)};
}

Verdict identity_check() {
  auto cfg = harness::default_config(ExperimentKind::Identity);
  cfg.dims = {1, 20};
  cfg.mc_budget = 100000;
  const auto rows = harness::run_identity_check(cfg);
  bool pass = true;
  std::string detail;
  for (const auto& r : rows) {
    pass = pass && r.pass;
    detail += fmt::format("d={}: |lhs - rhs| / se = {:.2f}; ", r.d, std::abs(r.lhs - r.rhs) / r.combined_stderr);
  }
  double worst_quad = 0.0;
  for (const Vector& v : {Vector(Vector::Ones(2)), Vector((Vector(2) << 0.0, 1.0).finished()),
                          Vector((Vector(2) << 1.0, 0.0).finished())}) {
    const auto [lhs, rhs] = harness::identity_by_quadrature(v);
    worst_quad = std::max(worst_quad, std::abs(lhs - rhs));
  }
  pass = pass && worst_quad <= 1e-6;
  return {pass, detail + fmt::format("quadrature gap at d=1 {:.1e}", worst_quad)};
}

Verdict variance_bound_check() {
  numerics::RngStream rng(15, 0);
  const auto s = nce::directional_stats(100, 100000, rng);
  auto var_se = [](const std::vector<nce::MomentBatch>& batches) {
    std::vector<double> v;
    for (const auto& b : batches) {
      v.push_back(b.var);
    }
    return nce::batch_mean_stderr(v).second;
  };
  const double slack_a = s.var_A - (s.mean_sq_A / 17.0 - 3.0 * var_se(s.batches_A));
  const double slack_b = s.var_B - (s.mean_sq_B / 17.0 - 3.0 * var_se(s.batches_B));
  return {slack_a >= 0.0 && slack_b >= 0.0,
          fmt::format("d = 100, mc = 1e5: Var A / E[A^2] = {:.4f}, Var B / E[B^2] = {:.4f} (need >= 1/17 = {:.4f})",
                      s.var_A / s.mean_sq_A, s.var_B / s.mean_sq_B, 1.0 / 17.0)};
}

Verdict anticonc_check() {
  const auto cfg = harness::default_config(ExperimentKind::Anticonc);
  const auto checks = harness::run_anticonc_experiment(cfg, 0.125);
  bool pass = true;
  std::string detail;
  for (const auto& c : checks) {
    pass = pass && c.pass;
    detail += fmt::format("{} d={}: below {:.4f} above {:.4f}{}; ", theory::to_string(c.direction),
                          c.thresholds.d, c.frac_below_L1, c.frac_above_L2, c.pass ? "" : " FAIL");
  }
  const double target = 0.5 - 0.125;
  detail += fmt::format("target {} - 3 se; ", target);
  const auto fwd = theory::kl_and_logratio_moments(Direction::DataVsNoise);
  const auto rev = theory::kl_and_logratio_moments(Direction::NoiseVsData);
  const double mu_err = std::max({std::abs(fwd.mu_r - theory::mu_closed_form(Direction::DataVsNoise)),
                                  std::abs(rev.mu_r - theory::mu_closed_form(Direction::NoiseVsData)),
                                  std::abs(fwd.mu_r - ref::kMuForward), std::abs(rev.mu_r - ref::kMuReversed)});
  pass = pass && mu_err <= 1e-6;
  detail += fmt::format("mu_r = {:.6f} / {:.6f}, quadrature vs closed form and oracle {:.1e}", fwd.mu_r, rev.mu_r,
                        mu_err);
  return {pass, detail};
}

std::string g_hessian_csv;
std::string g_mse_csv;
std::string g_summary_csv;

Verdict hessian_decay_check() {
  const auto cfg = harness::default_config(ExperimentKind::HessianDecay);
  const auto res = harness::run_hessian_decay(cfg);
  g_hessian_csv = harness::hessian_csv(res.records);
  bool bounded = true;
  std::string peak;
  double max_lambda = 0.0;
  for (const auto& r : res.records) {
    bounded = bounded && r.lambda_max <= std::exp(r.bound_log) + 3.0 * r.lambda_max_stderr;
    if (r.lambda_max > max_lambda) {
      max_lambda = r.lambda_max;
      peak = fmt::format("peak lambda_max {:.3f} at d={}", r.lambda_max, r.d);
    }
  }
  const bool pass = res.fit.slope < 0.0 && res.fit.r_squared >= 0.9 && bounded;
  return {pass, fmt::format("ln lambda_max vs d: slope = {:.5f}, r2 = {:.3f} (need slope < 0, r2 >= 0.9); "
                            "lambda_max {:.3f} at d={} to {:.3f} at d={}, {}; under bound: {}",
                            res.fit.slope, res.fit.r_squared, res.records.front().lambda_max, res.records.front().d,
                            res.records.back().lambda_max, res.records.back().d, peak, bounded ? "yes" : "no")};
}

Verdict mse_check() {
  const auto cfg = harness::default_config(ExperimentKind::Mse);
  const auto res = harness::run_mse_experiment(cfg);
  g_mse_csv = harness::mse_csv(res.records);
  g_summary_csv = harness::summary_csv(res.summary);
  const bool pass = res.fit.slope > 0.0 && res.fit.r_squared >= 0.8;
  return {pass, fmt::format("dims 70..120, n = 500, 20 trials: ln MSE vs d slope = {:.5f}, r2 = {:.3f} "
                            "(need slope > 0, r2 >= 0.8); MSE {:.4g} at d=70 to {:.4g} at d=120",
                            res.fit.slope, res.fit.r_squared, res.summary.front().mean, res.summary.back().mean)};
}

Verdict chi_square_check() {
  numerics::RngStream rng(24, 0);
  bool pass = true;
  int cells = 0;
  double worst_excess = -numerics::kInf;
  for (int d : {1, 2, 4, 10, 50, 100}) {
    for (double t : {0.1, 0.5, 1.0, 2.0, 4.0}) {
      const auto c = theory::chi_square_tail_check(d, t, 100000, rng);
      pass = pass && c.empirical <= c.bound + 3.0 * c.stderr_empirical;
      worst_excess = std::max(worst_excess, c.empirical - c.bound);
      ++cells;
    }
  }
  // Exact chi-square(4) survival at 4 + 2 sqrt(4) + 2 = 10: e^{-5} (1 + 5).
  const double exact = 6.0 * std::exp(-5.0);
  pass = pass && exact <= std::exp(-1.0) && std::abs(exact - ref::kChi2Df4Tail10) < 1e-12;
  return {pass, fmt::format("{} (d, t) cells, worst empirical - bound = {:.4f}; exact tail at (4, 1) = {:.5f} <= {:.5f}",
                            cells, worst_excess, exact, std::exp(-1.0))};
}

Verdict determinism_check() {
  const int threads = harness::worker_count() + 2;
  const auto h = harness::run_hessian_decay(harness::default_config(ExperimentKind::HessianDecay), threads);
  const auto m = harness::run_mse_experiment(harness::default_config(ExperimentKind::Mse), threads);
  const bool same_h = !g_hessian_csv.empty() && harness::hessian_csv(h.records) == g_hessian_csv;
  const bool same_m = !g_mse_csv.empty() && harness::mse_csv(m.records) == g_mse_csv &&
                      harness::summary_csv(m.summary) == g_summary_csv;
  return {same_h && same_m, fmt::format("rerun with {} workers: hessian.csv {}, mse.csv and summary.csv {}", threads,
                                        same_h ? "identical" : "differs", same_m ? "identical" : "differ")};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, 1.0, rho_check},
      {2, 1.0, constants_check},
      {3, 10.0, calculus_check},
      {4, 10.0, hessian_oracle_check},
      {5, 30.0, identity_check},
      {6, 30.0, variance_bound_check},
      {7, 60.0, anticonc_check},
      {8, 300.0, hessian_decay_check},
      {9, 900.0, mse_check},
      {10, 10.0, chi_square_check},
      {11, 1200.0, determinism_check},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.body();
    } catch (const std::exception& e) {
      v = {false, fmt::format("exception: {}", e.what())};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.time_limit_s;
    const bool pass = v.pass && in_time;
    failed += pass ? 0 : 1;
    std::cout << fmt::format("criterion {} {}: {} ({:.2f} s, limit {:.0f} s{})", c.id, pass ? "PASS" : "FAIL",
                             v.detail, secs, c.time_limit_s, in_time ? "" : ", over time")
              << std::endl;
  }
  std::cout << fmt::format("{} of {} criteria passed", criteria.size() - failed, criteria.size()) << std::endl;
  return failed == 0 ? 0 : 1;
}
