#include "nce_lab/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <fmt/format.h>

#include "nce_lab/dist.hpp"
#include "nce_lab/errors.hpp"
#include "nce_lab/model.hpp"

namespace nce_lab::theory {

using numerics::integrate;
using numerics::kInf;

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

const dist::QuarticScalarDist& quartic() {
  static const dist::QuarticScalarDist s = dist::QuarticScalarDist::make();
  return s;
}

double log_normal_pdf(double x) { return -0.5 * x * x - kHalfLog2Pi; }

double integrate_real_line(const std::function<double(double)>& f) {
  return integrate(f, -kInf, kInf, kQuadTol).value;
}

}  // namespace

double bhattacharyya(const std::function<double(double)>& log_p,
                     const std::function<double(double)>& log_q) {
  return integrate_real_line([&](double x) { return std::exp(0.5 * (log_p(x) + log_q(x))); });
}

double bhattacharyya_rho() {
  static const double rho = bhattacharyya([](double x) { return quartic().log_pdf(x); },
                                          log_normal_pdf);
  return rho;
}

DistanceReport tv_hellinger_report(int d) {
  if (d < 1) {
    throw DomainError(fmt::format("tv_hellinger_report: dimension must be >= 1, got {}", d));
  }
  DistanceReport r;
  r.d = d;
  r.rho = bhattacharyya_rho();
  const double one_minus_rho_d = -std::expm1(static_cast<double>(d) * std::log(r.rho));
  r.tv_lower_bound_d = one_minus_rho_d;
  r.hellinger_sq_d = 2.0 * one_minus_rho_d;
  return r;
}

// ---------------------------------------------------------------------------

const char* to_string(Direction direction) {
  return direction == Direction::DataVsNoise ? "data_vs_noise" : "noise_vs_data";
}

LogRatioMoments kl_and_logratio_moments(Direction direction) {
  const auto& s = quartic();
  const bool data_side = direction == Direction::DataVsNoise;
  // ln(p/q) per coordinate; the sampled variable is its negation under p.
  auto y = [&](double x) {
    const double ell = dist::log_density_ratio_1d(s, x);
    return data_side ? -ell : ell;
  };
  auto log_base = [&](double x) { return data_side ? s.log_pdf(x) : log_normal_pdf(x); };

  LogRatioMoments m;
  m.mu_r = integrate_real_line([&](double x) { return y(x) * std::exp(log_base(x)); });
  const double var = integrate_real_line([&](double x) {
    const double c = y(x) - m.mu_r;
    return c * c * std::exp(log_base(x));
  });
  m.sigma_r = std::sqrt(var);
  m.gamma_r = integrate_real_line([&](double x) {
    const double c = std::abs(y(x) - m.mu_r);
    return c * c * c * std::exp(log_base(x));
  });
  return m;
}

double mu_closed_form(Direction direction) {
  const auto& s = quartic();
  if (direction == Direction::DataVsNoise) {
    // E_p[x^4]/sigma^4 = 1/4 and E_p[x^2] = 1.
    return -(-0.25 - s.log_norm() + 0.5 + kHalfLog2Pi);
  }
  // E_q[x^4] = 3 and E_q[x^2] = 1.
  return -(-0.5 - kHalfLog2Pi + 3.0 * s.inv_sigma4() + s.log_norm());
}

AnticoncThresholds anticonc_thresholds(int d, double epsilon, Direction direction, double c_be) {
  if (!(epsilon > 0.0 && epsilon <= 0.125)) {
    throw DomainError(fmt::format("anticonc_thresholds: epsilon must be in (0, 1/8], got {}", epsilon));
  }
  if (d < 1) {
    throw DomainError(fmt::format("anticonc_thresholds: dimension must be >= 1, got {}", d));
  }
  static const LogRatioMoments forward = kl_and_logratio_moments(Direction::DataVsNoise);
  static const LogRatioMoments reversed = kl_and_logratio_moments(Direction::NoiseVsData);
  const LogRatioMoments& m = direction == Direction::DataVsNoise ? forward : reversed;

  AnticoncThresholds t;
  t.d = d;
  t.epsilon = epsilon;
  t.c = numerics::normal_quantile(0.5 + 0.5 * epsilon);
  t.alpha = t.c * m.sigma_r;
  t.mu = m.mu_r;
  const double sqrt_d = std::sqrt(static_cast<double>(d));
  t.L1 = t.mu * d - t.alpha * sqrt_d;
  t.L2 = t.mu * d + t.alpha * sqrt_d;
  const double ratio = c_be * m.gamma_r / (m.sigma_r * m.sigma_r * m.sigma_r);
  t.be_band = ratio / sqrt_d;
  const double root = 2.0 * ratio / epsilon;
  t.min_d_for_band = static_cast<long>(std::ceil(root * root));
  return t;
}

AnticoncCheck verify_anticonc(int d, double epsilon, long n_mc, Direction direction,
                              numerics::RngStream& rng, double c_be) {
  if (n_mc < 10000) {
    throw DomainError(fmt::format("verify_anticonc: n_mc must be >= 10000, got {}", n_mc));
  }
  AnticoncCheck out;
  out.direction = direction;
  out.thresholds = anticonc_thresholds(d, epsilon, direction, c_be);
  out.n_mc = n_mc;

  static const LogRatioMoments forward = kl_and_logratio_moments(Direction::DataVsNoise);
  static const LogRatioMoments reversed = kl_and_logratio_moments(Direction::NoiseVsData);
  const LogRatioMoments& m = direction == Direction::DataVsNoise ? forward : reversed;

  const dist::ProductQuartic pstar(d);
  const dist::StandardGaussian q(d);
  const bool data_side = direction == Direction::DataVsNoise;
  const double center = m.mu_r * d;

  long below = 0;
  long above = 0;
  long below_center = 0;
  constexpr long kChunk = 10000;
  for (long done = 0; done < n_mc; done += kChunk) {
    const long m_rows = std::min(kChunk, n_mc - done);
    const dist::SampleBatch batch = data_side ? pstar.sample(m_rows, rng) : q.sample(m_rows, rng);
    const Vector ell = dist::log_density_ratio_rows(pstar.scalar(), batch.points);
    for (Eigen::Index i = 0; i < ell.size(); ++i) {
      const double log_r = data_side ? -ell(i) : ell(i);
      below += log_r <= out.thresholds.L1;
      above += log_r >= out.thresholds.L2;
      below_center += log_r <= center;
    }
  }
  const auto n = static_cast<double>(n_mc);
  out.frac_below_L1 = below / n;
  out.frac_above_L2 = above / n;
  out.standardized_cdf_at_zero = below_center / n;
  out.stderr_below = std::sqrt(out.frac_below_L1 * (1.0 - out.frac_below_L1) / n);
  out.stderr_above = std::sqrt(out.frac_above_L2 * (1.0 - out.frac_above_L2) / n);
  const double target = 0.5 - epsilon;
  out.pass = out.frac_below_L1 >= target - 3.0 * out.stderr_below &&
             out.frac_above_L2 >= target - 3.0 * out.stderr_above;
  return out;
}

// ---------------------------------------------------------------------------

namespace {

double fisher_exact(int d) {
  const auto& s = quartic();
  const double m4 = s.moment_4k(1);
  const double m8 = s.moment_4k(2);
  const double m16 = s.moment_4k(4);
  const double dd = d;
  return dd * m16 + dd * (dd - 1.0) * m8 * m8 + 2.0 * dd * m4 + 1.0;
}

struct FisherSup {
  double m_const;
  int witness;
};

const FisherSup& fisher_sup() {
  static const FisherSup sup = [] {
    double best = 0.0;
    int witness = 1;
    for (int d = 1; d <= 10000; ++d) {
      const double ratio = fisher_exact(d) / (static_cast<double>(d) * d);
      if (ratio > best) {
        best = ratio;
        witness = d;
      }
    }
    return FisherSup{std::exp2(std::ceil(std::log2(best))), witness};
  }();
  return sup;
}

}  // namespace

double fisher_m_const() { return fisher_sup().m_const; }
int fisher_sup_witness() { return fisher_sup().witness; }

FisherBoundReport fisher_frobenius(int d) {
  if (d < 1) {
    throw DomainError(fmt::format("fisher_frobenius: dimension must be >= 1, got {}", d));
  }
  FisherBoundReport r;
  r.d = d;
  r.exact_value = fisher_exact(d);
  r.M_const = fisher_m_const();
  r.bound = static_cast<double>(d) * d * r.M_const;
  return r;
}

HessianBound hessian_norm_bound(int d) {
  const FisherBoundReport f = fisher_frobenius(d);
  const double half_d_log_rho = 0.5 * d * std::log(bhattacharyya_rho());
  HessianBound b;
  b.log_bound = std::log(0.5) + half_d_log_rho + 0.5 * std::log(f.exact_value);
  b.log_loose_bound =
      std::log(0.5) + half_d_log_rho + std::log(static_cast<double>(d)) + 0.5 * std::log(f.M_const);
  return b;
}

// ---------------------------------------------------------------------------

TUp t_up_estimate(int d, double quantile, long n_mc, numerics::RngStream& rng) {
  if (n_mc < 10000) {
    throw DomainError(fmt::format("t_up_estimate: n_mc must be >= 10000, got {}", n_mc));
  }
  if (!(quantile > 0.0 && quantile < 1.0)) {
    throw DomainError(fmt::format("t_up_estimate: quantile must be in (0, 1), got {}", quantile));
  }
  const dist::ProductQuartic pstar(d);
  const dist::StandardGaussian q(d);

  auto norms = [&](bool data_side) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(n_mc));
    constexpr long kChunk = 10000;
    for (long done = 0; done < n_mc; done += kChunk) {
      const long rows = std::min(kChunk, n_mc - done);
      const dist::SampleBatch batch = data_side ? pstar.sample(rows, rng) : q.sample(rows, rng);
      const Vector n = model::suff_stats_rows(batch.points).rowwise().norm();
      out.insert(out.end(), n.data(), n.data() + n.size());
    }
    // Lower empirical quantile: the ceil(q n)-th order statistic.
    const auto k = static_cast<std::size_t>(std::ceil(quantile * static_cast<double>(out.size()))) - 1;
    std::nth_element(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(k), out.end());
    return out[k];
  };

  TUp t;
  t.data = norms(true);
  t.noise = norms(false);
  return t;
}

ChiSquareTail chi_square_tail_check(int d, double t, long n_mc, numerics::RngStream& rng) {
  if (!(t > 0.0) || d < 1 || n_mc < 1) {
    throw DomainError(fmt::format("chi_square_tail_check: need t > 0, d >= 1, n_mc >= 1 (t={}, d={})", t, d));
  }
  const double dd = d;
  const double threshold = dd + 2.0 * std::sqrt(t * dd) + 2.0 * t;
  long hits = 0;
  for (long i = 0; i < n_mc; ++i) {
    double sq = 0.0;
    for (int j = 0; j < d; ++j) {
      const double g = rng.normal();
      sq += g * g;
    }
    hits += sq >= threshold;
  }
  ChiSquareTail out;
  out.bound = std::exp(-t);
  out.empirical = static_cast<double>(hits) / static_cast<double>(n_mc);
  out.stderr_empirical = std::sqrt(out.empirical * (1.0 - out.empirical) / static_cast<double>(n_mc));
  return out;
}

}  // namespace nce_lab::theory
