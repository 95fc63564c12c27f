#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "nce_lab/errors.hpp"
#include "nce_lab/numerics.hpp"
#include "reference.hpp"

using namespace nce_lab;
using namespace nce_lab::numerics;

namespace {

double rel_err(double got, double want) { return std::abs(got - want) / std::max(1.0, std::abs(want)); }

}  // namespace

TEST_CASE("log_gamma at reference points") {
  CHECK(std::abs(log_gamma(1.0)) < 1e-15);
  CHECK(std::abs(log_gamma(2.0)) < 1e-15);
  CHECK(rel_err(log_gamma(0.5), ref::kLogGammaHalf) < 1e-13);
  CHECK(rel_err(log_gamma(0.25), ref::kLogGammaQuarter) < 1e-13);
  CHECK(rel_err(log_gamma(0.125), ref::kLogGamma0125) < 1e-13);
  CHECK(rel_err(log_gamma(1.5), ref::kLogGamma1p5) < 1e-13);
  CHECK(rel_err(log_gamma(10.0), ref::kLogGamma10) < 1e-13);
  CHECK(rel_err(log_gamma(32.0), ref::kLogGamma32) < 1e-13);
  CHECK(rel_err(log_gamma(100.0), ref::kLogGamma100) < 1e-13);
  CHECK(rel_err(log_gamma(1e-3), ref::kLogGammaMilli) < 1e-12);
}

TEST_CASE("log_gamma matches the C library across [1/8, 32]") {
  double worst = 0.0;
  for (double z = 0.125; z <= 32.0; z += 0.03125) {
    worst = std::max(worst, rel_err(log_gamma(z), std::lgamma(z)));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("log_gamma recurrence ln G(z+1) = ln G(z) + ln z") {
  for (double z = 0.1; z < 20.0; z += 0.37) {
    CHECK(std::abs(log_gamma(z + 1.0) - log_gamma(z) - std::log(z)) < 1e-12 * std::max(1.0, log_gamma(z + 1.0)));
  }
}

TEST_CASE("log_gamma rejects non-positive and non-finite input") {
  CHECK_THROWS_AS(log_gamma(0.0), DomainError);
  CHECK_THROWS_AS(log_gamma(-1.5), DomainError);
  CHECK_THROWS_AS(log_gamma(std::numeric_limits<double>::quiet_NaN()), DomainError);
  CHECK_THROWS_AS(log_gamma(std::numeric_limits<double>::infinity()), DomainError);
}

TEST_CASE("normal quantile and cdf") {
  CHECK(std::abs(normal_quantile(0.5625) - ref::kQuantile05625) < 1e-14);
  CHECK(std::abs(normal_quantile(0.975) - ref::kQuantile0975) < 1e-13);
  CHECK(std::abs(normal_quantile(0.3) - ref::kQuantile03) < 1e-14);
  CHECK(std::abs(normal_quantile(1e-10) - ref::kQuantile1em10) < 1e-11);
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0));
  for (double p = 0.001; p < 1.0; p += 0.0173) {
    CHECK(std::abs(normal_cdf(normal_quantile(p)) - p) < 1e-14);
    CHECK(std::abs(normal_quantile(p) + normal_quantile(1.0 - p)) < 1e-12);
  }
  CHECK_THROWS_AS(normal_quantile(0.0), DomainError);
  CHECK_THROWS_AS(normal_quantile(1.0), DomainError);
}

TEST_CASE("log_sigmoid examples") {
  CHECK(std::abs(log_sigmoid(0.0) + std::numbers::ln2) < 1e-15);
  CHECK(std::abs(log_sigmoid(-1000.0) + 1000.0) < 1e-12);
  CHECK(std::abs(log_sigmoid(5.0) - ref::kLogSigmoid5) < 1e-16);
  CHECK(std::isfinite(log_sigmoid(-1e6)));
  CHECK(std::abs(log_sigmoid(1e6)) < 1e-300);
  CHECK(std::abs(softplus(1e6) - 1e6) < 1e-9);
  CHECK(softplus(-1e6) >= 0.0);
}

TEST_CASE("sigmoid symmetry, softplus relation, monotonicity") {
  double prev = -std::numeric_limits<double>::infinity();
  for (double t = -700.0; t <= 700.0; t += 0.73) {
    CHECK(std::abs(sigmoid(t) + sigmoid(-t) - 1.0) < 1e-14);
    CHECK(softplus(t) == doctest::Approx(-log_sigmoid(-t)).epsilon(1e-15));
    const double ls = log_sigmoid(t);
    CHECK(ls >= prev);
    prev = ls;
  }
}

TEST_CASE("integrate: simple integrals") {
  const auto r = integrate([](double x) { return x; }, 0.0, 1.0, 1e-10);
  CHECK(std::abs(r.value - 0.5) < 1e-14);
  CHECK(r.abs_error_estimate >= 0.0);
  CHECK(r.evaluations >= 1);

  const auto g = integrate([](double x) { return std::exp(-0.5 * x * x); }, -kInf, kInf);
  CHECK(std::abs(g.value - std::sqrt(2.0 * std::numbers::pi)) < 1e-10);

  const auto e = integrate([](double x) { return std::exp(-x); }, 0.0, kInf);
  CHECK(std::abs(e.value - 1.0) < 1e-10);

  const auto e2 = integrate([](double x) { return std::exp(x); }, -kInf, 0.0);
  CHECK(std::abs(e2.value - 1.0) < 1e-10);

  const auto ln = integrate([](double x) { return std::log(x); }, 0.0, 1.0, 1e-10);
  CHECK(std::abs(ln.value + 1.0) < 1e-9);

  CHECK(integrate([](double) { return 1.0; }, 2.0, 2.0).value == 0.0);
}

TEST_CASE("integrate: quartic normalizer equals 2 sigma Gamma(5/4)") {
  const double s4 = ref::kSigma4;
  const auto r = integrate([&](double x) { return std::exp(-x * x * x * x / s4); }, -kInf, kInf, 1e-12);
  CHECK(std::abs(r.value - ref::kC) < 1e-11);
}

TEST_CASE("integrate: polynomial times Gaussian matches closed form") {
  // int x^{2k} e^{-x^2/2} = sqrt(2 pi) (2k-1)!!
  double dfact = 1.0;
  for (int k = 0; k <= 6; ++k) {
    if (k > 0) {
      dfact *= 2 * k - 1;
    }
    const double tol = 1e-10;
    const auto r = integrate([&](double x) { return std::pow(x, 2 * k) * std::exp(-0.5 * x * x); }, -kInf, kInf, tol);
    const double want = std::sqrt(2.0 * std::numbers::pi) * dfact;
    CHECK(std::abs(r.value - want) <= std::max(tol, r.abs_error_estimate) + 1e-14 * want);
  }
  // Odd moments vanish, shifted mean.
  const auto odd = integrate([](double x) { return x * x * x * std::exp(-0.5 * x * x); }, -kInf, kInf);
  CHECK(std::abs(odd.value) < 1e-10);
  const auto shifted =
      integrate([](double x) { return x * std::exp(-0.5 * (x - 1.5) * (x - 1.5)); }, -kInf, kInf, 1e-11);
  CHECK(std::abs(shifted.value - 1.5 * std::sqrt(2.0 * std::numbers::pi)) < 1e-10);
}

TEST_CASE("integrate: errors") {
  CHECK_THROWS_AS(integrate([](double x) { return x; }, 0.0, 1.0, 0.0), DomainError);
  CHECK_THROWS_AS(integrate([](double x) { return x; }, 1.0, 0.0), DomainError);
  try {
    integrate([](double x) { return std::sin(1.0 / x); }, 1e-6, 1.0, 1e-14, 5);
    FAIL("expected AccuracyError");
  } catch (const AccuracyError& e) {
    CHECK(std::isfinite(e.best_estimate()));
    CHECK(e.abs_error() > 1e-14);
  }
}

TEST_CASE("sym_eig_extremes examples") {
  auto i3 = sym_eig_extremes(Matrix::Identity(3, 3));
  CHECK(i3.lambda_max == doctest::Approx(1.0));
  CHECK(i3.lambda_min == doctest::Approx(1.0));

  Matrix dg = Vector((Vector(3) << 4.0, 1.0, 0.25).finished()).asDiagonal();
  auto e = sym_eig_extremes(dg);
  CHECK(e.lambda_max == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(e.lambda_min == doctest::Approx(0.25).epsilon(1e-14));

  Vector v(3);
  v << 1.0, 2.0, 2.0;
  auto r1 = sym_eig_extremes(v * v.transpose());
  CHECK(std::abs(r1.lambda_max - 9.0) < 1e-12);
  CHECK(std::abs(r1.lambda_min) < 1e-12);
}

TEST_CASE("sym_eig_extremes bounds every Rayleigh quotient") {
  RngStream rng(5, 0);
  for (int size : {2, 5, 17, 64}) {
    Matrix a(size, size);
    for (int i = 0; i < size; ++i) {
      for (int j = 0; j < size; ++j) {
        a(i, j) = rng.normal();
      }
    }
    const Matrix m = 0.5 * (a + a.transpose());
    const auto e = sym_eig_extremes(m);
    CHECK(e.lambda_max >= e.lambda_min);
    for (int k = 0; k < 100; ++k) {
      Vector x(size);
      for (int i = 0; i < size; ++i) {
        x(i) = rng.normal();
      }
      const double rq = x.dot(m * x) / x.squaredNorm();
      CHECK(rq <= e.lambda_max + 1e-10);
      CHECK(rq >= e.lambda_min - 1e-10);
    }
  }
}

TEST_CASE("sym_eig_extremes shape errors") {
  Matrix asym = Matrix::Identity(3, 3);
  asym(0, 1) = 1e-3;
  CHECK_THROWS_AS(sym_eig_extremes(asym), ShapeError);
  CHECK_THROWS_AS(sym_eig_extremes(Matrix::Zero(2, 3)), ShapeError);
}

TEST_CASE("RngStream replays and separates streams") {
  RngStream a(42, 0);
  RngStream b(42, 0);
  RngStream c(42, 1);
  RngStream d(43, 0);
  bool differs_stream = false;
  bool differs_seed = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs_stream |= x != c.next_u64();
    differs_seed |= x != d.next_u64();
  }
  CHECK(differs_stream);
  CHECK(differs_seed);
}

TEST_CASE("uniform and normal draws") {
  RngStream rng(1, 0);
  const int n = 200000;
  double su = 0.0;
  double sn = 0.0;
  double sn2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(std::abs(su / n - 0.5) < 3.0 * std::sqrt(1.0 / 12.0 / n));
  CHECK(std::abs(sn / n) < 3.0 / std::sqrt(n));
  CHECK(std::abs(sn2 / n - 1.0) < 3.0 * std::sqrt(2.0 / n));
}

TEST_CASE("gamma_quarter_sample moments") {
  RngStream rng(11, 0);
  const int n = 1000000;
  std::vector<double> t(n);
  for (auto& v : t) {
    v = gamma_quarter_sample(rng);
    REQUIRE(v >= 0.0);
  }
  double m1 = 0.0;
  double m2 = 0.0;
  for (double v : t) {
    m1 += v;
    m2 += v * v;
  }
  m1 /= n;
  m2 /= n;
  // Var t = 1/4, Var t^2 = E t^4 - (E t^2)^2 with E t^4 = (1/4)(5/4)(9/4)(13/4).
  const double var_t2 = 0.25 * 1.25 * 2.25 * 3.25 - (5.0 / 16.0) * (5.0 / 16.0);
  CHECK(std::abs(m1 - 0.25) < 3.0 * std::sqrt(0.25 / n));
  CHECK(std::abs(m2 - 5.0 / 16.0) < 3.0 * std::sqrt(var_t2 / n));
}

TEST_CASE("gamma_quarter_sample replays") {
  RngStream a(42, 0);
  RngStream b(42, 0);
  const double a1 = gamma_quarter_sample(a);
  const double a2 = gamma_quarter_sample(a);
  CHECK(a1 == gamma_quarter_sample(b));
  CHECK(a2 == gamma_quarter_sample(b));
}

namespace {

// P(1/4, t) = (4 / Gamma(1/4)) int_0^{t^{1/4}} exp(-u^4) du, smooth in u.
double gamma_quarter_cdf_piece(double u0, double u1) {
  const double scale = 4.0 / std::exp(ref::kLogGammaQuarter);
  return scale * integrate([](double u) { return std::exp(-u * u * u * u); }, u0, u1, 1e-14).value;
}

}  // namespace

TEST_CASE("Gamma(1/4) CDF by quadrature agrees with reference values") {
  CHECK(std::abs(gamma_quarter_cdf_piece(0.0, std::pow(0.01, 0.25)) - ref::kGammaQuarterCdf001) < 1e-12);
  CHECK(std::abs(gamma_quarter_cdf_piece(0.0, std::pow(0.1, 0.25)) - ref::kGammaQuarterCdf01) < 1e-12);
  CHECK(std::abs(gamma_quarter_cdf_piece(0.0, 1.0) - ref::kGammaQuarterCdf1) < 1e-12);
}

TEST_CASE("gamma_quarter_sample passes Kolmogorov-Smirnov at n = 1e5") {
  RngStream rng(2024, 0);
  const int n = 100000;
  std::vector<double> t(n);
  for (auto& v : t) {
    v = gamma_quarter_sample(rng);
  }
  std::sort(t.begin(), t.end());
  double cdf = 0.0;
  double u_prev = 0.0;
  double ks = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = std::pow(t[i], 0.25);
    cdf += gamma_quarter_cdf_piece(u_prev, u);
    u_prev = u;
    ks = std::max({ks, std::abs(cdf - static_cast<double>(i) / n), std::abs(static_cast<double>(i + 1) / n - cdf)});
  }
  // Asymptotic critical value at significance 0.001.
  CHECK(ks < 1.9495 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("gamma_sample mean for other shapes") {
  for (double shape : {0.5, 1.0, 2.5, 7.0}) {
    RngStream rng(3, static_cast<std::uint64_t>(shape * 10));
    const int n = 200000;
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      s += gamma_sample(shape, rng);
    }
    CHECK(std::abs(s / n - shape) < 3.0 * std::sqrt(shape / n));
  }
  RngStream rng(1, 1);
  CHECK_THROWS_AS(gamma_sample(0.0, rng), DomainError);
}

TEST_CASE("mix64 is injective on a sample and avalanches") {
  std::vector<std::uint64_t> out;
  for (std::uint64_t i = 0; i < 10000; ++i) {
    out.push_back(mix64(i));
  }
  std::sort(out.begin(), out.end());
  CHECK(std::adjacent_find(out.begin(), out.end()) == out.end());
  double flipped = 0.0;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    flipped += __builtin_popcountll(mix64(i) ^ mix64(i ^ 1));
  }
  CHECK(std::abs(flipped / 1000 - 32.0) < 1.0);
}
