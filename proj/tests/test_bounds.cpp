#include <gtest/gtest.h>

#include <random>

#include "lyapsample/bounds.hpp"
#include "lyapsample/verifier.hpp"
#include "support.hpp"

using namespace lyapsample;
namespace lt = lyapsample::testing;

TEST(Coefficients, GradientNorm) {
  EXPECT_DOUBLE_EQ(grad_coeff_a(Expr::parse("x1^2 + x2^2", 2), {1, 1}), 4.0);
  const Expr lin = Expr::parse("3*x1 - 2*x2 + 0.5*x3", 3);
  EXPECT_DOUBLE_EQ(grad_coeff_a(lin, {0.1, -4, 9}), 5.5);
  EXPECT_DOUBLE_EQ(grad_coeff_a(lin, {7, 7, 7}), 5.5);
}

TEST(Coefficients, LagrangeRemainder) {
  EXPECT_NEAR(lagrange_b(Expr::parse("x1^2 + x2^2", 2), make_box({0.3, -2}, {0.5, -0.5, 0.5, -0.5})), 0.5, 1e-15);
  EXPECT_EQ(lagrange_b(Expr::parse("3*x1 - x2", 2), make_box({0, 0}, {1, -1, 1, -1})), 0.0);
  EXPECT_EQ(lagrange_b(Expr::parse("7", 1), make_box({0}, {1, -1})), 0.0);
  EXPECT_DOUBLE_EQ(grad_coeff_a(Expr::parse("7", 1), {0.2}), 0.0);
}

TEST(Coefficients, GammaBar) {
  const auto g = gamma_bar({{4.0, 0.5, BoundMethod::kSplit}}, 0.0, 0.5);
  EXPECT_NEAR(g.value, 2.5, 1e-15);
  EXPECT_GE(g.value, 2.5);
  const auto g2 = gamma_bar({{1.0, 0.1, BoundMethod::kSplit}, {3.0, 0.05, BoundMethod::kSplit}}, 0.2, 0.1);
  EXPECT_EQ(g2.a, 3.0);
  EXPECT_EQ(g2.b, 0.1);
  EXPECT_NEAR(g2.value, 0.6, 1e-15);
  EXPECT_EQ(gamma_bar({{2.0, 0.25, BoundMethod::kSplit}}, 0.0, 0.0).value, 0.25);
  EXPECT_THROW(gamma_bar({}, 0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(parse_bound_method("newton"), std::invalid_argument);
}

TEST(Certification, Decision) {
  EXPECT_TRUE(certifies(-3.0, 2.5));
  EXPECT_FALSE(certifies(-2.0, 2.5));
  EXPECT_FALSE(certifies(-2.5, 2.5));
}

TEST(Certification, ScalarContraction) {
  // x+ = 0.5 x, V = x^2, rho = 0.9: F = (0.25 - 0.9) x^2 = -0.65 x^2
  const auto sys = lt::scalar_map("0.5*x1");
  const auto obj = fslf_objective(sys, Eigen::MatrixXd::Identity(1, 1), 0.9, 1);
  const auto box = make_box({1}, {0.1, -0.1});
  const auto r = verify_box(obj, box, BoundMethod::kSplit);
  EXPECT_NEAR(r.F, -0.65, 1e-15);
  EXPECT_TRUE(r.certified);
  // a = |dF/dx(1)| = 1.3, b = 0.5 * 1.3 * 0.01
  EXPECT_NEAR(r.gamma, 1.3 * 0.1 + 0.0065, 1e-12);
  const auto an = analyze_box(obj, box, BoundMethod::kSplit);
  ASSERT_EQ(an.branches.size(), 1u);
  EXPECT_NEAR(an.branches[0].a, 1.3, 1e-15);
  EXPECT_NEAR(an.branches[0].b, 0.0065, 1e-15);
  EXPECT_LE(an.lower, -0.65 * 1.1 * 1.1 + 1e-12);
  EXPECT_GE(an.upper, -0.65 * 0.9 * 0.9 - 1e-12);
}

TEST(Certification, DomainErrorFlagsBox) {
  const auto sys = lt::scalar_map("0.5*x1 + sqrt(x1)");
  const auto obj = fslf_objective(sys, Eigen::MatrixXd::Identity(1, 1), 0.9, 1);
  const auto r = verify_box(obj, make_box({-1}, {0.1, -0.1}), BoundMethod::kSplit);
  EXPECT_FALSE(r.certified);
  EXPECT_EQ(r.flag, RecordFlag::kDomainError);
}

TEST(Certification, ContinuousTimeObjective) {
  // W = x^2 (M = 1), dx/dt = -x: dW/dt = -2 x^2
  std::vector<Region> regs{{{}, VectorField::parse({"-x1"}, 1)}};
  auto ct = std::make_shared<const PiecewiseSystem>(1, Mode::kContinuous, regs);
  auto dt = std::make_shared<const PiecewiseSystem>(euler_discretize(*ct, 0.1));
  const auto wdot = w_objective(ObjectiveKind::kWDot, dt, Eigen::MatrixXd::Identity(1, 1), 1, 0.999, ct);
  const auto [F, c] = F_ct_and_bounds(wdot, make_box({1}, {0.05, -0.05}));
  EXPECT_NEAR(F, -2.0, 1e-15);
  EXPECT_NEAR(c.a, 4.0, 1e-14);
  EXPECT_NEAR(c.b, 0.5 * 4.0 * 0.0025, 1e-14);
}

TEST(Certification, PiecewiseBoxForksOverBranches) {
  const auto sys = lt::example1_system();
  const auto obj = fslf_objective(sys, Eigen::MatrixXd::Identity(2, 2), 0.999, 3);
  const auto an = analyze_box(obj, make_box({1, 0}, {0.05, -0.05, 0.05, -0.05}), BoundMethod::kBest);
  ASSERT_TRUE(an.ok());
  EXPECT_GE(an.branches.size(), 2u);
  // the sample point follows both first-step branches; the larger value is used
  EXPECT_NEAR(an.F_ref, 0.5091 - 0.999, 5e-4);
}

namespace {

struct Case {
  std::function<double(const std::vector<double>&)> F;
  std::function<std::vector<double>(const std::vector<double>&)> grad;
  double a = 0.0;
  double b = 0.0;
  HyperRect box;
  std::string name;
};

HyperRect random_box(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> centre(-0.8, 0.8);
  std::uniform_real_distribution<double> half(0.005, 0.3);
  HyperRect b;
  for (int i = 0; i < n; ++i) {
    b.center.push_back(centre(rng));
    b.delta.push_back(half(rng));
    b.delta.push_back(-half(rng));
  }
  return b;
}

std::vector<double> grad_of(const Expr& f, const std::vector<double>& x) { return eval_grad(f, x).gradient; }

}  // namespace

// |F(x) - F(xs)| <= a |x - xs|_inf + b and the Taylor residual <= b, at 10^4
// random points for each of 200 (F, box) cases: 100 expressions and 100
// finite-step objectives of random maps.
TEST(BoundSoundness, TaylorBoundsHoldOnRandomCases) {
  std::mt19937_64 rng(8);
  std::vector<Case> cases;
  for (int c = 0; c < 100; ++c) {
    const int n = 1 + c % 3;
    const auto text = lt::random_smooth(n, rng);
    const auto f = std::make_shared<Expr>(Expr::parse(text, n));
    Case k;
    k.box = random_box(n, rng);
    k.F = [f](const std::vector<double>& x) { return f->eval(x); };
    k.grad = [f](const std::vector<double>& x) { return grad_of(*f, x); };
    k.a = grad_coeff_a(*f, k.box.center);
    k.b = lagrange_b(*f, k.box);
    k.name = text;
    cases.push_back(std::move(k));
  }
  for (int c = 0; c < 100; ++c) {
    const int n = 1 + c % 3;
    const auto sys = lt::random_stable_map(n, rng);
    const auto obj = std::make_shared<Objective>(fslf_objective(sys, Eigen::MatrixXd::Identity(n, n), 0.999, 1 + c % 3));
    Case k;
    k.box = random_box(n, rng);
    const auto an = analyze_box(*obj, k.box, BoundMethod::kSplit);
    ASSERT_TRUE(an.ok());
    ASSERT_EQ(an.branches.size(), 1u);
    const auto seq = an.branches[0].seq;
    k.F = [obj, seq](const std::vector<double>& x) { return objective_on_branch(*obj, seq, x); };
    k.grad = [obj, seq, n](const std::vector<double>& x) {
      std::vector<Dual2<double>> s;
      for (int i = 0; i < n; ++i) s.push_back(Dual2<double>::variable(x[static_cast<std::size_t>(i)], i, n));
      const auto r = objective_on_branch(*obj, seq, std::span<const Dual2<double>>(s));
      std::vector<double> g;
      for (int i = 0; i < n; ++i) g.push_back(r.grad(i));
      return g;
    };
    k.a = an.branches[0].a;
    k.b = an.branches[0].b;
    k.name = "fslf objective " + std::to_string(c);
    cases.push_back(std::move(k));
  }
  ASSERT_EQ(cases.size(), 200u);
  for (const auto& k : cases) {
    const auto& xs = k.box.center;
    const double f0 = k.F(xs);
    const auto g0 = k.grad(xs);
    for (int p = 0; p < 10000; ++p) {
      const auto x = lt::sample_in(k.box, rng);
      double dinf = 0.0;
      double lin = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        dinf = std::max(dinf, std::abs(x[i] - xs[i]));
        lin += g0[i] * (x[i] - xs[i]);
      }
      const double fx = k.F(x);
      ASSERT_LE(std::abs(fx - f0), k.a * dinf + k.b + 1e-12) << k.name;
      ASSERT_LE(std::abs(fx - f0 - lin), k.b + 1e-12) << k.name;
    }
  }
}

// The certified interval [lower, upper] of a box contains F at sampled points.
TEST(BoundSoundness, BoxAnalysisEnclosesObjective) {
  std::mt19937_64 rng(77);
  for (int c = 0; c < 60; ++c) {
    const int n = 1 + c % 3;
    const auto sys = lt::random_stable_map(n, rng);
    const auto obj = fslf_objective(sys, Eigen::MatrixXd::Identity(n, n), 0.999, 1 + c % 3);
    const auto box = random_box(n, rng);
    for (auto method : {BoundMethod::kSplit, BoundMethod::kCombined, BoundMethod::kBest}) {
      const auto an = analyze_box(obj, box, method);
      ASSERT_TRUE(an.ok());
      for (int p = 0; p < 500; ++p) {
        const double f = objective_at(obj, lt::sample_in(box, rng));
        ASSERT_LE(f, an.upper);
        ASSERT_GE(f, an.lower);
      }
    }
  }
}
