#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lyapsample/expr.hpp"
#include "support.hpp"

using namespace lyapsample;

namespace {

double eval_at(const std::string& text, int n, std::vector<double> x) { return Expr::parse(text, n).eval(x); }

}  // namespace

TEST(ExprParse, Examples) {
  EXPECT_DOUBLE_EQ(eval_at("0.5*x1 + x1*x2", 2, {1, 0}), 0.5);
  EXPECT_DOUBLE_EQ(eval_at("x1^2 - x2^2", 2, {1, 1}), 0.0);
  EXPECT_DOUBLE_EQ(eval_at("-0.8*x2 - x1^2", 2, {1, 0}), -1.0);
  EXPECT_DOUBLE_EQ(eval_at("3.25", 2, {7, 8}), 3.25);
  EXPECT_THROW(eval_at("x1/x2", 2, {1, 0}), DomainError);
}

TEST(ExprParse, SyntaxErrorsCarryColumn) {
  try {
    Expr::parse("x3*(", 3);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.column(), 4);
  }
  EXPECT_THROW(Expr::parse("x4", 3), ParseError);
  EXPECT_THROW(Expr::parse("x1 +", 1), ParseError);
  EXPECT_THROW(Expr::parse("foo(x1)", 1), ParseError);
  EXPECT_THROW(Expr::parse("x1^2^3", 1), ParseError);
  EXPECT_THROW(Expr::parse("", 1), ParseError);
  EXPECT_THROW(Expr::parse("x1)", 1), ParseError);
}

TEST(ExprParse, PrecedenceAndUnary) {
  EXPECT_DOUBLE_EQ(eval_at("2 + 3*4", 1, {0}), 14.0);
  EXPECT_DOUBLE_EQ(eval_at("-x1^2", 1, {3}), -9.0);
  EXPECT_DOUBLE_EQ(eval_at("(-x1)^2", 1, {3}), 9.0);
  EXPECT_DOUBLE_EQ(eval_at("8/4/2", 1, {0}), 1.0);
  EXPECT_DOUBLE_EQ(eval_at("10 - 4 - 3", 1, {0}), 3.0);
  EXPECT_DOUBLE_EQ(eval_at("sqrt(x1) + abs(-2)", 1, {16}), 6.0);
  EXPECT_DOUBLE_EQ(eval_at("1e-1*x1", 1, {5}), 0.5);
}

TEST(ExprParse, PrintingRoundTrips) {
  std::mt19937_64 rng(7);
  for (int c = 0; c < 50; ++c) {
    const auto text = lyapsample::testing::random_smooth(3, rng);
    const Expr f = Expr::parse(text, 3);
    const Expr g = Expr::parse(f.to_string(), 3);
    const std::vector<double> x{0.3, -0.7, 1.1};
    EXPECT_NEAR(f.eval(x), g.eval(x), 1e-12 * (1.0 + std::abs(f.eval(x)))) << text << " vs " << f.to_string();
  }
}

TEST(ExprParse, Substitute) {
  const Expr f = Expr::parse("x1*x2 + 1", 2);
  const Expr g = f.substitute({Expr::parse("x1 + 1", 2), Expr::parse("2*x2", 2)});
  EXPECT_DOUBLE_EQ(g.eval(std::vector<double>{1.0, 3.0}), 13.0);
}

TEST(ExprInterval, Examples) {
  const Interval a = eval_interval(Expr::parse("x1^2", 1), IntervalVector{Interval(-1, 2)});
  EXPECT_EQ(a.lo(), 0.0);
  EXPECT_NEAR(a.hi(), 4.0, 1e-14);
  const Interval s = eval_interval(Expr::parse("x1+x2", 2), IntervalVector{Interval(0, 1), Interval(0, 1)});
  EXPECT_NEAR(s.lo(), 0.0, 1e-15);
  EXPECT_NEAR(s.hi(), 2.0, 1e-15);
  const Interval g = eval_interval(Expr::parse("-0.8*x2 - x1^2", 2), IntervalVector{Interval(0.9, 1.1), Interval(-0.1, 0.1)});
  EXPECT_TRUE(g.contains(-1.0));
}

TEST(ExprAD, GradientExamples) {
  const auto vg = eval_grad(Expr::parse("x1^2 + x2^2", 2), std::vector<double>{1, 2});
  EXPECT_DOUBLE_EQ(vg.value, 5.0);
  EXPECT_DOUBLE_EQ(vg.gradient[0], 2.0);
  EXPECT_DOUBLE_EQ(vg.gradient[1], 4.0);
  const auto c = eval_grad(Expr::parse("4.5", 2), std::vector<double>{1, 2});
  EXPECT_DOUBLE_EQ(c.value, 4.5);
  EXPECT_EQ(c.gradient[0], 0.0);
  EXPECT_EQ(c.gradient[1], 0.0);
  EXPECT_THROW(eval_grad(Expr::parse("abs(x1)", 1), std::vector<double>{0.0}), DomainError);
}

TEST(ExprAD, HessianExamples) {
  const IntervalVector box{Interval(-3, 5), Interval(0.5, 1)};
  const auto h = eval_hess_interval(Expr::parse("x1^2 + x2^2", 2), box);
  EXPECT_EQ(h.hessian(0, 0), Interval(2.0));
  EXPECT_EQ(h.hessian(1, 1), Interval(2.0));
  EXPECT_EQ(h.hessian(0, 1), Interval(0.0));
  const auto lin = eval_hess_interval(Expr::parse("3*x1 - x2 + 2", 2), box);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(lin.hessian(i, j), Interval(0.0));
  }
  const auto cube = eval_hess_interval(Expr::parse("x1^3", 1), IntervalVector{Interval(0, 1)});
  EXPECT_LE(cube.hessian(0, 0).lo(), 0.0);
  EXPECT_GE(cube.hessian(0, 0).hi(), 6.0);
}

// Forward-mode gradient against central differences, relative 1e-6.
TEST(ExprAD, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  for (int c = 0; c < 200; ++c) {
    const int n = 1 + c % 3;
    const auto text = lyapsample::testing::random_smooth(n, rng);
    const Expr f = Expr::parse(text, n);
    std::vector<double> x(static_cast<std::size_t>(n));
    for (auto& v : x) v = u(rng);
    const auto vg = eval_grad(f, x);
    for (int i = 0; i < n; ++i) {
      const double h = 1e-5;
      auto xp = x;
      auto xm = x;
      xp[static_cast<std::size_t>(i)] += h;
      xm[static_cast<std::size_t>(i)] -= h;
      // fourth-order central difference
      auto xp2 = x;
      auto xm2 = x;
      xp2[static_cast<std::size_t>(i)] += 2 * h;
      xm2[static_cast<std::size_t>(i)] -= 2 * h;
      const double fd = (-f.eval(xp2) + 8 * f.eval(xp) - 8 * f.eval(xm) + f.eval(xm2)) / (12 * h);
      const double g = vg.gradient[static_cast<std::size_t>(i)];
      EXPECT_NEAR(g, fd, 1e-6 * std::max(1.0, std::abs(g))) << text << " d/dx" << i + 1;
    }
  }
}

// Point Hessians at sampled points lie inside the interval Hessian of the box.
TEST(ExprAD, HessianEnclosureContainsPointHessians) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> centre(-1.0, 1.0);
  std::uniform_real_distribution<double> half(0.01, 0.5);
  for (int c = 0; c < 100; ++c) {
    const int n = 1 + c % 3;
    const Expr f = Expr::parse(lyapsample::testing::random_smooth(n, rng), n);
    HyperRect b;
    for (int i = 0; i < n; ++i) {
      const double h = half(rng);
      b.center.push_back(centre(rng));
      b.delta.push_back(h);
      b.delta.push_back(-h);
    }
    const auto enc = eval_hess_interval(f, b.to_intervals());
    for (int k = 0; k < 1000; ++k) {
      const auto x = lyapsample::testing::sample_in(b, rng);
      std::vector<Dual2<double>> seeds;
      for (int i = 0; i < n; ++i) seeds.push_back(Dual2<double>::variable(x[static_cast<std::size_t>(i)], i, n));
      const auto r = f.eval(std::span<const Dual2<double>>(seeds));
      ASSERT_TRUE(enc.value.contains(r.value()));
      for (int i = 0; i < n; ++i) {
        ASSERT_TRUE(enc.gradient[static_cast<std::size_t>(i)].contains(r.grad(i)));
        for (int j = 0; j < n; ++j) {
          ASSERT_TRUE(enc.hessian(static_cast<std::size_t>(i), static_cast<std::size_t>(j)).contains(r.hess(i, j)))
              << "H(" << i << "," << j << ")";
        }
      }
    }
  }
}

TEST(VectorFieldParse, Components) {
  const auto G = VectorField::parse({"0.5*x1", "-0.8*x2 - x1^2"}, 2);
  EXPECT_EQ(G.dim_in(), 2);
  EXPECT_EQ(G.dim_out(), 2);
  const auto y = G.eval(std::vector<double>{1.0, 0.0});
  EXPECT_DOUBLE_EQ(y[0], 0.5);
  EXPECT_DOUBLE_EQ(y[1], -1.0);
}
