#pragma once

// Shared helpers for the unit tests and the acceptance binary.

#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lyapsample/pipeline.hpp"

namespace lyapsample::testing {

inline std::string config_path(const std::string& name) { return std::string(LYAPSAMPLE_CONFIG_DIR) + "/" + name; }

inline RunConfig load_config(const std::string& name) {
  std::ifstream in(config_path(name));
  if (!in) throw std::runtime_error("cannot open " + config_path(name));
  return config_from_json(json::parse(in));
}

/// Uniform point strictly inside the box (closed box when it is degenerate).
inline std::vector<double> sample_in(const HyperRect& b, std::mt19937_64& rng) {
  std::vector<double> x(b.center.size());
  for (int i = 0; i < b.dim(); ++i) {
    std::uniform_real_distribution<double> u(b.lower(i), b.upper(i));
    x[static_cast<std::size_t>(i)] = b.lower(i) == b.upper(i) ? b.lower(i) : u(rng);
  }
  return x;
}

inline std::string fmt_coeff(double c) {
  std::ostringstream s;
  s.precision(17);
  s << c;
  return s.str();
}

/// Random polynomial of total degree <= deg in x1..xn; each monomial is
/// present with probability p.
inline std::string random_polynomial(int n, int deg, std::mt19937_64& rng, double scale = 1.0, double p = 0.6,
                                     bool constant_term = true) {
  std::uniform_real_distribution<double> coef(-scale, scale);
  std::bernoulli_distribution keep(p);
  std::string out;
  // exponent tuples by odometer
  std::vector<int> e(static_cast<std::size_t>(n), 0);
  for (;;) {
    int total = 0;
    for (int v : e) total += v;
    if (total <= deg && (total > 0 || constant_term) && keep(rng)) {
      std::string term = "(" + fmt_coeff(coef(rng)) + ")";
      for (int i = 0; i < n; ++i) {
        if (e[static_cast<std::size_t>(i)] == 0) continue;
        term += "*x" + std::to_string(i + 1);
        if (e[static_cast<std::size_t>(i)] > 1) term += "^" + std::to_string(e[static_cast<std::size_t>(i)]);
      }
      out += (out.empty() ? "" : " + ") + term;
    }
    int i = 0;
    for (; i < n; ++i) {
      if (++e[static_cast<std::size_t>(i)] <= deg) break;
      e[static_cast<std::size_t>(i)] = 0;
    }
    if (i == n) break;
  }
  return out.empty() ? "0" : out;
}

/// Smooth expression mixing polynomial, sqrt and division on domains where
/// both stay defined.
inline std::string random_smooth(int n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, 2);
  const std::string p = random_polynomial(n, 3, rng);
  switch (pick(rng)) {
    case 0: return p;
    case 1: return p + " + sqrt(2 + x1^2)";
    default: return "(" + p + ")/(3 + x" + std::to_string(n) + "^2)";
  }
}

/// Discrete map x+ = A x + q(x) with |eig A| < 1 and a small quadratic/cubic
/// perturbation q, so that the origin is a stable equilibrium.
inline std::shared_ptr<const PiecewiseSystem> random_stable_map(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd A(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) A(i, j) = u(rng);
  }
  Eigen::EigenSolver<Eigen::MatrixXd> es(A);
  const double r = es.eigenvalues().cwiseAbs().maxCoeff();
  A *= 0.6 / std::max(r, 1e-3);
  std::vector<std::string> field;
  for (int i = 0; i < n; ++i) {
    std::string f;
    for (int j = 0; j < n; ++j) f += (j ? " + " : "") + std::string("(") + fmt_coeff(A(i, j)) + ")*x" + std::to_string(j + 1);
    // quadratic and cubic terms only, so G(0) = 0 and the linear part is A
    std::string q;
    std::vector<int> e(static_cast<std::size_t>(n), 0);
    std::uniform_real_distribution<double> c(-0.4, 0.4);
    std::bernoulli_distribution keep(0.4);
    for (;;) {
      int total = 0;
      for (int v : e) total += v;
      if (total >= 2 && total <= 3 && keep(rng)) {
        std::string term = "(" + fmt_coeff(c(rng)) + ")";
        for (int k = 0; k < n; ++k) {
          const int ek = e[static_cast<std::size_t>(k)];
          if (ek == 0) continue;
          term += "*x" + std::to_string(k + 1) + (ek > 1 ? "^" + std::to_string(ek) : "");
        }
        q += " + " + term;
      }
      int k = 0;
      for (; k < n; ++k) {
        if (++e[static_cast<std::size_t>(k)] <= 3) break;
        e[static_cast<std::size_t>(k)] = 0;
      }
      if (k == n) break;
    }
    field.push_back(f + q);
  }
  std::vector<Region> regs{{{}, VectorField::parse(field, n)}};
  return std::make_shared<const PiecewiseSystem>(n, Mode::kDiscrete, regs);
}

/// The piecewise system of the guarded 2-D example.
inline std::shared_ptr<const PiecewiseSystem> example1_system() {
  std::vector<Region> regs{
      {{parse_guard("x2 >= 0", 2)}, VectorField::parse({"0.5*x1", "-0.8*x2 - x1^2"}, 2)},
      {{parse_guard("x2 < 0", 2)}, VectorField::parse({"0.5*x1 + x1*x2", "-0.8*x2"}, 2)}};
  return std::make_shared<const PiecewiseSystem>(2, Mode::kDiscrete, regs);
}

inline std::shared_ptr<const PiecewiseSystem> smooth_2d_system() {
  std::vector<Region> regs{{{}, VectorField::parse({"0.5*x1 + x1^2 - x2^2", "-0.5*x2 + x1^2"}, 2)}};
  return std::make_shared<const PiecewiseSystem>(2, Mode::kDiscrete, regs);
}

inline std::shared_ptr<const PiecewiseSystem> scalar_map(const std::string& f) {
  std::vector<Region> regs{{{}, VectorField::parse({f}, 1)}};
  return std::make_shared<const PiecewiseSystem>(1, Mode::kDiscrete, regs);
}

}  // namespace lyapsample::testing
