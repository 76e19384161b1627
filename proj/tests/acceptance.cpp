// Acceptance run: one PASS/FAIL/SKIP line per criterion, nonzero exit on any
// FAIL. Pass --powertrain to include the long powertrain case.

#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include "lyapsample/localyap.hpp"
#include "support.hpp"

using namespace lyapsample;
namespace lt = lyapsample::testing;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void report(int id, const std::string& name, Outcome& o, double seconds) {
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << name << ":" << o.detail.str() << " (" << seconds
            << " s)" << std::endl;
}

void skip(int id, const std::string& name, const std::string& why) {
  std::cout << "SKIP " << id << " " << name << ": " << why << std::endl;
}

template <class F>
void run(int id, const std::string& name, F&& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    body(o);
  } catch (const std::exception& e) {
    o.require(false, std::string("exception: ") + e.what());
  }
  report(id, name, o, std::chrono::duration<double>(Clock::now() - t0).count());
}

bool within(double v, double ref, double rel) { return std::abs(v - ref) <= rel * std::abs(ref); }

// Value rounded to the decimals its reference is printed with.
double printed(double v, int decimals) {
  const double s = std::pow(10.0, decimals);
  return std::round(v * s) / s;
}

RunConfig single_threaded(const std::string& name) {
  auto c = lt::load_config(name);
  c.run.workers = 1;
  return c;
}

struct SoundnessTally {
  std::size_t boxes = 0;
  std::size_t points = 0;
  std::size_t violations = 0;
};

// F < 0 at 10^3 uniform points of every certified box.
void check_ledger(const Objective& obj, const SampleLedger& ledger, std::mt19937_64& rng, SoundnessTally& t) {
  for (const auto& r : ledger.good) {
    ++t.boxes;
    for (int k = 0; k < 1000; ++k) {
      const auto x = lt::sample_in(r.box, rng);
      ++t.points;
      if (!(objective_at(obj, x) < 0.0)) ++t.violations;
    }
  }
}

// Reports shared between criteria, computed on first use.
struct Runs {
  std::optional<RunReport> a, b, c, c_ct, p;
  const RunReport& va() { return a ? *a : *(a = run_verify_dt(single_threaded("v_a_2d.json"))); }
  const RunReport& vb() { return b ? *b : *(b = run_verify_dt(single_threaded("v_b_piecewise.json"))); }
  const RunReport& vc() { return c ? *c : *(c = run_verify_dt(single_threaded("v_c_3d.json"))); }
  const RunReport& vc_ct() {
    return c_ct ? *c_ct : *(c_ct = run_verify_ct(single_threaded("v_c_3d.json"), vc()));
  }
  const RunReport& pt() { return p ? *p : *(p = run_verify_dt(single_threaded("powertrain.json"))); }
};

void level_detail(Outcome& o, const RunReport& r) {
  o.detail << " verdict " << r.verdict << ", M " << r.M_final << ", good " << r.ledger.good.size() << ", wrong "
           << r.ledger.wrong.size();
  if (r.level) o.detail << ", Lbar1 " << r.level->Lbar1 << ", Lbar2 " << r.level->Lbar2 << ", Lbar " << r.level->Lbar;
}

}  // namespace

int main(int argc, char** argv) {
  bool powertrain = false;
  for (int i = 1; i < argc; ++i) powertrain = powertrain || std::strcmp(argv[i], "--powertrain") == 0;
  std::cout.precision(6);
  Runs runs;

  run(1, "guarded example golden values", [](Outcome& o) {
    const auto t0 = Clock::now();
    const auto sys = lt::example1_system();
    const CandidateV V{Eigen::MatrixXd::Identity(2, 2), 0.999};
    const std::vector<double> xs{1, 0};
    const auto branches = enumerate_branches(*sys, xs, 3);
    std::vector<double> F;
    for (const auto& b : branches) F.push_back(F_dt(*sys, V, 3, xs, b) + V.rho);
    std::sort(F.begin(), F.end());
    const double eps = epsilon_jump(*sys, V, 3, xs);
    const double dt = std::chrono::duration<double>(Clock::now() - t0).count();
    o.detail << " branches " << branches.size();
    for (double f : F) o.detail << ", F+rho " << f;
    o.detail << ", eps " << eps;
    o.require(F.size() == 2, "two branches");
    o.require(F.size() == 2 && std::abs(F[0] - 0.0439) <= 5e-4 && std::abs(F[1] - 0.5091) <= 5e-4, "F values");
    o.require(std::abs(eps - 0.4652) <= 5e-4, "epsilon");
    o.require(dt < 1.0, "runtime");
  });

  run(2, "local Lyapunov golden values", [](Outcome& o) {
    const auto t0 = Clock::now();
    const auto A2 = linearize(*lt::smooth_2d_system())[0];
    const auto P2 = solve_dlyap(A2);
    const auto c3 = lt::load_config("v_c_3d.json");
    const auto P3 = solve_dlyap(linearize(*build_systems(c3).dt)[0]);
    Eigen::MatrixXd E3 = Eigen::MatrixXd::Zero(3, 3);
    E3.diagonal() << 5.5556, 5.5556, 1;
    auto rel_ok = [](const Eigen::MatrixXd& P, const Eigen::MatrixXd& E) {
      for (Eigen::Index i = 0; i < P.rows(); ++i) {
        for (Eigen::Index j = 0; j < P.cols(); ++j) {
          if (std::abs(P(i, j) - E(i, j)) > 1e-3 * std::max(std::abs(E(i, j)), 1.0)) return false;
        }
      }
      return true;
    };
    o.require(rel_ok(P2, 1.3333 * Eigen::MatrixXd::Identity(2, 2)), "2-D P");
    o.require(rel_ok(P3, E3), "3-D P");
    Eigen::MatrixXd Pb = Eigen::MatrixXd::Zero(2, 2);
    Pb.diagonal() << 26668, 55558;
    const double l1 = max_levelset_in_box(P2, symmetric_box({0, 0}, {0.1, 0.1}));
    const double l2 = max_levelset_in_box(Pb, symmetric_box({0, 0}, {0.35, 0.35}));
    const double l3 = max_levelset_in_box(P3, symmetric_box({0, 0, 0}, {0.6, 0.6, 0.9}));
    const double dt = std::chrono::duration<double>(Clock::now() - t0).count();
    o.detail << " P2 " << P2(0, 0) << ", P3 diag " << P3(0, 0) << " " << P3(1, 1) << " " << P3(2, 2) << ", levels " << l1
             << " " << l2 << " " << l3;
    o.require(within(printed(l1, 4), 0.0133, 1e-3) && within(printed(l2, 1), 3266.8, 1e-3) &&
                  within(printed(l3, 2), 0.81, 1e-3),
              "levels in box at printed precision");
    o.require(dt < 1.0, "runtime");
  });

  run(3, "2-D end to end", [&](Outcome& o) {
    const auto& r = runs.va();
    level_detail(o, r);
    o.detail << ", explored " << r.stats.explored;
    o.require(r.M_final == 4, "M_final 4");
    o.require(!r.ledger.good.empty(), "nonempty A");
    o.require(r.level && within(r.level->Lbar, 9.2933, 0.15), "Lbar within 15% of 9.2933");
    o.require(r.level && within(r.level->Lbar2, 11.4642, 0.15), "Lbar2 within 15% of 11.4642");
    o.require(r.stats.explored >= 2012 / 2 && r.stats.explored <= 2 * 2012, "explored within 2x of 2012");
    o.require(r.timings.total < 300, "runtime");
  });

  run(4, "piecewise end to end", [&](Outcome& o) {
    const auto& r = runs.vb();
    level_detail(o, r);
    o.require(r.M_final == 3, "M_final 3");
    o.require(r.level && within(r.level->Lbar, 2.3208, 0.15), "Lbar within 15% of 2.3208");
    o.require(r.level && r.level->Lbar <= 2.805 + 1e-6, "Lbar <= 2.805");
    o.require(r.timings.total < 300, "runtime");
  });

  run(5, "3-D end to end", [&](Outcome& o) {
    const auto& r = runs.vc();
    const auto& ct = runs.vc_ct();
    level_detail(o, r);
    o.detail << "; continuous:";
    level_detail(o, ct);
    o.require(r.M_final == 2, "M_final 2");
    o.require(r.level && within(r.level->Lbar, 1.8459, 0.15), "discrete Lbar within 15% of 1.8459");
    const bool have = r.level && ct.level;
    o.require(have && ct.level->Lbar1 >= r.level->Lbar1, "continuous Lbar1 >= discrete Lbar1");
    o.require(have && within(ct.level->Lbar1, 2.0253, 0.15), "continuous Lbar1 within 15% of 2.0253");
    o.require(have && within(ct.level->Lbar, r.level->Lbar, 0.15), "final Lbar unchanged within 15%");
    o.require(r.timings.total + ct.timings.total < 900, "runtime");
  });

  if (powertrain) {
    run(6, "powertrain (substituted property)", [&](Outcome& o) {
      const auto& r = runs.pt();
      const auto cfg = single_threaded("powertrain.json");
      level_detail(o, r);
      o.require(r.verdict != "halted", "run completes with a certified set");
      o.require(!r.ledger.wrong.empty(), "undecided boxes reported");
      const auto sys = build_systems(cfg);
      const auto obj = fslf_objective(sys.dt, cfg.candidate.P, cfg.candidate.rho, r.M_final);
      std::mt19937_64 rng(6);
      SoundnessTally t;
      check_ledger(obj, r.ledger, rng, t);
      o.detail << ", oracle points " << t.points << ", violations " << t.violations;
      o.require(t.violations == 0, "certified boxes sound");
      o.require(r.level && r.level->Lbar <= 0.0209 * 1.15, "Lbar <= 0.0209*1.15");
      o.require(r.timings.total < 1800, "runtime");
    });
  } else {
    skip(6, "powertrain (substituted property)", "pass --powertrain to run");
  }

  run(7, "soundness of certified boxes", [&](Outcome& o) {
    std::mt19937_64 rng(7);
    SoundnessTally t;
    auto bundled = [&](const char* name, const RunReport& r) {
      const auto cfg = lt::load_config(name);
      const auto sys = build_systems(cfg);
      const auto obj = r.kind == "continuous"
                           ? w_objective(ObjectiveKind::kWDot, sys.dt, cfg.candidate.P, r.M_final, cfg.candidate.rho, sys.ct)
                           : fslf_objective(sys.dt, cfg.candidate.P, cfg.candidate.rho, r.M_final);
      check_ledger(obj, r.ledger, rng, t);
    };
    bundled("v_a_2d.json", runs.va());
    bundled("v_b_piecewise.json", runs.vb());
    bundled("v_c_3d.json", runs.vc());
    bundled("v_c_3d.json", runs.vc_ct());
    bundled("powertrain.json", runs.pt());
    const std::size_t bundled_boxes = t.boxes;

    std::mt19937_64 gen(2077);
    int certified_systems = 0;
    for (int c = 0; c < 20; ++c) {
      const int n = 1 + c % 3;
      const auto sys = lt::random_stable_map(n, gen);
      const auto P = solve_dlyap(linearize(*sys)[0]);
      VerifyConfig vc;
      std::vector<double> half(static_cast<std::size_t>(n), 0.4);
      vc.S = symmetric_box(std::vector<double>(static_cast<std::size_t>(n), 0.0), half);
      vc.delta_min = n == 1 ? 0.0125 : n == 2 ? 0.025 : 0.05;
      const auto cert = construct_A(vc, fslf_objective(sys, P, 0.999, 2));
      if (!cert.ledger.good.empty()) ++certified_systems;
      check_ledger(fslf_objective(sys, P, 0.999, 2), cert.ledger, rng, t);
    }
    o.detail << " boxes " << t.boxes << " (bundled " << bundled_boxes << "), random systems with certificates "
             << certified_systems << "/20, points " << t.points << ", violations " << t.violations;
    o.require(t.violations == 0, "zero violations");
    o.require(certified_systems > 0 && bundled_boxes > 0, "suite is not vacuous");
  });

  run(8, "bound soundness", [](Outcome& o) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> centre(-0.8, 0.8);
    std::uniform_real_distribution<double> half(0.005, 0.3);
    auto random_box = [&](int n) {
      HyperRect b;
      for (int i = 0; i < n; ++i) {
        b.center.push_back(centre(rng));
        b.delta.push_back(half(rng));
        b.delta.push_back(-half(rng));
      }
      return b;
    };
    std::size_t worst_cases = 0;
    double tightest = std::numeric_limits<double>::infinity();
    auto probe = [&](const HyperRect& box, double a, double b, const std::function<double(const std::vector<double>&)>& F,
                     const std::vector<double>& g0) {
      const auto& xs = box.center;
      const double f0 = F(xs);
      bool ok = true;
      for (int p = 0; p < 10000; ++p) {
        const auto x = lt::sample_in(box, rng);
        double dinf = 0.0;
        double lin = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
          dinf = std::max(dinf, std::abs(x[i] - xs[i]));
          lin += g0[i] * (x[i] - xs[i]);
        }
        const double fx = F(x);
        const double m1 = a * dinf + b + 1e-12 - std::abs(fx - f0);
        const double m2 = b + 1e-12 - std::abs(fx - f0 - lin);
        tightest = std::min(tightest, std::min(m1, m2));
        ok = ok && m1 >= 0 && m2 >= 0;
      }
      if (!ok) ++worst_cases;
    };
    for (int c = 0; c < 100; ++c) {
      const int n = 1 + c % 3;
      const Expr f = Expr::parse(lt::random_smooth(n, rng), n);
      const auto box = random_box(n);
      probe(box, grad_coeff_a(f, box.center), lagrange_b(f, box), [&](const std::vector<double>& x) { return f.eval(x); },
            eval_grad(f, box.center).gradient);
    }
    for (int c = 0; c < 100; ++c) {
      const int n = 1 + c % 3;
      const auto sys = lt::random_stable_map(n, rng);
      const auto obj = fslf_objective(sys, Eigen::MatrixXd::Identity(n, n), 0.999, 1 + c % 3);
      const auto box = random_box(n);
      const auto an = analyze_box(obj, box, BoundMethod::kSplit);
      if (!an.ok() || an.branches.size() != 1) {
        ++worst_cases;
        continue;
      }
      const auto seq = an.branches[0].seq;
      std::vector<Dual2<double>> s;
      for (int i = 0; i < n; ++i) s.push_back(Dual2<double>::variable(box.center[static_cast<std::size_t>(i)], i, n));
      const auto r = objective_on_branch(obj, seq, std::span<const Dual2<double>>(s));
      std::vector<double> g0;
      for (int i = 0; i < n; ++i) g0.push_back(r.grad(i));
      probe(box, an.branches[0].a, an.branches[0].b,
            [&](const std::vector<double>& x) { return objective_on_branch(obj, seq, x); }, g0);
    }
    o.detail << " 200 cases x 10^4 points, failing cases " << worst_cases << ", smallest margin " << tightest;
    o.require(worst_cases == 0, "both inequalities at every point");
  });

  run(9, "interval and AD suites", [](Outcome& o) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> centre(-1.0, 1.0);
    std::uniform_real_distribution<double> half(0.01, 0.5);
    std::size_t inclusion = 0, gradient = 0, hessian = 0;
    for (int c = 0; c < 60; ++c) {
      const int n = 1 + c % 3;
      const Expr f = Expr::parse(lt::random_smooth(n, rng), n);
      HyperRect b;
      for (int i = 0; i < n; ++i) {
        const double h = half(rng);
        b.center.push_back(centre(rng));
        b.delta.push_back(h);
        b.delta.push_back(-h);
      }
      const Interval enc = eval_interval(f, b.to_intervals());
      for (int k = 0; k < 10000; ++k) {
        if (!enc.contains(f.eval(lt::sample_in(b, rng)))) ++inclusion;
      }
      const auto H = eval_hess_interval(f, b.to_intervals());
      for (int k = 0; k < 1000; ++k) {
        const auto x = lt::sample_in(b, rng);
        std::vector<Dual2<double>> s;
        for (int i = 0; i < n; ++i) s.push_back(Dual2<double>::variable(x[static_cast<std::size_t>(i)], i, n));
        const auto r = f.eval(std::span<const Dual2<double>>(s));
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < n; ++j) {
            if (!H.hessian(static_cast<std::size_t>(i), static_cast<std::size_t>(j)).contains(r.hess(i, j))) ++hessian;
          }
        }
      }
      const auto& x = b.center;
      const auto g = eval_grad(f, x).gradient;
      for (int i = 0; i < n; ++i) {
        const double h = 1e-5;
        auto at = [&](double d) {
          auto y = x;
          y[static_cast<std::size_t>(i)] += d;
          return f.eval(y);
        };
        const double fd = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
        const double gi = g[static_cast<std::size_t>(i)];
        if (std::abs(gi - fd) > 1e-6 * std::max(1.0, std::abs(gi))) ++gradient;
      }
    }
    o.detail << " inclusion misses " << inclusion << ", gradient mismatches " << gradient << ", Hessian misses " << hessian;
    o.require(inclusion == 0 && gradient == 0 && hessian == 0, "all suites clean");
  });

  run(10, "determinism across worker counts", [](Outcome& o) {
    auto cfg = lt::load_config("v_a_2d.json");
    std::string ref;
    double ref_Lbar = 0.0;
    bool same = true;
    for (int w : {1, 4, 16}) {
      cfg.run.workers = w;
      const auto r = run_verify_dt(cfg);
      const auto j = report_to_json(r);
      const std::string dump = j["good"].dump() + j["wrong"].dump() + j["level"].dump() + j["local"].dump();
      const double Lbar = r.level ? r.level->Lbar : std::nan("");
      if (w == 1) {
        ref = dump;
        ref_Lbar = Lbar;
        continue;
      }
      same = same && dump == ref && std::memcmp(&Lbar, &ref_Lbar, sizeof(double)) == 0;
    }
    o.detail << " workers 1/4/16, ledgers and Lbar " << (same ? "identical" : "differ");
    o.require(same, "bit-identical results");
  });

  return failures == 0 ? 0 : 1;
}
