#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "lyapsample/config.hpp"
#include "lyapsample/levelset.hpp"
#include "lyapsample/localyap.hpp"
#include "lyapsample/verifier.hpp"

namespace lyapsample {

inline constexpr const char* kReportVersion = "1";

struct LocalSummary {
  std::vector<Eigen::MatrixXd> A_lin;
  Eigen::MatrixXd P_L;
  double level_L = 0.0;
  bool verified = false;
  std::size_t good = 0;
  std::size_t wrong = 0;
  std::string note;
};

struct LevelSummary {
  double Lbar1 = std::numeric_limits<double>::infinity();
  double Lbar2 = std::numeric_limits<double>::infinity();
  double Lbar = std::numeric_limits<double>::infinity();
  std::size_t obstacles = 0;
  std::size_t boundary = 0;
  std::size_t skipped = 0;
  std::size_t excused = 0;
  bool skipped_blocking = false;
  bool L_inside_sublevel = false;
  bool sublevel_ok = false;
  std::size_t sublevel_gaps = 0;
  std::size_t sublevel_inside_L = 0;
  std::size_t sublevel_by_reach = 0;
};

struct Timings {
  double verify = 0.0;
  double local = 0.0;
  double level = 0.0;
  double total = 0.0;
};

struct RunReport {
  std::string version = kReportVersion;
  std::string kind = "discrete";  // discrete | continuous
  RunConfig config;
  std::string config_digest;
  int M_final = 0;
  std::string verdict;  // kl-stable-on-W | certified-A-only | halted
  std::string hint;
  SampleLedger ledger;
  RunStats stats;
  std::optional<LocalSummary> local;
  std::optional<LevelSummary> level;
  Timings timings;
  std::vector<std::string> notes;
};

/// 0 for a KL-stability verdict, 2 otherwise (errors exit with 1).
inline int exit_code(const RunReport& r) { return r.verdict == "kl-stable-on-W" ? 0 : 2; }

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// JSON has no infinity; unbounded estimates are written as null.
inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
inline double from_finite_or_null(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

inline json record_to_json(const SampleRecord& r) {
  return {{"c", r.box.center}, {"delta", r.box.delta}, {"F", r.F_value}, {"gamma", r.gamma}, {"flag", to_string(r.flag)}};
}

inline SampleRecord record_from_json(const json& j) {
  SampleRecord r;
  r.box.center = j.at("c").get<std::vector<double>>();
  r.box.delta = j.at("delta").get<std::vector<double>>();
  validate_delta(r.box.delta);
  r.tau = tau_of(r.box.delta);
  r.F_value = j.at("F").get<double>();
  r.gamma = j.at("gamma").get<double>();
  const auto f = j.value("flag", std::string("none"));
  r.flag = f == "domain-error"      ? RecordFlag::kDomainError
           : f == "branch-overflow" ? RecordFlag::kBranchOverflow
           : f == "coverage"        ? RecordFlag::kCoverage
                                    : RecordFlag::kNone;
  return r;
}

inline std::optional<Ellipsoid> local_set(const RunReport& r) {
  if (!r.local || !r.local->verified) return std::nullopt;
  return Ellipsoid{r.local->P_L, r.local->level_L};
}

}  // namespace detail

inline json report_to_json(const RunReport& r) {
  json j;
  j["version"] = r.version;
  j["kind"] = r.kind;
  j["config_digest"] = r.config_digest;
  j["M_final"] = r.M_final;
  j["verdict"] = r.verdict;
  if (!r.hint.empty()) j["hint"] = r.hint;
  j["good"] = json::array();
  for (const auto& g : r.ledger.good) j["good"].push_back(detail::record_to_json(g));
  j["wrong"] = json::array();
  for (const auto& w : r.ledger.wrong) j["wrong"].push_back(detail::record_to_json(w));
  j["counts"] = {{"good", r.ledger.good.size()},
                 {"wrong", r.ledger.wrong.size()},
                 {"explored", r.stats.explored},
                 {"rejected", r.stats.rejected},
                 {"levels", r.stats.levels}};
  if (r.local) {
    json A = json::array();
    for (const auto& m : r.local->A_lin) A.push_back(detail::matrix_to_json(m));
    j["local"] = {{"A_lin", A},
                  {"P_L", detail::matrix_to_json(r.local->P_L)},
                  {"level_L", r.local->level_L},
                  {"verified", r.local->verified},
                  {"good", r.local->good},
                  {"wrong", r.local->wrong},
                  {"note", r.local->note}};
  } else {
    j["local"] = nullptr;
  }
  if (r.level) {
    const auto& l = *r.level;
    j["level"] = {{"Lbar1", detail::finite_or_null(l.Lbar1)},
                  {"Lbar2", detail::finite_or_null(l.Lbar2)},
                  {"Lbar", detail::finite_or_null(l.Lbar)},
                  {"obstacles", l.obstacles},
                  {"boundary", l.boundary},
                  {"skipped", l.skipped},
                  {"excused", l.excused},
                  {"skipped_blocking", l.skipped_blocking},
                  {"L_inside_sublevel", l.L_inside_sublevel},
                  {"sublevel_ok", l.sublevel_ok},
                  {"sublevel_gaps", l.sublevel_gaps},
                  {"sublevel_inside_L", l.sublevel_inside_L},
                  {"sublevel_by_reach", l.sublevel_by_reach}};
  } else {
    j["level"] = nullptr;
  }
  j["timings"] = {{"verify", r.timings.verify},
                  {"local", r.timings.local},
                  {"level", r.timings.level},
                  {"total", r.timings.total}};
  j["notes"] = r.notes;
  j["config"] = config_to_json(r.config);
  return j;
}

inline RunReport report_from_json(const json& j) {
  RunReport r;
  r.version = j.at("version").get<std::string>();
  if (r.version != kReportVersion) throw ConfigError("unsupported report version " + r.version);
  r.kind = j.value("kind", std::string("discrete"));
  r.config = config_from_json(j.at("config"));
  r.config_digest = j.at("config_digest").get<std::string>();
  r.M_final = j.at("M_final").get<int>();
  r.verdict = j.at("verdict").get<std::string>();
  r.hint = j.value("hint", std::string());
  for (const auto& g : j.at("good")) r.ledger.good.push_back(detail::record_from_json(g));
  for (const auto& w : j.at("wrong")) r.ledger.wrong.push_back(detail::record_from_json(w));
  const auto& c = j.at("counts");
  r.stats.explored = c.value("explored", std::size_t{0});
  r.stats.rejected = c.value("rejected", std::size_t{0});
  r.stats.levels = c.value("levels", 0);
  if (!j.at("local").is_null()) {
    const auto& lj = j["local"];
    const int n = r.config.system.dimension;
    LocalSummary l;
    for (const auto& A : lj.at("A_lin")) l.A_lin.push_back(detail::matrix_from_json(A, n, "local.A_lin"));
    l.P_L = detail::matrix_from_json(lj.at("P_L"), n, "local.P_L");
    l.level_L = lj.at("level_L").get<double>();
    l.verified = lj.at("verified").get<bool>();
    l.good = lj.value("good", std::size_t{0});
    l.wrong = lj.value("wrong", std::size_t{0});
    l.note = lj.value("note", std::string());
    r.local = std::move(l);
  }
  if (!j.at("level").is_null()) {
    const auto& lj = j["level"];
    LevelSummary l;
    l.Lbar1 = detail::from_finite_or_null(lj.at("Lbar1"));
    l.Lbar2 = detail::from_finite_or_null(lj.at("Lbar2"));
    l.Lbar = detail::from_finite_or_null(lj.at("Lbar"));
    l.obstacles = lj.value("obstacles", std::size_t{0});
    l.boundary = lj.value("boundary", std::size_t{0});
    l.skipped = lj.value("skipped", std::size_t{0});
    l.excused = lj.value("excused", std::size_t{0});
    l.skipped_blocking = lj.value("skipped_blocking", false);
    l.L_inside_sublevel = lj.value("L_inside_sublevel", false);
    l.sublevel_ok = lj.value("sublevel_ok", false);
    l.sublevel_gaps = lj.value("sublevel_gaps", std::size_t{0});
    l.sublevel_inside_L = lj.value("sublevel_inside_L", std::size_t{0});
    l.sublevel_by_reach = lj.value("sublevel_by_reach", std::size_t{0});
    r.level = l;
  }
  if (j.contains("timings")) {
    const auto& t = j["timings"];
    r.timings = {t.value("verify", 0.0), t.value("local", 0.0), t.value("level", 0.0), t.value("total", 0.0)};
  }
  if (j.contains("notes")) r.notes = j["notes"].get<std::vector<std::string>>();
  return r;
}

/// Whether the whole local set L lies in {W < Lbar}: W is bounded over
/// boxes covering L, refining the ones that fail.
inline bool ellipsoid_in_sublevel(const Objective& W, const Ellipsoid& L, double Lbar, long budget = 20000) {
  if (!(L.level > 0.0) || !std::isfinite(Lbar)) return false;
  const auto r = ellipsoid_half_widths(L.P, L.level);
  std::vector<HyperRect> queue{symmetric_box(std::vector<double>(r.size(), 0.0), r)};
  while (!queue.empty()) {
    HyperRect b = std::move(queue.back());
    queue.pop_back();
    const auto X = b.to_intervals();
    if (quadratic_form(L.P, std::span<const Interval>(X)).lo() > L.level) continue;  // misses L
    double hi = -rounding::kInf;
    try {
      for (const auto& seq : enumerate_box_branches(*W.sys, X, W.horizon(), false)) {
        hi = std::max(hi, objective_on_branch(W, seq, std::span<const Interval>(X)).hi());
      }
    } catch (const std::exception&) {
      hi = rounding::kInf;
    }
    if (hi < Lbar) continue;
    if (--budget < 0 || max_abs_delta(b.delta) < 1e-9) return false;
    for (auto& c : detail::split_box(b, RefineRule::kAll)) queue.push_back(std::move(c));
  }
  return true;
}

namespace detail {

inline LocalSummary run_local(const RunConfig& cfg, std::shared_ptr<const PiecewiseSystem> dt,
                              std::vector<std::string>& notes) {
  const auto& ls = *cfg.local;
  LocalSummary out;
  const HyperRect N1 = box_from_bounds(ls.N1_lower, ls.N1_upper);
  try {
    out.A_lin = linearize(*dt);
    const Eigen::MatrixXd Q = ls.Q ? *ls.Q : Eigen::MatrixXd::Identity(dt->dim(), dt->dim());
    out.P_L = ls.P_L ? *ls.P_L : common_dlyap(out.A_lin, Q);
    double dmin = rounding::kInf;
    for (int i = 0; i < N1.dim(); ++i) dmin = std::min({dmin, N1.upper_offset(i), -N1.lower_offset(i)});
    const double local_delta = ls.delta_min ? *ls.delta_min : dmin / 8.0;
    const auto lc = verify_local(dt, out.P_L, N1, local_delta, ls.rho, cfg.run.bound_method, cfg.run.workers);
    out.level_L = lc.level_L;
    out.verified = lc.verified;
    out.good = lc.good;
    out.wrong = lc.wrong;
    out.note = lc.note;
  } catch (const NotLocallyStableError& e) {
    out.note = e.what();
  }
  if (!out.verified) notes.push_back("no verified local invariant set: " + out.note);
  return out;
}

inline void assemble_level(RunReport& rep, const Objective& W, const std::optional<Ellipsoid>& L, bool reach_excusal) {
  const auto& cfg = rep.config;
  const auto S = box_from_bounds(cfg.search.lower, cfg.search.upper);
  LevelSummary ls;
  if (rep.ledger.good.empty()) {
    rep.level = ls;
    return;
  }
  const auto est = estimate_level(W, rep.ledger, S, cfg.search.boundary_spacing, cfg.search.delta_min, L,
                                  cfg.run.workers, cfg.run.bound_method, reach_excusal, cfg.search.level_refine_depth);
  ls.Lbar1 = est.Lbar1;
  ls.Lbar2 = est.Lbar2;
  ls.Lbar = est.Lbar;
  ls.obstacles = est.obstacles.size();
  ls.boundary = est.boundary.size();
  ls.skipped = est.skipped;
  ls.excused = est.excused;
  ls.skipped_blocking = est.skipped_blocking;
  if (est.skipped > 0) {
    rep.notes.push_back(std::to_string(est.skipped) + " level samples could not be bounded and were skipped");
  }
  const Ellipsoid none{Eigen::MatrixXd::Identity(W.sys->dim(), W.sys->dim()), 0.0};
  if (L) ls.L_inside_sublevel = ellipsoid_in_sublevel(W, *L, est.Lbar);
  if (std::isfinite(est.Lbar)) {
    const auto f1 = check_sublevel_in_A(W, est.Lbar, L ? *L : none, rep.ledger,
                                           reach_excusal ? cfg.search.delta_min / 4.0 : 0.0, cfg.run.workers,
                                           cfg.search.level_refine_depth);
    ls.sublevel_ok = f1.ok;
    ls.sublevel_gaps = f1.gaps.size();
    ls.sublevel_inside_L = f1.inside_L;
    ls.sublevel_by_reach = f1.closed_by_reach;
  }
  rep.level = ls;
}

inline void decide(RunReport& rep, bool have_L) {
  const auto& l = *rep.level;
  const bool stable = std::isfinite(l.Lbar) && l.Lbar > 0.0 && have_L && l.L_inside_sublevel && l.sublevel_ok &&
                      !l.skipped_blocking;
  rep.verdict = stable ? "kl-stable-on-W" : "certified-A-only";
  if (!stable) {
    if (!std::isfinite(l.Lbar)) rep.notes.push_back("level estimate unbounded: no obstacle or boundary sample");
    if (!have_L) rep.notes.push_back("without a local invariant set the hole around the origin stays undecided");
    if (have_L && !l.L_inside_sublevel) rep.notes.push_back("L is not inside {W < Lbar}");
    if (!l.sublevel_ok) {
      rep.notes.push_back(std::to_string(l.sublevel_gaps) + " undecided boxes meet {W < Lbar} and are not handled by L");
    }
  }
}

}  // namespace detail

/// Discrete pipeline: horizon search, local set, level estimate, verdict.
inline RunReport run_verify_dt(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  RunReport rep;
  rep.config = cfg;
  rep.config_digest = config_digest(cfg);
  const auto sys = build_systems(cfg);
  const VerifyConfig vc = to_verify_config(cfg);
  if (sys.ct) rep.notes.push_back("continuous system verified through its Euler discretization");

  auto t = std::chrono::steady_clock::now();
  const Certificate cert = find_M_and_W(vc, sys.dt, CandidateV{cfg.candidate.P, cfg.candidate.rho});
  rep.timings.verify = detail::seconds_since(t);
  rep.M_final = cert.M_final;
  rep.ledger = cert.ledger;
  rep.stats = cert.stats;
  if (cert.verdict == "halted") {
    rep.verdict = "halted";
    rep.hint = cert.hint;
    rep.timings.total = detail::seconds_since(t0);
    return rep;
  }

  t = std::chrono::steady_clock::now();
  if (cfg.local) rep.local = detail::run_local(cfg, sys.dt, rep.notes);
  rep.timings.local = detail::seconds_since(t);

  t = std::chrono::steady_clock::now();
  const auto W = w_objective(ObjectiveKind::kWValue, sys.dt, cfg.candidate.P, cert.M_final, cfg.candidate.rho);
  const auto L = detail::local_set(rep);
  detail::assemble_level(rep, W, L, true);
  rep.timings.level = detail::seconds_since(t);
  detail::decide(rep, L.has_value());
  rep.timings.total = detail::seconds_since(t0);
  return rep;
}

/// Continuous-time validation of the W found by a discrete run: dW/dt < 0
/// on boxes of S, then the level estimate on the new certified set.
inline RunReport run_verify_ct(const RunConfig& cfg, const RunReport& prior) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto sys = build_systems(cfg);
  if (!sys.ct) throw ConfigError("verify-ct needs a continuous system");
  if (prior.verdict == "halted" || prior.M_final < 1) throw ConfigError("prior report has no W (discrete run halted)");
  if (prior.config_digest != config_digest(prior.config)) throw ConfigError("prior report is inconsistent");

  RunReport rep;
  rep.kind = "continuous";
  rep.config = cfg;
  rep.config_digest = config_digest(cfg);
  rep.M_final = prior.M_final;
  rep.local = prior.local;
  rep.notes.push_back("local set L taken from the discrete run (Euler-based local analysis)");

  auto t = std::chrono::steady_clock::now();
  const Certificate cert = verify_ct(to_verify_config(cfg), sys.dt, sys.ct, cfg.candidate.P, prior.M_final);
  rep.timings.verify = detail::seconds_since(t);
  rep.ledger = cert.ledger;
  rep.stats = cert.stats;
  if (cert.verdict == "halted") {
    rep.verdict = "halted";
    rep.hint = cert.hint;
    rep.timings.total = detail::seconds_since(t0);
    return rep;
  }
  t = std::chrono::steady_clock::now();
  const auto W = w_objective(ObjectiveKind::kWValue, sys.dt, cfg.candidate.P, prior.M_final, cfg.candidate.rho);
  const auto L = detail::local_set(rep);
  detail::assemble_level(rep, W, L, false);  // discrete reach says nothing about the flow
  rep.timings.level = detail::seconds_since(t);
  detail::decide(rep, L.has_value());
  rep.timings.total = detail::seconds_since(t0);
  return rep;
}

/// Recomputes the level estimate of an existing report (e.g. with another
/// boundary spacing in cfg).
inline RunReport run_levelset(const RunConfig& cfg, const RunReport& prior) {
  if (prior.verdict == "halted") throw ConfigError("prior report has no certified set");
  const auto t0 = std::chrono::steady_clock::now();
  RunReport rep = prior;
  rep.config = cfg;
  rep.config_digest = config_digest(cfg);
  rep.notes.clear();
  const auto sys = build_systems(cfg);
  const auto W = w_objective(ObjectiveKind::kWValue, sys.dt, cfg.candidate.P, prior.M_final, cfg.candidate.rho);
  const auto L = detail::local_set(rep);
  detail::assemble_level(rep, W, L, prior.kind == "discrete");
  detail::decide(rep, L.has_value());
  rep.timings.level = detail::seconds_since(t0);
  return rep;
}

// ---------------------------------------------------------------------------
// Plot data.

struct ExportData {
  std::string boxes_csv;
  std::string level_csv;
  std::string trajectories_csv;
  json as_json;
};

inline ExportData export_plot_data(const RunReport& rep, std::vector<std::vector<double>> seeds = {}) {
  const int n = rep.config.system.dimension;
  ExportData out;
  std::ostringstream boxes;
  boxes.precision(17);
  boxes << "status";
  for (int i = 0; i < n; ++i) boxes << ",c" << i + 1;
  for (int i = 0; i < n; ++i) boxes << ",dplus" << i + 1 << ",dminus" << i + 1;
  boxes << ",F_value,gamma,flag\n";
  json jb = json::array();
  for (const auto* group : {&rep.ledger.good, &rep.ledger.wrong}) {
    const char* status = group == &rep.ledger.good ? "good" : "wrong";
    for (const auto& r : *group) {
      boxes << status;
      for (double c : r.box.center) boxes << ',' << c;
      for (double d : r.box.delta) boxes << ',' << d;
      boxes << ',' << r.F_value << ',' << r.gamma << ',' << to_string(r.flag) << '\n';
      auto jr = detail::record_to_json(r);
      jr["status"] = status;
      jb.push_back(std::move(jr));
    }
  }
  out.boxes_csv = boxes.str();

  std::ostringstream level;
  level.precision(17);
  for (int i = 0; i < n; ++i) level << (i ? "," : "") << 'x' << i + 1;
  level << ",W,inside\n";
  json jl = json::array();
  std::ostringstream traj;
  traj.precision(17);
  traj << "seed,step";
  for (int i = 0; i < n; ++i) traj << ",x" << i + 1;
  traj << '\n';
  json jt = json::array();

  if (rep.M_final >= 1 && !rep.ledger.good.empty()) {
    const auto sys = build_systems(rep.config);
    const auto W = w_objective(ObjectiveKind::kWValue, sys.dt, rep.config.candidate.P, rep.M_final);
    const double Lbar = rep.level ? rep.level->Lbar : std::numeric_limits<double>::quiet_NaN();
    // Grid over S: fine in 1-2 dimensions, coarse beyond.
    const int per_axis = n <= 2 ? 101 : (n == 3 ? 21 : 7);
    std::vector<int> idx(static_cast<std::size_t>(n), 0);
    const auto& lo = rep.config.search.lower;
    const auto& hi = rep.config.search.upper;
    for (;;) {
      std::vector<double> x(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        x[ui] = lo[ui] + (hi[ui] - lo[ui]) * idx[ui] / (per_axis - 1);
      }
      try {
        const double w = objective_at(W, x);
        const bool inside = w < Lbar;
        for (double v : x) level << v << ',';
        level << w << ',' << (inside ? 1 : 0) << '\n';
        jl.push_back({{"x", x}, {"W", w}, {"inside", inside}});
      } catch (const std::exception&) {
        // points outside the domain of the fields are left out
      }
      int i = 0;
      for (; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        if (++idx[ui] < per_axis) break;
        idx[ui] = 0;
      }
      if (i == n) break;
    }
    if (seeds.empty()) seeds = rep.config.run.seeds;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      std::vector<double> x = seeds[s];
      json path = json::array();
      for (int k = 0; k <= rep.config.run.trajectory_steps; ++k) {
        traj << s << ',' << k;
        for (double v : x) traj << ',' << v;
        traj << '\n';
        path.push_back(x);
        try {
          x = step(*sys.dt, x, std::nullopt);
        } catch (const std::exception&) {
          x = step(*sys.dt, x, region_of(*sys.dt, x).front());  // boundary tie: follow the first region
        }
        if (!std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); })) break;
      }
      jt.push_back({{"seed", seeds[s]}, {"path", path}});
    }
  }
  out.level_csv = level.str();
  out.trajectories_csv = traj.str();
  out.as_json = {{"boxes", jb}, {"level_samples", jl}, {"trajectories", jt}};
  return out;
}

}  // namespace lyapsample
