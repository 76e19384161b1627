// Command-line front end: verify-dt, verify-ct, levelset, export.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "lyapsample/pipeline.hpp"

namespace fs = std::filesystem;
using namespace lyapsample;

namespace {

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

struct Overrides {
  int workers = 0;
  double delta_min = 0.0;
  int M = 0;
  std::string bound_method;
  std::string output;
};

RunConfig load_config(const std::string& path, const Overrides& o) {
  json j = read_json(path);
  RunConfig c = config_from_json(j);
  if (o.workers > 0) c.run.workers = o.workers;
  if (o.delta_min > 0.0) c.search.delta_min = o.delta_min;
  if (o.M > 0) {
    c.candidate.M = o.M;
    c.candidate.M_max = std::max(c.candidate.M_max, o.M);
  }
  if (!o.bound_method.empty()) c.run.bound_method = parse_bound_method(o.bound_method);
  if (!o.output.empty()) c.run.output = o.output;
  c.validate();
  return c;
}

std::string fmt(double v) {
  if (!std::isfinite(v)) return "inf";
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

void summarize(const RunReport& r) {
  std::cout << "verdict      " << r.verdict << '\n';
  std::cout << "M            " << r.M_final << '\n';
  std::cout << "boxes        good " << r.ledger.good.size() << ", wrong " << r.ledger.wrong.size() << ", explored "
            << r.stats.explored << ", rejected " << r.stats.rejected << '\n';
  if (r.local) {
    std::cout << "local        level " << fmt(r.local->level_L) << (r.local->verified ? " (verified)" : " (NOT verified)")
              << '\n';
  }
  if (r.level) {
    std::cout << "level        Lbar1 " << fmt(r.level->Lbar1) << ", Lbar2 " << fmt(r.level->Lbar2) << ", Lbar "
              << fmt(r.level->Lbar) << '\n';
  }
  std::cout << "time         " << fmt(r.timings.total) << " s\n";
  if (!r.hint.empty()) std::cout << "hint         " << r.hint << '\n';
  for (const auto& n : r.notes) std::cout << "note         " << n << '\n';
}

int finish(const RunReport& r) {
  write_text(r.config.run.output, report_to_json(r).dump(1) + "\n");
  summarize(r);
  std::cout << "report       " << r.config.run.output << '\n';
  return exit_code(r);
}

std::vector<std::vector<double>> parse_seeds(const std::string& text, int n) {
  // "x1,x2;y1,y2"
  std::vector<std::vector<double>> out;
  std::stringstream all(text);
  std::string item;
  while (std::getline(all, item, ';')) {
    if (item.empty()) continue;
    std::vector<double> p;
    std::stringstream one(item);
    std::string v;
    while (std::getline(one, v, ',')) p.push_back(std::stod(v));
    if (static_cast<int>(p.size()) != n) throw ConfigError("seed \"" + item + "\" has the wrong dimension");
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sampling-based Lyapunov verification and domain-of-attraction estimation"};
  app.require_subcommand(1);

  Overrides ov;
  auto add_overrides = [&](CLI::App* sub) {
    sub->add_option("--workers", ov.workers, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--delta-min", ov.delta_min, "finest half width")->check(CLI::PositiveNumber);
    sub->add_option("--M", ov.M, "horizon (also raises M_max)")->check(CLI::PositiveNumber);
    sub->add_option("--bound-method", ov.bound_method, "split | combined | best")
        ->check(CLI::IsMember({"split", "combined", "best"}));
    sub->add_option("-o,--output", ov.output, "report path");
  };

  std::string config_path;
  std::string with_path;

  auto* dt = app.add_subcommand("verify-dt", "discrete pipeline: certify, local set, level estimate");
  dt->add_option("config", config_path, "config JSON")->required();
  add_overrides(dt);

  auto* ct = app.add_subcommand("verify-ct", "continuous-time validation of a discrete result");
  ct->add_option("config", config_path, "config JSON")->required();
  ct->add_option("--with", with_path, "report of the discrete run")->required();
  add_overrides(ct);

  auto* lv = app.add_subcommand("levelset", "recompute the level estimate of a report");
  lv->add_option("config", config_path, "config JSON")->required();
  lv->add_option("--with", with_path, "report to start from")->required();
  add_overrides(lv);

  std::string report_path;
  std::string format = "csv";
  std::string export_out;
  std::string seeds_text;
  auto* ex = app.add_subcommand("export", "plot data: boxes, level samples, trajectories");
  ex->add_option("report", report_path, "report JSON")->required();
  ex->add_option("--format", format, "csv | json")->check(CLI::IsMember({"csv", "json"}));
  ex->add_option("-o,--output", export_out, "output directory (csv) or file (json)");
  ex->add_option("--seeds", seeds_text, "trajectory starts, e.g. \"0.5,0.1;-0.2,0.3\"");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*dt) return finish(run_verify_dt(load_config(config_path, ov)));
    if (*ct) {
      const auto prior = report_from_json(read_json(with_path));
      return finish(run_verify_ct(load_config(config_path, ov), prior));
    }
    if (*lv) {
      const auto prior = report_from_json(read_json(with_path));
      return finish(run_levelset(load_config(config_path, ov), prior));
    }
    if (*ex) {
      const auto rep = report_from_json(read_json(report_path));
      const auto seeds = seeds_text.empty() ? std::vector<std::vector<double>>{}
                                            : parse_seeds(seeds_text, rep.config.system.dimension);
      const auto data = export_plot_data(rep, seeds);
      if (format == "json") {
        const fs::path out = export_out.empty() ? fs::path("plot_data.json") : fs::path(export_out);
        write_text(out, data.as_json.dump(1) + "\n");
        std::cout << "wrote " << out.string() << '\n';
      } else {
        const fs::path dir = export_out.empty() ? fs::path("plot_data") : fs::path(export_out);
        write_text(dir / "boxes.csv", data.boxes_csv);
        write_text(dir / "level.csv", data.level_csv);
        write_text(dir / "trajectories.csv", data.trajectories_csv);
        std::cout << "wrote " << (dir / "boxes.csv").string() << ", level.csv, trajectories.csv\n";
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
