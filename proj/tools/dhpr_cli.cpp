// Experiment runner: generates problems, runs solver comparisons, renders
// convergence plots, and audits communication locality.
//
//   dhpr_cli [global options] gen
//   dhpr_cli [global options] run   [--bundle DIR]
//   dhpr_cli [global options] plot  TRACE.csv... [--output F.svg] [--metric M]
//   dhpr_cli [global options] audit [--bundle DIR]
//
// Global options mirror the JSON config schema (see include/dhpr/config.hpp)
// and override values loaded via --config. DHPR_OUT_DIR overrides the
// config file's out_dir; an explicit --out wins over both.
//
// Exit codes: 0 success, 1 audit failure, 2 config error, 3 a solver
// diverged, 4 IO error.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <string>
#include <vector>

#include "dhpr/config.hpp"
#include "dhpr/errors.hpp"
#include "dhpr/experiment.hpp"
#include "dhpr/svgplot.hpp"

namespace {

struct CliOverrides {
  std::string config_path;
  nlohmann::json patch = nlohmann::json::object();
  bool out_set = false;
};

dhpr::ExperimentConfig assemble_config(const CliOverrides& cli) {
  dhpr::ExperimentConfig cfg;
  if (!cli.config_path.empty()) cfg = dhpr::load_experiment_config(cli.config_path);
  if (const char* env = std::getenv("DHPR_OUT_DIR"); env && *env && !cli.out_set)
    cfg.out_dir = env;
  cfg = dhpr::experiment_from_json(cli.patch, std::move(cfg));
  cfg.validate();
  return cfg;
}

dhpr::DistributedProblem resolve_problem(const dhpr::ExperimentConfig& cfg,
                                         const std::string& bundle) {
  return bundle.empty() ? dhpr::materialize_problem(cfg)
                        : dhpr::load_problem(bundle);
}

// Accumulates "--flag value" pairs into the JSON patch that
// experiment_from_json applies on top of the config file.
void add_patch_options(CLI::App& app, CliOverrides& cli) {
  const auto set = [&cli](std::initializer_list<const char*> path) {
    std::vector<std::string> keys(path.begin(), path.end());
    return [&cli, keys](const nlohmann::json& v) {
      nlohmann::json* node = &cli.patch;
      for (std::size_t i = 0; i + 1 < keys.size(); ++i) node = &(*node)[keys[i]];
      (*node)[keys.back()] = v;
    };
  };

  const auto add_str = [&](const char* flag, auto setter, const char* desc) {
    app.add_option_function<std::string>(
        flag, [setter](const std::string& v) { setter(v); }, desc);
  };
  const auto add_int = [&](const char* flag, auto setter, const char* desc) {
    app.add_option_function<long long>(
        flag, [setter](long long v) { setter(v); }, desc);
  };
  const auto add_real = [&](const char* flag, auto setter, const char* desc) {
    app.add_option_function<double>(
        flag, [setter](double v) { setter(v); }, desc);
  };

  add_str("--family", set({"problem", "family"}), "lasso | group_lasso | logistic");
  add_str("--source", set({"problem", "source"}), "synthetic | libsvm");
  add_str("--data", set({"problem", "path"}), "libsvm data file");
  add_int("--agents", set({"problem", "n_agents"}), "number of agents N");
  add_int("--rows", set({"problem", "m_i"}), "samples per agent m_i");
  add_int("--dim", set({"problem", "p"}), "feature dimension p");
  add_real("--delta", set({"problem", "delta"}), "synthetic noise level");
  add_int("--seed", set({"problem", "seed"}), "problem seed");
  add_str("--graph", set({"graph", "kind"}), "line | random | complete");
  add_real("--connectivity", set({"graph", "connectivity"}), "random graph density");
  add_int("--graph-seed", set({"graph", "seed"}), "graph seed");
  app.add_option_function<std::string>(
      "--solvers",
      [&cli](const std::string& v) {
        std::vector<std::string> names;
        std::string cur;
        for (char c : v + ",") {
          if (c == ',') {
            if (!cur.empty()) names.push_back(cur);
            cur.clear();
          } else {
            cur += c;
          }
        }
        cli.patch["solvers"] = names;
      },
      "comma-separated: dhpr,dual_lhpr,nids,pg_extra");
  add_real("--step-size", set({"baseline_step_size"}),
           "baseline step size (0 = method default)");
  add_real("--tol", set({"tol"}), "stopping tolerance on eta_re");
  add_int("--k-max", set({"k_max"}), "iteration cap");
  add_int("--trace-every", set({"solver", "trace_every"}), "trace row stride");
  add_real("--sigma", set({"solver", "sigma"}), "initial sigma");
  add_int("--threads", set({"solver", "threads"}), "worker threads per solver");
  app.add_option_function<std::string>(
      "--out",
      [&cli](const std::string& v) {
        cli.patch["out_dir"] = v;
        cli.out_set = true;
      },
      "output directory");
}

int dispatch(const std::string& sub, const CliOverrides& cli,
             const std::string& bundle, const std::vector<std::string>& traces,
             const std::string& plot_out, const std::string& metric) {
  if (sub == "plot") {
    std::vector<dhpr::PlotSeries> series;
    series.reserve(traces.size());
    for (const auto& t : traces) series.push_back(dhpr::load_trace_series(t, metric));
    std::string out = plot_out;
    if (out.empty()) {
      dhpr::ExperimentConfig cfg = assemble_config(cli);
      std::filesystem::create_directories(cfg.out_dir);
      out = (std::filesystem::path(cfg.out_dir) / "plot.svg").string();
    }
    dhpr::write_svg(out, dhpr::render_log_plot(series, metric));
    std::printf("wrote %s\n", out.c_str());
    return 0;
  }

  dhpr::ExperimentConfig cfg = assemble_config(cli);
  if (sub == "gen") {
    const std::string dir = dhpr::cmd_gen(cfg);
    std::printf("wrote %s\n", dir.c_str());
    return 0;
  }
  const dhpr::DistributedProblem prob = resolve_problem(cfg, bundle);
  if (sub == "run") {
    const dhpr::RunArtifacts art = dhpr::cmd_run(cfg, prob);
    std::fputs(dhpr::summary_table(cfg, art.outcomes).c_str(), stdout);
    std::printf("wrote %s/summary.json\n", cfg.out_dir.c_str());
    return art.any_diverged ? 3 : 0;
  }
  // audit
  const dhpr::AuditArtifacts art = dhpr::cmd_audit(cfg, prob);
  std::printf("locality audit: %s (%s/audit.json)\n",
              art.passed ? "passed" : "FAILED", cfg.out_dir.c_str());
  return art.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distributed composite optimization experiment runner"};
  app.require_subcommand(1);

  CliOverrides cli;
  app.add_option("--config", cli.config_path, "experiment config JSON");
  add_patch_options(app, cli);

  std::string bundle, plot_out, metric = "eta_re";
  std::vector<std::string> traces;

  CLI::App* gen = app.add_subcommand("gen", "write the problem bundle");
  CLI::App* run = app.add_subcommand("run", "run the selected solvers");
  run->add_option("--bundle", bundle, "load the problem from this bundle dir");
  CLI::App* plot = app.add_subcommand("plot", "render trace CSVs as an SVG");
  plot->add_option("traces", traces, "trace CSV files")->required();
  plot->add_option("--output", plot_out, "output SVG path");
  plot->add_option("--metric", metric, "trace column for the y axis");
  CLI::App* audit = app.add_subcommand("audit", "check communication locality");
  audit->add_option("--bundle", bundle, "load the problem from this bundle dir");
  for (CLI::App* sub : {gen, run, plot, audit}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    return dispatch(app.get_subcommands().front()->get_name(), cli, bundle,
                    traces, plot_out, metric);
  } catch (const dhpr::DivergedError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
}
