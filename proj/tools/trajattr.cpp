// Command-line driver for the trajectory attribution pipeline.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "trajattr/attribution.hpp"
#include "trajattr/error.hpp"
#include "trajattr/pipeline.hpp"
#include "trajattr/render.hpp"
#include "trajattr/validate.hpp"

namespace fs = std::filesystem;
using namespace trajattr;

namespace {

enum ExitCode : int { kOk = 0, kUserError = 1, kPipelineFailure = 2, kValidationFailure = 3 };

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed_override;
  std::string format = "text";
  std::string run_dir;
  std::string state;
};

RunConfig load_config(const Options& opt) {
  RunConfig cfg = RunConfig::load(opt.config);
  if (!opt.out.empty()) cfg.out = opt.out;
  if (opt.seed_override) cfg.override_seeds(*opt.seed_override);
  return cfg;
}

void print_outcomes(const std::vector<StageOutcome>& outcomes) {
  for (const auto& o : outcomes) {
    std::cerr << fmt::format("  {:<15} {}\n", stage_name(o.stage), o.cached ? "cached" : "done");
  }
}

int cmd_stage(const Options& opt, Stage last) {
  const RunConfig cfg = load_config(opt);
  print_outcomes(run_pipeline(cfg, last));
  const RunPaths paths{cfg.out};
  if (last == Stage::Report) {
    const GridLayout layout = cfg.load_layout();
    const ExplanationSuite suite = load_suite(paths, cfg.distance);
    const MetricsReport rep =
        metrics_report(suite, select_eval_states(layout, cfg.eval_states), start_distribution(layout));
    if (opt.format == "csv") {
      std::cout << metrics_csv(rep);
    } else if (opt.format == "json") {
      nlohmann::json rows = nlohmann::json::array();
      auto opt_num = [](const std::optional<double>& v) {
        return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
      };
      for (const auto& r : rep.rows) {
        rows.push_back({{"policy", r.policy},
                        {"initial_value", r.initial_value},
                        {"mean_abs_dq", opt_num(r.mean_abs_dq)},
                        {"action_contrast", opt_num(r.action_contrast)},
                        {"wdist", opt_num(r.wdist)},
                        {"frequency", opt_num(r.frequency)}});
      }
      std::cout << nlohmann::json{{"rows", rows}, {"none_fraction", rep.none_fraction}}.dump(1)
                << "\n";
    } else {
      std::cout << metrics_text(rep);
    }
  }
  std::cerr << "artifacts in " << paths.root.string() << "\n";
  return kOk;
}

int cmd_explain(const Options& opt) {
  const RunPaths paths{opt.run_dir};
  if (!fs::exists(paths.layout()) || !fs::exists(paths.dataset())) {
    throw IncompleteRunError("incomplete run: " + opt.run_dir + " lacks layout.txt or dataset.jsonl");
  }
  const auto cell = parse_cell(opt.state);
  if (!cell) throw ConfigError("state must look like (row,col), got '" + opt.state + "'");
  const GridLayout layout = GridLayout::load(paths.layout().string());
  const Dataset data = read_dataset(paths.dataset().string());
  const Explanation ex = load_explanation(paths, layout, *cell);
  if (opt.format == "svg") {
    const fs::path dir = opt.out.empty() ? paths.root / "explain" : fs::path(opt.out);
    std::cout << fmt::format("state ({},{}) action {} cluster {}\n", cell->row, cell->col,
                             action_name(ex.a_orig),
                             ex.c_final ? std::to_string(*ex.c_final) : "none");
    for (const auto& p : write_explanation_svgs(ex, layout, data, dir)) std::cout << p.string() << "\n";
  } else {
    std::cout << render_explanation_text(ex, layout, data);
  }
  return kOk;
}

int cmd_validate(const Options& opt) {
  const ValidationSummary summary = validate_run(opt.run_dir);
  std::cout << summary.text();
  return summary.ok() ? kOk : kValidationFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attribute offline-RL decisions to clusters of training trajectories"};
  app.require_subcommand(1);
  Options opt;

  auto add_pipeline_flags = [&](CLI::App* sub, const std::vector<std::string>& formats) {
    sub->add_option("--config", opt.config, "Run configuration file")->required();
    sub->add_option("--out", opt.out, "Override the output directory");
    sub->add_option("--seed-override", opt.seed_override, "Use this seed for every stage");
    sub->add_option("--format", opt.format, "Output format")->check(CLI::IsMember(formats));
  };

  std::vector<std::pair<CLI::App*, Stage>> stage_cmds;
  for (Stage s : kAllStages) {
    const std::string name(stage_name(s));
    auto* sub = app.add_subcommand(name, "Run the pipeline up to the '" + name + "' stage");
    add_pipeline_flags(sub, s == Stage::Report ? std::vector<std::string>{"text", "csv", "json"}
                                               : std::vector<std::string>{"text"});
    stage_cmds.emplace_back(sub, s);
  }
  auto* run = app.add_subcommand("run", "Run the whole pipeline and print the metrics table");
  add_pipeline_flags(run, {"text", "csv", "json"});

  auto* explain = app.add_subcommand("explain", "Show the attribution of one state");
  explain->add_option("run_dir", opt.run_dir, "Completed run directory")->required();
  explain->add_option("state", opt.state, "Grid cell as (row,col)")->required();
  explain->add_option("--format", opt.format, "text or svg")->check(CLI::IsMember({"text", "svg"}));
  explain->add_option("--out", opt.out, "Directory for SVG files");

  auto* validate = app.add_subcommand("validate", "Check invariants of a completed run");
  validate->add_option("run_dir", opt.run_dir, "Completed run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUserError;
  }

  try {
    if (run->parsed()) return cmd_stage(opt, Stage::Report);
    for (const auto& [sub, stage] : stage_cmds) {
      if (sub->parsed()) return cmd_stage(opt, stage);
    }
    if (explain->parsed()) return cmd_explain(opt);
    if (validate->parsed()) return cmd_validate(opt);
  } catch (const PipelineError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kPipelineFailure;
  } catch (const Error& e) {
    // Configuration, input and contract errors are the caller's to fix.
    std::cerr << "error: " << e.what() << "\n";
    return kUserError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kPipelineFailure;
  }
  return kUserError;
}
