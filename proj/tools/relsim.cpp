// relsim: import corpora, tune, run seeded campaigns, and self-check.
//
// Exit codes: 0 success, 1 configuration error, 2 data error, 3 run failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "relsim/autodiff.hpp"
#include "relsim/campaign.hpp"
#include "relsim/checks.hpp"
#include "relsim/config.hpp"
#include "relsim/error.hpp"
#include "relsim/importers.hpp"

namespace fs = std::filesystem;
using namespace relsim;

namespace {

enum ExitCode { kOk = 0, kConfigError = 1, kDataError = 2, kRunFailure = 3 };

struct Overrides {
  std::string config;
  std::vector<std::string> settings;  // key=value, applied in order
  std::optional<std::string> dataset, preset, out;
  std::vector<std::string> regimes;
  std::optional<double> lr;
  std::optional<int> epochs;
  std::optional<std::size_t> batch_size, runs, jobs;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> loss_weights;
  bool freeze_embeddings = false;
};

void add_experiment_flags(CLI::App& cmd, Overrides& o) {
  cmd.add_option("--config", o.config, "key = value configuration file");
  cmd.add_option("--dataset", o.dataset, "directory holding train.tsv, dev.tsv, test.tsv");
  cmd.add_option("--preset", o.preset, "relation preset: activity, sick, typed, synthetic");
  cmd.add_option("--regime", o.regimes, "single, multitask or multilabel (repeatable)");
  cmd.add_option("--lr", o.lr, "learning rate");
  cmd.add_option("--epochs", o.epochs, "training epochs");
  cmd.add_option("--batch-size", o.batch_size, "mini-batch size");
  cmd.add_option("--runs", o.runs, "seeded runs per regime");
  cmd.add_option("--seed", o.seed, "base seed (RELSIM_SEED overrides)");
  cmd.add_option("--loss-weight", o.loss_weights, "relation=weight (repeatable)");
  cmd.add_flag("--freeze-embeddings", o.freeze_embeddings, "keep word embeddings fixed");
  cmd.add_option("--jobs", o.jobs, "parallel runs (default: available processors)");
  cmd.add_option("--out", o.out, "output directory");
  cmd.add_option("--set", o.settings, "any configuration key=value (repeatable)");
}

std::pair<std::string, std::string> split_assignment(const std::string& text, const std::string& flag) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError(flag + " expects name=value, got '" + text + "'");
  return {text.substr(0, eq), text.substr(eq + 1)};
}

ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  for (const auto& s : o.settings) {
    const auto [k, v] = split_assignment(s, "--set");
    apply_setting(c, k, v);
  }
  if (o.dataset) c.dataset = *o.dataset;
  if (o.preset) apply_setting(c, "preset", *o.preset);
  if (!o.regimes.empty()) {
    std::string joined;
    for (const auto& r : o.regimes) joined += (joined.empty() ? "" : ",") + r;
    apply_setting(c, "regimes", joined);
  }
  if (o.lr) c.train.lr = *o.lr;
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.batch_size) c.train.batch_size = *o.batch_size;
  if (o.runs) c.runs = *o.runs;
  if (o.seed) c.train.seed = *o.seed;
  if (const char* env = std::getenv("RELSIM_SEED"); env != nullptr && *env != '\0') apply_setting(c, "seed", env);
  for (const auto& w : o.loss_weights) {
    const auto [rel, v] = split_assignment(w, "--loss-weight");
    apply_setting(c, "loss_weight." + rel, v);
  }
  if (o.freeze_embeddings) c.model.encoder.freeze_embeddings = true;
  if (o.jobs) c.jobs = *o.jobs;
  if (o.out) c.out = *o.out;
  c.validate();
  return c;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  return f;
}

void write_manifest_file(const ExperimentConfig& c) {
  fs::create_directories(c.out);
  auto f = open_output(fs::path(c.out) / "manifest.conf");
  write_manifest(f, c);
}

int cmd_run(const Overrides& o) {
  const ExperimentConfig c = resolve(o);
  const DatasetBundle bundle = load_dataset(c);
  const PreparedData data = prepare_data(bundle, c);
  write_manifest_file(c);
  const fs::path out(c.out);
  std::cerr << "running " << c.runs << " seeds x " << c.regimes.size() << " regimes on " << c.resolved_jobs()
            << " threads\n";
  CampaignResult result;
  try {
    result = run_campaign(data, c, [](const RunLogEntry& e) {
      std::cerr << "  " << e.regime << " seed " << e.seed << ": " << e.status << " (" << std::fixed
                << std::setprecision(1) << e.wall_seconds << " s)\n";
    });
  } catch (const CampaignFailure& f) {
    auto log = open_output(out / "runs.log");
    write_run_log(log, f.log());
    std::cerr << "error: " << f.what() << "; see " << (out / "runs.log").string() << "\n";
    return kRunFailure;
  }
  {
    auto log = open_output(out / "runs.log");
    write_run_log(log, result.log);
    log << "wall seconds " << result.wall_seconds << ", cpu seconds " << result.cpu_seconds << "\n";
  }
  {
    auto csv = open_output(out / "results.csv");
    write_results_csv(csv, result.results, data.relations);
  }
  const ComparisonTable table = compare_regimes(result.results, data.relations, c.comparison);
  const std::string md = render_table(table);
  {
    auto f = open_output(out / "table.md");
    f << md;
  }
  std::cout << md;
  std::cerr << "wrote " << (out / "results.csv").string() << " in " << std::fixed << std::setprecision(1)
            << result.wall_seconds << " s\n";
  return kOk;
}

int cmd_tune(const Overrides& o) {
  const ExperimentConfig c = resolve(o);
  const DatasetBundle bundle = load_dataset(c);
  const PreparedData data = prepare_data(bundle, c);
  write_manifest_file(c);
  const TuneResult r = run_tune(data, c);
  const fs::path out(c.out);
  {
    auto f = open_output(out / "tune_trace.csv");
    write_tune_trace(f, r.trace);
  }
  std::ostringstream summary;
  for (const auto& b : r.best) {
    summary << to_string(b.regime) << ": lr = " << format_score(b.lr) << ", epochs = " << b.epochs
            << ", dev score = " << format_score(b.score) << "\n";
  }
  auto f = open_output(out / "tune.txt");
  f << summary.str();
  std::cout << summary.str();
  return kOk;
}

int cmd_import(const std::string& format, const std::string& input, const std::string& output) {
  const std::size_t n = import_file(format, input, output);
  std::cout << n << " pairs written to " << output << "\n";
  return kOk;
}

int cmd_check(const CheckOptions& options, const std::string& filter, double perturb) {
  if (perturb != 0.0) ad::testing::set_backward_perturbation(perturb);
  const auto reports = run_checks(options, filter);
  if (reports.empty()) throw ConfigError("no check matches '" + filter + "'");
  std::size_t failed = 0;
  for (const auto& r : reports) {
    std::cout << (r.outcome.passed ? "PASS " : "FAIL ") << r.name << "  " << r.outcome.detail << "  ["
              << std::fixed << std::setprecision(2) << r.seconds << " s]\n";
    failed += r.outcome.passed ? 0 : 1;
  }
  std::cout << reports.size() - failed << "/" << reports.size() << " checks passed\n";
  return failed == 0 ? kOk : kRunFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-relational sentence similarity: single, multi-task and multi-label training"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Overrides run_opts, tune_opts;
  auto* run = app.add_subcommand("run", "Seeded campaign: results.csv, table.md, manifest.conf, runs.log");
  add_experiment_flags(*run, run_opts);
  auto* tune = app.add_subcommand("tune", "Grid search over lr and epochs on the dev split");
  add_experiment_flags(*tune, tune_opts);

  std::string format, input, output;
  auto* imp = app.add_subcommand("import", "Convert a source corpus to pair TSV");
  imp->add_option("--format", format, "activity, sick, typed or generic")->required();
  imp->add_option("--input", input, "source file")->required();
  imp->add_option("--output", output, "TSV to write")->required();

  CheckOptions check_opts;
  std::string filter;
  double perturb = 0.0;
  auto* check = app.add_subcommand("check", "Run the built-in verification battery");
  check->add_option("--points", check_opts.points, "random points per gradient check");
  check->add_option("--mc-draws", check_opts.mc_draws, "Monte Carlo draws per t-test fixture");
  check->add_option("--filter", filter, "only checks whose names start with this prefix");
  check->add_option("--perturb-backward", perturb, "relative error injected into one backward rule (negative control)")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (*run) return cmd_run(run_opts);
    if (*tune) return cmd_tune(tune_opts);
    if (*imp) return cmd_import(format, input, output);
    if (*check) return cmd_check(check_opts, filter, perturb);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRunFailure;
  }
  return kOk;
}
