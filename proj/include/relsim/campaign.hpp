#pragma once

// Seeded multi-run campaigns and the hyperparameter grid search, executed
// on a pool of worker threads. Each run owns its model; results are merged
// after all workers finish, in (regime, seed) order.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "relsim/config.hpp"
#include "relsim/data.hpp"
#include "relsim/evaluation.hpp"
#include "relsim/regimes.hpp"

namespace relsim {

// Synthetic generation or train/dev/test.tsv from the dataset directory
// (dev.tsv may be absent).
DatasetBundle load_dataset(const ExperimentConfig& config);

// Vocabulary and index-mapped splits shared read-only by all runs.
struct PreparedData {
  std::vector<RelationSpec> relations;
  Vocabulary vocab;
  std::vector<EncodedPair> train;
  std::vector<EncodedPair> dev;
  std::vector<EncodedPair> test;
  // Pretrained rows (NaN where the file had no vector), empty without a
  // word-vector file.
  std::vector<double> pretrained;
};

PreparedData prepare_data(const DatasetBundle& bundle, const ExperimentConfig& config);

// Fresh model for one run, with pretrained rows copied in.
ModelState make_model(const PreparedData& data, std::vector<RelationSpec> relations, const ModelConfig& config,
                      std::uint64_t seed);

struct RunOutcome {
  RunResult result;  // test metrics per relation
  // Dev metrics per epoch and relation; filled when dev data exists.
  std::vector<std::map<std::string, double>> dev_history;
  StepCounters counters;
};

// One seeded run of a regime. The single regime trains one model per
// relation and gathers each relation's metric from its own model. Dev
// metrics are recorded per epoch only when `track_dev` is set.
RunOutcome run_once(const PreparedData& data, const ExperimentConfig& config, Regime regime, std::uint64_t seed,
                    bool track_dev = false);

struct RunLogEntry {
  std::string regime;
  std::uint64_t seed = 0;
  std::string status;  // ok, failed, skipped
  std::string message;
  double cpu_seconds = 0.0;
  double wall_seconds = 0.0;
};

class CampaignFailure : public std::runtime_error {
 public:
  CampaignFailure(const std::string& what, std::vector<RunLogEntry> log)
      : std::runtime_error(what), log_(std::move(log)) {}
  const std::vector<RunLogEntry>& log() const { return log_; }

 private:
  std::vector<RunLogEntry> log_;
};

struct CampaignResult {
  std::vector<RunResult> results;  // regimes in config order, seeds ascending
  std::vector<RunLogEntry> log;
  double wall_seconds = 0.0;
  double cpu_seconds = 0.0;  // summed over runs
};

using ProgressFn = std::function<void(const RunLogEntry&)>;

// Runs config.runs seeds of every configured regime with the configured
// lr and epochs. The first failure stops scheduling; CampaignFailure then
// carries the log of every run.
CampaignResult run_campaign(const PreparedData& data, const ExperimentConfig& config,
                            const ProgressFn& progress = {});

struct TunePoint {
  Regime regime = Regime::multilabel;
  double lr = 0.0;
  int epochs = 0;
  double score = 0.0;  // mean over tune seeds of the mean dev metric
};

struct TuneResult {
  std::vector<TunePoint> trace;  // every grid point, per regime
  std::vector<TunePoint> best;   // one per regime, config order
};

// Highest score; ties go to the smaller lr, then fewer epochs.
TunePoint select_best(std::span<const TunePoint> points);

// Dev metric on a comparable scale: accuracy percentages become fractions.
double dev_score(const std::map<std::string, double>& metrics, std::span<const RelationSpec> relations);

// Grid search on the dev split. For each (regime, lr) one training run per
// tune seed lasts max(epoch_grid) epochs; the dev metrics recorded after
// epoch e score the grid point (lr, e).
TuneResult run_tune(const PreparedData& data, const ExperimentConfig& config);

void write_tune_trace(std::ostream& out, std::span<const TunePoint> trace);
void write_run_log(std::ostream& out, std::span<const RunLogEntry> log);

// Runs `count` tasks on up to `jobs` threads. Task i writes only its own
// output slot. Returns after every started task finishes; `stop` is
// polled before each task starts.
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& task,
                  const std::function<bool()>& stop = {});

}  // namespace relsim
