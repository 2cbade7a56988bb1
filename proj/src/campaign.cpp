#include "relsim/campaign.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <limits>
#include <mutex>
#include <ostream>
#include <thread>

#include "relsim/error.hpp"

namespace relsim {

namespace {

double thread_cpu_seconds() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<std::uint64_t> tune_seeds(const ExperimentConfig& config) {
  std::vector<std::uint64_t> out(config.tune_runs);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = config.train.seed + i;
  return out;
}

}  // namespace

DatasetBundle load_dataset(const ExperimentConfig& config) {
  const auto relations = config.resolved_relations();
  if (config.dataset.empty()) {
    SyntheticConfig s = config.synthetic;
    s.relations = relations;
    return generate_synthetic(s);
  }
  namespace fs = std::filesystem;
  const fs::path dir(config.dataset);
  if (!fs::is_directory(dir)) throw DataError("dataset directory " + dir.string() + " does not exist");
  DatasetBundle b;
  b.specs = relations;
  b.train = load_pairs_tsv(dir / "train.tsv", relations);
  if (fs::exists(dir / "dev.tsv")) b.dev = load_pairs_tsv(dir / "dev.tsv", relations);
  b.test = load_pairs_tsv(dir / "test.tsv", relations);
  b.provenance = dir.string();
  b.validate();
  return b;
}

PreparedData prepare_data(const DatasetBundle& bundle, const ExperimentConfig& config) {
  if (bundle.train.empty()) throw DataError("training split is empty");
  if (bundle.test.empty()) throw DataError("test split is empty");
  PreparedData d;
  d.relations = config.resolved_relations();
  std::vector<TokenSeq> corpus;
  corpus.reserve(2 * bundle.train.size());
  for (const auto& ex : bundle.train) {
    corpus.push_back(ex.left);
    corpus.push_back(ex.right);
  }
  d.vocab = build_vocab(corpus, config.min_count);
  d.train = encode_examples(bundle.train, d.vocab, d.relations);
  d.dev = encode_examples(bundle.dev, d.vocab, d.relations);
  d.test = encode_examples(bundle.test, d.vocab, d.relations);
  if (!config.word_vectors.empty()) {
    ad::Parameter rows("pretrained", ad::Shape(d.vocab.size(), config.model.encoder.word_dim),
                       std::vector<double>(d.vocab.size() * config.model.encoder.word_dim,
                                           std::numeric_limits<double>::quiet_NaN()));
    load_word_vectors(config.word_vectors, d.vocab, rows);
    d.pretrained = std::move(rows.value);
  }
  return d;
}

ModelState make_model(const PreparedData& data, std::vector<RelationSpec> relations, const ModelConfig& config,
                      std::uint64_t seed) {
  ModelState s = ModelState::init(data.vocab, std::move(relations), config, seed);
  if (!data.pretrained.empty()) {
    auto& emb = s.encoder.embedding.value;
    for (std::size_t i = 0; i < emb.size(); ++i) {
      if (!std::isnan(data.pretrained[i])) emb[i] = data.pretrained[i];
    }
  }
  return s;
}

RunOutcome run_once(const PreparedData& data, const ExperimentConfig& config, Regime regime, std::uint64_t seed,
                    bool track_dev) {
  RunOutcome out;
  out.result.regime = to_string(regime);
  out.result.seed = seed;
  TrainConfig tc = config.train;
  tc.regime = regime;
  tc.seed = seed;
  const std::span<const EncodedPair> dev = track_dev ? std::span<const EncodedPair>(data.dev) : std::span<const EncodedPair>{};

  auto merge_history = [&out](const TrainHistory& h) {
    if (out.dev_history.size() < h.dev_metrics.size()) out.dev_history.resize(h.dev_metrics.size());
    for (std::size_t e = 0; e < h.dev_metrics.size(); ++e) {
      for (const auto& [rel, v] : h.dev_metrics[e]) out.dev_history[e][rel] = v;
    }
  };

  if (regime == Regime::single) {
    for (const auto& spec : data.relations) {
      ModelState state = make_model(data, {spec}, config.model, seed);
      tc.single_relation = spec.name;
      merge_history(train(data.train, state, tc, dev, &out.counters));
      out.result.metrics[spec.name] = evaluate(state, data.test).at(spec.name);
    }
  } else {
    ModelState state = make_model(data, data.relations, config.model, seed);
    merge_history(train(data.train, state, tc, dev, &out.counters));
    out.result.metrics = evaluate(state, data.test);
  }
  return out;
}

void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& task,
                  const std::function<bool()>& stop) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) {
      if (stop && stop()) return;
      task(i);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      if (stop && stop()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      task(i);
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(jobs);
  for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
}

CampaignResult run_campaign(const PreparedData& data, const ExperimentConfig& config, const ProgressFn& progress) {
  config.validate();
  const auto seeds = config.seeds();
  struct Task {
    Regime regime;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (Regime r : config.regimes) {
    for (std::uint64_t s : seeds) tasks.push_back({r, s});
  }

  CampaignResult out;
  out.results.resize(tasks.size());
  out.log.resize(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    out.log[i].regime = to_string(tasks[i].regime);
    out.log[i].seed = tasks[i].seed;
    out.log[i].status = "skipped";
  }
  std::atomic<bool> failed{false};
  std::mutex progress_mutex;
  const auto start = std::chrono::steady_clock::now();

  parallel_for(
      tasks.size(), config.resolved_jobs(),
      [&](std::size_t i) {
        RunLogEntry& entry = out.log[i];
        const auto t0 = std::chrono::steady_clock::now();
        const double c0 = thread_cpu_seconds();
        try {
          out.results[i] = run_once(data, config, tasks[i].regime, tasks[i].seed).result;
          entry.status = "ok";
        } catch (const std::exception& e) {
          entry.status = "failed";
          entry.message = e.what();
          failed = true;
        }
        entry.cpu_seconds = thread_cpu_seconds() - c0;
        entry.wall_seconds = seconds_since(t0);
        if (progress) {
          std::lock_guard lock(progress_mutex);
          progress(entry);
        }
      },
      [&] { return failed.load(); });

  out.wall_seconds = seconds_since(start);
  for (const auto& e : out.log) out.cpu_seconds += e.cpu_seconds;
  if (failed) {
    std::string first;
    for (const auto& e : out.log) {
      if (e.status == "failed") {
        first = e.regime + " seed " + std::to_string(e.seed) + ": " + e.message;
        break;
      }
    }
    throw CampaignFailure("run failed (" + first + ")", out.log);
  }
  return out;
}

double dev_score(const std::map<std::string, double>& metrics, std::span<const RelationSpec> relations) {
  if (relations.empty()) return 0.0;
  double total = 0.0;
  for (const auto& spec : relations) {
    auto it = metrics.find(spec.name);
    if (it == metrics.end()) throw DataError("no dev metric for relation " + spec.name);
    total += spec.metric == Metric::accuracy ? it->second / 100.0 : it->second;
  }
  return total / static_cast<double>(relations.size());
}

TunePoint select_best(std::span<const TunePoint> points) {
  if (points.empty()) throw ConfigError("hyperparameter grid is empty");
  auto key = [](double s) { return std::isnan(s) ? -std::numeric_limits<double>::infinity() : s; };
  const TunePoint* best = &points.front();
  for (const auto& p : points) {
    const double a = key(p.score);
    const double b = key(best->score);
    if (a > b || (a == b && (p.lr < best->lr || (p.lr == best->lr && p.epochs < best->epochs)))) best = &p;
  }
  return *best;
}

TuneResult run_tune(const PreparedData& data, const ExperimentConfig& config) {
  config.validate();
  if (data.dev.empty()) throw DataError("tuning needs a nonempty dev split");
  std::vector<double> lrs = config.lr_grid;
  std::vector<int> epochs = config.epoch_grid;
  std::sort(lrs.begin(), lrs.end());
  lrs.erase(std::unique(lrs.begin(), lrs.end()), lrs.end());
  std::sort(epochs.begin(), epochs.end());
  epochs.erase(std::unique(epochs.begin(), epochs.end()), epochs.end());
  const int max_epochs = epochs.back();
  const auto seeds = tune_seeds(config);

  struct Task {
    Regime regime;
    double lr;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (Regime r : config.regimes) {
    for (double lr : lrs) {
      for (std::uint64_t s : seeds) tasks.push_back({r, lr, s});
    }
  }
  std::vector<std::vector<std::map<std::string, double>>> histories(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<bool> failed{false};
  parallel_for(
      tasks.size(), config.resolved_jobs(),
      [&](std::size_t i) {
        try {
          ExperimentConfig c = config;
          c.train.lr = tasks[i].lr;
          c.train.epochs = max_epochs;
          histories[i] = run_once(data, c, tasks[i].regime, tasks[i].seed, true).dev_history;
        } catch (...) {
          errors[i] = std::current_exception();
          failed = true;
        }
      },
      [&] { return failed.load(); });
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  TuneResult out;
  std::size_t t = 0;
  for (Regime r : config.regimes) {
    std::vector<TunePoint> points;
    for (double lr : lrs) {
      std::vector<double> totals(epochs.size(), 0.0);
      for (std::size_t s = 0; s < seeds.size(); ++s, ++t) {
        for (std::size_t k = 0; k < epochs.size(); ++k) {
          totals[k] += dev_score(histories[t].at(static_cast<std::size_t>(epochs[k] - 1)), data.relations);
        }
      }
      for (std::size_t k = 0; k < epochs.size(); ++k) {
        points.push_back({r, lr, epochs[k], totals[k] / static_cast<double>(seeds.size())});
      }
    }
    out.best.push_back(select_best(points));
    out.trace.insert(out.trace.end(), points.begin(), points.end());
  }
  return out;
}

void write_tune_trace(std::ostream& out, std::span<const TunePoint> trace) {
  out << "regime,lr,epochs,score\n";
  for (const auto& p : trace) {
    out << to_string(p.regime) << ',' << format_score(p.lr) << ',' << p.epochs << ',' << format_score(p.score) << '\n';
  }
}

void write_run_log(std::ostream& out, std::span<const RunLogEntry> log) {
  for (const auto& e : log) {
    out << e.regime << " seed " << e.seed << ": " << e.status;
    if (e.status != "skipped") out << " (cpu " << e.cpu_seconds << " s, wall " << e.wall_seconds << " s)";
    if (!e.message.empty()) out << ": " << e.message;
    out << '\n';
  }
}

}  // namespace relsim
