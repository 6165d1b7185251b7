#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cfner/baselines.hpp"
#include "cfner/corpus.hpp"
#include "json.hpp"

namespace cfner {

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Entity span [start, end) within one sentence.
struct Span {
  std::string type;
  std::size_t start = 0;
  std::size_t end = 0;

  auto operator<=>(const Span&) const = default;
};

/// Maximal runs "B-X I-X ... I-X". A stray "I-X" opens a new span, matching
/// the repair applied to input corpora.
std::vector<Span> extract_spans(const std::vector<std::string>& tags);

/// Spans of a whole corpus, keyed by sentence index.
using CorpusSpans = std::set<std::pair<std::size_t, Span>>;

struct PerTypeCounts {
  std::size_t true_positive = 0;
  std::size_t false_positive = 0;
  std::size_t false_negative = 0;
};

double f1_score(const PerTypeCounts& counts);
std::map<std::string, PerTypeCounts> count_matches(const CorpusSpans& predicted,
                                                   const CorpusSpans& gold);
/// Pooled TP/FP/FN over all types.
double micro_f1(const CorpusSpans& predicted, const CorpusSpans& gold);
/// Unweighted mean of per-type F1 over `types`; 0/0 counts as 0.
double macro_f1(const CorpusSpans& predicted, const CorpusSpans& gold,
                const std::vector<std::string>& types);

struct Evaluation {
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  std::map<std::string, double> per_type_f1;
};

/// Tags `corpus` with the model and scores spans of `types` only.
Evaluation evaluate(const TaggerModel& model, const Corpus& corpus,
                    const std::vector<std::string>& types);

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single seed
};

/// Per-seed mean across steps, then mean and sample std across seeds.
Aggregate aggregate(const std::vector<std::vector<double>>& per_seed_steps);

// ---------------------------------------------------------------------------
// Experiment
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  std::string train_path;
  std::string dev_path;
  std::string test_path;
  SynthSpec synth;
  std::uint64_t synth_seed = 7;

  std::size_t fg = 1;
  std::size_t pg = 1;
  Method method = Method::CFNER;
  std::size_t k = 3;
  std::optional<std::size_t> k_entity;  // defaults to k
  std::optional<std::size_t> k_other;   // defaults to k
  double delta1 = 1.0;
  double deltam = 0.0;
  std::size_t m = 10;
  double lambda_base = 2.0;
  double teacher_temperature = 1.0;
  double student_temperature = 2.0;
  KlOrder kl_order = KlOrder::StudentFirst;
  DistillSupport distill_support = DistillSupport::Old;
  /// 0 selects 10 epochs for pg == 1 and 20 otherwise.
  std::size_t epochs = 0;
  std::size_t batch_size = 8;
  double learning_rate = 4e-4;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  EncoderConfig encoder;
  bool save_checkpoints = false;

  bool uses_synth() const { return train_path.empty(); }
  std::size_t epochs_per_step() const;
  CausalConfig causal() const;
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& config);

struct StepResult {
  std::size_t step = 0;
  std::vector<std::string> recognized_types;
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  std::map<std::string, double> per_type_f1;
  std::size_t best_epoch = 0;
  std::vector<double> validation_micro_f1;
  double wall_seconds = 0.0;
};

struct StepDiagnostics {
  std::size_t step = 0;
  std::size_t entity_tokens = 0;
  std::size_t defined_other_tokens = 0;
  std::size_t undefined_other_tokens = 0;
  std::size_t relabeled_tokens = 0;
  double lambda = 0.0;
  std::vector<double> thresholds;
  std::vector<std::size_t> matched_other_per_epoch;
};

nlohmann::json to_json(const StepDiagnostics& diagnostics);

struct SeedReport {
  std::uint64_t seed = 0;
  std::vector<StepResult> steps;
  std::vector<StepDiagnostics> diagnostics;
  std::optional<std::string> failure;
};

struct ExperimentReport {
  ExperimentConfig config;
  CLSchedule schedule;
  std::vector<SeedReport> seeds;
  Aggregate micro;
  Aggregate macro;
};

struct ExperimentData {
  Corpus train;
  Corpus dev;
  Corpus test;
};

/// Reads the configured CoNLL files, or generates and splits the synthetic
/// corpus.
ExperimentData load_experiment_data(const ExperimentConfig& config);

struct RunHooks {
  /// Called after every finished step.
  std::function<void(std::uint64_t seed, const StepResult&)> on_step;
  /// Directory for per-seed checkpoints and diagnostics; empty disables.
  std::string output_dir;
};

SeedReport run_seed(const ExperimentConfig& config, const ExperimentData& data,
                    const CLSchedule& schedule, std::uint64_t seed, const RunHooks& hooks = {});

/// Runs every seed (up to `jobs` in parallel) and aggregates.
ExperimentReport run_experiment(const ExperimentConfig& config, const RunHooks& hooks = {},
                                std::size_t jobs = 1);

// ---------------------------------------------------------------------------
// Report files
// ---------------------------------------------------------------------------

/// One JSON record per (seed, step) followed by a terminal aggregate record
/// that embeds the config, seeds and code version. Wall-clock times are
/// excluded so identical runs produce identical bytes.
void write_report_jsonl(std::ostream& out, const ExperimentReport& report);
/// Wall-clock seconds per (seed, step).
void write_timing_jsonl(std::ostream& out, const ExperimentReport& report);
/// step, mean_micro_f1, std_micro_f1
void write_curve_csv(std::ostream& out, const ExperimentReport& report);

/// A report read back from JSONL.
struct LoadedReport {
  std::string method;
  nlohmann::json aggregate;
  std::vector<nlohmann::json> steps;
};

LoadedReport read_report_jsonl(std::istream& in);

struct StepCurve {
  std::vector<std::size_t> steps;
  std::vector<Aggregate> micro;
};

/// Mean and sample std across seeds of each step's micro-F1.
StepCurve step_curve(const std::vector<nlohmann::json>& step_records);
Aggregate recompute_aggregate(const std::vector<nlohmann::json>& step_records,
                              const std::string& field);

std::string code_version();

}  // namespace cfner
