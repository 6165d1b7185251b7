#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>

#include "CLI11.hpp"
#include "cfner/config.hpp"
#include "cfner/error.hpp"
#include "cfner/gradcheck.hpp"
#include "cfner/protocol.hpp"
#include "cfner/rng.hpp"

namespace fs = std::filesystem;

namespace cfner::cli {
namespace {

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

void make_output_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("cannot create output directory " + dir.string());
}

/// Flags shared by `partition` and `run` that override ExperimentConfig.
struct Overrides {
  std::string config_path;
  std::vector<std::uint64_t> seeds;
  std::string baseline;
  std::optional<std::size_t> fg, pg, k, m, epochs;
  std::optional<double> lambda_base, delta1, deltam;
  std::vector<std::string> settings;

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "Experiment config file (key = value)");
    app.add_option("--seed", seeds, "Seed; repeat for several")->take_all();
    app.add_option("--baseline", baseline, "finetune, st, extendner, cfner or st_cf");
    app.add_option("--fg", fg, "Entity types in the first step");
    app.add_option("--pg", pg, "Entity types per later step");
    app.add_option("--k", k, "Matched tokens per anchor");
    app.add_option("--lambda-base", lambda_base, "Initial balancing weight");
    app.add_option("--delta1", delta1, "Curriculum threshold at epoch 1");
    app.add_option("--deltam", deltam, "Curriculum threshold at epoch m");
    app.add_option("--m", m, "Curriculum length in epochs");
    app.add_option("--epochs", epochs, "Epochs per step (0 = by pg)");
    app.add_option("--set", settings, "Any config key as key=value; repeatable");
  }

  ExperimentConfig resolve() const {
    ExperimentConfig config = config_path.empty() ? ExperimentConfig{} : load_config_file(config_path);
    for (const auto& setting : settings) {
      const auto eq = setting.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + setting + "'");
      apply_setting(config, setting.substr(0, eq), setting.substr(eq + 1));
    }
    if (!seeds.empty()) config.seeds = seeds;
    if (!baseline.empty()) config.method = parse_method(baseline);
    if (fg) config.fg = *fg;
    if (pg) config.pg = *pg;
    if (k) config.k = *k;
    if (m) config.m = *m;
    if (epochs) config.epochs = *epochs;
    if (lambda_base) config.lambda_base = *lambda_base;
    if (delta1) config.delta1 = *delta1;
    if (deltam) config.deltam = *deltam;
    config.validate();
    return config;
  }
};

nlohmann::json file_entry(const std::string& name, const Corpus& corpus) {
  return {{"file", name},
          {"sentences", corpus.sentences.size()},
          {"tokens", corpus.token_count()},
          {"entity_counts", corpus_stats(corpus)}};
}

int cmd_synth(const SynthSpec& spec, std::uint64_t seed, const fs::path& out_dir, std::ostream& out) {
  make_output_dir(out_dir);
  const CorpusSplit split = split_corpus(synth_corpus(spec, seed), derive_seed(seed, 1));
  nlohmann::json manifest = {{"seed", seed}, {"spec", to_json(spec)}};
  const std::pair<const char*, const Corpus*> parts[] = {
      {"train", &split.train}, {"dev", &split.dev}, {"test", &split.test}};
  for (const auto& [name, corpus] : parts) {
    const std::string file = std::string(name) + ".conll";
    write_conll_file((out_dir / file).string(), *corpus);
    manifest["files"][name] = file_entry(file, *corpus);
  }
  open_output(out_dir / "manifest.json") << manifest.dump(2) << '\n';
  out << "wrote " << split.train.sentences.size() << '/' << split.dev.sentences.size() << '/'
      << split.test.sentences.size() << " train/dev/test sentences to " << out_dir.string() << '\n';
  return 0;
}

int cmd_partition(const ExperimentConfig& config, const std::string& corpus_path,
                  const fs::path& out_dir, std::ostream& out) {
  Corpus corpus;
  if (!corpus_path.empty()) {
    corpus = read_conll_file(corpus_path).corpus;
  } else {
    corpus = load_experiment_data(config).train;
  }
  const CLSchedule schedule = build_cl_schedule(corpus.schema, config.fg, config.pg);
  const std::uint64_t seed = config.seeds.front();
  const auto slices = greedy_partition(corpus, schedule, derive_seed(seed, 1));
  make_output_dir(out_dir);
  nlohmann::json manifest = partition_manifest(schedule, seed, slices);
  for (std::size_t j = 0; j < slices.size(); ++j) {
    char name[32];
    std::snprintf(name, sizeof(name), "slice_%02zu.conll", j);
    write_conll_file((out_dir / name).string(), slices[j]);
    manifest["slices"][j]["file"] = name;
  }
  open_output(out_dir / "manifest.json") << manifest.dump(2) << '\n';
  out << "wrote " << slices.size() << " slices to " << out_dir.string() << '\n';
  return 0;
}

int cmd_run(const ExperimentConfig& config, const fs::path& out_dir, std::size_t jobs,
            std::ostream& out) {
  make_output_dir(out_dir);
  std::mutex print_mutex;
  RunHooks hooks;
  hooks.output_dir = out_dir.string();
  hooks.on_step = [&](std::uint64_t seed, const StepResult& step) {
    std::lock_guard lock(print_mutex);
    out << "seed " << seed << " step " << step.step << ": micro-F1 " << std::fixed
        << std::setprecision(4) << step.micro_f1 << " macro-F1 " << step.macro_f1 << " ("
        << std::setprecision(1) << step.wall_seconds << "s)\n"
        << std::defaultfloat;
  };
  const ExperimentReport report = run_experiment(config, hooks, jobs);
  {
    std::ofstream jsonl = open_output(out_dir / "report.jsonl");
    write_report_jsonl(jsonl, report);
    std::ofstream timing = open_output(out_dir / "timing.jsonl");
    write_timing_jsonl(timing, report);
    std::ofstream curves = open_output(out_dir / "curves.csv");
    write_curve_csv(curves, report);
  }
  out << to_string(config.method) << ": micro-F1 " << std::fixed << std::setprecision(4)
      << report.micro.mean << " +/- " << report.micro.std << ", macro-F1 " << report.macro.mean
      << " +/- " << report.macro.std << '\n'
      << std::defaultfloat;
  for (const auto& seed : report.seeds) {
    if (seed.failure) out << "seed " << seed.seed << " failed: " << *seed.failure << '\n';
  }
  return 0;
}

int cmd_gradcheck(const GradcheckOptions& options, std::ostream& out) {
  if (options.trials == 0) {
    out << "no trials requested\n";
    return 0;
  }
  bool ok = true;
  for (const auto& r : run_gradcheck(options)) {
    out << std::left << std::setw(10) << to_string(r.method) << " trials " << r.trials
        << " coords " << r.coordinates << " max rel err " << std::scientific
        << std::setprecision(3) << r.max_relative_error << std::defaultfloat << "  "
        << (r.passed ? "PASS" : "FAIL") << '\n';
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

std::string format_pm(double mean, double std) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * mean << " +/- " << 100.0 * std;
  return s.str();
}

int cmd_report(const std::vector<std::string>& paths, const std::string& csv_path,
               std::ostream& out) {
  std::vector<LoadedReport> reports;
  for (const auto& path : paths) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    reports.push_back(read_report_jsonl(in));
  }

  out << std::left << std::setw(12) << "method" << std::setw(7) << "steps" << std::setw(7)
      << "seeds" << std::setw(18) << "micro-F1" << "macro-F1" << '\n';
  for (const auto& r : reports) {
    const Aggregate micro = recompute_aggregate(r.steps, "micro_f1");
    const Aggregate macro = recompute_aggregate(r.steps, "macro_f1");
    out << std::left << std::setw(12) << r.method << std::setw(7)
        << r.aggregate.value("steps", std::size_t{0}) << std::setw(7)
        << r.aggregate.value("seeds", nlohmann::json::array()).size() << std::setw(18)
        << format_pm(micro.mean, micro.std) << format_pm(macro.mean, macro.std) << '\n';
  }

  if (csv_path.empty()) return 0;
  std::ofstream csv = open_output(csv_path);
  std::vector<StepCurve> curves;
  std::set<std::size_t> steps;
  for (const auto& r : reports) {
    curves.push_back(step_curve(r.steps));
    steps.insert(curves.back().steps.begin(), curves.back().steps.end());
  }
  if (reports.size() == 1) {
    csv << "step,mean_micro_f1,std_micro_f1\n";
  } else {
    csv << "step";
    for (const auto& r : reports) csv << ',' << r.method << "_mean_micro_f1," << r.method << "_std_micro_f1";
    csv << '\n';
  }
  for (std::size_t step : steps) {
    csv << step;
    for (const auto& curve : curves) {
      auto it = std::find(curve.steps.begin(), curve.steps.end(), step);
      if (it == curve.steps.end()) {
        csv << ",,";
        continue;
      }
      const Aggregate& a = curve.micro[static_cast<std::size_t>(it - curve.steps.begin())];
      csv << ',' << nlohmann::json(a.mean).dump() << ',' << nlohmann::json(a.std).dump();
    }
    csv << '\n';
  }
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Continual-learning NER with colliding-effect distillation"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic train/dev/test corpus");
  SynthSpec spec;
  std::uint64_t synth_seed = 7;
  std::string synth_out;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--num-types", spec.num_types);
  synth->add_option("--sentences-per-type", spec.sentences_per_type);
  synth->add_option("--vocab-per-type", spec.vocab_per_type);
  synth->add_option("--sentence-length", spec.sentence_length);
  synth->add_option("--other-vocab", spec.other_vocab_size);
  synth->add_option("--noise", spec.noise_rate);
  synth->add_option("--secondary-rate", spec.secondary_mention_rate);

  auto* partition = app.add_subcommand("partition", "Split a corpus into CL slices");
  Overrides partition_overrides;
  partition_overrides.attach(*partition);
  std::string partition_corpus;
  std::string partition_out;
  partition->add_option("corpus", partition_corpus, "CoNLL corpus (default: config train set)");
  partition->add_option("--out", partition_out, "Output directory")->required();

  auto* run_cmd = app.add_subcommand("run", "Run a continual-learning experiment");
  Overrides run_overrides;
  run_overrides.attach(*run_cmd);
  std::string run_out = "runs/latest";
  std::size_t jobs = 1;
  run_cmd->add_option("--out", run_out, "Output directory");
  run_cmd->add_option("--jobs", jobs, "Seeds trained in parallel");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient audit");
  GradcheckOptions grad_options;
  gradcheck->add_option("--trials", grad_options.trials, "Random trials per loss kind");
  gradcheck->add_option("--seed", grad_options.seed);
  gradcheck->add_flag("--corrupt", grad_options.corrupt)->group("");

  auto* report = app.add_subcommand("report", "Summarize JSONL reports");
  std::vector<std::string> report_paths;
  std::string report_csv;
  report->add_option("reports", report_paths, "report.jsonl files")->required();
  report->add_option("--csv", report_csv, "Write step curves to this CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*synth) return cmd_synth(spec, synth_seed, synth_out, out);
    if (*partition) return cmd_partition(partition_overrides.resolve(), partition_corpus, partition_out, out);
    if (*run_cmd) return cmd_run(run_overrides.resolve(), run_out, jobs, out);
    if (*gradcheck) return cmd_gradcheck(grad_options, out);
    if (*report) return cmd_report(report_paths, report_csv, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace cfner::cli
