#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>

#include "cfner/error.hpp"
#include "cfner/protocol.hpp"
#include "cfner/rng.hpp"

namespace cfner {
namespace {

enum Stream : std::uint64_t {
  kPartitionStream = 1,
  kInitStream = 2,
  kVocabStream = 100,
  kClassifierStream = 200,
  kShuffleStream = 300,
};

bool is_causal(Method method) { return method == Method::CFNER || method == Method::ST_CF; }

}  // namespace

std::size_t ExperimentConfig::epochs_per_step() const {
  if (epochs != 0) return epochs;
  return pg == 1 ? 10 : 20;
}

CausalConfig ExperimentConfig::causal() const {
  CausalConfig c;
  c.k_entity = k_entity.value_or(k);
  c.k_other = k_other.value_or(k);
  c.curriculum = {delta1, deltam, m};
  c.lambda_base = lambda_base;
  c.teacher_temperature = teacher_temperature;
  c.student_temperature = student_temperature;
  c.kl_order = kl_order;
  c.distill_support = distill_support;
  c.hard_teacher = method == Method::ST_CF;
  return c;
}

void ExperimentConfig::validate() const {
  if (fg < 1) throw ConfigError("fg must be at least 1");
  if (pg < 1) throw ConfigError("pg must be at least 1");
  CurriculumSchedule{delta1, deltam, m}.validate();
  if (lambda_base < 0.0) throw ConfigError("lambda_base must be non-negative");
  if (!(teacher_temperature > 0.0) || !(student_temperature > 0.0)) {
    throw ConfigError("temperatures must be positive");
  }
  validate_distillation(causal());
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (uses_synth() != (dev_path.empty() && test_path.empty())) {
    throw ConfigError("train, dev and test paths must be given together");
  }
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  if (c.uses_synth()) {
    j["synth"] = to_json(c.synth);
    j["synth_seed"] = c.synth_seed;
  } else {
    j["train"] = c.train_path;
    j["dev"] = c.dev_path;
    j["test"] = c.test_path;
  }
  j["fg"] = c.fg;
  j["pg"] = c.pg;
  j["baseline"] = to_string(c.method);
  j["k"] = c.k;
  j["k_entity"] = c.k_entity.value_or(c.k);
  j["k_other"] = c.k_other.value_or(c.k);
  j["delta1"] = c.delta1;
  j["deltam"] = c.deltam;
  j["m"] = c.m;
  j["lambda_base"] = c.lambda_base;
  j["teacher_temperature"] = c.teacher_temperature;
  j["student_temperature"] = c.student_temperature;
  j["kl_order"] = c.kl_order == KlOrder::StudentFirst ? "student_first" : "teacher_first";
  j["distill_support"] = c.distill_support == DistillSupport::Old ? "old" : "full";
  j["epochs"] = c.epochs_per_step();
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["seeds"] = c.seeds;
  j["encoder"] = {{"embed_dim", c.encoder.embed_dim},
                  {"radius", c.encoder.radius},
                  {"hidden_dim", c.encoder.hidden_dim},
                  {"feature_dim", c.encoder.feature_dim},
                  {"cosine_scale", c.encoder.cosine_scale}};
  return j;
}

nlohmann::json to_json(const StepDiagnostics& d) {
  return {{"step", d.step},
          {"entity_tokens", d.entity_tokens},
          {"defined_other_tokens", d.defined_other_tokens},
          {"undefined_other_tokens", d.undefined_other_tokens},
          {"relabeled_tokens", d.relabeled_tokens},
          {"lambda", d.lambda},
          {"thresholds", d.thresholds},
          {"matched_other_per_epoch", d.matched_other_per_epoch}};
}

ExperimentData load_experiment_data(const ExperimentConfig& config) {
  ExperimentData data;
  if (config.uses_synth()) {
    CorpusSplit split =
        split_corpus(synth_corpus(config.synth, config.synth_seed), derive_seed(config.synth_seed, 1));
    data.train = std::move(split.train);
    data.dev = std::move(split.dev);
    data.test = std::move(split.test);
    return data;
  }
  data.train = read_conll_file(config.train_path).corpus;
  data.dev = read_conll_file(config.dev_path).corpus;
  data.test = read_conll_file(config.test_path).corpus;
  std::vector<std::string> types = data.train.schema.types();
  for (const auto* c : {&data.dev, &data.test}) {
    types.insert(types.end(), c->schema.types().begin(), c->schema.types().end());
  }
  const EntitySchema schema(types);
  data.train.schema = data.dev.schema = data.test.schema = schema;
  return data;
}

SeedReport run_seed(const ExperimentConfig& config, const ExperimentData& data,
                    const CLSchedule& schedule, std::uint64_t seed, const RunHooks& hooks) {
  SeedReport report;
  report.seed = seed;
  CausalConfig causal = config.causal();
  if (!is_causal(config.method)) causal.k_entity = causal.k_other = 0;
  const AdamConfig adam{config.learning_rate, 0.9, 0.999, 1e-8};
  const std::size_t epochs = config.epochs_per_step();

  std::filesystem::path seed_dir;
  if (!hooks.output_dir.empty()) {
    seed_dir = std::filesystem::path(hooks.output_dir) / ("seed_" + std::to_string(seed));
    std::filesystem::create_directories(seed_dir);
  }

  const auto slices = greedy_partition(data.train, schedule, derive_seed(seed, kPartitionStream));
  std::optional<TaggerModel> old_model;
  Rng shuffle_rng(derive_seed(seed, kShuffleStream));

  try {
    for (std::size_t step = 0; step < schedule.size(); ++step) {
      const auto started = std::chrono::steady_clock::now();
      const std::vector<std::string>& new_types = schedule.steps[step];
      const std::set<std::string> keep(new_types.begin(), new_types.end());
      const std::vector<std::string> recognized = schedule.recognized_through(step);
      const Corpus slice = mask_labels(slices[step], keep);
      const Corpus dev = mask_labels(data.dev, keep);
      const Corpus test = mask_labels(data.test, {recognized.begin(), recognized.end()});

      TaggerModel model =
          old_model ? *old_model : make_model(config.encoder, derive_seed(seed, kInitStream));
      extend_vocabulary(model, slice, derive_seed(seed, kVocabStream + step));
      model = extend_classifier(model, new_types, derive_seed(seed, kClassifierStream + step));

      StepDiagnostics diag;
      diag.step = step;
      Corpus training = slice;
      if (config.method == Method::SelfTraining && old_model) {
        training = st_relabel(*old_model, slice);
        for (std::size_t s = 0; s < slice.sentences.size(); ++s) {
          for (std::size_t t = 0; t < slice.sentences[s].tokens.size(); ++t) {
            if (slice.sentences[s].tokens[t].tag != training.sentences[s].tokens[t].tag) {
              ++diag.relabeled_tokens;
            }
          }
        }
      }
      const StepContext context = prepare_step(
          model, old_model ? &*old_model : nullptr, training, new_types, causal);
      diag.entity_tokens = context.annotation.count(Membership::Entity);
      diag.defined_other_tokens = context.annotation.count(Membership::DefinedOther);
      diag.undefined_other_tokens = context.annotation.count(Membership::UndefinedOther);
      diag.lambda = context.lambda;

      AdamState state = AdamState::zeros_like(model);
      StepResult result;
      result.step = step;
      result.recognized_types = recognized;
      TaggerModel best = model;
      double best_f1 = -1.0;
      std::vector<std::size_t> order(training.sentences.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

      for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
        const double threshold = curriculum_threshold(causal.curriculum, epoch);
        diag.thresholds.push_back(threshold);
        diag.matched_other_per_epoch.push_back(
            is_causal(config.method) ? context.matched_other_count(threshold) : 0);

        shuffle_rng.shuffle(order);
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
          const std::size_t end = std::min(order.size(), begin + config.batch_size);
          const std::span<const std::size_t> batch(order.data() + begin, end - begin);
          const BatchPlan plan = plan_batch(config.method, model, context, batch, epoch, causal);
          const LossAndGrads lg = loss_and_grads(model, plan.ids, plan.objectives);
          adam_step(model, lg.grads, state, adam);
        }

        const double f1 = evaluate(model, dev, new_types).micro_f1;
        result.validation_micro_f1.push_back(f1);
        if (f1 > best_f1) {
          best_f1 = f1;
          best = model;
          result.best_epoch = epoch;
        }
      }

      const Evaluation test_eval = evaluate(best, test, recognized);
      result.micro_f1 = test_eval.micro_f1;
      result.macro_f1 = test_eval.macro_f1;
      result.per_type_f1 = test_eval.per_type_f1;
      result.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

      if (!seed_dir.empty()) {
        std::ofstream diag_out(seed_dir / ("diagnostics_step_" + std::to_string(step) + ".json"));
        diag_out << to_json(diag).dump(2) << '\n';
        if (config.save_checkpoints) {
          save_checkpoint((seed_dir / ("step_" + std::to_string(step) + ".ckpt.json")).string(), best);
        }
      }
      if (hooks.on_step) hooks.on_step(seed, result);
      report.steps.push_back(std::move(result));
      report.diagnostics.push_back(std::move(diag));
      old_model = std::move(best);
    }
  } catch (const NumericError& e) {
    report.failure = std::string("numeric failure in ") + e.what();
  }
  return report;
}

ExperimentReport run_experiment(const ExperimentConfig& config, const RunHooks& hooks,
                                std::size_t jobs) {
  config.validate();
  ExperimentReport report;
  report.config = config;
  const ExperimentData data = load_experiment_data(config);
  report.schedule = build_cl_schedule(data.train.schema, config.fg, config.pg);

  report.seeds.resize(config.seeds.size());
  jobs = std::max<std::size_t>(1, jobs);
  for (std::size_t begin = 0; begin < config.seeds.size(); begin += jobs) {
    const std::size_t end = std::min(config.seeds.size(), begin + jobs);
    std::vector<std::future<SeedReport>> running;
    for (std::size_t i = begin; i < end; ++i) {
      running.push_back(std::async(jobs == 1 ? std::launch::deferred : std::launch::async,
                                   [&, i] {
                                     return run_seed(config, data, report.schedule,
                                                     config.seeds[i], hooks);
                                   }));
    }
    for (std::size_t i = begin; i < end; ++i) report.seeds[i] = running[i - begin].get();
  }

  std::vector<std::vector<double>> micro;
  std::vector<std::vector<double>> macro;
  for (const auto& seed : report.seeds) {
    if (seed.failure) continue;
    micro.emplace_back();
    macro.emplace_back();
    for (const auto& step : seed.steps) {
      micro.back().push_back(step.micro_f1);
      macro.back().push_back(step.macro_f1);
    }
  }
  report.micro = aggregate(micro);
  report.macro = aggregate(macro);
  return report;
}

}  // namespace cfner
