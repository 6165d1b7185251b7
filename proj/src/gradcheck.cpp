#include "cfner/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "cfner/rng.hpp"

namespace cfner {

std::vector<Method> all_methods() {
  return {Method::FinetuneOnly, Method::SelfTraining, Method::ExtendNER, Method::CFNER,
          Method::ST_CF};
}

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

namespace {

void perturb(TaggerModel& model, Rng& rng, double amount) {
  for (auto tensor : model.parameters()) {
    for (double& v : tensor) v += amount * rng.normal();
  }
}

struct Trial {
  TaggerModel model;
  BatchPlan plan;
};

Trial make_trial(Method method, const GradcheckOptions& options, std::uint64_t seed) {
  Rng rng(seed);
  SynthSpec spec;
  spec.num_types = 3;
  spec.sentences_per_type = 3;
  spec.vocab_per_type = 4;
  spec.sentence_length = 5;
  spec.other_vocab_size = 6;
  spec.noise_rate = 0.2;
  const Corpus corpus = synth_corpus(spec, derive_seed(seed, 1));
  const auto& types = corpus.schema.types();

  TaggerModel old_model = make_model(options.encoder, derive_seed(seed, 2));
  extend_vocabulary(old_model, corpus, derive_seed(seed, 3));
  old_model = extend_classifier(old_model, {types[0], types[1]}, derive_seed(seed, 4));
  // spread prototypes so the old model makes confident, varied calls
  for (double& v : old_model.classifier.prototypes.data) v *= 10.0;

  TaggerModel model = extend_classifier(old_model, {types[2]}, derive_seed(seed, 5));
  perturb(model, rng, 0.05);

  Corpus slice = mask_labels(corpus, {types[2]});
  if (method == Method::SelfTraining) slice = st_relabel(old_model, slice);

  CausalConfig config;
  config.k_entity = 2;
  config.k_other = 2;
  const StepContext context = prepare_step(model, &old_model, slice, {types[2]}, config);

  std::vector<std::size_t> sentences(slice.sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) sentences[i] = i;
  rng.shuffle(sentences);
  sentences.resize(3);
  const std::size_t epoch = 1 + rng.index(config.curriculum.epochs);

  Trial trial{model, {}};
  trial.plan = plan_batch(method, model, context, sentences, epoch, config);
  return trial;
}

// Coordinates to probe in tensor `slot`; embedding rows are limited to ids
// that occur in the batch since all other rows have zero gradient.
std::vector<std::size_t> pick_coordinates(const Trial& trial, std::size_t slot, std::size_t size,
                                          std::size_t count, Rng& rng) {
  std::vector<std::size_t> candidates;
  if (slot == 0) {
    const std::size_t width = trial.model.config.embed_dim;
    std::set<std::uint32_t> rows;
    for (const auto& ids : trial.plan.ids) rows.insert(ids.begin(), ids.end());
    for (std::uint32_t row : rows) {
      for (std::size_t j = 0; j < width; ++j) candidates.push_back(row * width + j);
    }
  } else {
    candidates.resize(size);
    for (std::size_t i = 0; i < size; ++i) candidates[i] = i;
  }
  rng.shuffle(candidates);
  if (candidates.size() > count) candidates.resize(count);
  return candidates;
}

}  // namespace

std::vector<GradcheckResult> run_gradcheck(const GradcheckOptions& options) {
  std::vector<GradcheckResult> results;
  for (Method method : all_methods()) {
    GradcheckResult result;
    result.method = method;
    for (std::size_t trial_index = 0; trial_index < options.trials; ++trial_index) {
      const std::uint64_t seed =
          derive_seed(options.seed, static_cast<std::uint64_t>(method) * 1000 + trial_index);
      Trial trial = make_trial(method, options, seed);
      LossAndGrads analytic = loss_and_grads(trial.model, trial.plan.ids, trial.plan.objectives);
      Rng rng(derive_seed(seed, 99));
      bool corrupted = false;

      auto params = trial.model.parameters();
      for (std::size_t slot = 0; slot < params.size(); ++slot) {
        for (std::size_t i : pick_coordinates(trial, slot, params[slot].size(),
                                              options.coordinates_per_tensor, rng)) {
          double& g = analytic.grads.tensors[slot][i];
          if (options.corrupt && !corrupted && std::abs(g) > 1e-3) {
            g *= 1.01;
            corrupted = true;
          }
          const double original = params[slot][i];
          params[slot][i] = original + options.epsilon;
          const double up = loss_value(trial.model, trial.plan.ids, trial.plan.objectives);
          params[slot][i] = original - options.epsilon;
          const double down = loss_value(trial.model, trial.plan.ids, trial.plan.objectives);
          params[slot][i] = original;
          const double numeric = (up - down) / (2.0 * options.epsilon);
          result.max_relative_error =
              std::max(result.max_relative_error, relative_error(g, numeric));
          ++result.coordinates;
        }
      }
      ++result.trials;
    }
    result.passed = result.max_relative_error < options.tolerance;
    results.push_back(result);
  }
  return results;
}

}  // namespace cfner
