#include "cfner/causal.hpp"

#include <algorithm>
#include <cmath>

#include "cfner/error.hpp"

namespace cfner {

std::string_view to_string(Membership membership) {
  switch (membership) {
    case Membership::Entity:
      return "D^E";
    case Membership::DefinedOther:
      return "D^O";
    case Membership::UndefinedOther:
      break;
  }
  return "D^UO";
}

std::size_t SliceAnnotation::count(Membership membership) const {
  std::size_t n = 0;
  for (const auto& sentence : tokens) {
    for (const auto& token : sentence) n += token.membership == membership ? 1 : 0;
  }
  return n;
}

SliceAnnotation annotate(const TaggerModel* old_model, const Corpus& slice,
                         double teacher_temperature) {
  if (!(teacher_temperature > 0.0)) throw ConfigError("teacher temperature must be positive");
  SliceAnnotation result;
  // a model with no entity labels cannot define any Other token
  const bool has_teacher = old_model != nullptr && old_model->labels.size() > 1;
  if (has_teacher) result.old_labels = old_model->labels.labels();

  result.tokens.reserve(slice.sentences.size());
  for (const auto& sentence : slice.sentences) {
    std::vector<TokenAnnotation> row(sentence.tokens.size());
    Matrix features;
    if (has_teacher) features = encode(*old_model, sentence);
    for (std::size_t t = 0; t < sentence.tokens.size(); ++t) {
      TokenAnnotation& a = row[t];
      if (sentence.tokens[t].tag != "O") {
        a.membership = Membership::Entity;
        continue;
      }
      a.membership = Membership::UndefinedOther;
      if (!has_teacher) continue;
      const auto z = logits(*old_model, features.row(t));
      const auto p = softmax(z, 1.0);
      a.pseudo_label = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
      a.confidence = p[a.pseudo_label];
      a.teacher = teacher_temperature == 1.0 ? p : softmax(z, teacher_temperature);
      if (a.pseudo_label != 0) a.membership = Membership::DefinedOther;
    }
    result.tokens.push_back(std::move(row));
  }
  return result;
}

void FeatureIndex::add(const std::string& key, TokenRef ref, std::span<const double> feature) {
  Group& group = groups_[key];
  if (group.features.cols == 0) group.features.cols = feature.size();
  if (feature.size() != group.features.cols) throw InvariantError("feature width mismatch");
  group.refs.push_back(ref);
  group.features.data.insert(group.features.data.end(), feature.begin(), feature.end());
  ++group.features.rows;
}

const FeatureIndex::Group* FeatureIndex::group(std::string_view key) const {
  auto it = groups_.find(key);
  return it == groups_.end() ? nullptr : &it->second;
}

std::size_t FeatureIndex::size() const {
  std::size_t n = 0;
  for (const auto& [key, group] : groups_) n += group.refs.size();
  return n;
}

std::optional<std::string> group_key(const TokenAnnotation& annotation, const Token& token,
                                     const SliceAnnotation& slice_annotation) {
  switch (annotation.membership) {
    case Membership::Entity:
      return token.tag;
    case Membership::DefinedOther:
      return slice_annotation.old_labels.at(annotation.pseudo_label);
    case Membership::UndefinedOther:
      break;
  }
  return std::nullopt;
}

FeatureIndex build_feature_index(const TaggerModel& old_model, const Corpus& slice,
                                 const SliceAnnotation& annotation) {
  FeatureIndex index;
  for (std::size_t s = 0; s < slice.sentences.size(); ++s) {
    const Sentence& sentence = slice.sentences[s];
    Matrix features;
    for (std::size_t t = 0; t < sentence.tokens.size(); ++t) {
      auto key = group_key(annotation.tokens[s][t], sentence.tokens[t], annotation);
      if (!key) continue;
      if (features.rows == 0) features = encode(old_model, sentence);
      index.add(*key, {static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(t)},
                features.row(t));
    }
  }
  return index;
}

double MatchSet::weight_sum() const {
  double matched = 0.0;
  for (double w : matched_weights) matched += w;
  return matched + anchor_weight;
}

void assign_default_weights(MatchSet& match) {
  const std::size_t m = match.matched.size();
  if (m == 0) {
    match.anchor_weight = 1.0;
    match.matched_weights.clear();
    return;
  }
  match.anchor_weight = 0.5;
  match.matched_weights.assign(m, 1.0 / (2.0 * static_cast<double>(m)));
}

MatchSet knn_match(const FeatureIndex& index, std::string_view key, TokenRef anchor,
                   std::span<const double> anchor_feature, std::size_t k) {
  MatchSet match;
  match.anchor = anchor;
  const FeatureIndex::Group* group = index.group(key);
  if (group != nullptr && k > 0) {
    struct Candidate {
      double distance;
      TokenRef ref;
    };
    std::vector<Candidate> candidates;
    candidates.reserve(group->refs.size());
    for (std::size_t r = 0; r < group->refs.size(); ++r) {
      if (group->refs[r] == anchor) continue;
      const auto row = group->features.row(r);
      double dot = 0.0;
      for (std::size_t j = 0; j < row.size(); ++j) dot += anchor_feature[j] * row[j];
      candidates.push_back({1.0 - dot, group->refs[r]});
    }
    const std::size_t m = std::min(k, candidates.size());
    auto closer = [](const Candidate& a, const Candidate& b) {
      return a.distance != b.distance ? a.distance < b.distance : a.ref < b.ref;
    };
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(m),
                      candidates.end(), closer);
    for (std::size_t i = 0; i < m; ++i) {
      match.matched.push_back(candidates[i].ref);
      match.distances.push_back(candidates[i].distance);
    }
  }
  assign_default_weights(match);
  return match;
}

std::vector<double> weighted_prediction(std::span<const double> anchor_probs,
                                        const std::vector<std::vector<double>>& matched_probs,
                                        double anchor_weight,
                                        std::span<const double> matched_weights) {
  if (matched_probs.size() != matched_weights.size()) {
    throw InvariantError("one weight per matched row is required");
  }
  double sum = 0.0;
  for (double w : matched_weights) sum += w;
  sum += anchor_weight;
  if (std::abs(sum - 1.0) > 1e-9) throw InvariantError("prediction weights must sum to 1");

  std::vector<double> mixed(anchor_probs.size());
  for (std::size_t c = 0; c < mixed.size(); ++c) mixed[c] = anchor_weight * anchor_probs[c];
  for (std::size_t k = 0; k < matched_probs.size(); ++k) {
    if (matched_probs[k].size() != mixed.size()) throw InvariantError("row length mismatch");
    for (std::size_t c = 0; c < mixed.size(); ++c) mixed[c] += matched_weights[k] * matched_probs[k][c];
  }
  return mixed;
}

double kl_divergence(std::span<const double> first, std::span<const double> second) {
  double kl = 0.0;
  for (std::size_t c = 0; c < first.size(); ++c) {
    if (first[c] > 0.0) kl += first[c] * std::log(first[c] / second[c]);
  }
  return kl;
}

double effect_E_loss(std::span<const EntityTerm> terms) {
  if (terms.empty()) return 0.0;
  double total = 0.0;
  for (const auto& term : terms) total += -std::log(term.averaged.at(term.gold));
  return total / static_cast<double>(terms.size());
}

double effect_O_loss(std::span<const DistillTerm> matched_part,
                     std::span<const DistillTerm> plain_part, KlOrder order) {
  const std::size_t n = matched_part.size() + plain_part.size();
  if (n == 0) return 0.0;
  double total = 0.0;
  auto add = [&](const DistillTerm& term) {
    total += order == KlOrder::StudentFirst ? kl_divergence(term.student, term.teacher)
                                            : kl_divergence(term.teacher, term.student);
  };
  for (const auto& term : matched_part) add(term);
  for (const auto& term : plain_part) add(term);
  return total / static_cast<double>(n);
}

void CurriculumSchedule::validate() const {
  if (initial < 0.0 || initial > 1.0 || final < 0.0 || final > 1.0) {
    throw ConfigError("curriculum thresholds must lie in [0, 1]");
  }
  if (final > initial) throw ConfigError("delta_m must not exceed delta_1");
  if (epochs < 1) throw ConfigError("curriculum length m must be at least 1");
}

double curriculum_threshold(const CurriculumSchedule& schedule, std::size_t epoch) {
  if (epoch < 1) throw ConfigError("epochs are counted from 1");
  if (schedule.epochs <= 1 || epoch >= schedule.epochs) return schedule.final;
  const double progress = static_cast<double>(epoch - 1) / static_cast<double>(schedule.epochs - 1);
  return schedule.initial + progress * (schedule.final - schedule.initial);
}

double adaptive_weight(double lambda_base, std::size_t old_types, std::size_t new_types) {
  if (new_types == 0) throw ConfigError("adaptive weight needs at least one new type");
  if (lambda_base < 0.0) throw ConfigError("lambda_base must be non-negative");
  return lambda_base * std::sqrt(static_cast<double>(old_types) / static_cast<double>(new_types));
}

std::size_t StepContext::matched_other_count(double threshold) const {
  std::size_t n = 0;
  for (const auto& sentence : annotation.tokens) {
    for (const auto& token : sentence) {
      if (token.membership == Membership::DefinedOther && token.confidence >= threshold) ++n;
    }
  }
  return n;
}

StepContext prepare_step(const TaggerModel& model, const TaggerModel* old_model,
                         const Corpus& slice, const std::vector<std::string>& new_types,
                         const CausalConfig& config) {
  config.curriculum.validate();
  StepContext context;
  for (const auto& sentence : slice.sentences) {
    context.ids.push_back(token_ids(model, sentence));
    std::vector<std::size_t> gold;
    for (const auto& token : sentence.tokens) {
      const std::size_t label = model.labels.index_of(token.tag);
      if (label == model.labels.size()) {
        throw InvariantError("tag '" + token.tag + "' is not a label of the model");
      }
      gold.push_back(label);
    }
    context.gold.push_back(std::move(gold));
  }

  context.annotation = annotate(old_model, slice, config.teacher_temperature);
  context.new_type_count = new_types.size();
  context.matches.resize(slice.sentences.size());
  for (std::size_t s = 0; s < slice.sentences.size(); ++s) {
    context.matches[s].resize(slice.sentences[s].tokens.size());
    for (std::size_t t = 0; t < context.matches[s].size(); ++t) {
      context.matches[s][t].anchor = {static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(t)};
    }
  }
  if (!context.annotation.has_teacher()) return context;

  context.old_type_count = old_model->labels.entity_types().size();
  context.lambda = config.fixed_lambda ? *config.fixed_lambda
                                       : adaptive_weight(config.lambda_base, context.old_type_count,
                                                         context.new_type_count);
  context.index = build_feature_index(*old_model, slice, context.annotation);
  for (const auto& [key, group] : context.index.groups()) {
    for (std::size_t r = 0; r < group.refs.size(); ++r) {
      const TokenRef ref = group.refs[r];
      const bool entity =
          context.annotation.tokens[ref.sentence][ref.position].membership == Membership::Entity;
      context.matches[ref.sentence][ref.position] = knn_match(
          context.index, key, ref, group.features.row(r), entity ? config.k_entity : config.k_other);
    }
  }
  return context;
}

namespace {

// Current-model logits of matched tokens, computed once per batch.
class MatchedLogits {
 public:
  MatchedLogits(const TaggerModel& model, const StepContext& context)
      : model_(model), context_(context) {}

  const std::vector<double>& get(TokenRef ref) {
    auto it = cache_.find(ref);
    if (it != cache_.end()) return it->second;
    const auto feature = encode_token(model_, context_.ids[ref.sentence], ref.position);
    return cache_.emplace(ref, logits(model_, feature)).first->second;
  }

 private:
  const TaggerModel& model_;
  const StepContext& context_;
  std::map<TokenRef, std::vector<double>> cache_;
};

std::vector<double> detached_mixture(const MatchSet& match, MatchedLogits& matched,
                                     double temperature, std::size_t support) {
  std::vector<double> mixture;
  for (std::size_t k = 0; k < match.matched.size(); ++k) {
    const auto p = softmax(matched.get(match.matched[k]), temperature, support);
    if (mixture.empty()) mixture.assign(p.size(), 0.0);
    for (std::size_t c = 0; c < p.size(); ++c) mixture[c] += match.matched_weights[k] * p[c];
  }
  return mixture;
}

}  // namespace

void validate_distillation(const CausalConfig& config) {
  if (config.distill_support == DistillSupport::Full && !config.hard_teacher &&
      config.kl_order == KlOrder::StudentFirst) {
    throw ConfigError("distill_support = full needs kl_order = teacher_first");
  }
}

std::size_t distill_support_size(const TaggerModel& model, const StepContext& context,
                                 const CausalConfig& config) {
  return config.distill_support == DistillSupport::Full ? model.labels.size()
                                                        : context.old_label_count();
}

std::vector<double> padded_teacher(std::vector<double> teacher, std::size_t support) {
  teacher.resize(support, 0.0);
  return teacher;
}

BatchPlan plan_cfner_batch(const TaggerModel& model, const StepContext& context,
                           std::span<const std::size_t> sentences, std::size_t epoch,
                           const CausalConfig& config) {
  BatchPlan plan;
  for (std::size_t s : sentences) {
    plan.ids.push_back(context.ids.at(s));
    plan.objectives.emplace_back(context.ids[s].size());
  }

  if (!context.annotation.has_teacher()) {
    std::size_t n = 0;
    for (std::size_t s : sentences) n += context.ids[s].size();
    for (std::size_t b = 0; b < sentences.size(); ++b) {
      for (std::size_t t = 0; t < plan.ids[b].size(); ++t) {
        RowObjective& o = plan.objectives[b][t];
        o.kind = RowLossKind::CrossEntropy;
        o.target = context.gold[sentences[b]][t];
        o.weight = 1.0 / static_cast<double>(n);
        o.component = "cross_entropy";
      }
    }
    plan.entity_tokens = n;
    return plan;
  }

  validate_distillation(config);
  const double threshold = curriculum_threshold(config.curriculum, epoch);
  const std::size_t support = distill_support_size(model, context, config);
  std::size_t entity_count = 0;
  std::size_t other_count = 0;
  for (std::size_t s : sentences) {
    for (const auto& a : context.annotation.tokens[s]) {
      (a.membership == Membership::Entity ? entity_count : other_count) += 1;
    }
  }

  MatchedLogits matched(model, context);
  for (std::size_t b = 0; b < sentences.size(); ++b) {
    const std::size_t s = sentences[b];
    for (std::size_t t = 0; t < plan.ids[b].size(); ++t) {
      const TokenAnnotation& a = context.annotation.tokens[s][t];
      const MatchSet& match = context.matches[s][t];
      RowObjective& o = plan.objectives[b][t];

      if (a.membership == Membership::Entity) {
        o.kind = RowLossKind::CrossEntropy;
        o.target = context.gold[s][t];
        o.anchor_weight = match.anchor_weight;
        o.detached = detached_mixture(match, matched, 1.0, 0);
        o.weight = 1.0 / static_cast<double>(entity_count);
        o.component = "effect_E";
        ++plan.entity_tokens;
        continue;
      }

      const bool collide = a.membership == Membership::DefinedOther && a.confidence >= threshold &&
                           !match.matched.empty();
      o.support = support;
      o.temperature = config.student_temperature;
      if (collide) {
        o.anchor_weight = match.anchor_weight;
        o.detached = detached_mixture(match, matched, config.student_temperature, support);
        ++plan.matched_other_tokens;
      } else {
        ++plan.plain_other_tokens;
      }
      if (config.hard_teacher) {
        o.kind = RowLossKind::CrossEntropy;
        o.target = a.pseudo_label;
      } else {
        o.kind = RowLossKind::KlDivergence;
        o.teacher = padded_teacher(a.teacher, support);
        o.kl_order = config.kl_order;
      }
      o.weight = context.lambda / static_cast<double>(other_count);
      o.component = "effect_O";
    }
  }
  return plan;
}

double cfner_step_loss(const TaggerModel& model, const StepContext& context,
                       std::span<const std::size_t> sentences, std::size_t epoch,
                       const CausalConfig& config) {
  const BatchPlan plan = plan_cfner_batch(model, context, sentences, epoch, config);
  return loss_value(model, plan.ids, plan.objectives);
}

}  // namespace cfner
