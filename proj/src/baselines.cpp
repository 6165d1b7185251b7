#include "cfner/baselines.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "cfner/error.hpp"

namespace cfner {

std::string_view to_string(Method method) {
  switch (method) {
    case Method::FinetuneOnly:
      return "finetune";
    case Method::SelfTraining:
      return "st";
    case Method::ExtendNER:
      return "extendner";
    case Method::CFNER:
      return "cfner";
    case Method::ST_CF:
      return "st_cf";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (lower == "finetune" || lower == "finetune_only") return Method::FinetuneOnly;
  if (lower == "st" || lower == "self_training") return Method::SelfTraining;
  if (lower == "extendner") return Method::ExtendNER;
  if (lower == "cfner") return Method::CFNER;
  if (lower == "st_cf" || lower == "st+cf") return Method::ST_CF;
  throw ConfigError("unknown baseline '" + std::string(name) + "'");
}

double finetune_loss(const TaggerModel& model, const Corpus& batch) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& sentence : batch.sentences) {
    const Matrix probs = predict(model, encode(model, sentence), 1.0);
    for (std::size_t t = 0; t < sentence.tokens.size(); ++t) {
      total += -std::log(probs(t, model.labels.index_of(sentence.tokens[t].tag)));
      ++n;
    }
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

Corpus st_relabel(const TaggerModel& old_model, const Corpus& slice) {
  Corpus relabeled = slice;
  for (auto& sentence : relabeled.sentences) {
    const auto predicted = predict_labels(old_model, token_ids(old_model, sentence));
    for (std::size_t t = 0; t < sentence.tokens.size(); ++t) {
      if (sentence.tokens[t].tag == "O" && predicted[t] != 0) {
        sentence.tokens[t].tag = old_model.labels[predicted[t]];
      }
    }
  }
  return relabeled;
}

double extendner_loss(const TaggerModel& model, const TaggerModel* old_model, const Corpus& batch,
                      double teacher_temperature, double student_temperature, KlOrder order,
                      DistillSupport support) {
  if (old_model == nullptr || old_model->labels.size() <= 1) return finetune_loss(model, batch);
  const bool full = support == DistillSupport::Full;
  if (full && order == KlOrder::StudentFirst) {
    throw ConfigError("distill_support = full needs kl_order = teacher_first");
  }
  const std::size_t old_labels = old_model->labels.size();
  const std::size_t student_labels = full ? model.labels.size() : old_labels;
  double ce = 0.0;
  double kl = 0.0;
  std::size_t entity_tokens = 0;
  std::size_t other_tokens = 0;
  for (const auto& sentence : batch.sentences) {
    const Matrix student = encode(model, sentence);
    const Matrix teacher = encode(*old_model, sentence);
    for (std::size_t t = 0; t < sentence.tokens.size(); ++t) {
      const auto z = logits(model, student.row(t));
      const std::string& tag = sentence.tokens[t].tag;
      if (tag != "O") {
        ce += -std::log(softmax(z, 1.0)[model.labels.index_of(tag)]);
        ++entity_tokens;
        continue;
      }
      const auto q = softmax(z, student_temperature, student_labels);
      auto p = softmax(logits(*old_model, teacher.row(t)), teacher_temperature);
      p.resize(student_labels, 0.0);
      kl += order == KlOrder::StudentFirst ? kl_divergence(q, p) : kl_divergence(p, q);
      ++other_tokens;
    }
  }
  const double ce_mean = entity_tokens == 0 ? 0.0 : ce / static_cast<double>(entity_tokens);
  const double kl_mean = other_tokens == 0 ? 0.0 : kl / static_cast<double>(other_tokens);
  return ce_mean + kl_mean;
}

BatchPlan plan_finetune_batch(const StepContext& context, std::span<const std::size_t> sentences) {
  BatchPlan plan;
  std::size_t n = 0;
  for (std::size_t s : sentences) n += context.ids.at(s).size();
  for (std::size_t s : sentences) {
    plan.ids.push_back(context.ids[s]);
    std::vector<RowObjective> row(context.ids[s].size());
    for (std::size_t t = 0; t < row.size(); ++t) {
      row[t].kind = RowLossKind::CrossEntropy;
      row[t].target = context.gold[s][t];
      row[t].weight = 1.0 / static_cast<double>(n);
      row[t].component = "cross_entropy";
    }
    plan.objectives.push_back(std::move(row));
  }
  plan.entity_tokens = n;
  return plan;
}

BatchPlan plan_extendner_batch(const TaggerModel& model, const StepContext& context,
                               std::span<const std::size_t> sentences, const CausalConfig& config) {
  if (!context.annotation.has_teacher()) return plan_finetune_batch(context, sentences);
  validate_distillation(config);
  const std::size_t support = distill_support_size(model, context, config);
  std::size_t entity_count = 0;
  std::size_t other_count = 0;
  for (std::size_t s : sentences) {
    for (std::size_t label : context.gold.at(s)) (label != 0 ? entity_count : other_count) += 1;
  }
  BatchPlan plan;
  for (std::size_t s : sentences) {
    plan.ids.push_back(context.ids[s]);
    std::vector<RowObjective> row(context.ids[s].size());
    for (std::size_t t = 0; t < row.size(); ++t) {
      RowObjective& o = row[t];
      if (context.gold[s][t] != 0) {
        o.kind = RowLossKind::CrossEntropy;
        o.target = context.gold[s][t];
        o.weight = 1.0 / static_cast<double>(entity_count);
        o.component = "cross_entropy";
        ++plan.entity_tokens;
      } else {
        o.kind = RowLossKind::KlDivergence;
        o.support = support;
        o.temperature = config.student_temperature;
        o.teacher = padded_teacher(context.annotation.tokens[s][t].teacher, support);
        o.kl_order = config.kl_order;
        o.weight = 1.0 / static_cast<double>(other_count);
        o.component = "distillation";
        ++plan.plain_other_tokens;
      }
    }
    plan.objectives.push_back(std::move(row));
  }
  return plan;
}

BatchPlan plan_batch(Method method, const TaggerModel& model, const StepContext& context,
                     std::span<const std::size_t> sentences, std::size_t epoch,
                     const CausalConfig& config) {
  switch (method) {
    case Method::FinetuneOnly:
    case Method::SelfTraining:
      return plan_finetune_batch(context, sentences);
    case Method::ExtendNER:
      return plan_extendner_batch(model, context, sentences, config);
    case Method::CFNER:
      return plan_cfner_batch(model, context, sentences, epoch, config);
    case Method::ST_CF: {
      CausalConfig hard = config;
      hard.hard_teacher = true;
      return plan_cfner_batch(model, context, sentences, epoch, hard);
    }
  }
  throw ConfigError("unhandled method");
}

}  // namespace cfner
