#pragma once

#include <span>
#include <string>
#include <string_view>

#include "cfner/causal.hpp"

namespace cfner {

enum class Method { FinetuneOnly, SelfTraining, ExtendNER, CFNER, ST_CF };

std::string_view to_string(Method method);
/// Accepts finetune, st, extendner, cfner, st_cf (case-insensitive; "st+cf" too).
Method parse_method(std::string_view name);

/// Mean cross-entropy of every token against its tag.
double finetune_loss(const TaggerModel& model, const Corpus& batch);

/// O tokens whose old-model argmax is an entity label take that label.
Corpus st_relabel(const TaggerModel& old_model, const Corpus& slice);

/// Mean cross-entropy over entity tokens plus mean KL over O tokens between
/// the student (temperature T_s, restricted per `support`) and the teacher
/// (temperature T_t). Reduces to finetune_loss without an old model.
double extendner_loss(const TaggerModel& model, const TaggerModel* old_model, const Corpus& batch,
                      double teacher_temperature, double student_temperature,
                      KlOrder order = KlOrder::StudentFirst,
                      DistillSupport support = DistillSupport::Old);

/// Cross-entropy on every token of the step context's gold labels.
BatchPlan plan_finetune_batch(const StepContext& context, std::span<const std::size_t> sentences);

BatchPlan plan_extendner_batch(const TaggerModel& model, const StepContext& context,
                               std::span<const std::size_t> sentences, const CausalConfig& config);

/// Dispatches to the objective of `method`. For SelfTraining the context must
/// have been prepared on the relabeled slice; ST_CF forces a hard teacher.
BatchPlan plan_batch(Method method, const TaggerModel& model, const StepContext& context,
                     std::span<const std::size_t> sentences, std::size_t epoch,
                     const CausalConfig& config);

}  // namespace cfner
