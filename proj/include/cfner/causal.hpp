#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cfner/corpus.hpp"
#include "cfner/tagger.hpp"

namespace cfner {

/// Position of a token inside a corpus slice.
struct TokenRef {
  std::uint32_t sentence = 0;
  std::uint32_t position = 0;

  auto operator<=>(const TokenRef&) const = default;
};

/// D^E, D^O or D^UO.
enum class Membership { Entity, DefinedOther, UndefinedOther };

std::string_view to_string(Membership membership);

struct TokenAnnotation {
  Membership membership = Membership::UndefinedOther;
  /// Old-model argmax label (index into the old label set).
  std::size_t pseudo_label = 0;
  /// Old-model maximum probability at temperature 1.
  double confidence = 0.0;
  /// Old-model probabilities over the old labels at the teacher temperature.
  /// Empty for entity tokens and when there is no old model.
  std::vector<double> teacher;
};

struct SliceAnnotation {
  std::vector<std::vector<TokenAnnotation>> tokens;
  /// Old label names; empty at the first step.
  std::vector<std::string> old_labels;

  bool has_teacher() const { return !old_labels.empty(); }
  std::size_t count(Membership membership) const;
};

/// Splits the tokens of a (masked) slice into D^E, D^O and D^UO using the
/// frozen old model. `old_model` may be null at the first step, in which case
/// every O token is D^UO and carries no teacher row.
SliceAnnotation annotate(const TaggerModel* old_model, const Corpus& slice,
                         double teacher_temperature);

/// Old-model features grouped by gold tag (D^E) or pseudo label (D^O).
class FeatureIndex {
 public:
  struct Group {
    std::vector<TokenRef> refs;
    Matrix features;  // one unit-norm row per ref
  };

  void add(const std::string& key, TokenRef ref, std::span<const double> feature);
  const Group* group(std::string_view key) const;
  const std::map<std::string, Group, std::less<>>& groups() const { return groups_; }
  std::size_t size() const;
  bool empty() const { return groups_.empty(); }

 private:
  std::map<std::string, Group, std::less<>> groups_;
};

/// Group key of an annotated token: the gold tag for D^E, the pseudo label
/// name for D^O, nothing for D^UO.
std::optional<std::string> group_key(const TokenAnnotation& annotation, const Token& token,
                                     const SliceAnnotation& slice_annotation);

FeatureIndex build_feature_index(const TaggerModel& old_model, const Corpus& slice,
                                 const SliceAnnotation& annotation);

/// An anchor, its nearest same-group neighbours and the averaging weights.
struct MatchSet {
  TokenRef anchor;
  std::vector<TokenRef> matched;
  std::vector<double> distances;
  double anchor_weight = 1.0;
  std::vector<double> matched_weights;

  /// Matched weights are summed first, then the anchor weight is added.
  double weight_sum() const;
};

/// W_i = 1/2 and W_ik = 1/(2m) for m > 0 matches; W_i = 1 otherwise.
void assign_default_weights(MatchSet& match);

/// K nearest tokens of the anchor's group by cosine distance (1 - dot),
/// excluding the anchor, ties broken by smaller token reference. A missing
/// group yields an empty match.
MatchSet knn_match(const FeatureIndex& index, std::string_view key, TokenRef anchor,
                   std::span<const double> anchor_feature, std::size_t k);

/// W_i * anchor + sum_k W_ik * matched_k. Throws InvariantError when the
/// weights do not sum to one within 1e-9 or rows disagree in length.
std::vector<double> weighted_prediction(std::span<const double> anchor_probs,
                                        const std::vector<std::vector<double>>& matched_probs,
                                        double anchor_weight,
                                        std::span<const double> matched_weights);

double kl_divergence(std::span<const double> first, std::span<const double> second);

struct EntityTerm {
  std::vector<double> averaged;
  std::size_t gold = 0;
};

struct DistillTerm {
  std::vector<double> student;
  std::vector<double> teacher;
};

/// Mean of -log(averaged[gold]); zero when there are no terms.
double effect_E_loss(std::span<const EntityTerm> terms);

/// Pooled mean of the KL terms over both parts; zero when both are empty.
double effect_O_loss(std::span<const DistillTerm> matched_part,
                     std::span<const DistillTerm> plain_part,
                     KlOrder order = KlOrder::StudentFirst);

struct CurriculumSchedule {
  double initial = 1.0;  // delta_1
  double final = 0.0;    // delta_m
  std::size_t epochs = 10;  // m

  void validate() const;
};

/// Linear decay from delta_1 at epoch 1 to delta_m at epoch m, flat after.
double curriculum_threshold(const CurriculumSchedule& schedule, std::size_t epoch);

/// lambda_base * sqrt(old_types / new_types).
double adaptive_weight(double lambda_base, std::size_t old_types, std::size_t new_types);

/// Student coordinates compared against the teacher on Other tokens.
/// Old: the student row is sliced to the old labels and renormalized.
/// Full: the whole student row; the teacher gets zero mass on new labels, so
/// only the teacher-first KL order is finite.
enum class DistillSupport { Old, Full };

struct CausalConfig {
  std::size_t k_entity = 3;
  std::size_t k_other = 3;
  CurriculumSchedule curriculum;
  double lambda_base = 2.0;
  /// Replaces the adaptive weight when set.
  std::optional<double> fixed_lambda;
  double teacher_temperature = 1.0;
  double student_temperature = 2.0;
  KlOrder kl_order = KlOrder::StudentFirst;
  DistillSupport distill_support = DistillSupport::Old;
  /// Distill against the one-hot old-model argmax (ST+CF).
  bool hard_teacher = false;
};

/// Throws ConfigError for a full support combined with student-first KL.
void validate_distillation(const CausalConfig& config);

/// Everything computed once per CL step with the frozen old model.
struct StepContext {
  /// Token ids under the current model's vocabulary.
  std::vector<TokenIds> ids;
  /// Gold label index in the current model's label set.
  std::vector<std::vector<std::size_t>> gold;
  SliceAnnotation annotation;
  FeatureIndex index;
  /// Per-token match sets; D^UO tokens get an empty one.
  std::vector<std::vector<MatchSet>> matches;
  std::size_t old_type_count = 0;
  std::size_t new_type_count = 0;
  double lambda = 0.0;

  std::size_t old_label_count() const { return annotation.old_labels.size(); }
  /// D^O tokens whose confidence reaches the threshold.
  std::size_t matched_other_count(double threshold) const;
};

/// `model` must already carry the new types; `old_model` is null at step 0.
StepContext prepare_step(const TaggerModel& model, const TaggerModel* old_model,
                         const Corpus& slice, const std::vector<std::string>& new_types,
                         const CausalConfig& config);

struct BatchPlan {
  std::vector<TokenIds> ids;
  BatchObjectives objectives;
  std::size_t entity_tokens = 0;
  std::size_t matched_other_tokens = 0;
  std::size_t plain_other_tokens = 0;
};

/// Number of leading student coordinates used on Other tokens.
std::size_t distill_support_size(const TaggerModel& model, const StepContext& context,
                                 const CausalConfig& config);
/// Teacher row extended with zeros up to `support` coordinates.
std::vector<double> padded_teacher(std::vector<double> teacher, std::size_t support);

/// Objectives of Effect_E + lambda * Effect_O for the given sentences of the
/// step. Matched-token predictions are evaluated with the current model and
/// frozen into the objectives, so gradients flow only through anchors.
BatchPlan plan_cfner_batch(const TaggerModel& model, const StepContext& context,
                           std::span<const std::size_t> sentences, std::size_t epoch,
                           const CausalConfig& config);

double cfner_step_loss(const TaggerModel& model, const StepContext& context,
                       std::span<const std::size_t> sentences, std::size_t epoch,
                       const CausalConfig& config);

}  // namespace cfner
