#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cfner/corpus.hpp"

namespace cfner {

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  bool operator==(const Matrix&) const = default;
};

struct EncoderConfig {
  std::size_t embed_dim = 32;
  std::size_t radius = 2;
  std::size_t hidden_dim = 64;
  std::size_t feature_dim = 32;
  double cosine_scale = 10.0;

  std::size_t window() const { return 2 * radius + 1; }
  bool operator==(const EncoderConfig&) const = default;
};

/// Surface -> id map. Id 0 is the shared unknown token.
class Vocabulary {
 public:
  static constexpr std::uint32_t kUnknown = 0;

  Vocabulary();
  std::uint32_t id(std::string_view surface) const;
  /// Returns true when the surface was new.
  bool add(const std::string& surface);
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::uint32_t> ids_;
};

/// "O" followed by B-/I- pairs in the order types were added. Extension only
/// appends, so an older model's labels are a prefix of a newer model's.
class LabelSet {
 public:
  LabelSet() : labels_{"O"} {}
  explicit LabelSet(std::vector<std::string> labels);

  std::size_t size() const { return labels_.size(); }
  const std::string& operator[](std::size_t i) const { return labels_[i]; }
  const std::vector<std::string>& labels() const { return labels_; }
  /// Index of a tag, or size() when absent.
  std::size_t index_of(std::string_view tag) const;
  bool contains(std::string_view tag) const { return index_of(tag) < size(); }
  std::vector<std::string> entity_types() const;
  void add_type(const std::string& type);

 private:
  std::vector<std::string> labels_;
};

struct EncoderParams {
  Matrix embedding;      // V x embed_dim
  Matrix window_proj;    // (embed_dim * window) x hidden_dim
  std::vector<double> hidden_bias;
  Matrix feature_proj;   // hidden_dim x feature_dim
  std::vector<double> feature_bias;
};

struct ClassifierParams {
  Matrix prototypes;     // labels x feature_dim
  double scale = 10.0;
};

struct TaggerModel {
  EncoderConfig config;
  Vocabulary vocab;
  LabelSet labels;
  EncoderParams encoder;
  ClassifierParams classifier;

  /// Mutable views over every trainable tensor, in a fixed order.
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;
  static std::vector<std::string> parameter_names();
};

using TokenIds = std::vector<std::uint32_t>;

/// Fresh model with only the "O" label and the unknown token.
TaggerModel make_model(const EncoderConfig& config, std::uint64_t seed);

/// Adds every unseen surface of `corpus` to the vocabulary, with new
/// embedding rows drawn from the initial embedding distribution.
std::size_t extend_vocabulary(TaggerModel& model, const Corpus& corpus, std::uint64_t seed);

/// Appends B-/I- prototypes for `new_types`; existing prototypes are untouched.
TaggerModel extend_classifier(const TaggerModel& model, const std::vector<std::string>& new_types,
                              std::uint64_t seed);

TokenIds token_ids(const TaggerModel& model, const Sentence& sentence);

/// Unit-norm feature rows, one per token (L x feature_dim).
Matrix encode(const TaggerModel& model, const Sentence& sentence);
Matrix encode_ids(const TaggerModel& model, std::span<const std::uint32_t> ids);
/// Feature of a single position; equals row `position` of encode_ids.
std::vector<double> encode_token(const TaggerModel& model, std::span<const std::uint32_t> ids,
                                 std::size_t position);

/// scale * cosine(feature, prototype) for every label.
std::vector<double> logits(const TaggerModel& model, std::span<const double> feature);

/// softmax(logits / temperature) restricted to the first `support` labels
/// (0 means all labels).
std::vector<double> softmax(std::span<const double> logits, double temperature,
                            std::size_t support = 0);

/// Probability rows (L x labels) at the given temperature.
Matrix predict(const TaggerModel& model, const Matrix& features, double temperature);

/// Argmax label per token at temperature 1.
std::vector<std::size_t> predict_labels(const TaggerModel& model, std::span<const std::uint32_t> ids);

/// Predicted BIO tags for a sentence.
std::vector<std::string> tag_sentence(const TaggerModel& model, const Sentence& sentence);

// ---------------------------------------------------------------------------
// Differentiable objectives
// ---------------------------------------------------------------------------

enum class RowLossKind {
  None,
  /// -log(Ybar[target])
  CrossEntropy,
  /// KL between Ybar and a fixed teacher row.
  KlDivergence,
};

enum class KlOrder {
  /// KL(student || teacher), the argument order of the Effect_O formula.
  StudentFirst,
  /// KL(teacher || student), the classical distillation order.
  TeacherFirst,
};

/// Loss attached to one token. The student distribution is
///   q = softmax(logits[0:support] / temperature)
///   Ybar = anchor_weight * q + detached
/// where `detached` (possibly empty = zeros) is a constant carrying the
/// weighted predictions of matched tokens; it receives no gradient.
struct RowObjective {
  RowLossKind kind = RowLossKind::None;
  std::size_t support = 0;  // 0 = all labels
  double temperature = 1.0;
  double anchor_weight = 1.0;
  std::vector<double> detached;
  std::size_t target = 0;
  std::vector<double> teacher;
  KlOrder kl_order = KlOrder::StudentFirst;
  /// Multiplier applied to the row loss (e.g. lambda / group size).
  double weight = 1.0;
  const char* component = "loss";
};

struct RowLoss {
  double value = 0.0;
  std::vector<double> dlogits;  // same length as the logits row
};

/// Value and gradient w.r.t. the logits of one token's objective, unweighted.
RowLoss evaluate_row(const RowObjective& objective, std::span<const double> logits);

/// Objectives for a batch, indexed [sentence][token].
using BatchObjectives = std::vector<std::vector<RowObjective>>;

/// One gradient tensor per model parameter, same order as parameters().
struct GradientBundle {
  std::vector<std::vector<double>> tensors;

  static GradientBundle zeros_like(const TaggerModel& model);
  double max_abs() const;
};

struct LossAndGrads {
  double value = 0.0;
  GradientBundle grads;
};

/// Sum over tokens of weight * row loss, and its exact gradient.
/// Throws NumericError when a row loss is not finite.
LossAndGrads loss_and_grads(const TaggerModel& model, std::span<const TokenIds> batch,
                            const BatchObjectives& objectives);
double loss_value(const TaggerModel& model, std::span<const TokenIds> batch,
                  const BatchObjectives& objectives);

struct AdamConfig {
  double learning_rate = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;

  static AdamState zeros_like(const TaggerModel& model);
};

/// One bias-corrected Adam update in place.
void adam_step(TaggerModel& model, const GradientBundle& grads, AdamState& state,
               const AdamConfig& config);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

nlohmann::json to_json(const TaggerModel& model);
TaggerModel model_from_json(const nlohmann::json& j);
void save_checkpoint(const std::string& path, const TaggerModel& model);
TaggerModel load_checkpoint(const std::string& path);

}  // namespace cfner
