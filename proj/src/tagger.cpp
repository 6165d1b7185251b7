#include "cfner/tagger.hpp"

#include <algorithm>
#include <cmath>

#include "cfner/error.hpp"
#include "cfner/rng.hpp"
#include "tagger_internal.hpp"

namespace cfner {

Vocabulary::Vocabulary() : words_{"<unk>"} { ids_.emplace("<unk>", kUnknown); }

std::uint32_t Vocabulary::id(std::string_view surface) const {
  auto it = ids_.find(std::string(surface));
  return it == ids_.end() ? kUnknown : it->second;
}

bool Vocabulary::add(const std::string& surface) {
  auto [it, inserted] = ids_.emplace(surface, static_cast<std::uint32_t>(words_.size()));
  if (inserted) words_.push_back(surface);
  return inserted;
}

LabelSet::LabelSet(std::vector<std::string> labels) : labels_(std::move(labels)) {
  if (labels_.empty() || labels_.front() != "O") throw Error("label set must start with O");
}

std::size_t LabelSet::index_of(std::string_view tag) const {
  auto it = std::find(labels_.begin(), labels_.end(), tag);
  return static_cast<std::size_t>(it - labels_.begin());
}

std::vector<std::string> LabelSet::entity_types() const {
  std::vector<std::string> types;
  for (std::size_t i = 1; i < labels_.size(); i += 2) types.push_back(tag_type(labels_[i]));
  return types;
}

void LabelSet::add_type(const std::string& type) {
  labels_.push_back(make_tag(TagPrefix::Begin, type));
  labels_.push_back(make_tag(TagPrefix::Inside, type));
}

std::vector<std::span<double>> TaggerModel::parameters() {
  return {encoder.embedding.data, encoder.window_proj.data, encoder.hidden_bias,
          encoder.feature_proj.data, encoder.feature_bias, classifier.prototypes.data};
}

std::vector<std::span<const double>> TaggerModel::parameters() const {
  return {encoder.embedding.data, encoder.window_proj.data, encoder.hidden_bias,
          encoder.feature_proj.data, encoder.feature_bias, classifier.prototypes.data};
}

std::vector<std::string> TaggerModel::parameter_names() {
  return {"embedding", "window_proj", "hidden_bias", "feature_proj", "feature_bias", "prototypes"};
}

namespace {

void fill_normal(std::span<double> values, Rng& rng, double stddev) {
  for (double& v : values) v = stddev * rng.normal();
}

// Zero-mean isotropic direction rescaled to `norm`.
void init_prototype(std::span<double> row, Rng& rng, double norm) {
  double sq = 0.0;
  for (double& v : row) {
    v = rng.normal();
    sq += v * v;
  }
  const double factor = norm / std::sqrt(sq);
  for (double& v : row) v *= factor;
}

constexpr double kPrototypeNorm = 0.1;
// Small embeddings keep Adam's fixed step size large relative to each
// surface vector, so rare surfaces are learned within a few epochs.
constexpr double kEmbeddingStd = 0.01;
// Context blocks of the window projection start damped so a token's own
// surface dominates its initial feature.
constexpr double kContextGain = 0.1;

}  // namespace

TaggerModel make_model(const EncoderConfig& config, std::uint64_t seed) {
  if (config.embed_dim == 0 || config.hidden_dim == 0 || config.feature_dim == 0) {
    throw ConfigError("encoder dimensions must be positive");
  }
  if (!(config.cosine_scale > 0.0)) throw ConfigError("cosine scale must be positive");
  TaggerModel model;
  model.config = config;
  model.classifier.scale = config.cosine_scale;
  Rng rng(seed);

  const std::size_t input_dim = config.embed_dim * config.window();
  auto& enc = model.encoder;
  enc.embedding = Matrix(1, config.embed_dim);
  fill_normal(enc.embedding.data, rng, kEmbeddingStd);
  enc.window_proj = Matrix(input_dim, config.hidden_dim);
  for (std::size_t w = 0; w < config.window(); ++w) {
    const double gain = w == config.radius ? 1.0 : kContextGain;
    for (std::size_t i = 0; i < config.embed_dim; ++i) {
      fill_normal(enc.window_proj.row(w * config.embed_dim + i), rng,
                  gain / std::sqrt(static_cast<double>(config.embed_dim)));
    }
  }
  enc.hidden_bias.assign(config.hidden_dim, 0.0);
  enc.feature_proj = Matrix(config.hidden_dim, config.feature_dim);
  fill_normal(enc.feature_proj.data, rng, 1.0 / std::sqrt(static_cast<double>(config.hidden_dim)));
  enc.feature_bias.assign(config.feature_dim, 0.0);

  model.classifier.prototypes = Matrix(1, config.feature_dim);
  init_prototype(model.classifier.prototypes.row(0), rng, kPrototypeNorm);
  return model;
}

std::size_t extend_vocabulary(TaggerModel& model, const Corpus& corpus, std::uint64_t seed) {
  Rng rng(seed);
  std::size_t added = 0;
  auto& table = model.encoder.embedding;
  for (const auto& sentence : corpus.sentences) {
    for (const auto& token : sentence.tokens) {
      if (!model.vocab.add(token.surface)) continue;
      ++added;
      table.data.resize(table.data.size() + table.cols);
      ++table.rows;
      fill_normal(table.row(table.rows - 1), rng, kEmbeddingStd);
    }
  }
  return added;
}

TaggerModel extend_classifier(const TaggerModel& model, const std::vector<std::string>& new_types,
                              std::uint64_t seed) {
  std::set<std::string> seen;
  for (const auto& type : new_types) {
    if (model.labels.contains(make_tag(TagPrefix::Begin, type)) || !seen.insert(type).second) {
      throw ConfigError("entity type '" + type + "' is already part of the classifier");
    }
  }
  TaggerModel extended = model;
  Rng rng(seed);
  auto& protos = extended.classifier.prototypes;
  for (const auto& type : new_types) {
    extended.labels.add_type(type);
    for (int k = 0; k < 2; ++k) {
      protos.data.resize(protos.data.size() + protos.cols);
      ++protos.rows;
      init_prototype(protos.row(protos.rows - 1), rng, kPrototypeNorm);
    }
  }
  return extended;
}

TokenIds token_ids(const TaggerModel& model, const Sentence& sentence) {
  TokenIds ids;
  ids.reserve(sentence.tokens.size());
  for (const auto& token : sentence.tokens) ids.push_back(model.vocab.id(token.surface));
  return ids;
}

namespace detail {

PrototypeCache::PrototypeCache(const TaggerModel& model) {
  const auto& protos = model.classifier.prototypes;
  unit = protos;
  norms.resize(protos.rows);
  for (std::size_t c = 0; c < protos.rows; ++c) {
    double sq = 0.0;
    for (double v : protos.row(c)) sq += v * v;
    norms[c] = std::sqrt(sq);
    for (double& v : unit.row(c)) v /= norms[c];
  }
}

void forward_token(const TaggerModel& model, std::span<const std::uint32_t> ids,
                   std::size_t position, TokenCache& cache) {
  const auto& cfg = model.config;
  const auto& enc = model.encoder;
  const std::size_t window = cfg.window();
  const std::size_t de = cfg.embed_dim;

  cache.window_ids.assign(window, kPadding);
  cache.hidden.assign(enc.hidden_bias.begin(), enc.hidden_bias.end());
  for (std::size_t w = 0; w < window; ++w) {
    const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(position) + static_cast<std::ptrdiff_t>(w) -
                               static_cast<std::ptrdiff_t>(cfg.radius);
    if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(ids.size())) continue;
    const std::uint32_t id = ids[static_cast<std::size_t>(pos)];
    cache.window_ids[w] = id;
    const double* emb = enc.embedding.data.data() + static_cast<std::size_t>(id) * de;
    for (std::size_t i = 0; i < de; ++i) {
      const double x = emb[i];
      const double* wrow = enc.window_proj.data.data() + (w * de + i) * cfg.hidden_dim;
      for (std::size_t j = 0; j < cfg.hidden_dim; ++j) cache.hidden[j] += x * wrow[j];
    }
  }
  for (double& h : cache.hidden) h = std::tanh(h);

  cache.feature.assign(enc.feature_bias.begin(), enc.feature_bias.end());
  for (std::size_t i = 0; i < cfg.hidden_dim; ++i) {
    const double h = cache.hidden[i];
    const double* wrow = enc.feature_proj.data.data() + i * cfg.feature_dim;
    for (std::size_t j = 0; j < cfg.feature_dim; ++j) cache.feature[j] += h * wrow[j];
  }
  double sq = 0.0;
  for (double v : cache.feature) sq += v * v;
  cache.norm = std::sqrt(sq);
  for (double& v : cache.feature) v /= cache.norm;
}

void cosine_logits(const TaggerModel& model, const PrototypeCache& protos,
                   std::span<const double> feature, std::vector<double>& out) {
  out.assign(protos.unit.rows, 0.0);
  for (std::size_t c = 0; c < protos.unit.rows; ++c) {
    double dot = 0.0;
    const auto row = protos.unit.row(c);
    for (std::size_t j = 0; j < feature.size(); ++j) dot += feature[j] * row[j];
    out[c] = model.classifier.scale * dot;
  }
}

}  // namespace detail

Matrix encode_ids(const TaggerModel& model, std::span<const std::uint32_t> ids) {
  Matrix features(ids.size(), model.config.feature_dim);
  detail::TokenCache cache;
  for (std::size_t t = 0; t < ids.size(); ++t) {
    detail::forward_token(model, ids, t, cache);
    std::copy(cache.feature.begin(), cache.feature.end(), features.row(t).begin());
  }
  return features;
}

Matrix encode(const TaggerModel& model, const Sentence& sentence) {
  return encode_ids(model, token_ids(model, sentence));
}

std::vector<double> encode_token(const TaggerModel& model, std::span<const std::uint32_t> ids,
                                 std::size_t position) {
  detail::TokenCache cache;
  detail::forward_token(model, ids, position, cache);
  return cache.feature;
}

std::vector<double> logits(const TaggerModel& model, std::span<const double> feature) {
  std::vector<double> out;
  detail::cosine_logits(model, detail::PrototypeCache(model), feature, out);
  return out;
}

std::vector<double> softmax(std::span<const double> logits, double temperature,
                            std::size_t support) {
  const std::size_t n = support == 0 ? logits.size() : support;
  std::vector<double> p(n);
  double top = logits[0] / temperature;
  for (std::size_t c = 1; c < n; ++c) top = std::max(top, logits[c] / temperature);
  double total = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    p[c] = std::exp(logits[c] / temperature - top);
    total += p[c];
  }
  for (double& v : p) v /= total;
  return p;
}

Matrix predict(const TaggerModel& model, const Matrix& features, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  const detail::PrototypeCache protos(model);
  Matrix probs(features.rows, model.labels.size());
  std::vector<double> z;
  for (std::size_t t = 0; t < features.rows; ++t) {
    detail::cosine_logits(model, protos, features.row(t), z);
    const auto p = softmax(z, temperature);
    std::copy(p.begin(), p.end(), probs.row(t).begin());
  }
  return probs;
}

std::vector<std::size_t> predict_labels(const TaggerModel& model,
                                        std::span<const std::uint32_t> ids) {
  const detail::PrototypeCache protos(model);
  detail::TokenCache cache;
  std::vector<double> z;
  std::vector<std::size_t> labels(ids.size());
  for (std::size_t t = 0; t < ids.size(); ++t) {
    detail::forward_token(model, ids, t, cache);
    detail::cosine_logits(model, protos, cache.feature, z);
    labels[t] = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
  }
  return labels;
}

std::vector<std::string> tag_sentence(const TaggerModel& model, const Sentence& sentence) {
  std::vector<std::string> tags;
  for (std::size_t label : predict_labels(model, token_ids(model, sentence))) {
    tags.push_back(model.labels[label]);
  }
  return tags;
}

}  // namespace cfner
