#include <fstream>

#include "cfner/error.hpp"
#include "cfner/tagger.hpp"

namespace cfner {
namespace {

nlohmann::json matrix_json(const Matrix& m) {
  return {{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  m.data = j.at("data").get<std::vector<double>>();
  if (m.data.size() != m.rows * m.cols) throw Error("checkpoint matrix has the wrong size");
  return m;
}

}  // namespace

nlohmann::json to_json(const TaggerModel& model) {
  const auto& c = model.config;
  return {
      {"format", "cfner-checkpoint-1"},
      {"config",
       {{"embed_dim", c.embed_dim},
        {"radius", c.radius},
        {"hidden_dim", c.hidden_dim},
        {"feature_dim", c.feature_dim},
        {"cosine_scale", c.cosine_scale}}},
      {"labels", model.labels.labels()},
      {"vocab", model.vocab.words()},
      {"embedding", matrix_json(model.encoder.embedding)},
      {"window_proj", matrix_json(model.encoder.window_proj)},
      {"hidden_bias", model.encoder.hidden_bias},
      {"feature_proj", matrix_json(model.encoder.feature_proj)},
      {"feature_bias", model.encoder.feature_bias},
      {"prototypes", matrix_json(model.classifier.prototypes)},
      {"scale", model.classifier.scale},
  };
}

TaggerModel model_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "cfner-checkpoint-1") throw Error("not a cfner checkpoint");
  TaggerModel model;
  const auto& c = j.at("config");
  model.config.embed_dim = c.at("embed_dim");
  model.config.radius = c.at("radius");
  model.config.hidden_dim = c.at("hidden_dim");
  model.config.feature_dim = c.at("feature_dim");
  model.config.cosine_scale = c.at("cosine_scale");
  model.labels = LabelSet(j.at("labels").get<std::vector<std::string>>());
  const auto words = j.at("vocab").get<std::vector<std::string>>();
  for (std::size_t i = 1; i < words.size(); ++i) model.vocab.add(words[i]);
  model.encoder.embedding = matrix_from_json(j.at("embedding"));
  model.encoder.window_proj = matrix_from_json(j.at("window_proj"));
  model.encoder.hidden_bias = j.at("hidden_bias").get<std::vector<double>>();
  model.encoder.feature_proj = matrix_from_json(j.at("feature_proj"));
  model.encoder.feature_bias = j.at("feature_bias").get<std::vector<double>>();
  model.classifier.prototypes = matrix_from_json(j.at("prototypes"));
  model.classifier.scale = j.at("scale");

  const auto& cfg = model.config;
  if (model.encoder.embedding.rows != model.vocab.size() ||
      model.encoder.embedding.cols != cfg.embed_dim ||
      model.encoder.window_proj.rows != cfg.embed_dim * cfg.window() ||
      model.encoder.window_proj.cols != cfg.hidden_dim ||
      model.encoder.hidden_bias.size() != cfg.hidden_dim ||
      model.encoder.feature_proj.rows != cfg.hidden_dim ||
      model.encoder.feature_proj.cols != cfg.feature_dim ||
      model.encoder.feature_bias.size() != cfg.feature_dim ||
      model.classifier.prototypes.rows != model.labels.size() ||
      model.classifier.prototypes.cols != cfg.feature_dim) {
    throw Error("checkpoint shapes are inconsistent");
  }
  return model;
}

void save_checkpoint(const std::string& path, const TaggerModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << to_json(model).dump() << '\n';
}

TaggerModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return model_from_json(nlohmann::json::parse(in));
}

}  // namespace cfner
