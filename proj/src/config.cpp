#include "cfner/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>

#include "cfner/error.hpp"

namespace cfner {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string unquote(std::string_view s) {
  s = trim(s);
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    return std::string(s.substr(1, s.size() - 2));
  }
  return std::string(s);
}

double to_double(std::string_view key, std::string_view text) {
  const std::string s(trim(text));
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("'" + std::string(key) + "' expects a number, got '" + s + "'");
}

std::uint64_t to_unsigned(std::string_view key, std::string_view text) {
  const std::string_view s = trim(text);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("'" + std::string(key) + "' expects a non-negative integer, got '" +
                      std::string(s) + "'");
  }
  return v;
}

bool to_bool(std::string_view key, std::string_view text) {
  const std::string s = unquote(text);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("'" + std::string(key) + "' expects true or false");
}

std::vector<std::string> to_list(std::string_view text) {
  std::string_view s = trim(text);
  if (!s.empty() && s.front() == '[') {
    if (s.back() != ']') throw ConfigError("unterminated list '" + std::string(s) + "'");
    s = s.substr(1, s.size() - 2);
  }
  std::vector<std::string> items;
  while (!trim(s).empty()) {
    const auto comma = s.find(',');
    items.push_back(unquote(s.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    s = s.substr(comma + 1);
  }
  return items;
}

using Setter = std::function<void(ExperimentConfig&, std::string_view, std::string_view)>;

template <typename Field>
Setter size_field(Field field) {
  return [field](ExperimentConfig& c, std::string_view k, std::string_view v) {
    field(c) = static_cast<std::size_t>(to_unsigned(k, v));
  };
}

template <typename Field>
Setter real_field(Field field) {
  return [field](ExperimentConfig& c, std::string_view k, std::string_view v) {
    field(c) = to_double(k, v);
  };
}

const std::map<std::string, Setter, std::less<>>& setters() {
  using C = ExperimentConfig;
  static const std::map<std::string, Setter, std::less<>> table = {
      {"train", [](C& c, auto, auto v) { c.train_path = unquote(v); }},
      {"dev", [](C& c, auto, auto v) { c.dev_path = unquote(v); }},
      {"test", [](C& c, auto, auto v) { c.test_path = unquote(v); }},
      {"synth_seed", [](C& c, auto k, auto v) { c.synth_seed = to_unsigned(k, v); }},
      {"synth.num_types", size_field([](C& c) -> auto& { return c.synth.num_types; })},
      {"synth.sentences_per_type", size_field([](C& c) -> auto& { return c.synth.sentences_per_type; })},
      {"synth.vocab_per_type", size_field([](C& c) -> auto& { return c.synth.vocab_per_type; })},
      {"synth.sentence_length", size_field([](C& c) -> auto& { return c.synth.sentence_length; })},
      {"synth.other_vocab_size", size_field([](C& c) -> auto& { return c.synth.other_vocab_size; })},
      {"synth.noise_rate", real_field([](C& c) -> auto& { return c.synth.noise_rate; })},
      {"synth.secondary_mention_rate",
       real_field([](C& c) -> auto& { return c.synth.secondary_mention_rate; })},
      {"fg", size_field([](C& c) -> auto& { return c.fg; })},
      {"pg", size_field([](C& c) -> auto& { return c.pg; })},
      {"baseline", [](C& c, auto, auto v) { c.method = parse_method(unquote(v)); }},
      {"k", size_field([](C& c) -> auto& { return c.k; })},
      {"k_entity", [](C& c, auto k, auto v) { c.k_entity = to_unsigned(k, v); }},
      {"k_other", [](C& c, auto k, auto v) { c.k_other = to_unsigned(k, v); }},
      {"delta1", real_field([](C& c) -> auto& { return c.delta1; })},
      {"deltam", real_field([](C& c) -> auto& { return c.deltam; })},
      {"m", size_field([](C& c) -> auto& { return c.m; })},
      {"lambda_base", real_field([](C& c) -> auto& { return c.lambda_base; })},
      {"teacher_temperature", real_field([](C& c) -> auto& { return c.teacher_temperature; })},
      {"student_temperature", real_field([](C& c) -> auto& { return c.student_temperature; })},
      {"kl_order",
       [](C& c, auto, auto v) {
         const std::string s = unquote(v);
         if (s == "student_first") {
           c.kl_order = KlOrder::StudentFirst;
         } else if (s == "teacher_first") {
           c.kl_order = KlOrder::TeacherFirst;
         } else {
           throw ConfigError("kl_order must be student_first or teacher_first");
         }
       }},
      {"distill_support",
       [](C& c, auto, auto v) {
         const std::string s = unquote(v);
         if (s == "old") {
           c.distill_support = DistillSupport::Old;
         } else if (s == "full") {
           c.distill_support = DistillSupport::Full;
         } else {
           throw ConfigError("distill_support must be old or full");
         }
       }},
      {"epochs", size_field([](C& c) -> auto& { return c.epochs; })},
      {"batch_size", size_field([](C& c) -> auto& { return c.batch_size; })},
      {"learning_rate", real_field([](C& c) -> auto& { return c.learning_rate; })},
      {"seeds",
       [](C& c, auto k, auto v) {
         c.seeds.clear();
         for (const auto& item : to_list(v)) c.seeds.push_back(to_unsigned(k, item));
       }},
      {"encoder.embed_dim", size_field([](C& c) -> auto& { return c.encoder.embed_dim; })},
      {"encoder.radius", size_field([](C& c) -> auto& { return c.encoder.radius; })},
      {"encoder.hidden_dim", size_field([](C& c) -> auto& { return c.encoder.hidden_dim; })},
      {"encoder.feature_dim", size_field([](C& c) -> auto& { return c.encoder.feature_dim; })},
      {"encoder.cosine_scale", real_field([](C& c) -> auto& { return c.encoder.cosine_scale; })},
      {"save_checkpoints", [](C& c, auto k, auto v) { c.save_checkpoints = to_bool(k, v); }},
  };
  return table;
}

}  // namespace

std::map<std::string, std::string> parse_config_text(std::istream& in) {
  std::map<std::string, std::string> entries;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::string_view view = line;
    bool quoted = false;
    for (std::size_t i = 0; i < view.size(); ++i) {
      if (view[i] == '"') quoted = !quoted;
      if (view[i] == '#' && !quoted) {
        view = view.substr(0, i);
        break;
      }
    }
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
    }
    const std::string key(trim(view.substr(0, eq)));
    if (key.empty()) throw ConfigError("config line " + std::to_string(number) + ": empty key");
    entries[key] = std::string(trim(view.substr(eq + 1)));
  }
  return entries;
}

void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value) {
  auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  it->second(config, key, value);
}

ExperimentConfig load_config(std::istream& in) {
  ExperimentConfig config;
  for (const auto& [key, value] : parse_config_text(in)) apply_setting(config, key, value);
  return config;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return load_config(in);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [key, setter] : setters()) keys.push_back(key);
  return keys;
}

}  // namespace cfner
