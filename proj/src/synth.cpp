#include <algorithm>
#include <array>
#include <cstdio>

#include "cfner/corpus.hpp"
#include "cfner/error.hpp"
#include "cfner/rng.hpp"

namespace cfner {
namespace {

constexpr std::array<const char*, 16> kTypeNames = {
    "ANIMAL", "BRAND",  "CITY",    "DISEASE", "EVENT",  "FOOD",  "LANGUAGE", "MONEY",
    "ORG",    "PERSON", "PLANET",  "RIVER",   "SPORT",  "TITLE", "VEHICLE",  "WORK"};

std::string type_name(std::size_t i) {
  if (i < kTypeNames.size()) return kTypeNames[i];
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "TYPE%03zu", i);
  return buffer;
}

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

nlohmann::json to_json(const SynthSpec& spec) {
  return {{"num_types", spec.num_types},
          {"sentences_per_type", spec.sentences_per_type},
          {"vocab_per_type", spec.vocab_per_type},
          {"sentence_length", spec.sentence_length},
          {"other_vocab_size", spec.other_vocab_size},
          {"noise_rate", spec.noise_rate},
          {"secondary_mention_rate", spec.secondary_mention_rate}};
}

Corpus synth_corpus(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.num_types == 0 || spec.sentences_per_type == 0 || spec.vocab_per_type == 0 ||
      spec.sentence_length == 0 || spec.other_vocab_size == 0) {
    throw ConfigError("synthetic corpus counts must be positive");
  }
  if (spec.noise_rate < 0.0 || spec.noise_rate >= 1.0) {
    throw ConfigError("noise_rate must lie in [0, 1)");
  }

  std::vector<std::string> types;
  std::vector<std::vector<std::string>> vocab(spec.num_types);
  for (std::size_t t = 0; t < spec.num_types; ++t) {
    types.push_back(type_name(t));
    const std::string stem = lowercase(types.back());
    for (std::size_t w = 0; w < spec.vocab_per_type; ++w) {
      vocab[t].push_back(stem + "_" + std::to_string(w));
    }
  }

  Rng rng(seed);
  auto other_surface = [&] { return "w" + std::to_string(rng.index(spec.other_vocab_size)); };

  auto mention = [&](std::size_t type) {
    const std::size_t length = 1 + rng.index(2);
    std::vector<Token> tokens;
    for (std::size_t k = 0; k < length; ++k) {
      std::size_t source = type;
      if (spec.num_types > 1 && rng.bernoulli(spec.noise_rate)) {
        source = (type + 1 + rng.index(spec.num_types - 1)) % spec.num_types;
      }
      tokens.push_back({vocab[source][rng.index(spec.vocab_per_type)],
                        make_tag(k == 0 ? TagPrefix::Begin : TagPrefix::Inside, types[type])});
    }
    return tokens;
  };

  Corpus corpus;
  corpus.schema = EntitySchema(types);
  for (std::size_t type = 0; type < spec.num_types; ++type) {
    for (std::size_t s = 0; s < spec.sentences_per_type; ++s) {
      std::vector<std::vector<Token>> mentions{mention(type)};
      if (spec.num_types > 1 && rng.bernoulli(spec.secondary_mention_rate)) {
        mentions.push_back(mention((type + 1 + rng.index(spec.num_types - 1)) % spec.num_types));
      }
      std::size_t mention_tokens = 0;
      for (const auto& m : mentions) mention_tokens += m.size();
      const std::size_t filler =
          std::max<std::size_t>(mentions.size(), spec.sentence_length > mention_tokens
                                                     ? spec.sentence_length - mention_tokens
                                                     : 0);

      // mention k goes into gap slots[k] (before filler token slots[k])
      std::vector<std::size_t> gaps(filler + 1);
      for (std::size_t g = 0; g < gaps.size(); ++g) gaps[g] = g;
      rng.shuffle(gaps);
      gaps.resize(mentions.size());

      Sentence sentence;
      for (std::size_t g = 0; g <= filler; ++g) {
        for (std::size_t k = 0; k < mentions.size(); ++k) {
          if (gaps[k] == g) {
            sentence.tokens.insert(sentence.tokens.end(), mentions[k].begin(), mentions[k].end());
          }
        }
        if (g < filler) sentence.tokens.push_back({other_surface(), "O"});
      }
      corpus.sentences.push_back(std::move(sentence));
    }
  }
  rng.shuffle(corpus.sentences);
  return corpus;
}

}  // namespace cfner
