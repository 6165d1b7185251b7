#include <algorithm>

#include "cfner/corpus.hpp"
#include "cfner/error.hpp"
#include "cfner/rng.hpp"

namespace cfner {

std::vector<std::size_t> slice_capacities(std::size_t sentence_count, const CLSchedule& schedule) {
  const std::size_t total_types = schedule.type_count();
  if (total_types == 0) throw ConfigError("schedule has no entity types");
  std::vector<std::size_t> capacity(schedule.size());
  std::size_t assigned = 0;
  for (std::size_t j = 0; j < schedule.size(); ++j) {
    capacity[j] = sentence_count * schedule.steps[j].size() / total_types;
    assigned += capacity[j];
  }
  for (std::size_t j = 0; assigned < sentence_count; j = (j + 1) % capacity.size()) {
    ++capacity[j];
    ++assigned;
  }
  return capacity;
}

std::vector<Corpus> greedy_partition(const Corpus& corpus, const CLSchedule& schedule,
                                     std::uint64_t seed) {
  std::map<std::string, std::size_t> slice_of;
  for (std::size_t j = 0; j < schedule.size(); ++j) {
    for (const auto& type : schedule.steps[j]) {
      if (!corpus.schema.contains(type)) {
        throw ConfigError("schedule type '" + type + "' is not in the corpus schema");
      }
      slice_of[type] = j;
    }
  }

  const std::vector<std::size_t> capacity = slice_capacities(corpus.sentences.size(), schedule);
  std::vector<std::size_t> count(schedule.size(), 0);
  std::vector<Corpus> slices(schedule.size());
  for (auto& slice : slices) slice.schema = corpus.schema;

  auto stats = corpus_stats(corpus);
  std::vector<std::string> priority;
  for (const auto& type : types_by_frequency(stats)) {
    if (slice_of.contains(type)) priority.push_back(type);
  }

  Rng rng(seed);
  for (const auto& sentence : corpus.sentences) {
    std::set<std::string> present;
    for (const auto& token : sentence.tokens) {
      if (token.tag != "O") present.insert(tag_type(token.tag));
    }

    bool selected = false;
    for (const auto& type : priority) {
      if (!present.contains(type)) continue;
      const std::size_t j = slice_of.at(type);
      if (count[j] < capacity[j]) {
        slices[j].sentences.push_back(sentence);
        ++count[j];
        selected = true;
        break;
      }
    }
    if (selected) continue;

    std::vector<std::size_t> open;
    for (std::size_t j = 0; j < slices.size(); ++j) {
      if (count[j] < capacity[j]) open.push_back(j);
    }
    const std::size_t j = open[rng.index(open.size())];
    slices[j].sentences.push_back(sentence);
    ++count[j];
  }
  return slices;
}

nlohmann::json partition_manifest(const CLSchedule& schedule, std::uint64_t seed,
                                  const std::vector<Corpus>& slices) {
  nlohmann::json manifest;
  manifest["seed"] = seed;
  manifest["fg"] = schedule.fg;
  manifest["pg"] = schedule.pg;
  manifest["schedule"] = schedule.steps;
  std::size_t total = 0;
  for (const auto& slice : slices) total += slice.sentences.size();
  manifest["sentence_count"] = total;
  const auto capacity = slice_capacities(total, schedule);

  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t j = 0; j < slices.size(); ++j) {
    nlohmann::json entry;
    entry["index"] = j;
    entry["types"] = schedule.steps[j];
    entry["sentences"] = slices[j].sentences.size();
    entry["target_size"] = static_cast<double>(total) *
                           static_cast<double>(schedule.steps[j].size()) /
                           static_cast<double>(schedule.type_count());
    entry["capacity"] = capacity[j];
    entry["entity_counts"] = corpus_stats(slices[j]);
    entries.push_back(std::move(entry));
  }
  manifest["slices"] = std::move(entries);
  return manifest;
}

}  // namespace cfner
