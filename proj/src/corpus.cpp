#include "cfner/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "cfner/error.hpp"
#include "cfner/rng.hpp"

namespace cfner {

ParsedTag parse_tag(std::string_view tag) {
  if (tag == "O") return {};
  if (tag.size() > 2 && tag[1] == '-' && (tag[0] == 'B' || tag[0] == 'I')) {
    return {tag[0] == 'B' ? TagPrefix::Begin : TagPrefix::Inside, std::string(tag.substr(2))};
  }
  throw Error("unrecognized tag '" + std::string(tag) + "'");
}

std::string make_tag(TagPrefix prefix, std::string_view type) {
  switch (prefix) {
    case TagPrefix::Begin:
      return "B-" + std::string(type);
    case TagPrefix::Inside:
      return "I-" + std::string(type);
    case TagPrefix::Outside:
      break;
  }
  return "O";
}

std::string tag_type(std::string_view tag) { return parse_tag(tag).type; }

EntitySchema::EntitySchema(std::vector<std::string> types) : types_(std::move(types)) {
  std::sort(types_.begin(), types_.end());
  types_.erase(std::unique(types_.begin(), types_.end()), types_.end());
}

bool EntitySchema::contains(std::string_view type) const {
  return std::binary_search(types_.begin(), types_.end(), type);
}

std::size_t Corpus::token_count() const {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.tokens.size();
  return n;
}

std::size_t repair_bio(Sentence& sentence) {
  std::size_t repairs = 0;
  std::string previous_type;
  for (auto& token : sentence.tokens) {
    ParsedTag parsed = parse_tag(token.tag);
    if (parsed.prefix == TagPrefix::Inside && parsed.type != previous_type) {
      token.tag = make_tag(TagPrefix::Begin, parsed.type);
      ++repairs;
    }
    previous_type = parsed.type;
  }
  return repairs;
}

ConllReadResult read_conll(std::istream& in) {
  ConllReadResult result;
  std::set<std::string> types;
  Sentence current;
  std::string line;
  std::size_t line_number = 0;

  auto flush = [&] {
    if (current.tokens.empty()) return;
    result.repairs += repair_bio(current);
    result.corpus.sentences.push_back(std::move(current));
    current = Sentence{};
  };

  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    std::vector<std::string> columns;
    for (std::string field; fields >> field;) columns.push_back(std::move(field));
    if (columns.empty()) {
      flush();
      continue;
    }
    if (columns.size() < 2) {
      throw ParseError(line_number, "expected a surface and a tag, got " +
                                        std::to_string(columns.size()) + " field");
    }
    Token token{columns.front(), columns.back()};
    try {
      ParsedTag parsed = parse_tag(token.tag);
      if (!parsed.type.empty()) types.insert(parsed.type);
    } catch (const Error& e) {
      throw ParseError(line_number, e.what());
    }
    current.tokens.push_back(std::move(token));
  }
  flush();
  result.corpus.schema = EntitySchema({types.begin(), types.end()});
  return result;
}

ConllReadResult read_conll_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return read_conll(in);
}

void write_conll(std::ostream& out, const Corpus& corpus) {
  for (const auto& sentence : corpus.sentences) {
    for (const auto& token : sentence.tokens) out << token.surface << ' ' << token.tag << '\n';
    out << '\n';
  }
}

void write_conll_file(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  write_conll(out, corpus);
  if (!out) throw Error("write failed: " + path);
}

std::size_t CLSchedule::type_count() const {
  std::size_t n = 0;
  for (const auto& step : steps) n += step.size();
  return n;
}

std::vector<std::string> CLSchedule::recognized_through(std::size_t step) const {
  std::vector<std::string> types;
  for (std::size_t i = 0; i <= step && i < steps.size(); ++i) {
    types.insert(types.end(), steps[i].begin(), steps[i].end());
  }
  std::sort(types.begin(), types.end());
  return types;
}

CLSchedule build_cl_schedule(const EntitySchema& schema, std::size_t fg, std::size_t pg) {
  if (fg < 1 || fg > schema.size()) {
    throw ConfigError("fg must be in [1, " + std::to_string(schema.size()) + "], got " +
                      std::to_string(fg));
  }
  if (pg < 1) throw ConfigError("pg must be at least 1");
  CLSchedule schedule;
  schedule.fg = fg;
  schedule.pg = pg;
  const auto& types = schema.types();
  schedule.steps.emplace_back(types.begin(), types.begin() + static_cast<std::ptrdiff_t>(fg));
  for (std::size_t i = fg; i < types.size(); i += pg) {
    const std::size_t end = std::min(types.size(), i + pg);
    schedule.steps.emplace_back(types.begin() + static_cast<std::ptrdiff_t>(i),
                                types.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return schedule;
}

std::map<std::string, std::size_t> corpus_stats(const Corpus& corpus) {
  std::map<std::string, std::size_t> counts;
  for (const auto& type : corpus.schema.types()) counts[type] = 0;
  for (const auto& sentence : corpus.sentences) {
    for (const auto& token : sentence.tokens) {
      ParsedTag parsed = parse_tag(token.tag);
      if (parsed.prefix == TagPrefix::Begin) ++counts[parsed.type];
    }
  }
  return counts;
}

std::vector<std::string> types_by_frequency(const std::map<std::string, std::size_t>& stats) {
  std::vector<std::string> types;
  for (const auto& [type, count] : stats) types.push_back(type);
  // map iteration is alphabetical, so a stable sort keeps ties alphabetical
  std::stable_sort(types.begin(), types.end(), [&](const std::string& a, const std::string& b) {
    return stats.at(a) < stats.at(b);
  });
  return types;
}

Corpus mask_labels(const Corpus& corpus, const std::set<std::string>& keep) {
  Corpus masked = corpus;
  for (auto& sentence : masked.sentences) {
    for (auto& token : sentence.tokens) {
      if (token.tag == "O") continue;
      if (!keep.contains(tag_type(token.tag))) token.tag = "O";
    }
  }
  return masked;
}

CorpusSplit split_corpus(const Corpus& corpus, std::uint64_t seed) {
  std::vector<std::size_t> order(corpus.sentences.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  const std::size_t n = order.size();
  const std::size_t train_end = n * 8 / 10;
  const std::size_t dev_end = train_end + n / 10;
  CorpusSplit split;
  split.train.schema = split.dev.schema = split.test.schema = corpus.schema;
  for (std::size_t i = 0; i < n; ++i) {
    Corpus& target = i < train_end ? split.train : (i < dev_end ? split.dev : split.test);
    target.sentences.push_back(corpus.sentences[order[i]]);
  }
  return split;
}

}  // namespace cfner
