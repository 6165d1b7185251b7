#include <cmath>

#include "cfner/protocol.hpp"

namespace cfner {

std::vector<Span> extract_spans(const std::vector<std::string>& tags) {
  std::vector<Span> spans;
  std::optional<Span> open;
  auto close = [&](std::size_t end) {
    if (!open) return;
    open->end = end;
    spans.push_back(*open);
    open.reset();
  };
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const ParsedTag tag = parse_tag(tags[i]);
    if (tag.prefix == TagPrefix::Inside && open && open->type == tag.type) continue;
    close(i);
    if (tag.prefix != TagPrefix::Outside) open = Span{tag.type, i, i};
  }
  close(tags.size());
  return spans;
}

double f1_score(const PerTypeCounts& c) {
  const double denominator =
      2.0 * static_cast<double>(c.true_positive) + static_cast<double>(c.false_positive + c.false_negative);
  return denominator == 0.0 ? 0.0 : 2.0 * static_cast<double>(c.true_positive) / denominator;
}

std::map<std::string, PerTypeCounts> count_matches(const CorpusSpans& predicted,
                                                   const CorpusSpans& gold) {
  std::map<std::string, PerTypeCounts> counts;
  for (const auto& item : predicted) {
    auto& c = counts[item.second.type];
    (gold.contains(item) ? c.true_positive : c.false_positive) += 1;
  }
  for (const auto& item : gold) {
    if (!predicted.contains(item)) counts[item.second.type].false_negative += 1;
  }
  return counts;
}

double micro_f1(const CorpusSpans& predicted, const CorpusSpans& gold) {
  PerTypeCounts pooled;
  for (const auto& [type, c] : count_matches(predicted, gold)) {
    pooled.true_positive += c.true_positive;
    pooled.false_positive += c.false_positive;
    pooled.false_negative += c.false_negative;
  }
  return f1_score(pooled);
}

double macro_f1(const CorpusSpans& predicted, const CorpusSpans& gold,
                const std::vector<std::string>& types) {
  if (types.empty()) return 0.0;
  const auto counts = count_matches(predicted, gold);
  double total = 0.0;
  for (const auto& type : types) {
    auto it = counts.find(type);
    if (it != counts.end()) total += f1_score(it->second);
  }
  return total / static_cast<double>(types.size());
}

Evaluation evaluate(const TaggerModel& model, const Corpus& corpus,
                    const std::vector<std::string>& types) {
  const std::set<std::string> wanted(types.begin(), types.end());
  CorpusSpans predicted;
  CorpusSpans gold;
  for (std::size_t s = 0; s < corpus.sentences.size(); ++s) {
    const Sentence& sentence = corpus.sentences[s];
    std::vector<std::string> gold_tags;
    for (const auto& token : sentence.tokens) gold_tags.push_back(token.tag);
    for (auto& span : extract_spans(gold_tags)) {
      if (wanted.contains(span.type)) gold.emplace(s, std::move(span));
    }
    for (auto& span : extract_spans(tag_sentence(model, sentence))) {
      if (wanted.contains(span.type)) predicted.emplace(s, std::move(span));
    }
  }
  Evaluation result;
  result.micro_f1 = micro_f1(predicted, gold);
  result.macro_f1 = macro_f1(predicted, gold, types);
  const auto counts = count_matches(predicted, gold);
  for (const auto& type : types) {
    auto it = counts.find(type);
    result.per_type_f1[type] = it == counts.end() ? 0.0 : f1_score(it->second);
  }
  return result;
}

Aggregate aggregate(const std::vector<std::vector<double>>& per_seed_steps) {
  std::vector<double> means;
  for (const auto& steps : per_seed_steps) {
    if (steps.empty()) continue;
    double total = 0.0;
    for (double v : steps) total += v;
    means.push_back(total / static_cast<double>(steps.size()));
  }
  Aggregate result;
  if (means.empty()) return result;
  for (double m : means) result.mean += m;
  result.mean /= static_cast<double>(means.size());
  if (means.size() > 1) {
    double sq = 0.0;
    for (double m : means) sq += (m - result.mean) * (m - result.mean);
    result.std = std::sqrt(sq / static_cast<double>(means.size() - 1));
  }
  return result;
}

}  // namespace cfner
