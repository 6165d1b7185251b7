#include <algorithm>
#include <sstream>

#include "cfner/corpus.hpp"
#include "cfner/error.hpp"
#include "cfner/rng.hpp"
#include "doctest.h"

using namespace cfner;

namespace {

Corpus parse(const std::string& text) {
  std::istringstream in(text);
  return read_conll(in).corpus;
}

Sentence sentence_of(std::initializer_list<std::pair<const char*, const char*>> tokens) {
  Sentence s;
  for (const auto& [surface, tag] : tokens) s.tokens.push_back({surface, tag});
  return s;
}

std::vector<std::string> tags_of(const Sentence& s) {
  std::vector<std::string> tags;
  for (const auto& t : s.tokens) tags.push_back(t.tag);
  return tags;
}

std::vector<Sentence> sorted_sentences(std::vector<Sentence> sentences) {
  std::sort(sentences.begin(), sentences.end());
  return sentences;
}

}  // namespace

TEST_CASE("tags parse and rebuild") {
  CHECK(parse_tag("O").prefix == TagPrefix::Outside);
  const ParsedTag b = parse_tag("B-ORG");
  CHECK(b.prefix == TagPrefix::Begin);
  CHECK(b.type == "ORG");
  CHECK(parse_tag("I-LOC").prefix == TagPrefix::Inside);
  CHECK(make_tag(TagPrefix::Inside, "PER") == "I-PER");
  CHECK(tag_type("B-MISC") == "MISC");
  CHECK(tag_type("O") == "");
  CHECK_THROWS_AS(parse_tag("X-ORG"), Error);
  CHECK_THROWS_AS(parse_tag("B-"), Error);
}

TEST_CASE("read_conll: two-token sentence") {
  std::istringstream in("EU B-ORG\nrejects O\n\n");
  const auto result = read_conll(in);
  REQUIRE(result.corpus.sentences.size() == 1);
  CHECK(result.corpus.sentences[0].tokens.size() == 2);
  CHECK(result.corpus.schema.types() == std::vector<std::string>{"ORG"});
  CHECK(result.repairs == 0);
}

TEST_CASE("read_conll: empty stream") {
  std::istringstream in("");
  const auto result = read_conll(in);
  CHECK(result.corpus.sentences.empty());
  CHECK(result.corpus.schema.empty());
}

TEST_CASE("read_conll: stray inside tag is repaired") {
  std::istringstream in("x I-LOC\n\n");
  const auto result = read_conll(in);
  REQUIRE(result.corpus.sentences.size() == 1);
  CHECK(result.corpus.sentences[0].tokens[0].tag == "B-LOC");
  CHECK(result.repairs == 1);
}

TEST_CASE("read_conll: middle columns ignored, last sentence needs no blank line") {
  const Corpus c = parse("Paris NNP B-NP B-LOC\nis VBZ B-VP O\n");
  REQUIRE(c.sentences.size() == 1);
  CHECK(c.sentences[0].tokens[0].surface == "Paris");
  CHECK(c.sentences[0].tokens[0].tag == "B-LOC");
}

TEST_CASE("read_conll: malformed lines report their line number") {
  std::istringstream one_field("a O\nlonely\n");
  try {
    read_conll(one_field);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  std::istringstream bad_tag("a O\n\nb Q-LOC\n");
  try {
    read_conll(bad_tag);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("repair_bio rewrites only disconnected inside tags") {
  Sentence s = sentence_of({{"a", "B-A"}, {"b", "I-A"}, {"c", "I-B"}, {"d", "O"}, {"e", "I-A"}});
  CHECK(repair_bio(s) == 2);
  CHECK(tags_of(s) == std::vector<std::string>{"B-A", "I-A", "B-B", "O", "B-A"});
  CHECK(repair_bio(s) == 0);
}

TEST_CASE("CoNLL round trip") {
  const Corpus original = synth_corpus(SynthSpec{.num_types = 3, .sentences_per_type = 10}, 11);
  std::stringstream buffer;
  write_conll(buffer, original);
  const auto reread = read_conll(buffer);
  CHECK(reread.repairs == 0);
  CHECK(reread.corpus == original);
}

TEST_CASE("build_cl_schedule") {
  SUBCASE("CoNLL-style four types, FG-1-PG-1") {
    const CLSchedule s =
        build_cl_schedule(EntitySchema({"PERSON", "LOCATION", "ORGANISATION", "MISC"}), 1, 1);
    REQUIRE(s.size() == 4);
    CHECK(s.steps[0] == std::vector<std::string>{"LOCATION"});
    CHECK(s.steps[3] == std::vector<std::string>{"PERSON"});
  }
  SUBCASE("16 types, FG-8-PG-2") {
    std::vector<std::string> types;
    for (char c = 'A'; c < 'A' + 16; ++c) types.emplace_back(1, c);
    const CLSchedule s = build_cl_schedule(EntitySchema(types), 8, 2);
    std::vector<std::size_t> sizes;
    for (const auto& step : s.steps) sizes.push_back(step.size());
    CHECK(sizes == std::vector<std::size_t>{8, 2, 2, 2, 2});
    CHECK(s.recognized_through(1).size() == 10);
  }
  SUBCASE("fg = all types is a single step") {
    CHECK(build_cl_schedule(EntitySchema({"A", "B", "C", "D"}), 4, 1).size() == 1);
  }
  SUBCASE("short final step") {
    const CLSchedule s = build_cl_schedule(EntitySchema({"A", "B", "C", "D"}), 1, 2);
    REQUIRE(s.size() == 3);
    CHECK(s.steps[2] == std::vector<std::string>{"D"});
  }
  CHECK_THROWS_AS(build_cl_schedule(EntitySchema({"A", "B"}), 3, 1), ConfigError);
  CHECK_THROWS_AS(build_cl_schedule(EntitySchema({"A", "B"}), 0, 1), ConfigError);
  CHECK_THROWS_AS(build_cl_schedule(EntitySchema({"A", "B"}), 1, 0), ConfigError);
}

TEST_CASE("mask_labels") {
  Corpus c;
  c.schema = EntitySchema({"LOC", "PER"});
  c.sentences.push_back(sentence_of({{"a", "B-PER"}, {"b", "O"}, {"c", "B-LOC"}}));

  CHECK(tags_of(mask_labels(c, {"LOC"}).sentences[0]) ==
        std::vector<std::string>{"O", "O", "B-LOC"});
  CHECK(mask_labels(c, {"LOC", "PER"}) == c);
  CHECK(tags_of(mask_labels(c, {}).sentences[0]) == std::vector<std::string>{"O", "O", "O"});
  CHECK(mask_labels(c, {}).sentences[0].tokens[0].surface == "a");
}

TEST_CASE("mask_labels is idempotent and monotone") {
  const Corpus c = synth_corpus(SynthSpec{.num_types = 4, .sentences_per_type = 20}, 3);
  const std::set<std::string> s{"ANIMAL", "CITY", "DISEASE"};
  const std::set<std::string> t{"CITY"};
  CHECK(mask_labels(mask_labels(c, s), s) == mask_labels(c, s));
  CHECK(mask_labels(mask_labels(c, s), t) == mask_labels(c, t));
}

TEST_CASE("corpus_stats and frequency order") {
  Corpus c;
  c.schema = EntitySchema({"LOC", "PER"});
  c.sentences.push_back(sentence_of({{"a", "B-LOC"}, {"b", "I-LOC"}, {"c", "O"}, {"d", "B-LOC"}}));
  auto stats = corpus_stats(c);
  CHECK(stats.at("LOC") == 2);
  CHECK(stats.at("PER") == 0);

  Corpus empty;
  empty.schema = EntitySchema({"X"});
  empty.sentences.push_back(sentence_of({{"a", "O"}}));
  CHECK(corpus_stats(empty).at("X") == 0);

  CHECK(types_by_frequency({{"B", 3}, {"A", 1}}) == std::vector<std::string>{"A", "B"});
  CHECK(types_by_frequency({{"B", 1}, {"A", 1}, {"C", 0}}) ==
        std::vector<std::string>{"C", "A", "B"});
}

TEST_CASE("slice capacities floor then hand out leftovers in schedule order") {
  const CLSchedule s = build_cl_schedule(EntitySchema({"A", "B", "C"}), 1, 1);
  CHECK(slice_capacities(10, s) == std::vector<std::size_t>{4, 3, 3});
  CHECK(slice_capacities(11, s) == std::vector<std::size_t>{4, 4, 3});
  CHECK(slice_capacities(0, s) == std::vector<std::size_t>{0, 0, 0});
}

TEST_CASE("greedy_partition: one type per sentence") {
  Corpus c;
  c.schema = EntitySchema({"A", "B"});
  c.sentences = {sentence_of({{"a1", "B-A"}}), sentence_of({{"b1", "B-B"}}),
                 sentence_of({{"a2", "B-A"}}), sentence_of({{"b2", "B-B"}})};
  const auto slices = greedy_partition(c, build_cl_schedule(c.schema, 1, 1), 5);
  REQUIRE(slices.size() == 2);
  for (const auto& s : slices[0].sentences) CHECK(s.tokens[0].tag == "B-A");
  for (const auto& s : slices[1].sentences) CHECK(s.tokens[0].tag == "B-B");
  CHECK(slices[0].sentences.size() == 2);
  CHECK(slices[1].sentences.size() == 2);
}

TEST_CASE("greedy_partition: all-O corpus uses the seeded fallback") {
  Corpus c;
  c.schema = EntitySchema({"A", "B", "C"});
  for (int i = 0; i < 10; ++i) {
    c.sentences.push_back(sentence_of({{"w", "O"}}));
    c.sentences.back().tokens[0].surface += std::to_string(i);
  }
  const CLSchedule schedule = build_cl_schedule(c.schema, 1, 1);
  const auto slices = greedy_partition(c, schedule, 9);
  const auto capacity = slice_capacities(10, schedule);
  for (std::size_t j = 0; j < slices.size(); ++j) {
    CHECK(slices[j].sentences.size() == capacity[j]);
  }
  CHECK(greedy_partition(c, schedule, 9) == slices);
  // a different seed gives a different (but equally valid) assignment
  CHECK(greedy_partition(c, schedule, 10) != slices);
}

TEST_CASE("greedy_partition: single slice is the corpus") {
  const Corpus c = synth_corpus(SynthSpec{.num_types = 3, .sentences_per_type = 5}, 2);
  const auto slices = greedy_partition(c, build_cl_schedule(c.schema, 3, 1), 1);
  REQUIRE(slices.size() == 1);
  CHECK(slices[0].sentences == c.sentences);
}

TEST_CASE("greedy_partition: rare type has priority") {
  // 4 sentences hold both R (rare) and F (frequent); 8 hold only F.
  Corpus c;
  c.schema = EntitySchema({"F", "R"});
  for (int i = 0; i < 4; ++i) c.sentences.push_back(sentence_of({{"f", "B-F"}, {"r", "B-R"}}));
  for (int i = 0; i < 8; ++i) c.sentences.push_back(sentence_of({{"f", "B-F"}, {"x", "O"}}));
  const CLSchedule schedule = build_cl_schedule(c.schema, 1, 1);  // [F], [R]
  const auto slices = greedy_partition(c, schedule, 4);
  std::size_t with_r = 0;
  for (const auto& s : slices[1].sentences) with_r += s.tokens[1].tag == "B-R";
  CHECK(with_r == 4);
}

TEST_CASE("greedy_partition: totality and balance on random corpora") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    SynthSpec spec;
    spec.num_types = 2 + rng.index(5);
    spec.sentences_per_type = 3 + rng.index(20);
    const Corpus c = synth_corpus(spec, seed);
    const CLSchedule schedule = build_cl_schedule(c.schema, 1 + rng.index(spec.num_types), 1);
    const auto slices = greedy_partition(c, schedule, seed);
    const auto capacity = slice_capacities(c.sentences.size(), schedule);
    std::vector<Sentence> all;
    for (std::size_t j = 0; j < slices.size(); ++j) {
      CHECK(slices[j].sentences.size() == capacity[j]);
      all.insert(all.end(), slices[j].sentences.begin(), slices[j].sentences.end());
    }
    CHECK(sorted_sentences(all) == sorted_sentences(c.sentences));
  }
}

TEST_CASE("partition manifest") {
  const Corpus c = synth_corpus(SynthSpec{.num_types = 4, .sentences_per_type = 10}, 8);
  const CLSchedule schedule = build_cl_schedule(c.schema, 1, 1);
  const auto slices = greedy_partition(c, schedule, 3);
  const auto m = partition_manifest(schedule, 3, slices);
  CHECK(m.at("seed") == 3);
  CHECK(m.at("sentence_count") == c.sentences.size());
  REQUIRE(m.at("slices").size() == 4);
  for (const auto& entry : m.at("slices")) {
    const double target = entry.at("target_size").get<double>();
    const double size = entry.at("sentences").get<double>();
    CHECK(size >= std::floor(target));
    CHECK(size <= std::floor(target) + 1);
  }
}

TEST_CASE("synth_corpus") {
  SUBCASE("no noise: surfaces belong to one type") {
    const Corpus c =
        synth_corpus(SynthSpec{.num_types = 2, .sentences_per_type = 50, .noise_rate = 0.0}, 1);
    std::map<std::string, std::set<std::string>> types_of;
    for (const auto& s : c.sentences) {
      for (const auto& t : s.tokens) {
        if (t.tag != "O") types_of[t.surface].insert(tag_type(t.tag));
      }
    }
    for (const auto& [surface, types] : types_of) CHECK(types.size() == 1);
  }
  SUBCASE("deterministic per seed") {
    CHECK(synth_corpus(SynthSpec{}, 4) == synth_corpus(SynthSpec{}, 4));
    CHECK(synth_corpus(SynthSpec{}, 4) != synth_corpus(SynthSpec{}, 5));
  }
  SUBCASE("default synthetic corpus size") {
    const Corpus c = synth_corpus(SynthSpec{}, 7);
    CHECK(c.sentences.size() >= 2000);
    CHECK(c.schema.size() == 8);
    for (const auto& s : c.sentences) {
      Sentence copy = s;
      CHECK(repair_bio(copy) == 0);
    }
  }
  CHECK_THROWS_AS(synth_corpus(SynthSpec{.num_types = 0}, 1), ConfigError);
  CHECK_THROWS_AS(synth_corpus(SynthSpec{.noise_rate = 1.0}, 1), ConfigError);
}

TEST_CASE("split_corpus is 80/10/10 and total") {
  const Corpus c = synth_corpus(SynthSpec{.num_types = 2, .sentences_per_type = 50}, 6);
  const CorpusSplit split = split_corpus(c, 1);
  CHECK(split.train.sentences.size() == 80);
  CHECK(split.dev.sentences.size() == 10);
  CHECK(split.test.sentences.size() == 10);
  std::vector<Sentence> all = split.train.sentences;
  all.insert(all.end(), split.dev.sentences.begin(), split.dev.sentences.end());
  all.insert(all.end(), split.test.sentences.begin(), split.test.sentences.end());
  CHECK(sorted_sentences(all) == sorted_sentences(c.sentences));
}
