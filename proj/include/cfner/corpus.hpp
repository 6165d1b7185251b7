#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace cfner {

enum class TagPrefix { Outside, Begin, Inside };

struct ParsedTag {
  TagPrefix prefix = TagPrefix::Outside;
  std::string type;  // empty for "O"
};

/// Parses "O", "B-<type>" or "I-<type>". Throws Error on anything else.
ParsedTag parse_tag(std::string_view tag);
std::string make_tag(TagPrefix prefix, std::string_view type);
/// Entity type of a tag, or "" for O.
std::string tag_type(std::string_view tag);

struct Token {
  std::string surface;
  std::string tag;

  bool operator==(const Token&) const = default;
  auto operator<=>(const Token&) const = default;
};

struct Sentence {
  std::vector<Token> tokens;

  bool operator==(const Sentence&) const = default;
  auto operator<=>(const Sentence&) const = default;
};

/// Ordered (alphabetical) set of entity type names.
class EntitySchema {
 public:
  EntitySchema() = default;
  explicit EntitySchema(std::vector<std::string> types);

  const std::vector<std::string>& types() const { return types_; }
  std::size_t size() const { return types_.size(); }
  bool empty() const { return types_.empty(); }
  bool contains(std::string_view type) const;
  bool operator==(const EntitySchema&) const = default;

 private:
  std::vector<std::string> types_;
};

struct Corpus {
  std::vector<Sentence> sentences;
  EntitySchema schema;

  std::size_t token_count() const;
  bool operator==(const Corpus&) const = default;
};

/// Rewrites every "I-X" that does not follow "B-X"/"I-X" into "B-X".
/// Returns the number of rewritten tags.
std::size_t repair_bio(Sentence& sentence);

struct ConllReadResult {
  Corpus corpus;
  std::size_t repairs = 0;
};

/// Reads whitespace-separated CoNLL columns: the first field is the surface,
/// the last is the tag. Blank lines separate sentences. The schema is
/// inferred from the tags.
ConllReadResult read_conll(std::istream& in);
ConllReadResult read_conll_file(const std::string& path);
void write_conll(std::ostream& out, const Corpus& corpus);
void write_conll_file(const std::string& path, const Corpus& corpus);

/// Entity types grouped by CL step. Step 0 holds the first `fg` types in
/// alphabetical order, later steps `pg` types each (the last may be smaller).
struct CLSchedule {
  std::vector<std::vector<std::string>> steps;
  std::size_t fg = 0;
  std::size_t pg = 0;

  std::size_t size() const { return steps.size(); }
  std::size_t type_count() const;
  /// Types learned in steps [0, step].
  std::vector<std::string> recognized_through(std::size_t step) const;
};

CLSchedule build_cl_schedule(const EntitySchema& schema, std::size_t fg, std::size_t pg);

/// Number of B-initiated spans per schema type (zeros included).
std::map<std::string, std::size_t> corpus_stats(const Corpus& corpus);
/// Types sorted by ascending frequency, ties alphabetical.
std::vector<std::string> types_by_frequency(const std::map<std::string, std::size_t>& stats);

/// Slice quotas: floor(n*|E_j|/|E|) each, then the leftover sentences raise
/// slices in schedule order by one until the quotas sum to n.
std::vector<std::size_t> slice_capacities(std::size_t sentence_count, const CLSchedule& schedule);

/// Greedy sampling: each sentence goes to the slice of its rarest entity
/// type whose quota is not yet met; otherwise to a uniformly random
/// incomplete slice.
std::vector<Corpus> greedy_partition(const Corpus& corpus, const CLSchedule& schedule,
                                     std::uint64_t seed);

/// JSON manifest describing a partition: schedule, seed, sizes and per-slice
/// entity histograms.
nlohmann::json partition_manifest(const CLSchedule& schedule, std::uint64_t seed,
                                  const std::vector<Corpus>& slices);

/// Replaces tags whose type is not in `keep` with "O".
Corpus mask_labels(const Corpus& corpus, const std::set<std::string>& keep);

struct SynthSpec {
  std::size_t num_types = 8;
  std::size_t sentences_per_type = 250;
  std::size_t vocab_per_type = 40;
  std::size_t sentence_length = 12;
  std::size_t other_vocab_size = 200;
  double noise_rate = 0.05;
  /// Probability that a sentence also carries a mention of a second type.
  double secondary_mention_rate = 0.5;
};

/// Deterministic synthetic NER corpus. Each type owns a disjoint surface
/// vocabulary; mentions are 1-2 tokens long and sit among Other-vocabulary
/// filler. A `noise_rate` fraction of entity tokens borrow a surface from a
/// different type's vocabulary.
Corpus synth_corpus(const SynthSpec& spec, std::uint64_t seed);
nlohmann::json to_json(const SynthSpec& spec);

struct CorpusSplit {
  Corpus train;
  Corpus dev;
  Corpus test;
};

/// Seeded shuffle, then 80/10/10 by sentence.
CorpusSplit split_corpus(const Corpus& corpus, std::uint64_t seed);

}  // namespace cfner
