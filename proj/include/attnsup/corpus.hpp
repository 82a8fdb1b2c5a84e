#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace attnsup {

// Label string for an ordered entity pair with no annotated relation.
inline constexpr std::string_view kNullLabel = "none";

// Probability vector over sentence positions.
using AttentionDist = std::vector<double>;

// Half-open token range [start, end).
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
  bool contains(std::size_t i) const { return start <= i && i < end; }
  bool operator==(const Span&) const = default;
};

struct RelationInstance {
  std::size_t id = 0;
  std::string doc_id;
  std::vector<std::string> tokens;
  std::vector<int> pos_ids;
  std::vector<int> senti_ids;
  Span source;
  Span target;
  std::optional<Span> rationale;
  std::string label;

  std::size_t size() const { return tokens.size(); }
  bool is_null() const { return label == kNullLabel; }
  bool in_entity(std::size_t i) const { return source.contains(i) || target.contains(i); }
  bool operator==(const RelationInstance&) const = default;
};

// Ordered label inventory of one task. The task is Include-none when the
// null label is a member, Exclude-none otherwise.
class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(std::vector<std::string> names);

  // Non-null labels sorted, then the null label last when present.
  static LabelSet infer(std::span<const RelationInstance> instances);
  static LabelSet parse(std::string_view comma_separated);

  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  const std::vector<std::string>& names() const { return names_; }
  bool contains(std::string_view label) const;
  std::size_t index_of(std::string_view label) const;
  bool includes_null() const { return null_index_.has_value(); }
  std::optional<std::size_t> null_index() const { return null_index_; }
  bool operator==(const LabelSet&) const = default;

 private:
  std::vector<std::string> names_;
  std::optional<std::size_t> null_index_;
};

// Token → embedding-row map. Row 0 is reserved for unknown tokens.
class Vocabulary {
 public:
  static constexpr std::size_t kUnk = 0;
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();
  explicit Vocabulary(std::vector<std::string> tokens);

  static Vocabulary build(std::span<const RelationInstance> instances);

  std::size_t size() const { return tokens_.size(); }
  std::size_t id(std::string_view token) const;
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

// Companion vocabulary file: one token per line, optionally followed by
// whitespace-separated embedding values.
struct VocabularyFile {
  Vocabulary vocabulary;
  std::map<std::size_t, std::vector<double>> embeddings;  // row → vector
};
VocabularyFile load_vocabulary(const std::filesystem::path& path);

// JSONL interchange.
nlohmann::json to_json(const RelationInstance& inst);
RelationInstance instance_from_json(const nlohmann::json& j, std::size_t default_id);
void validate(const RelationInstance& inst, const LabelSet* labels = nullptr);

// Reads one instance per non-blank line. Every invalid line is listed in the
// thrown IngestionError. Without a label set any label string is accepted.
std::vector<RelationInstance> load_corpus(const std::filesystem::path& path, const LabelSet* labels = nullptr);
std::vector<RelationInstance> parse_corpus(std::string_view text, const LabelSet* labels = nullptr);
void save_corpus(const std::filesystem::path& path, std::span<const RelationInstance> instances);
std::string serialize_corpus(std::span<const RelationInstance> instances);

// Sentence-level input to pair generation.
struct Sentence {
  std::string doc_id;
  std::vector<std::string> tokens;
  std::vector<int> pos_ids;
  std::vector<int> senti_ids;
};

struct AnnotatedRelation {
  std::size_t source_entity = 0;  // index into the entity list
  std::size_t target_entity = 0;
  std::string label;
  std::optional<Span> rationale;
};

// Every ordered pair of distinct entities becomes an instance; pairs absent
// from `relations` are labelled none. Ids are assigned from `first_id`.
std::vector<RelationInstance> generate_pairs(std::span<const Span> entities,
                                             std::span<const AnnotatedRelation> relations,
                                             const Sentence& sentence, std::size_t first_id = 0);

// Keeps every non-null instance and round(ratio * #non-null) null instances
// (or all of them if fewer exist). Input order is preserved.
std::vector<RelationInstance> undersample(std::span<const RelationInstance> instances, double ratio,
                                          std::uint64_t seed);

// Uniform over all positions for the null label, uniform over the rationale
// otherwise. Throws ContractError for a non-null instance without rationale.
AttentionDist ground_truth_attention(const RelationInstance& inst);

// Round half up, used for every split and sample count.
std::size_t round_count(double x);

struct FoldSplit {
  std::vector<std::string> train;
  std::vector<std::string> dev;
  std::vector<std::string> test;
};

struct FoldPlan {
  std::size_t fold_count = 5;
  std::vector<FoldSplit> folds;
  std::vector<std::string> heldout;
  std::uint64_t seed = 0;
};

// 10% of documents held out; the rest split 65/15/20 per fold, with test
// blocks rotating through the pool.
FoldPlan make_folds(std::span<const std::string> doc_ids, std::uint64_t seed, std::size_t fold_count = 5);
nlohmann::json to_json(const FoldPlan& plan);

std::vector<std::string> document_ids(std::span<const RelationInstance> instances);
std::vector<RelationInstance> select_documents(std::span<const RelationInstance> instances,
                                               std::span<const std::string> doc_ids);

// Instances whose rationale supervision is retained under a limited budget.
struct SubsampleMask {
  double gamma = 1.0;
  std::vector<std::size_t> member_ids;  // sorted
  std::uint64_t seed = 0;

  bool contains(std::size_t id) const;
};

SubsampleMask draw_subsample_mask(std::span<const RelationInstance> instances, double gamma, std::uint64_t seed);

struct SyntheticConfig {
  std::size_t num_instances = 2000;
  std::size_t filler_vocab = 300;
  std::size_t entity_vocab = 60;
  std::size_t min_length = 8;
  std::size_t max_length = 16;
  // label → cue words; each non-null instance carries exactly one cue of its
  // label between source and target.
  std::map<std::string, std::vector<std::string>> cues;
  // Extra cue words generated per label ("<label>#<k>"), for lexicons too
  // large to list by hand.
  std::size_t generated_cues = 0;
  // When false, cues carry filler POS tags and the neutral sentiment class,
  // so only the word itself identifies them.
  bool tag_cues = true;
  // Probability that a sentence also carries an off-label cue outside the
  // source..target stretch.
  double distractor_rate = 0.5;
  // Probability of a third entity, which yields extra null pairs.
  double third_entity_rate = 0.5;
  double null_fraction = 0.3;
  std::size_t sentences_per_doc = 5;
  int pos_tags = 8;
  int senti_classes = 3;

  static SyntheticConfig defaults();
  // Two labels whose cues are drawn from generated lexicons and carry no tag
  // signal, so a model must learn each cue word from examples. Rationales
  // help here in proportion to how many cue words they cover.
  static SyntheticConfig lexical(std::size_t cues_per_label = 60);
  void validate() const;
  // Listed plus generated cue words per label.
  std::map<std::string, std::vector<std::string>> lexicon() const;
};

nlohmann::json to_json(const SyntheticConfig& config);
SyntheticConfig synthetic_config_from_json(const nlohmann::json& j);

std::vector<RelationInstance> generate_synthetic(const SyntheticConfig& config, std::uint64_t seed);

}  // namespace attnsup
