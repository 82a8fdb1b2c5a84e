#include <algorithm>
#include <set>

#include "attnsup/corpus.hpp"
#include "attnsup/errors.hpp"
#include "attnsup/rng.hpp"

namespace attnsup {

SyntheticConfig SyntheticConfig::defaults() {
  SyntheticConfig c;
  c.cues = {
      {"positive", {"good", "great", "respect", "admire", "support", "praise", "love", "trust", "thank", "welcome"}},
      {"negative", {"bad", "hate", "blame", "attack", "fear", "oppose", "criticize", "reject", "condemn", "mock"}},
  };
  return c;
}

SyntheticConfig SyntheticConfig::lexical(std::size_t cues_per_label) {
  SyntheticConfig c;
  c.cues = {{"positive", {}}, {"negative", {}}};
  c.generated_cues = cues_per_label;
  c.tag_cues = false;
  return c;
}

std::map<std::string, std::vector<std::string>> SyntheticConfig::lexicon() const {
  auto out = cues;
  for (auto& [label, words] : out)
    for (std::size_t k = 0; k < generated_cues; ++k) words.push_back(label + "#" + std::to_string(k));
  return out;
}

void SyntheticConfig::validate() const {
  if (num_instances == 0) throw ConfigError("synthetic: num_instances must be positive");
  if (filler_vocab == 0) throw ConfigError("synthetic: filler_vocab must be positive");
  if (entity_vocab < 3) throw ConfigError("synthetic: entity_vocab must be at least 3");
  if (min_length == 0 || max_length < min_length) throw ConfigError("synthetic: invalid sentence length range");
  if (cues.empty()) throw ConfigError("synthetic: at least one label with cue words required");
  std::set<std::string> seen;
  for (const auto& [label, words] : lexicon()) {
    if (label.empty() || label == kNullLabel) throw ConfigError("synthetic: invalid label '" + label + "'");
    if (words.empty()) throw ConfigError("synthetic: label '" + label + "' has no cue words");
    for (const auto& w : words)
      if (!seen.insert(w).second) throw ConfigError("synthetic: cue word '" + w + "' used twice");
  }
  if (distractor_rate < 0 || distractor_rate > 1) throw ConfigError("synthetic: distractor_rate outside [0, 1]");
  if (distractor_rate > 0 && cues.size() < 2) throw ConfigError("synthetic: distractors need at least two labels");
  if (third_entity_rate < 0 || third_entity_rate > 1) throw ConfigError("synthetic: third_entity_rate outside [0, 1]");
  if (null_fraction < 0 || null_fraction >= 1) throw ConfigError("synthetic: null_fraction outside [0, 1)");
  if (sentences_per_doc == 0) throw ConfigError("synthetic: sentences_per_doc must be positive");
  if (pos_tags < 5) throw ConfigError("synthetic: pos_tags must be at least 5");
  if (senti_classes < 1) throw ConfigError("synthetic: senti_classes must be positive");
}

nlohmann::json to_json(const SyntheticConfig& c) {
  return {{"num_instances", c.num_instances},
          {"filler_vocab", c.filler_vocab},
          {"entity_vocab", c.entity_vocab},
          {"min_length", c.min_length},
          {"max_length", c.max_length},
          {"cues", c.cues},
          {"generated_cues", c.generated_cues},
          {"tag_cues", c.tag_cues},
          {"distractor_rate", c.distractor_rate},
          {"third_entity_rate", c.third_entity_rate},
          {"null_fraction", c.null_fraction},
          {"sentences_per_doc", c.sentences_per_doc},
          {"pos_tags", c.pos_tags},
          {"senti_classes", c.senti_classes}};
}

SyntheticConfig synthetic_config_from_json(const nlohmann::json& j) {
  SyntheticConfig c = SyntheticConfig::defaults();
  try {
    c.num_instances = j.value("num_instances", c.num_instances);
    c.filler_vocab = j.value("filler_vocab", c.filler_vocab);
    c.entity_vocab = j.value("entity_vocab", c.entity_vocab);
    c.min_length = j.value("min_length", c.min_length);
    c.max_length = j.value("max_length", c.max_length);
    if (j.contains("cues")) c.cues = j["cues"].get<std::map<std::string, std::vector<std::string>>>();
    c.generated_cues = j.value("generated_cues", c.generated_cues);
    c.tag_cues = j.value("tag_cues", c.tag_cues);
    c.distractor_rate = j.value("distractor_rate", c.distractor_rate);
    c.third_entity_rate = j.value("third_entity_rate", c.third_entity_rate);
    c.null_fraction = j.value("null_fraction", c.null_fraction);
    c.sentences_per_doc = j.value("sentences_per_doc", c.sentences_per_doc);
    c.pos_tags = j.value("pos_tags", c.pos_tags);
    c.senti_classes = j.value("senti_classes", c.senti_classes);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synthetic config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

enum class Kind { filler, entity, cue, distractor, marker };

struct Piece {
  Kind kind;
  std::vector<std::string> tokens;
  int senti = 0;
  int entity = -1;  // index in the sentence's entity list
};

}  // namespace

std::vector<RelationInstance> generate_synthetic(const SyntheticConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const auto lexicon = config.lexicon();
  std::vector<std::string> labels;
  for (const auto& entry : lexicon) labels.push_back(entry.first);

  auto filler = [&] {
    return Piece{Kind::filler, {"w" + std::to_string(rng.below(config.filler_vocab))}, 0, -1};
  };
  auto entity = [&](int index) {
    const std::size_t len = rng.bernoulli(0.3) ? 2 : 1;
    Piece p{Kind::entity, {}, 0, index};
    for (std::size_t k = 0; k < len; ++k) p.tokens.push_back("E" + std::to_string(rng.below(config.entity_vocab)));
    return p;
  };
  auto cue = [&](std::size_t label, Kind kind) {
    const auto& words = lexicon.at(labels[label]);
    // Every cue shares one "polar" class, so its polarity lives in the word alone.
    const int senti = config.tag_cues && config.senti_classes > 1 ? 1 : 0;
    return Piece{kind, {words[rng.below(words.size())]}, senti, -1};
  };

  const double f = config.null_fraction;
  const std::size_t sentences = std::max<std::size_t>(1, round_count((1.0 - f) * static_cast<double>(config.num_instances)));
  std::vector<RelationInstance> all;
  for (std::size_t s = 0; s < sentences; ++s) {
    const std::size_t label = rng.below(labels.size());
    const bool distract = rng.bernoulli(config.distractor_rate);
    const bool third = rng.bernoulli(config.third_entity_rate);
    const bool source_first = rng.bernoulli(0.5);

    Piece first = entity(source_first ? 0 : 1);
    Piece second = entity(source_first ? 1 : 0);
    std::vector<Piece> outside;
    if (distract) {
      std::size_t other = rng.below(labels.size() - 1);
      if (other >= label) ++other;
      outside.push_back(cue(other, Kind::distractor));
    }
    if (third) outside.push_back(entity(2));

    // Passive voice: "<target> ... <cue> ... by <source>".
    const std::size_t marker = source_first ? 0 : 1;
    std::size_t required = first.tokens.size() + second.tokens.size() + 1 + marker;
    for (const auto& p : outside) required += p.tokens.size();
    const std::size_t length =
        std::max<std::size_t>(required, static_cast<std::size_t>(rng.between(static_cast<long>(config.min_length),
                                                                              static_cast<long>(config.max_length))));
    const std::size_t free = length - required;
    const std::size_t inside = static_cast<std::size_t>(rng.between(0, static_cast<long>(std::min<std::size_t>(free, 4))));
    const std::size_t gap1 = static_cast<std::size_t>(rng.between(0, static_cast<long>(inside)));
    for (std::size_t k = inside; k < free; ++k) outside.push_back(filler());
    rng.shuffle(std::span(outside));
    const std::size_t split = rng.below(outside.size() + 1);

    std::vector<Piece> pieces(outside.begin(), outside.begin() + static_cast<long>(split));
    pieces.push_back(std::move(first));
    for (std::size_t k = 0; k < gap1; ++k) pieces.push_back(filler());
    pieces.push_back(cue(label, Kind::cue));
    for (std::size_t k = gap1; k < inside; ++k) pieces.push_back(filler());
    if (marker) pieces.push_back(Piece{Kind::marker, {"by"}, 0, -1});
    pieces.push_back(std::move(second));
    pieces.insert(pieces.end(), outside.begin() + static_cast<long>(split), outside.end());

    Sentence sentence;
    sentence.doc_id = "doc" + std::to_string(s / config.sentences_per_doc);
    std::vector<Span> entities(third ? 3 : 2);
    Span rationale;
    for (const auto& p : pieces) {
      const Span span{sentence.tokens.size(), sentence.tokens.size() + p.tokens.size()};
      for (const auto& t : p.tokens) {
        sentence.tokens.push_back(t);
        switch (p.kind) {
          case Kind::entity: sentence.pos_ids.push_back(1); break;
          case Kind::cue:
          case Kind::distractor:
            if (config.tag_cues) {
              sentence.pos_ids.push_back(2);
              break;
            }
            [[fallthrough]];
          case Kind::filler:
            sentence.pos_ids.push_back(static_cast<int>(rng.between(4, config.pos_tags - 1)));
            break;
          case Kind::marker: sentence.pos_ids.push_back(3); break;
        }
        sentence.senti_ids.push_back(p.senti);
      }
      if (p.kind == Kind::entity) entities[static_cast<std::size_t>(p.entity)] = span;
      if (p.kind == Kind::cue) rationale = span;
    }
    const AnnotatedRelation relation{0, 1, labels[label], rationale};
    auto pairs = generate_pairs(entities, std::span(&relation, 1), sentence);
    for (auto& inst : pairs) all.push_back(std::move(inst));
  }

  std::vector<RelationInstance> out;
  if (f > 0.0) {
    out = undersample(all, f / (1.0 - f), rng.next());
  } else {
    for (auto& inst : all)
      if (!inst.is_null()) out.push_back(std::move(inst));
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].id = i;
  return out;
}

}  // namespace attnsup
