#include "attnsup/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "attnsup/errors.hpp"
#include "attnsup/rng.hpp"

namespace attnsup {

using nlohmann::json;

LabelSet::LabelSet(std::vector<std::string> names) : names_(std::move(names)) {
  std::set<std::string> seen;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].empty()) throw ConfigError("empty label name");
    if (!seen.insert(names_[i]).second) throw ConfigError("duplicate label '" + names_[i] + "'");
    if (names_[i] == kNullLabel) null_index_ = i;
  }
}

LabelSet LabelSet::infer(std::span<const RelationInstance> instances) {
  std::set<std::string> labels;
  bool has_null = false;
  for (const auto& inst : instances) {
    if (inst.is_null()) {
      has_null = true;
    } else {
      labels.insert(inst.label);
    }
  }
  std::vector<std::string> names(labels.begin(), labels.end());
  if (has_null) names.emplace_back(kNullLabel);
  return LabelSet(std::move(names));
}

LabelSet LabelSet::parse(std::string_view comma_separated) {
  std::vector<std::string> names;
  std::string current;
  for (char ch : comma_separated) {
    if (ch == ',') {
      names.push_back(current);
      current.clear();
    } else if (ch != ' ') {
      current += ch;
    }
  }
  names.push_back(current);
  return LabelSet(std::move(names));
}

bool LabelSet::contains(std::string_view label) const {
  return std::find(names_.begin(), names_.end(), label) != names_.end();
}

std::size_t LabelSet::index_of(std::string_view label) const {
  auto it = std::find(names_.begin(), names_.end(), label);
  if (it == names_.end()) throw ContractError("unknown label '" + std::string(label) + "'");
  return static_cast<std::size_t>(it - names_.begin());
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  tokens_.emplace_back(kUnkToken);
  index_.emplace(std::string(kUnkToken), kUnk);
  for (auto& t : tokens) {
    if (t == kUnkToken) continue;
    if (index_.emplace(t, tokens_.size()).second) tokens_.push_back(std::move(t));
  }
}

Vocabulary Vocabulary::build(std::span<const RelationInstance> instances) {
  std::set<std::string> seen;
  for (const auto& inst : instances) seen.insert(inst.tokens.begin(), inst.tokens.end());
  return Vocabulary(std::vector<std::string>(seen.begin(), seen.end()));
}

std::size_t Vocabulary::id(std::string_view token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

VocabularyFile load_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open vocabulary file " + path.string());
  std::vector<std::string> tokens;
  std::vector<std::vector<double>> vectors;
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> width;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    std::vector<double> vec;
    std::string v;
    while (fields >> v) {
      try {
        vec.push_back(std::stod(v));
      } catch (const std::exception&) {
        throw IngestionError("non-numeric embedding value '" + v + "'", line_no);
      }
    }
    if (!vec.empty()) {
      if (width && *width != vec.size()) throw IngestionError("embedding width differs from earlier lines", line_no);
      width = vec.size();
    }
    tokens.push_back(token);
    vectors.push_back(std::move(vec));
  }
  VocabularyFile out{Vocabulary(tokens), {}};
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!vectors[i].empty()) out.embeddings[out.vocabulary.id(tokens[i])] = std::move(vectors[i]);
  }
  return out;
}

namespace {

json span_json(const Span& s) { return json::array({s.start, s.end}); }

Span span_from_json(const json& j, const char* field) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer()) {
    throw IngestionError(std::string("field '") + field + "' must be [start, end]");
  }
  const long start = j[0].get<long>();
  const long end = j[1].get<long>();
  if (start < 0 || end < 0) throw IngestionError(std::string("field '") + field + "' has a negative index");
  return Span{static_cast<std::size_t>(start), static_cast<std::size_t>(end)};
}

std::vector<int> ids_from_json(const json& j, const char* field, std::size_t n) {
  if (j.is_null()) return std::vector<int>(n, 0);
  if (!j.is_array()) throw IngestionError(std::string("field '") + field + "' must be an integer list");
  std::vector<int> ids;
  for (const auto& v : j) {
    if (!v.is_number_integer() || v.get<long>() < 0) {
      throw IngestionError(std::string("field '") + field + "' must hold non-negative integers");
    }
    ids.push_back(v.get<int>());
  }
  return ids;
}

void check_span(const Span& s, std::size_t n, const char* what) {
  if (!(s.start < s.end && s.end <= n)) {
    throw IngestionError(std::string(what) + " span [" + std::to_string(s.start) + ", " + std::to_string(s.end) +
                         ") out of bounds for " + std::to_string(n) + " tokens");
  }
}

}  // namespace

json to_json(const RelationInstance& inst) {
  return json{{"id", inst.id},
              {"doc_id", inst.doc_id},
              {"tokens", inst.tokens},
              {"pos_ids", inst.pos_ids},
              {"senti_ids", inst.senti_ids},
              {"source", span_json(inst.source)},
              {"target", span_json(inst.target)},
              {"rationale", inst.rationale ? span_json(*inst.rationale) : json(nullptr)},
              {"label", inst.label}};
}

void validate(const RelationInstance& inst, const LabelSet* labels) {
  const std::size_t n = inst.tokens.size();
  if (n == 0) throw IngestionError("sentence has no tokens");
  if (inst.pos_ids.size() != n) throw IngestionError("pos_ids length differs from token count");
  if (inst.senti_ids.size() != n) throw IngestionError("senti_ids length differs from token count");
  check_span(inst.source, n, "source");
  check_span(inst.target, n, "target");
  if (inst.rationale) {
    check_span(*inst.rationale, n, "rationale");
    if (inst.is_null()) throw IngestionError("rationale given for a none-labelled pair");
  }
  if (inst.label.empty()) throw IngestionError("empty label");
  if (labels && !labels->contains(inst.label)) throw IngestionError("unknown label '" + inst.label + "'");
}

RelationInstance instance_from_json(const json& j, std::size_t default_id) {
  if (!j.is_object()) throw IngestionError("line is not a JSON object");
  for (const char* field : {"doc_id", "tokens", "source", "target", "label"}) {
    if (!j.contains(field)) throw IngestionError(std::string("missing field '") + field + "'");
  }
  RelationInstance inst;
  inst.id = default_id;
  if (j.contains("id") && !j["id"].is_null()) {
    if (!j["id"].is_number_integer() || j["id"].get<long>() < 0) throw IngestionError("field 'id' must be a non-negative integer");
    inst.id = j["id"].get<std::size_t>();
  }
  if (!j["doc_id"].is_string()) throw IngestionError("field 'doc_id' must be a string");
  inst.doc_id = j["doc_id"].get<std::string>();
  if (!j["tokens"].is_array()) throw IngestionError("field 'tokens' must be a string list");
  for (const auto& t : j["tokens"]) {
    if (!t.is_string()) throw IngestionError("field 'tokens' must be a string list");
    inst.tokens.push_back(t.get<std::string>());
  }
  const std::size_t n = inst.tokens.size();
  inst.pos_ids = ids_from_json(j.value("pos_ids", json(nullptr)), "pos_ids", n);
  inst.senti_ids = ids_from_json(j.value("senti_ids", json(nullptr)), "senti_ids", n);
  inst.source = span_from_json(j["source"], "source");
  inst.target = span_from_json(j["target"], "target");
  if (j.contains("rationale") && !j["rationale"].is_null()) inst.rationale = span_from_json(j["rationale"], "rationale");
  if (!j["label"].is_string()) throw IngestionError("field 'label' must be a string");
  inst.label = j["label"].get<std::string>();
  return inst;
}

std::vector<RelationInstance> parse_corpus(std::string_view text, const LabelSet* labels) {
  std::vector<RelationInstance> out;
  std::vector<std::string> problems;
  std::size_t first_bad = 0;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t stop = text.find('\n', start);
    if (stop == std::string_view::npos) stop = text.size();
    std::string_view line = text.substr(start, stop - start);
    start = stop + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error& e) {
        throw IngestionError(std::string("malformed JSON: ") + e.what());
      }
      RelationInstance inst = instance_from_json(j, out.size());
      validate(inst, labels);
      out.push_back(std::move(inst));
    } catch (const IngestionError& e) {
      if (!first_bad) first_bad = line_no;
      problems.push_back("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg = std::to_string(problems.size()) + " invalid line(s)";
    for (const auto& p : problems) msg += "\n  " + p;
    throw IngestionError(msg, first_bad);
  }
  return out;
}

std::vector<RelationInstance> load_corpus(const std::filesystem::path& path, const LabelSet* labels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open corpus file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_corpus(buf.str(), labels);
  } catch (const IngestionError& e) {
    throw IngestionError(path.string() + ": " + e.what());
  }
}

std::string serialize_corpus(std::span<const RelationInstance> instances) {
  std::string out;
  for (const auto& inst : instances) {
    out += to_json(inst).dump();
    out += '\n';
  }
  return out;
}

void save_corpus(const std::filesystem::path& path, std::span<const RelationInstance> instances) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write corpus file " + path.string());
  out << serialize_corpus(instances);
}

std::vector<RelationInstance> generate_pairs(std::span<const Span> entities,
                                             std::span<const AnnotatedRelation> relations,
                                             const Sentence& sentence, std::size_t first_id) {
  const std::size_t n = sentence.tokens.size();
  for (const Span& e : entities) check_span(e, n, "entity");
  std::map<std::pair<std::size_t, std::size_t>, const AnnotatedRelation*> annotated;
  for (const auto& r : relations) {
    if (r.source_entity >= entities.size() || r.target_entity >= entities.size()) {
      throw IngestionError("annotated relation references an unknown entity");
    }
    if (r.source_entity == r.target_entity) throw IngestionError("annotated relation links an entity to itself");
    if (!annotated.emplace(std::pair{r.source_entity, r.target_entity}, &r).second) {
      throw IngestionError("entity pair annotated twice");
    }
  }
  std::vector<RelationInstance> out;
  for (std::size_t a = 0; a < entities.size(); ++a) {
    for (std::size_t b = 0; b < entities.size(); ++b) {
      if (a == b) continue;
      RelationInstance inst;
      inst.id = first_id + out.size();
      inst.doc_id = sentence.doc_id;
      inst.tokens = sentence.tokens;
      inst.pos_ids = sentence.pos_ids.empty() ? std::vector<int>(n, 0) : sentence.pos_ids;
      inst.senti_ids = sentence.senti_ids.empty() ? std::vector<int>(n, 0) : sentence.senti_ids;
      inst.source = entities[a];
      inst.target = entities[b];
      if (auto it = annotated.find({a, b}); it != annotated.end()) {
        inst.label = it->second->label;
        inst.rationale = it->second->rationale;
      } else {
        inst.label = std::string(kNullLabel);
      }
      validate(inst);
      out.push_back(std::move(inst));
    }
  }
  return out;
}

std::vector<RelationInstance> undersample(std::span<const RelationInstance> instances, double ratio,
                                          std::uint64_t seed) {
  if (!(ratio > 0)) throw ConfigError("undersampling ratio must be positive");
  std::vector<std::size_t> null_positions;
  std::size_t non_null = 0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (instances[i].is_null()) {
      null_positions.push_back(i);
    } else {
      ++non_null;
    }
  }
  const std::size_t keep = std::min(round_count(ratio * static_cast<double>(non_null)), null_positions.size());
  Rng rng(seed);
  rng.shuffle(std::span(null_positions));
  std::vector<bool> kept(instances.size(), true);
  for (std::size_t k = keep; k < null_positions.size(); ++k) kept[null_positions[k]] = false;
  std::vector<RelationInstance> out;
  for (std::size_t i = 0; i < instances.size(); ++i)
    if (kept[i]) out.push_back(instances[i]);
  return out;
}

AttentionDist ground_truth_attention(const RelationInstance& inst) {
  const std::size_t n = inst.size();
  if (n == 0) throw ContractError("ground_truth_attention: empty sentence");
  if (inst.is_null()) return AttentionDist(n, 1.0 / static_cast<double>(n));
  if (!inst.rationale) {
    throw ContractError("ground_truth_attention: instance " + std::to_string(inst.id) + " has no rationale");
  }
  const Span c = *inst.rationale;
  if (!(c.start < c.end && c.end <= n)) throw ContractError("ground_truth_attention: rationale out of bounds");
  AttentionDist a(n, 0.0);
  const double w = 1.0 / static_cast<double>(c.length());
  for (std::size_t i = c.start; i < c.end; ++i) a[i] = w;
  return a;
}

bool SubsampleMask::contains(std::size_t id) const {
  return std::binary_search(member_ids.begin(), member_ids.end(), id);
}

SubsampleMask draw_subsample_mask(std::span<const RelationInstance> instances, double gamma, std::uint64_t seed) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  std::vector<std::size_t> ids;
  for (const auto& inst : instances)
    if (!inst.is_null()) ids.push_back(inst.id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  const std::size_t k = std::min(round_count(gamma * static_cast<double>(ids.size())), ids.size());
  Rng rng(seed);
  // Partial Fisher-Yates: the first k slots are a uniform k-subset.
  for (std::size_t i = 0; i < k; ++i) std::swap(ids[i], ids[i + rng.below(ids.size() - i)]);
  SubsampleMask mask{gamma, std::vector<std::size_t>(ids.begin(), ids.begin() + static_cast<long>(k)), seed};
  std::sort(mask.member_ids.begin(), mask.member_ids.end());
  return mask;
}

}  // namespace attnsup
