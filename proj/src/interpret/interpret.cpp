#include "attnsup/interpret.hpp"

#include <algorithm>

#include "attnsup/errors.hpp"

namespace attnsup {

namespace {

InfluenceProfile influence_from(const ModelParams& params, const EncodedInstance& enc,
                                const std::vector<double>& base_probs) {
  InfluenceProfile profile;
  profile.predicted_label = argmax(base_probs);
  profile.base_confidence = base_probs[profile.predicted_label];
  profile.influences.assign(enc.size(), 0.0);
  std::optional<std::size_t> best;
  for (std::size_t j = 0; j < enc.size(); ++j) {
    if (enc.source.contains(j) || enc.target.contains(j)) continue;
    if (enc.word_ids[j] != Vocabulary::kUnk) {
      EncodedInstance masked = enc;
      masked.word_ids[j] = Vocabulary::kUnk;
      const ForwardResult r = evaluate(params, masked);
      profile.influences[j] = profile.base_confidence - r.label_probs[profile.predicted_label];
    }
    if (!best || profile.influences[j] > profile.influences[*best]) best = j;
  }
  profile.top_index = best.value_or(0);
  return profile;
}

AttentionMetrics metrics_at(std::span<const double> attention, std::size_t target) {
  return {probes_needed(attention, target), mass_needed(attention, target)};
}

}  // namespace

InfluenceProfile loo_influence(const ModelParams& params, const RelationInstance& inst) {
  const EncodedInstance enc = encode(params, inst);
  return influence_from(params, enc, evaluate(params, enc).label_probs);
}

std::size_t probes_needed(std::span<const double> attention, std::size_t target) {
  if (target >= attention.size()) throw ContractError("probes_needed: target index out of range");
  const double t = attention[target];
  return 1 + static_cast<std::size_t>(std::count_if(attention.begin(), attention.end(), [t](double a) { return a > t; }));
}

double mass_needed(std::span<const double> attention, std::size_t target) {
  if (target >= attention.size()) throw ContractError("mass_needed: target index out of range");
  const double t = attention[target];
  double mass = 0.0;
  for (double a : attention)
    if (a > t) mass += a;
  return mass;
}

AttentionAuditRecord audit_instance(const ModelParams& params, const RelationInstance& inst) {
  const EncodedInstance enc = encode(params, inst);
  const ForwardResult base = evaluate(params, enc);
  AttentionAuditRecord rec;
  rec.instance_id = inst.id;
  rec.doc_id = inst.doc_id;
  rec.tokens = inst.tokens;
  rec.source = inst.source;
  rec.target = inst.target;
  rec.gold_label = inst.label;
  rec.influence = influence_from(params, enc, base.label_probs);
  rec.predicted_label = params.labels().name(rec.influence.predicted_label);
  rec.confidence = rec.influence.base_confidence;
  rec.correct = rec.predicted_label == inst.label;
  rec.attention = base.attention_weights;
  rec.faithfulness = metrics_at(rec.attention, rec.influence.top_index);
  if (!inst.is_null() && inst.rationale) {
    rec.plausibility = metrics_at(rec.attention, argmax(ground_truth_attention(inst)));
  }
  return rec;
}

AuditSummary summarize(std::span<const AttentionAuditRecord> records) {
  AuditSummary s;
  auto add = [](AuditGroup& g, const AttentionAuditRecord& r) {
    ++g.count;
    g.faithfulness_probes += static_cast<double>(r.faithfulness.probes_needed);
    g.faithfulness_mass += r.faithfulness.mass_needed;
    if (r.plausibility) {
      ++g.plausibility_count;
      g.plausibility_probes += static_cast<double>(r.plausibility->probes_needed);
      g.plausibility_mass += r.plausibility->mass_needed;
    }
  };
  auto finish = [](AuditGroup& g) {
    if (g.count) {
      g.faithfulness_probes /= static_cast<double>(g.count);
      g.faithfulness_mass /= static_cast<double>(g.count);
    }
    if (g.plausibility_count) {
      g.plausibility_probes /= static_cast<double>(g.plausibility_count);
      g.plausibility_mass /= static_cast<double>(g.plausibility_count);
    }
  };
  for (const auto& r : records) {
    add(s.all, r);
    add(r.correct ? s.correct : s.incorrect, r);
  }
  finish(s.all);
  finish(s.correct);
  finish(s.incorrect);
  return s;
}

AuditResult audit(const ModelParams& params, std::span<const RelationInstance> instances, std::optional<int> fold) {
  std::vector<const RelationInstance*> chosen;
  for (const auto& inst : instances)
    if (!inst.is_null()) chosen.push_back(&inst);
  std::stable_sort(chosen.begin(), chosen.end(), [](auto* a, auto* b) { return a->id < b->id; });
  AuditResult out;
  for (const auto* inst : chosen) {
    out.records.push_back(audit_instance(params, *inst));
    out.records.back().fold = fold;
  }
  out.summary = summarize(out.records);
  return out;
}

namespace {

nlohmann::json metrics_json(const AttentionMetrics& m) {
  return {{"probes_needed", m.probes_needed}, {"mass_needed", m.mass_needed}};
}

AttentionMetrics metrics_from_json(const nlohmann::json& j) {
  return {j.at("probes_needed").get<std::size_t>(), j.at("mass_needed").get<double>()};
}

nlohmann::json group_json(const AuditGroup& g) {
  return {{"count", g.count},
          {"faithfulness", {{"probes_needed", g.faithfulness_probes}, {"mass_needed", g.faithfulness_mass}}},
          {"plausibility_count", g.plausibility_count},
          {"plausibility", {{"probes_needed", g.plausibility_probes}, {"mass_needed", g.plausibility_mass}}}};
}

}  // namespace

nlohmann::json to_json(const AttentionAuditRecord& r) {
  nlohmann::json j = {{"instance_id", r.instance_id},
                      {"doc_id", r.doc_id},
                      {"tokens", r.tokens},
                      {"source", {r.source.start, r.source.end}},
                      {"target", {r.target.start, r.target.end}},
                      {"gold_label", r.gold_label},
                      {"predicted_label", r.predicted_label},
                      {"confidence", r.confidence},
                      {"correct", r.correct},
                      {"faithfulness", metrics_json(r.faithfulness)},
                      {"plausibility", r.plausibility ? metrics_json(*r.plausibility) : nlohmann::json(nullptr)},
                      {"attention", r.attention},
                      {"influence",
                       {{"influences", r.influence.influences},
                        {"top_index", r.influence.top_index},
                        {"base_confidence", r.influence.base_confidence}}},
                      {"fold", r.fold ? nlohmann::json(*r.fold) : nlohmann::json(nullptr)}};
  return j;
}

AttentionAuditRecord audit_record_from_json(const nlohmann::json& j) {
  try {
    AttentionAuditRecord r;
    r.instance_id = j.at("instance_id").get<std::size_t>();
    r.doc_id = j.at("doc_id").get<std::string>();
    r.tokens = j.at("tokens").get<std::vector<std::string>>();
    const auto src = j.at("source").get<std::vector<std::size_t>>();
    const auto tgt = j.at("target").get<std::vector<std::size_t>>();
    if (src.size() != 2 || tgt.size() != 2) throw IngestionError("audit record spans must be [start, end]");
    r.source = {src[0], src[1]};
    r.target = {tgt[0], tgt[1]};
    r.gold_label = j.at("gold_label").get<std::string>();
    r.predicted_label = j.at("predicted_label").get<std::string>();
    r.confidence = j.at("confidence").get<double>();
    r.correct = j.at("correct").get<bool>();
    r.faithfulness = metrics_from_json(j.at("faithfulness"));
    if (!j.at("plausibility").is_null()) r.plausibility = metrics_from_json(j["plausibility"]);
    r.attention = j.at("attention").get<std::vector<double>>();
    const auto& inf = j.at("influence");
    r.influence.influences = inf.at("influences").get<std::vector<double>>();
    r.influence.top_index = inf.at("top_index").get<std::size_t>();
    r.influence.base_confidence = inf.at("base_confidence").get<double>();
    if (j.contains("fold") && !j["fold"].is_null()) r.fold = j["fold"].get<int>();
    if (r.attention.size() != r.tokens.size()) throw IngestionError("audit record attention length differs from tokens");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError(std::string("malformed audit record: ") + e.what());
  }
}

nlohmann::json to_json(const AuditSummary& s) {
  return {{"all", group_json(s.all)}, {"correct", group_json(s.correct)}, {"incorrect", group_json(s.incorrect)}};
}

}  // namespace attnsup
