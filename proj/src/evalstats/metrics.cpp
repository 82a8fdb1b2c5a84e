#include "attnsup/errors.hpp"
#include "attnsup/evalstats.hpp"

namespace attnsup {

namespace {

double ratio(std::size_t num, std::size_t den, const char* flag, std::vector<std::string>* flags) {
  if (den == 0) {
    if (flags) flags->emplace_back(flag);
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

double harmonic(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

}  // namespace

EvalSummary score_predictions(std::span<const std::pair<std::size_t, std::size_t>> pairs, const LabelSet& labels) {
  EvalSummary s;
  s.include_null = labels.includes_null();
  s.count = pairs.size();
  const auto null = labels.null_index();
  std::vector<LabelScores> per(labels.size());
  for (const auto& [gold, pred] : pairs) {
    if (gold >= labels.size() || pred >= labels.size()) throw ContractError("score_predictions: label index out of range");
    if (gold == pred) ++s.correct;
    const bool gold_rel = gold != null;
    const bool pred_rel = pred != null;
    if (pred_rel) ++s.relation_predicted;
    if (gold_rel) ++s.relation_gold;
    if (gold_rel && gold == pred) ++s.relation_correct;
    ++per[gold].gold;
    ++per[pred].predicted;
    if (gold == pred) ++per[gold].correct;
  }
  s.accuracy = ratio(s.correct, s.count, "accuracy_undefined", s.include_null ? nullptr : &s.flags);
  if (s.include_null) {
    s.precision = ratio(s.relation_correct, s.relation_predicted, "precision_undefined", &s.flags);
    s.recall = ratio(s.relation_correct, s.relation_gold, "recall_undefined", &s.flags);
    s.f_score = harmonic(s.precision, s.recall);
  }
  for (std::size_t l = 0; l < labels.size(); ++l) {
    if (null && l == *null) continue;
    LabelScores& ls = per[l];
    ls.label = labels.name(l);
    ls.precision = ratio(ls.correct, ls.predicted, "", nullptr);
    ls.recall = ratio(ls.correct, ls.gold, "", nullptr);
    ls.f_score = harmonic(ls.precision, ls.recall);
    s.per_label.push_back(ls);
  }
  return s;
}

EvalSummary evaluate_corpus(const ModelParams& params, std::span<const RelationInstance> instances) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(instances.size());
  for (const auto& inst : instances) {
    pairs.emplace_back(params.labels().index_of(inst.label), predict(params, inst).label);
  }
  return score_predictions(pairs, params.labels());
}

nlohmann::json to_json(const EvalSummary& s) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& l : s.per_label) {
    per.push_back({{"label", l.label},
                   {"precision", l.precision},
                   {"recall", l.recall},
                   {"f_score", l.f_score},
                   {"correct", l.correct},
                   {"predicted", l.predicted},
                   {"gold", l.gold}});
  }
  return {{"task", s.include_null ? "include-none" : "exclude-none"},
          {"count", s.count},
          {"correct", s.correct},
          {"accuracy", s.accuracy},
          {"precision", s.precision},
          {"recall", s.recall},
          {"f_score", s.f_score},
          {"relation_correct", s.relation_correct},
          {"relation_predicted", s.relation_predicted},
          {"relation_gold", s.relation_gold},
          {"primary_metric", s.primary_name()},
          {"primary", s.primary()},
          {"per_label", per},
          {"flags", s.flags}};
}

}  // namespace attnsup
