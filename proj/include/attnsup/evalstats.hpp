#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "attnsup/corpus.hpp"
#include "attnsup/training.hpp"
#include "json.hpp"

namespace attnsup {

struct LabelScores {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f_score = 0.0;
  std::size_t correct = 0;
  std::size_t predicted = 0;
  std::size_t gold = 0;
};

struct EvalSummary {
  bool include_null = false;
  std::size_t count = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  // Micro-averaged over pairs that have, or are predicted to have, a relation.
  std::size_t relation_correct = 0;
  std::size_t relation_predicted = 0;
  std::size_t relation_gold = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f_score = 0.0;
  std::vector<LabelScores> per_label;
  std::vector<std::string> flags;  // metrics whose denominator was empty

  // F-score for Include-none tasks, accuracy otherwise.
  double primary() const { return include_null ? f_score : accuracy; }
  std::string primary_name() const { return include_null ? "f_score" : "accuracy"; }
};

// Pairs are (gold, predicted) label indices into `labels`.
EvalSummary score_predictions(std::span<const std::pair<std::size_t, std::size_t>> pairs, const LabelSet& labels);
EvalSummary evaluate_corpus(const ModelParams& params, std::span<const RelationInstance> instances);
nlohmann::json to_json(const EvalSummary& s);

enum class Preference { a, b, draw };
std::string to_string(Preference p);
Preference parse_preference(std::string_view s);

struct JudgmentRecord {
  std::string instance_id;
  bool a_sensible = false;
  bool b_sensible = false;
  std::optional<Preference> preferred;
  int strength = 0;  // 1-3 when given; not used by aggregation
  std::string annotator;
  std::string timestamp;
};

// Throws ContractError when the preference contradicts the sensible flags.
void validate(const JudgmentRecord& r);
nlohmann::json to_json(const JudgmentRecord& r);
JudgmentRecord judgment_from_json(const nlohmann::json& j);
std::vector<JudgmentRecord> load_judgments(const std::filesystem::path& path);

// Which system explains the relation better: the only sensible one, or the
// preferred one when both are sensible. Everything else is a draw.
Preference verdict(const JudgmentRecord& r);

// Exact two-sided sign test, min(1, 2 * P[X <= min(a, b)]) with X ~ Bin(a+b, 1/2).
double sign_test_p_value(std::size_t a_wins, std::size_t b_wins);

struct PlausibilityReport {
  std::size_t total = 0;
  std::size_t a_sensible = 0;
  std::size_t b_sensible = 0;
  std::size_t a_better = 0;
  std::size_t b_better = 0;
  std::size_t draws = 0;
  double a_sensible_rate = 0.0;
  double b_sensible_rate = 0.0;
  double a_better_rate = 0.0;
  double b_better_rate = 0.0;
  double draw_rate = 0.0;
  std::optional<double> p_value;  // empty when every comparison is a draw
};

PlausibilityReport aggregate_judgments(std::span<const JudgmentRecord> records);
nlohmann::json to_json(const PlausibilityReport& r);

struct SweepCell {
  double gamma = 0.0;
  std::uint64_t seed = 0;
  double metric = 0.0;
  double attn_loss = 0.0;
  std::optional<std::string> error;
};

struct SweepRow {
  double gamma = 0.0;
  std::size_t runs = 0;
  double metric_mean = 0.0;
  double metric_sd = 0.0;
  double attn_loss_mean = 0.0;
  double attn_loss_sd = 0.0;
};

struct SweepTable {
  std::vector<SweepCell> cells;
  std::vector<SweepRow> rows;  // one per gamma, in input order
};

struct SweepData {
  std::vector<RelationInstance> train;
  std::vector<RelationInstance> dev;
  std::vector<RelationInstance> test;
};

// One training run per (gamma, seed). gamma = 0 runs baseline mode; other
// cells run attn-trained mode with that rationale fraction. Failed cells are
// recorded and the sweep continues. `inspect` sees every trained model.
using SweepInspector = std::function<void(const SweepCell&, const ModelParams&)>;
SweepTable rationale_sweep(const SweepData& data, std::span<const double> gammas, std::span<const std::uint64_t> seeds,
                           const TrainConfig& base, const TrainOptions& options = {},
                           const SweepInspector& inspect = {});
std::vector<SweepRow> summarize_sweep(std::span<const SweepCell> cells, std::span<const double> gammas);
std::string sweep_csv(const SweepTable& table);
nlohmann::json to_json(const SweepTable& table);

}  // namespace attnsup
