#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "attnsup/corpus.hpp"
#include "attnsup/model.hpp"
#include "json.hpp"

namespace attnsup {

enum class TrainMode { baseline, attn_trained, pred_rationales };

std::string to_string(TrainMode mode);
TrainMode parse_train_mode(std::string_view name);

struct TrainConfig {
  TrainMode mode = TrainMode::baseline;
  double lambda_attn = 0.3;
  double lambda_r = 0.05;
  double gamma = 1.0;  // attn-trained only
  double learning_rate = 0.5;
  double lr_decay = 0.9;
  double clip_norm = 5.0;
  std::size_t max_epochs = 300;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  double prob_floor = 1e-12;
  ModelConfig model;

  void validate() const;
};

// Flat object: training fields and model dimensions side by side.
nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

// Tuned rationale-prediction weights per dataset family and task variant.
double default_lambda_r(std::string_view dataset, bool include_null);

// Scalar loss definitions on plain values.
double loss_clf(std::span<const double> probs, std::size_t label, double floor = 1e-12);
double loss_attn(std::span<const double> truth, std::span<const double> attention);
double loss_attn_subsampled(std::size_t instance_id, bool is_null, double attn_loss, const SubsampleMask& mask);
std::vector<double> rationale_targets(const RelationInstance& inst);
double loss_rationale(std::span<const double> rationale_probs, const RelationInstance& inst, double floor = 1e-12);
double combine_losses(const TrainConfig& config, double clf, double attn_subsampled, double rationale);

// Multiplier applied to KL(A || Â) for one instance in attn-trained mode:
// 0 for non-null instances outside the mask or without a rationale, 1/gamma
// inside it, 1 for null instances. A null mask means every rationale is kept.
double attention_loss_weight(const RelationInstance& inst, const SubsampleMask* mask);

struct LossTerms {
  Var total;
  double clf = 0.0;
  std::optional<double> attn;  // KL(A || Â) when A is defined
  double rationale = 0.0;
};

LossTerms total_loss(Graph& g, const RelationInstance& inst, const ForwardResult& result, const TrainConfig& config,
                     const SubsampleMask* mask, std::size_t label_index);

// Clips the global gradient norm, applies plain SGD, clears gradients.
// Returns the pre-clip norm.
double sgd_step(ModelParams& params, double learning_rate, double clip_norm);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss_clf = 0.0;
  double loss_attn = 0.0;
  double loss_rationale = 0.0;
  double loss_total = 0.0;
  double dev_metric = 0.0;
  double learning_rate = 0.0;
};

struct TrainReport {
  std::string mode;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_dev_metric = 0.0;
  std::string dev_metric_name;
  std::string checkpoint_path;
  std::optional<SubsampleMask> mask;
};

nlohmann::json to_json(const TrainReport& r);

struct TrainOptions {
  std::optional<LabelSet> labels;
  std::optional<Vocabulary> vocabulary;
  std::map<std::size_t, std::vector<double>> embeddings;
  std::filesystem::path checkpoint_path;  // empty: no file written
  std::ostream* log = nullptr;
};

struct TrainResult {
  ModelParams params;
  TrainReport report;
};

// Shuffled single-instance SGD with dev-based early stopping; returns the
// best-on-dev parameters. Throws TrainingDiverged on a non-finite loss.
TrainResult train(const std::vector<RelationInstance>& train_set, const std::vector<RelationInstance>& dev_set,
                  const TrainConfig& config, const TrainOptions& options = {});

// Mean KL(A || Â) in evaluation mode over instances where A is defined.
double mean_attention_loss(const ModelParams& params, std::span<const RelationInstance> instances);

}  // namespace attnsup
