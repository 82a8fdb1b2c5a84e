#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "attnsup/corpus.hpp"
#include "attnsup/graph.hpp"
#include "attnsup/rng.hpp"
#include "json.hpp"

namespace attnsup {

struct ModelConfig {
  std::size_t word_dim = 50;
  std::size_t pos_dim = 10;
  std::size_t senti_dim = 10;
  std::size_t pos_vocab = 64;
  std::size_t senti_vocab = 8;
  std::size_t hidden = 140;        // per direction
  std::size_t position_dim = 35;
  std::size_t attention_dim = 50;
  long max_displacement = 100;
  double word_dropout = 0.06;
  double init_scale = 0.1;

  std::size_t input_dim() const { return word_dim + pos_dim + senti_dim; }
  void validate() const;

  // Small dimensions for synthetic corpora, where the full-size model is
  // needlessly slow on one core.
  static ModelConfig compact();
};

nlohmann::json to_json(const ModelConfig& c);
// Missing keys keep their defaults.
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

struct LstmParams {
  Param input;
  Param recurrent;
  Param bias;
};

// Every trainable tensor of the attention Bi-LSTM and its rationale head.
class ModelParams {
 public:
  ModelParams(ModelConfig config, Vocabulary vocab, LabelSet labels, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  const LabelSet& labels() const { return labels_; }

  std::vector<Param*> all();
  std::vector<const Param*> all() const;
  Param* find(std::string_view name);
  void zero_grad();
  // Overwrites rows of the word embedding; vectors must have word_dim values.
  void load_embeddings(const std::map<std::size_t, std::vector<double>>& rows);

  Param word_embedding;
  Param pos_embedding;
  Param senti_embedding;
  Param position_embedding;  // rows indexed by displacement + max_displacement
  Param source_mask;
  Param target_mask;
  LstmParams forward_lstm;
  LstmParams backward_lstm;
  Param w_h;
  Param w_q;
  Param w_s;
  Param w_t;
  Param v;
  Param w_z;
  Param fc_r;

 private:
  ModelConfig config_;
  Vocabulary vocab_;
  LabelSet labels_;
};

// Signed distance from position i to a span; 0 inside it.
long displacement(std::size_t i, Span span);
std::size_t position_row(long displacement, long max_displacement);

// Token ids resolved against a vocabulary.
struct EncodedInstance {
  std::vector<std::size_t> word_ids;
  std::vector<std::size_t> pos_ids;
  std::vector<std::size_t> senti_ids;
  Span source;
  Span target;
  std::size_t size() const { return word_ids.size(); }
};

EncodedInstance encode(const ModelParams& params, const RelationInstance& inst);

struct ForwardOptions {
  bool train = false;
  Rng* rng = nullptr;      // required when train is set and dropout > 0
  bool trainable = false;  // bind parameters as gradient leaves
};

struct ForwardResult {
  Var probs;
  Var attention;
  Var rationale;
  std::vector<Var> hidden;
  Var query;
  std::vector<double> label_probs;   // y
  AttentionDist attention_weights;   // Â
  std::vector<double> rationale_probs;
};

// Per-position input vectors x_i (word or mask, POS, sentiment).
std::vector<Var> build_inputs(Graph& g, const ModelParams& params, const EncodedInstance& enc,
                              const ForwardOptions& opts);

// With opts.trainable the Params are bound as leaves and their gradients can
// be collected through Graph::accumulate_param_grads; the caller must then
// own `params` mutably.
ForwardResult forward(Graph& g, const ModelParams& params, const EncodedInstance& enc,
                      const ForwardOptions& opts = {});

// Evaluation-mode forward on a fresh graph.
ForwardResult evaluate(const ModelParams& params, const RelationInstance& inst);
ForwardResult evaluate(const ModelParams& params, const EncodedInstance& enc);

struct Prediction {
  std::size_t label = 0;
  double confidence = 0.0;
  std::vector<double> probs;
};

// First maximum wins.
std::size_t argmax(std::span<const double> values);
Prediction predict(const ModelParams& params, const RelationInstance& inst);

// JSON checkpoint: config echo, label set, vocabulary, and row-major tensors
// with their shapes. `meta` is stored verbatim.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const nlohmann::json& meta = {});
struct Checkpoint {
  ModelParams params;
  nlohmann::json meta;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);
nlohmann::json checkpoint_json(const ModelParams& params, const nlohmann::json& meta = {});
Checkpoint checkpoint_from_json(const nlohmann::json& j);

}  // namespace attnsup
