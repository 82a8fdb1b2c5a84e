#include <algorithm>

#include "attnsup/errors.hpp"
#include "attnsup/training.hpp"

namespace attnsup {

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::baseline: return "baseline";
    case TrainMode::attn_trained: return "attn-trained";
    case TrainMode::pred_rationales: return "pred-rationales";
  }
  return "baseline";
}

TrainMode parse_train_mode(std::string_view name) {
  if (name == "baseline") return TrainMode::baseline;
  if (name == "attn-trained") return TrainMode::attn_trained;
  if (name == "pred-rationales") return TrainMode::pred_rationales;
  throw ConfigError("unknown training mode '" + std::string(name) +
                    "' (expected baseline, attn-trained or pred-rationales)");
}

void TrainConfig::validate() const {
  if (lambda_attn < 0) throw ConfigError("lambda_attn must be non-negative");
  if (lambda_r < 0) throw ConfigError("lambda_r must be non-negative");
  if (!(gamma > 0 && gamma <= 1)) throw ConfigError("gamma must lie in (0, 1]");
  if (learning_rate < 0) throw ConfigError("learning_rate must be non-negative");
  if (!(lr_decay > 0 && lr_decay <= 1)) throw ConfigError("lr_decay must lie in (0, 1]");
  if (!(clip_norm > 0)) throw ConfigError("clip_norm must be positive");
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (patience == 0) throw ConfigError("patience must be positive");
  if (!(prob_floor > 0 && prob_floor < 0.5)) throw ConfigError("prob_floor must lie in (0, 0.5)");
  model.validate();
}

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j = {{"mode", to_string(c.mode)},
                      {"lambda_attn", c.lambda_attn},
                      {"lambda_r", c.lambda_r},
                      {"gamma", c.gamma},
                      {"learning_rate", c.learning_rate},
                      {"lr_decay", c.lr_decay},
                      {"clip_norm", c.clip_norm},
                      {"max_epochs", c.max_epochs},
                      {"patience", c.patience},
                      {"seed", c.seed},
                      {"prob_floor", c.prob_floor}};
  j.update(to_json(c.model));
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  static const std::vector<std::string> known = {
      "mode", "lambda_attn", "lambda_r", "gamma", "learning_rate", "lr_decay", "clip_norm", "max_epochs", "patience",
      "seed", "prob_floor", "word_dim", "pos_dim", "senti_dim", "pos_vocab", "senti_vocab", "hidden", "position_dim",
      "attention_dim", "max_displacement", "word_dropout", "init_scale"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown training config field '" + key + "'");
    }
  }
  try {
    if (j.contains("mode")) c.mode = parse_train_mode(j["mode"].get<std::string>());
    c.lambda_attn = j.value("lambda_attn", c.lambda_attn);
    c.lambda_r = j.value("lambda_r", c.lambda_r);
    c.gamma = j.value("gamma", c.gamma);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.lr_decay = j.value("lr_decay", c.lr_decay);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    c.prob_floor = j.value("prob_floor", c.prob_floor);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  c.model = model_config_from_json(j, c.model);
  c.validate();
  return c;
}

double default_lambda_r(std::string_view dataset, bool include_null) {
  if (dataset == "mpqa") return include_null ? 0.05 : 0.25;
  if (dataset == "gfbf") return include_null ? 0.25 : 0.3;
  throw ConfigError("no tuned lambda_r for dataset '" + std::string(dataset) + "'");
}

}  // namespace attnsup
