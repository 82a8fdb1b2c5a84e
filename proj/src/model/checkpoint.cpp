#include <fstream>
#include <set>
#include <sstream>

#include "attnsup/errors.hpp"
#include "attnsup/model.hpp"

namespace attnsup {

namespace {
constexpr const char* kFormat = "attnsup-checkpoint";
constexpr int kVersion = 1;
}  // namespace

nlohmann::json checkpoint_json(const ModelParams& params, const nlohmann::json& meta) {
  nlohmann::json tensors = nlohmann::json::object();
  for (const Param* p : params.all()) {
    tensors[p->name] = {{"shape", p->value.shape()}, {"data", p->value.values()}};
  }
  return {{"format", kFormat},
          {"version", kVersion},
          {"model_config", to_json(params.config())},
          {"labels", params.labels().names()},
          {"vocabulary", params.vocabulary().tokens()},
          {"meta", meta.is_null() ? nlohmann::json::object() : meta},
          {"tensors", tensors}};
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != kFormat) throw IngestionError("not an attnsup checkpoint");
    if (j.value("version", 0) != kVersion) throw IngestionError("unsupported checkpoint version");
    ModelConfig config = model_config_from_json(j.at("model_config"));
    Vocabulary vocab(j.at("vocabulary").get<std::vector<std::string>>());
    if (vocab.size() != j.at("vocabulary").size()) {
      throw IngestionError("checkpoint vocabulary must start with the unknown token and hold no duplicates");
    }
    LabelSet labels(j.at("labels").get<std::vector<std::string>>());
    Checkpoint ck{ModelParams(std::move(config), std::move(vocab), std::move(labels), 0), j.value("meta", nlohmann::json::object())};
    const auto& tensors = j.at("tensors");
    std::set<std::string> expected;
    for (Param* p : ck.params.all()) {
      expected.insert(p->name);
      if (!tensors.contains(p->name)) throw IngestionError("checkpoint lacks tensor '" + p->name + "'");
      const auto& t = tensors[p->name];
      const auto shape = t.at("shape").get<std::vector<std::size_t>>();
      if (shape != p->value.shape()) {
        throw IngestionError("tensor '" + p->name + "' has shape " + shape_string(shape) + ", model expects " +
                             p->value.shape_string());
      }
      Tensor value(shape, t.at("data").get<std::vector<double>>());
      if (!value.all_finite()) throw IngestionError("tensor '" + p->name + "' holds non-finite values");
      p->value = std::move(value);
      p->grad = Tensor(p->value.shape());
    }
    for (const auto& [name, _] : tensors.items()) {
      if (!expected.count(name)) throw IngestionError("checkpoint holds unexpected tensor '" + name + "'");
    }
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError(std::string("malformed checkpoint: ") + e.what());
  } catch (const DimensionError& e) {
    throw IngestionError(std::string("malformed checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw IngestionError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const nlohmann::json& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write checkpoint " + path.string());
  out << checkpoint_json(params, meta).dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError(path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace attnsup
