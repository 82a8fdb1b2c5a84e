#include <filesystem>
#include <fstream>

#include "attnsup/errors.hpp"
#include "attnsup/model.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace attnsup;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.word_dim = 6;
  c.pos_dim = 3;
  c.senti_dim = 2;
  c.pos_vocab = 5;
  c.senti_vocab = 3;
  c.hidden = 5;
  c.position_dim = 4;
  c.attention_dim = 4;
  return c;
}

const std::vector<std::string> kWords = {"alpha", "beta", "gamma", "delta", "eps", "zeta"};
const std::vector<std::string> kLabels = {"negative", "positive", "none"};

ModelParams make_params(std::uint64_t seed = 1, ModelConfig config = small_config()) {
  return ModelParams(config, Vocabulary(kWords), LabelSet(kLabels), seed);
}

double sum(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s;
}

}  // namespace

TEST_CASE("displacement examples") {
  CHECK(displacement(0, {2, 4}) == -2);
  CHECK(displacement(3, {2, 4}) == 0);
  CHECK(displacement(5, {2, 4}) == 1);
  CHECK(displacement(4, {2, 4}) == 0);  // one past the span, formula taken verbatim
  CHECK(position_row(-500, 100) == 0);
  CHECK(position_row(500, 100) == 200);
  CHECK(position_row(0, 100) == 100);
}

TEST_CASE("build_inputs: widths, masks, dropout") {
  auto config = small_config();
  auto params = make_params();
  RelationInstance inst;
  inst.tokens = {"alpha", "beta", "gamma", "delta"};
  inst.pos_ids = {1, 2, 3, 4};
  inst.senti_ids = {0, 1, 2, 0};
  inst.source = {0, 1};
  inst.target = {2, 4};
  inst.label = "none";
  const auto enc = encode(params, inst);
  Graph g;
  auto xs = build_inputs(g, params, enc, {});
  REQUIRE(xs.size() == 4);
  CHECK(g.value(xs[1]).size() == config.word_dim + config.pos_dim + config.senti_dim);
  const auto& word = params.word_embedding.value;
  for (std::size_t k = 0; k < config.word_dim; ++k) {
    CHECK(g.value(xs[1])[k] == word.at(enc.word_ids[1], k));
    CHECK(g.value(xs[0])[k] == params.source_mask.value[k]);
    CHECK(g.value(xs[3])[k] == params.target_mask.value[k]);
  }

  config.word_dropout = 0.0;
  auto no_drop = make_params(1, config);
  Rng rng(3);
  Graph g1, g2;
  auto train_x = build_inputs(g1, no_drop, enc, {true, &rng, false});
  auto eval_x = build_inputs(g2, no_drop, enc, {});
  for (std::size_t i = 0; i < train_x.size(); ++i) CHECK(g1.value(train_x[i]) == g2.value(eval_x[i]));

  ModelConfig full;
  full.word_dim = 300;
  CHECK(full.input_dim() == 320);
}

TEST_CASE("forward: distributions sum to one, single token, zero v") {
  auto params = make_params();
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    auto inst = oracle::random_instance(rng, 2 + rng.below(10), kLabels, kWords, 5, 3);
    const auto r = evaluate(params, inst);
    CHECK(std::abs(sum(r.label_probs) - 1.0) <= 1e-12);
    CHECK(std::abs(sum(r.attention_weights) - 1.0) <= 1e-12);
    CHECK(r.rationale_probs.size() == inst.size());
    for (double c : r.rationale_probs) CHECK((c > 0.0 && c < 1.0));
  }

  RelationInstance one;
  one.tokens = {"alpha"};
  one.source = {0, 1};
  one.target = {0, 1};
  one.label = "none";
  CHECK(evaluate(params, one).attention_weights == std::vector<double>{1.0});

  params.v.value.fill(0.0);
  auto inst = oracle::random_instance(rng, 7, kLabels, kWords, 5, 3);
  for (double a : evaluate(params, inst).attention_weights) CHECK(a == doctest::Approx(1.0 / 7.0).epsilon(1e-14));
}

TEST_CASE("predict: argmax, ties, determinism") {
  CHECK(argmax(std::vector<double>{0.1, 0.7, 0.2}) == 1);
  CHECK(argmax(std::vector<double>{0.4, 0.4, 0.2}) == 0);
  auto params = make_params();
  Rng rng(4);
  auto inst = oracle::random_instance(rng, 6, kLabels, kWords, 5, 3);
  auto a = predict(params, inst);
  auto b = predict(params, inst);
  CHECK(a.label == b.label);
  CHECK(a.confidence == b.confidence);
  CHECK(a.probs == b.probs);
  CHECK(a.confidence == a.probs[a.label]);
}

TEST_CASE("masked span contents do not matter") {
  auto params = make_params();
  Rng rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    auto inst = oracle::random_instance(rng, 6, kLabels, kWords, 5, 3);
    auto swapped = inst;
    for (std::size_t i = 0; i < inst.size(); ++i)
      if (inst.in_entity(i)) swapped.tokens[i] = kWords[rng.below(kWords.size())];
    const auto a = evaluate(params, inst);
    const auto b = evaluate(params, swapped);
    CHECK(a.label_probs == b.label_probs);
    CHECK(a.attention_weights == b.attention_weights);
  }
}

TEST_CASE("permuting vocabulary rows leaves outputs unchanged") {
  auto params = make_params(5);
  std::vector<std::string> reversed(kWords.rbegin(), kWords.rend());
  ModelParams permuted(small_config(), Vocabulary(reversed), LabelSet(kLabels), 5);
  for (Param* p : permuted.all()) *p = *params.find(p->name);
  // Move each word's row to its new id.
  for (const auto& w : kWords) {
    const auto from = params.vocabulary().id(w);
    const auto to = permuted.vocabulary().id(w);
    auto src = params.word_embedding.value.row(from);
    auto dst = permuted.word_embedding.value.row(to);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = oracle::random_instance(rng, 7, kLabels, kWords, 5, 3);
    const auto a = evaluate(params, inst);
    const auto b = evaluate(permuted, inst);
    CHECK(a.label_probs == b.label_probs);
    CHECK(a.attention_weights == b.attention_weights);
  }
}

TEST_CASE("hidden states do not depend on attention parameters") {
  auto params = make_params();
  Rng rng(21);
  auto inst = oracle::random_instance(rng, 6, kLabels, kWords, 5, 3);
  auto enc = encode(params, inst);
  Graph g1;
  auto r1 = forward(g1, params, enc, {});
  params.v.value.fill(0.3);
  params.w_h.value.fill(-0.2);
  Graph g2;
  auto r2 = forward(g2, params, enc, {});
  CHECK(r1.attention_weights != r2.attention_weights);
  CHECK(g1.value(r1.query) == g2.value(r2.query));
  for (std::size_t i = 0; i < r1.hidden.size(); ++i) CHECK(g1.value(r1.hidden[i]) == g2.value(r2.hidden[i]));
}

TEST_CASE("encode rejects tag ids outside the configured range") {
  auto params = make_params();
  RelationInstance inst;
  inst.tokens = {"alpha", "beta"};
  inst.pos_ids = {0, 99};
  inst.senti_ids = {0, 0};
  inst.source = {0, 1};
  inst.target = {1, 2};
  inst.label = "none";
  CHECK_THROWS_AS(encode(params, inst), ContractError);
}

TEST_CASE("checkpoint round trip and rejection") {
  auto params = make_params(8);
  auto path = std::filesystem::temp_directory_path() / "attnsup_test_model.ckpt";
  save_checkpoint(path, params, {{"note", "x"}});
  auto loaded = load_checkpoint(path);
  CHECK(loaded.meta["note"] == "x");
  CHECK(loaded.params.labels() == params.labels());
  CHECK(loaded.params.vocabulary() == params.vocabulary());
  auto originals = params.all();
  auto copies = loaded.params.all();
  REQUIRE(originals.size() == copies.size());
  for (std::size_t i = 0; i < originals.size(); ++i) CHECK(originals[i]->value == copies[i]->value);

  auto j = checkpoint_json(params);
  auto bad_shape = j;
  bad_shape["tensors"]["attention.v"]["shape"] = {3};
  bad_shape["tensors"]["attention.v"]["data"] = {1, 2, 3};
  CHECK_THROWS_AS(checkpoint_from_json(bad_shape), IngestionError);
  auto missing = j;
  missing["tensors"].erase("classifier.w_z");
  CHECK_THROWS_AS(checkpoint_from_json(missing), IngestionError);
  auto extra = j;
  extra["tensors"]["surprise"] = {{"shape", {1}}, {"data", {0.0}}};
  CHECK_THROWS_AS(checkpoint_from_json(extra), IngestionError);
  auto wrong_format = j;
  wrong_format["format"] = "other";
  CHECK_THROWS_AS(checkpoint_from_json(wrong_format), IngestionError);
  std::ofstream(path) << "{ truncated";
  CHECK_THROWS_AS(load_checkpoint(path), IngestionError);
}

TEST_CASE("config validation") {
  ModelConfig c = small_config();
  c.hidden = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.word_dropout = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(model_config_from_json(to_json(ModelConfig::compact())).hidden == ModelConfig::compact().hidden);
}
