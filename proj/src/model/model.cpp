#include "attnsup/model.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "attnsup/errors.hpp"

namespace attnsup {

ModelConfig ModelConfig::compact() {
  ModelConfig c;
  c.hidden = 32;
  c.position_dim = 10;
  c.attention_dim = 20;
  c.pos_vocab = 16;
  c.senti_vocab = 4;
  return c;
}

void ModelConfig::validate() const {
  if (word_dim == 0 || pos_dim == 0 || senti_dim == 0 || hidden == 0 || position_dim == 0 || attention_dim == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (pos_vocab == 0 || senti_vocab == 0) throw ConfigError("tag vocabularies must be non-empty");
  if (max_displacement < 1) throw ConfigError("max_displacement must be at least 1");
  if (word_dropout < 0 || word_dropout >= 1) throw ConfigError("word_dropout must lie in [0, 1)");
  if (!(init_scale > 0)) throw ConfigError("init_scale must be positive");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"word_dim", c.word_dim},         {"pos_dim", c.pos_dim},
          {"senti_dim", c.senti_dim},       {"pos_vocab", c.pos_vocab},
          {"senti_vocab", c.senti_vocab},   {"hidden", c.hidden},
          {"position_dim", c.position_dim}, {"attention_dim", c.attention_dim},
          {"max_displacement", c.max_displacement}, {"word_dropout", c.word_dropout},
          {"init_scale", c.init_scale}};
}

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c) {
  try {
    c.word_dim = j.value("word_dim", c.word_dim);
    c.pos_dim = j.value("pos_dim", c.pos_dim);
    c.senti_dim = j.value("senti_dim", c.senti_dim);
    c.pos_vocab = j.value("pos_vocab", c.pos_vocab);
    c.senti_vocab = j.value("senti_vocab", c.senti_vocab);
    c.hidden = j.value("hidden", c.hidden);
    c.position_dim = j.value("position_dim", c.position_dim);
    c.attention_dim = j.value("attention_dim", c.attention_dim);
    c.max_displacement = j.value("max_displacement", c.max_displacement);
    c.word_dropout = j.value("word_dropout", c.word_dropout);
    c.init_scale = j.value("init_scale", c.init_scale);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

Tensor uniform(std::vector<std::size_t> shape, double scale, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& x : t.data()) x = rng.uniform(-scale, scale);
  return t;
}

// Glorot-uniform for dense weight matrices.
Tensor glorot(std::size_t rows, std::size_t cols, Rng& rng) {
  return uniform({rows, cols}, std::sqrt(6.0 / static_cast<double>(rows + cols)), rng);
}

LstmParams make_lstm(const std::string& prefix, std::size_t in, std::size_t d, Rng& rng) {
  Tensor bias({4 * d});
  // Forget-gate bias starts at 1.
  for (std::size_t i = d; i < 2 * d; ++i) bias[i] = 1.0;
  return LstmParams{Param(prefix + ".input", glorot(4 * d, in, rng)),
                    Param(prefix + ".recurrent", glorot(4 * d, d, rng)), Param(prefix + ".bias", std::move(bias))};
}

}  // namespace

ModelParams::ModelParams(ModelConfig config, Vocabulary vocab, LabelSet labels, std::uint64_t seed)
    : config_(std::move(config)), vocab_(std::move(vocab)), labels_(std::move(labels)) {
  config_.validate();
  if (labels_.size() < 2) throw ConfigError("a task needs at least two labels");
  Rng rng(seed);
  const auto& c = config_;
  const double s = c.init_scale;
  const std::size_t h2 = 2 * c.hidden;
  word_embedding = Param("word_embedding", uniform({vocab_.size(), c.word_dim}, s, rng));
  pos_embedding = Param("pos_embedding", uniform({c.pos_vocab, c.pos_dim}, s, rng));
  senti_embedding = Param("senti_embedding", uniform({c.senti_vocab, c.senti_dim}, s, rng));
  position_embedding = Param("position_embedding",
                             uniform({static_cast<std::size_t>(2 * c.max_displacement + 1), c.position_dim}, s, rng));
  source_mask = Param("source_mask", uniform({c.word_dim}, s, rng));
  target_mask = Param("target_mask", uniform({c.word_dim}, s, rng));
  forward_lstm = make_lstm("lstm_forward", c.input_dim(), c.hidden, rng);
  backward_lstm = make_lstm("lstm_backward", c.input_dim(), c.hidden, rng);
  w_h = Param("attention.w_h", glorot(c.attention_dim, h2, rng));
  w_q = Param("attention.w_q", glorot(c.attention_dim, h2, rng));
  w_s = Param("attention.w_s", glorot(c.attention_dim, c.position_dim, rng));
  w_t = Param("attention.w_t", glorot(c.attention_dim, c.position_dim, rng));
  v = Param("attention.v", uniform({c.attention_dim}, s, rng));
  w_z = Param("classifier.w_z", glorot(labels_.size(), h2, rng));
  fc_r = Param("rationale.fc_r", uniform({c.attention_dim}, s, rng));
}

std::vector<Param*> ModelParams::all() {
  return {&word_embedding, &pos_embedding, &senti_embedding, &position_embedding, &source_mask,
          &target_mask, &forward_lstm.input, &forward_lstm.recurrent, &forward_lstm.bias,
          &backward_lstm.input, &backward_lstm.recurrent, &backward_lstm.bias, &w_h, &w_q, &w_s, &w_t, &v, &w_z, &fc_r};
}

std::vector<const Param*> ModelParams::all() const {
  auto mut = const_cast<ModelParams*>(this)->all();
  return {mut.begin(), mut.end()};
}

Param* ModelParams::find(std::string_view name) {
  for (Param* p : all())
    if (p->name == name) return p;
  return nullptr;
}

void ModelParams::zero_grad() {
  for (Param* p : all()) p->zero_grad();
}

void ModelParams::load_embeddings(const std::map<std::size_t, std::vector<double>>& rows) {
  for (const auto& [row, vec] : rows) {
    if (row >= word_embedding.value.rows()) throw DimensionError("embedding row out of range");
    if (vec.size() != config_.word_dim) {
      throw DimensionError("embedding width " + std::to_string(vec.size()) + " differs from word_dim " +
                           std::to_string(config_.word_dim));
    }
    std::copy(vec.begin(), vec.end(), word_embedding.value.row(row).begin());
  }
}

long displacement(std::size_t i, Span span) {
  const long pos = static_cast<long>(i);
  return std::min(pos - static_cast<long>(span.start), 0L) + std::max(0L, pos - static_cast<long>(span.end));
}

std::size_t position_row(long disp, long max_displacement) {
  return static_cast<std::size_t>(std::clamp(disp, -max_displacement, max_displacement) + max_displacement);
}

EncodedInstance encode(const ModelParams& params, const RelationInstance& inst) {
  const auto& c = params.config();
  const std::size_t n = inst.size();
  if (n == 0) throw ContractError("encode: empty sentence");
  // Absent tag lists mean all-zero ids, as in the corpus format.
  const bool has_pos = !inst.pos_ids.empty();
  const bool has_senti = !inst.senti_ids.empty();
  if ((has_pos && inst.pos_ids.size() != n) || (has_senti && inst.senti_ids.size() != n))
    throw ContractError("encode: tag lists differ in length");
  EncodedInstance enc;
  enc.source = inst.source;
  enc.target = inst.target;
  if (!(inst.source.start < inst.source.end && inst.source.end <= n && inst.target.start < inst.target.end &&
        inst.target.end <= n)) {
    throw ContractError("encode: entity span out of bounds");
  }
  for (std::size_t i = 0; i < n; ++i) {
    enc.word_ids.push_back(params.vocabulary().id(inst.tokens[i]));
    const int pos = has_pos ? inst.pos_ids[i] : 0;
    const int senti = has_senti ? inst.senti_ids[i] : 0;
    if (pos < 0 || static_cast<std::size_t>(pos) >= c.pos_vocab) {
      throw ContractError("encode: pos id " + std::to_string(pos) + " outside tag vocabulary of " +
                          std::to_string(c.pos_vocab));
    }
    if (senti < 0 || static_cast<std::size_t>(senti) >= c.senti_vocab) {
      throw ContractError("encode: sentiment id " + std::to_string(senti) + " outside tag vocabulary of " +
                          std::to_string(c.senti_vocab));
    }
    enc.pos_ids.push_back(static_cast<std::size_t>(pos));
    enc.senti_ids.push_back(static_cast<std::size_t>(senti));
  }
  return enc;
}

namespace {

// Binds Params either as gradient leaves or as read-only constants.
struct Binder {
  Graph& g;
  bool trainable;

  Var full(const Param& p) const {
    return trainable ? g.param(const_cast<Param&>(p)) : g.constant_ref(p.value);
  }
  Var row(const Param& p, std::size_t r) const {
    if (trainable) return g.param_row(const_cast<Param&>(p), r);
    if (r >= p.value.rows()) throw DimensionError("row lookup out of range for " + p.name);
    auto src = p.value.row(r);
    return g.constant(Tensor::vector({src.begin(), src.end()}));
  }
};

std::vector<double> copy_values(const Graph& g, Var v) {
  const auto d = g.value(v).data();
  return {d.begin(), d.end()};
}

}  // namespace

std::vector<Var> build_inputs(Graph& g, const ModelParams& params, const EncodedInstance& enc,
                              const ForwardOptions& opts) {
  const Binder bind{g, opts.trainable};
  const double dropout = opts.train ? params.config().word_dropout : 0.0;
  if (dropout > 0 && !opts.rng) throw ContractError("build_inputs: training with dropout needs an rng");
  // Masks are shared across positions, so bind them once.
  Var source_mask, target_mask;
  std::vector<Var> xs;
  xs.reserve(enc.size());
  for (std::size_t i = 0; i < enc.size(); ++i) {
    Var word;
    if (enc.source.contains(i)) {
      if (!source_mask.valid()) source_mask = bind.full(params.source_mask);
      word = source_mask;
    } else if (enc.target.contains(i)) {
      if (!target_mask.valid()) target_mask = bind.full(params.target_mask);
      word = target_mask;
    } else {
      std::size_t id = enc.word_ids[i];
      if (dropout > 0 && opts.rng->bernoulli(dropout)) id = Vocabulary::kUnk;
      word = bind.row(params.word_embedding, id);
    }
    const Var parts[] = {word, bind.row(params.pos_embedding, enc.pos_ids[i]),
                         bind.row(params.senti_embedding, enc.senti_ids[i])};
    xs.push_back(g.concat(parts));
  }
  return xs;
}

ForwardResult forward(Graph& g, const ModelParams& params, const EncodedInstance& enc, const ForwardOptions& opts) {
  const std::size_t n = enc.size();
  if (n == 0) throw ContractError("forward: empty sentence");
  const auto& c = params.config();
  const Binder bind{g, opts.trainable};
  const std::vector<Var> xs = build_inputs(g, params, enc, opts);

  const LstmWeights fwd{bind.full(params.forward_lstm.input), bind.full(params.forward_lstm.recurrent),
                        bind.full(params.forward_lstm.bias)};
  const LstmWeights bwd{bind.full(params.backward_lstm.input), bind.full(params.backward_lstm.recurrent),
                        bind.full(params.backward_lstm.bias)};
  const Var zero = g.constant(Tensor({c.hidden}));
  std::vector<Var> hf(n), hb(n);
  {
    Var h = zero, cell = zero;
    for (std::size_t i = 0; i < n; ++i) {
      std::tie(h, cell) = lstm_step(g, fwd, xs[i], h, cell);
      hf[i] = h;
    }
  }
  {
    Var h = zero, cell = zero;
    for (std::size_t i = n; i-- > 0;) {
      std::tie(h, cell) = lstm_step(g, bwd, xs[i], h, cell);
      hb[i] = h;
    }
  }

  ForwardResult out;
  out.hidden.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Var pair[] = {hf[i], hb[i]};
    out.hidden.push_back(g.concat(pair));
  }
  const Var finals[] = {hf[n - 1], hb[0]};
  out.query = g.concat(finals);

  const Var w_h = bind.full(params.w_h);
  const Var w_s = bind.full(params.w_s);
  const Var w_t = bind.full(params.w_t);
  const Var q = g.matvec(bind.full(params.w_q), out.query);
  std::vector<Var> es;
  es.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Var ps = bind.row(params.position_embedding, position_row(displacement(i, enc.source), c.max_displacement));
    const Var pt = bind.row(params.position_embedding, position_row(displacement(i, enc.target), c.max_displacement));
    const Var terms[] = {g.matvec(w_h, out.hidden[i]), q, g.matvec(w_s, ps), g.matvec(w_t, pt)};
    es.push_back(g.tanh(g.add(terms)));
  }
  const Var e = g.stack(es);
  out.attention = g.softmax(g.matvec(e, bind.full(params.v)));
  const Var z = g.matvec_t(g.stack(out.hidden), out.attention);
  out.probs = g.softmax(g.matvec(bind.full(params.w_z), z));
  out.rationale = g.sigmoid(g.matvec(e, bind.full(params.fc_r)));

  out.label_probs = copy_values(g, out.probs);
  out.attention_weights = copy_values(g, out.attention);
  out.rationale_probs = copy_values(g, out.rationale);
  return out;
}

ForwardResult evaluate(const ModelParams& params, const EncodedInstance& enc) {
  Graph g;
  return forward(g, params, enc, {});
}

ForwardResult evaluate(const ModelParams& params, const RelationInstance& inst) {
  return evaluate(params, encode(params, inst));
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw DimensionError("argmax: empty input");
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

Prediction predict(const ModelParams& params, const RelationInstance& inst) {
  ForwardResult r = evaluate(params, inst);
  const std::size_t best = argmax(r.label_probs);
  return Prediction{best, r.label_probs[best], std::move(r.label_probs)};
}

}  // namespace attnsup
