#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "attnsup/errors.hpp"
#include "attnsup/evalstats.hpp"
#include "attnsup/training.hpp"

namespace attnsup {

double sgd_step(ModelParams& params, double learning_rate, double clip_norm) {
  double sq = 0.0;
  std::vector<std::vector<std::size_t>> rows;
  const auto all = params.all();
  rows.reserve(all.size());
  for (Param* p : all) {
    std::vector<std::size_t> touched;
    if (p->dense_touched) {
      for (double g : p->grad.data()) sq += g * g;
    } else if (!p->touched_rows.empty()) {
      touched = p->touched_rows;
      std::sort(touched.begin(), touched.end());
      touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
      for (std::size_t r : touched)
        for (double g : p->grad.row(r)) sq += g * g;
    }
    rows.push_back(std::move(touched));
  }
  const double norm = std::sqrt(sq);
  const double scale = norm > clip_norm ? clip_norm / norm : 1.0;
  const double step = learning_rate * scale;
  for (std::size_t k = 0; k < all.size(); ++k) {
    Param* p = all[k];
    if (p->dense_touched) {
      for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] -= step * p->grad[i];
    } else {
      for (std::size_t r : rows[k]) {
        auto v = p->value.row(r);
        auto g = p->grad.row(r);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= step * g[i];
      }
    }
    p->zero_grad();
  }
  return norm;
}

double mean_attention_loss(const ModelParams& params, std::span<const RelationInstance> instances) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& inst : instances) {
    if (!inst.is_null() && !inst.rationale) continue;
    const ForwardResult r = evaluate(params, inst);
    total += loss_attn(ground_truth_attention(inst), r.attention_weights);
    ++n;
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

nlohmann::json to_json(const TrainReport& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"loss_clf", e.loss_clf},
                      {"loss_attn", e.loss_attn},
                      {"loss_rationale", e.loss_rationale},
                      {"loss_total", e.loss_total},
                      {"dev_metric", e.dev_metric},
                      {"learning_rate", e.learning_rate}});
  }
  nlohmann::json j = {{"mode", r.mode},
                      {"seed", r.seed},
                      {"epochs", epochs},
                      {"best_epoch", r.best_epoch},
                      {"best_dev_metric", r.best_dev_metric},
                      {"dev_metric_name", r.dev_metric_name},
                      {"checkpoint_path", r.checkpoint_path}};
  if (r.mask) j["mask"] = {{"gamma", r.mask->gamma}, {"seed", r.mask->seed}, {"size", r.mask->member_ids.size()}};
  return j;
}

namespace {

void copy_values(ModelParams& dst, const ModelParams& src) {
  auto d = dst.all();
  auto s = src.all();
  for (std::size_t i = 0; i < d.size(); ++i) d[i]->value = s[i]->value;
}

}  // namespace

TrainResult train(const std::vector<RelationInstance>& train_set, const std::vector<RelationInstance>& dev_set,
                  const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  if (train_set.empty()) throw ConfigError("training set is empty");
  if (dev_set.empty()) throw ConfigError("development set is empty");

  LabelSet labels;
  if (options.labels) {
    labels = *options.labels;
  } else {
    std::vector<RelationInstance> both(train_set);
    both.insert(both.end(), dev_set.begin(), dev_set.end());
    labels = LabelSet::infer(both);
  }
  for (const auto* set : {&train_set, &dev_set})
    for (const auto& inst : *set) validate(inst, &labels);

  Rng seeder(config.seed);
  const std::uint64_t init_seed = seeder.next();
  const std::uint64_t mask_seed = seeder.next();
  Rng order_rng(seeder.next());
  Rng dropout_rng(seeder.next());

  ModelParams params(config.model, options.vocabulary ? *options.vocabulary : Vocabulary::build(train_set), labels,
                     init_seed);
  if (!options.embeddings.empty()) params.load_embeddings(options.embeddings);
  ModelParams best = params;

  std::optional<SubsampleMask> mask;
  if (config.mode == TrainMode::attn_trained) mask = draw_subsample_mask(train_set, config.gamma, mask_seed);

  std::vector<EncodedInstance> encoded;
  std::vector<std::size_t> label_index;
  for (const auto& inst : train_set) {
    encoded.push_back(encode(params, inst));
    label_index.push_back(labels.index_of(inst.label));
  }

  TrainReport report;
  report.mode = to_string(config.mode);
  report.seed = config.seed;
  report.mask = mask;
  report.checkpoint_path = options.checkpoint_path.string();
  report.dev_metric_name = labels.includes_null() ? "f_score" : "accuracy";

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  double lr = config.learning_rate;
  double best_metric = -std::numeric_limits<double>::infinity();
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    order_rng.shuffle(std::span(order));
    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = lr;
    std::size_t attn_count = 0;
    for (std::size_t k : order) {
      Graph g;
      const ForwardResult fr =
          forward(g, params, encoded[k], ForwardOptions{.train = true, .rng = &dropout_rng, .trainable = true});
      const LossTerms terms = total_loss(g, train_set[k], fr, config, mask ? &*mask : nullptr, label_index[k]);
      const double total = g.scalar(terms.total);
      if (!std::isfinite(total)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", instance " << train_set[k].id << " (lr " << lr << ")";
        throw TrainingDiverged(msg.str());
      }
      g.backward(terms.total);
      g.accumulate_param_grads();
      sgd_step(params, lr, config.clip_norm);
      rec.loss_clf += terms.clf;
      rec.loss_rationale += terms.rationale;
      rec.loss_total += total;
      if (terms.attn) {
        rec.loss_attn += *terms.attn;
        ++attn_count;
      }
    }
    const double n = static_cast<double>(train_set.size());
    rec.loss_clf /= n;
    rec.loss_rationale /= n;
    rec.loss_total /= n;
    if (attn_count) rec.loss_attn /= static_cast<double>(attn_count);
    rec.dev_metric = evaluate_corpus(params, dev_set).primary();
    report.epochs.push_back(rec);

    if (options.log) {
      *options.log << "epoch " << epoch << " loss " << rec.loss_total << " clf " << rec.loss_clf << " attn "
                   << rec.loss_attn << " dev " << report.dev_metric_name << " " << rec.dev_metric << '\n';
    }
    if (rec.dev_metric > best_metric) {
      best_metric = rec.dev_metric;
      report.best_epoch = epoch;
      copy_values(best, params);
      stale = 0;
    } else {
      lr *= config.lr_decay;
      if (++stale >= config.patience) break;
    }
  }
  report.best_dev_metric = best_metric;
  if (!options.checkpoint_path.empty()) {
    save_checkpoint(options.checkpoint_path, best,
                    {{"train_config", to_json(config)}, {"best_epoch", report.best_epoch}});
  }
  return TrainResult{std::move(best), std::move(report)};
}

}  // namespace attnsup
