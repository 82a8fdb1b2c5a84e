#include <algorithm>
#include <cmath>

#include "attnsup/errors.hpp"
#include "attnsup/training.hpp"

namespace attnsup {

double loss_clf(std::span<const double> probs, std::size_t label, double floor) {
  if (label >= probs.size()) throw ContractError("loss_clf: label index out of range");
  return -std::log(std::max(probs[label], floor));
}

double loss_attn(std::span<const double> truth, std::span<const double> attention) {
  if (truth.size() != attention.size()) throw ContractError("loss_attn: length mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] > 0.0) kl += truth[i] * std::log(truth[i] / attention[i]);
  }
  return kl;
}

double loss_attn_subsampled(std::size_t instance_id, bool is_null, double attn_loss, const SubsampleMask& mask) {
  if (is_null) return attn_loss;
  return mask.contains(instance_id) ? attn_loss / mask.gamma : 0.0;
}

double attention_loss_weight(const RelationInstance& inst, const SubsampleMask* mask) {
  if (inst.is_null()) return 1.0;
  if (!inst.rationale) return 0.0;
  if (!mask) return 1.0;
  return mask->contains(inst.id) ? 1.0 / mask->gamma : 0.0;
}

std::vector<double> rationale_targets(const RelationInstance& inst) {
  std::vector<double> c(inst.size(), 0.0);
  if (!inst.is_null() && inst.rationale) {
    for (std::size_t i = inst.rationale->start; i < inst.rationale->end && i < c.size(); ++i) c[i] = 1.0;
  }
  return c;
}

double loss_rationale(std::span<const double> rationale_probs, const RelationInstance& inst, double floor) {
  if (rationale_probs.size() != inst.size()) throw ContractError("loss_rationale: length mismatch");
  const auto c = rationale_targets(inst);
  double total = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double p = std::clamp(rationale_probs[i], floor, 1.0 - floor);
    total -= c[i] * std::log(p) + (1.0 - c[i]) * std::log(1.0 - p);
  }
  return total / static_cast<double>(c.size());
}

double combine_losses(const TrainConfig& config, double clf, double attn_subsampled, double rationale) {
  switch (config.mode) {
    case TrainMode::baseline: return clf;
    case TrainMode::attn_trained: return clf + config.lambda_attn * attn_subsampled;
    case TrainMode::pred_rationales: return clf + config.lambda_r * rationale;
  }
  return clf;
}

LossTerms total_loss(Graph& g, const RelationInstance& inst, const ForwardResult& result, const TrainConfig& config,
                     const SubsampleMask* mask, std::size_t label_index) {
  LossTerms terms;
  const Var clf = g.neg_log_pick(result.probs, label_index, config.prob_floor);
  terms.clf = g.scalar(clf);
  terms.total = clf;

  const bool has_truth = inst.is_null() || inst.rationale.has_value();
  if (has_truth) {
    const AttentionDist truth = ground_truth_attention(inst);
    if (config.mode == TrainMode::attn_trained) {
      const Var kl = g.kl_divergence(Tensor::vector(truth), result.attention, config.prob_floor);
      terms.attn = g.scalar(kl);
      const double weight = config.lambda_attn * attention_loss_weight(inst, mask);
      if (weight != 0.0) terms.total = g.add(terms.total, g.scale(kl, weight));
    } else {
      terms.attn = loss_attn(truth, result.attention_weights);
    }
  }

  const auto targets = rationale_targets(inst);
  if (config.mode == TrainMode::pred_rationales) {
    const Var r = g.binary_cross_entropy(result.rationale, targets, config.prob_floor);
    terms.rationale = g.scalar(r);
    if (config.lambda_r != 0.0) terms.total = g.add(terms.total, g.scale(r, config.lambda_r));
  } else {
    terms.rationale = loss_rationale(result.rationale_probs, inst, config.prob_floor);
  }
  return terms;
}

}  // namespace attnsup
