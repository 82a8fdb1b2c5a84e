#pragma once

#include <optional>
#include <span>
#include <vector>

#include "attnsup/corpus.hpp"
#include "attnsup/model.hpp"
#include "json.hpp"

namespace attnsup {

struct InfluenceProfile {
  std::vector<double> influences;  // y - y_{-j}; 0 at source/target positions
  std::size_t top_index = 0;
  double base_confidence = 0.0;
  std::size_t predicted_label = 0;
};

// Leave-one-out influence: confidence drop of the original prediction when a
// token's word embedding is replaced by the unknown-token row. Source and
// target positions are never candidates.
InfluenceProfile loo_influence(const ModelParams& params, const RelationInstance& inst);

// Rank of `target` under descending attention, ties resolved optimistically.
std::size_t probes_needed(std::span<const double> attention, std::size_t target);
// Attention mass strictly above the target's weight.
double mass_needed(std::span<const double> attention, std::size_t target);

struct AttentionMetrics {
  std::size_t probes_needed = 0;
  double mass_needed = 0.0;
};

struct AttentionAuditRecord {
  std::size_t instance_id = 0;
  std::string doc_id;
  std::vector<std::string> tokens;
  Span source;
  Span target;
  std::string gold_label;
  std::string predicted_label;
  double confidence = 0.0;
  bool correct = false;
  AttentionMetrics faithfulness;
  std::optional<AttentionMetrics> plausibility;
  AttentionDist attention;
  InfluenceProfile influence;
  std::optional<int> fold;
};

struct AuditGroup {
  std::size_t count = 0;
  double faithfulness_probes = 0.0;
  double faithfulness_mass = 0.0;
  std::size_t plausibility_count = 0;
  double plausibility_probes = 0.0;
  double plausibility_mass = 0.0;
};

struct AuditSummary {
  AuditGroup all;
  AuditGroup correct;
  AuditGroup incorrect;
};

struct AuditResult {
  std::vector<AttentionAuditRecord> records;
  AuditSummary summary;
};

AttentionAuditRecord audit_instance(const ModelParams& params, const RelationInstance& inst);
// Audits the non-null gold instances, ordered by instance id.
AuditResult audit(const ModelParams& params, std::span<const RelationInstance> instances,
                  std::optional<int> fold = std::nullopt);
AuditSummary summarize(std::span<const AttentionAuditRecord> records);

nlohmann::json to_json(const AttentionAuditRecord& r);
AttentionAuditRecord audit_record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AuditSummary& s);

}  // namespace attnsup
