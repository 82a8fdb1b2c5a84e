#include <algorithm>
#include <cmath>
#include <set>

#include "attnsup/corpus.hpp"
#include "attnsup/errors.hpp"
#include "attnsup/rng.hpp"

namespace attnsup {

std::size_t round_count(double x) {
  if (!(x >= 0.0)) throw ConfigError("negative count");
  return static_cast<std::size_t>(std::floor(x + 0.5));
}

FoldPlan make_folds(std::span<const std::string> doc_ids, std::uint64_t seed, std::size_t fold_count) {
  std::vector<std::string> docs(doc_ids.begin(), doc_ids.end());
  std::sort(docs.begin(), docs.end());
  docs.erase(std::unique(docs.begin(), docs.end()), docs.end());
  if (docs.size() < 10) {
    throw ConfigError("fold planning needs at least 10 documents, got " + std::to_string(docs.size()));
  }
  if (fold_count == 0) throw ConfigError("fold count must be positive");
  Rng rng(seed);
  rng.shuffle(std::span(docs));

  FoldPlan plan;
  plan.fold_count = fold_count;
  plan.seed = seed;
  const std::size_t heldout = round_count(0.10 * static_cast<double>(docs.size()));
  plan.heldout.assign(docs.begin(), docs.begin() + static_cast<long>(heldout));
  const std::vector<std::string> pool(docs.begin() + static_cast<long>(heldout), docs.end());
  const double p = static_cast<double>(pool.size());
  const std::size_t test = round_count(0.20 * p);
  const std::size_t dev = round_count(0.15 * p);

  for (std::size_t k = 0; k < fold_count; ++k) {
    const std::size_t offset = round_count(static_cast<double>(k) * p / static_cast<double>(fold_count)) % pool.size();
    std::vector<std::string> rotated(pool.begin() + static_cast<long>(offset), pool.end());
    rotated.insert(rotated.end(), pool.begin(), pool.begin() + static_cast<long>(offset));
    FoldSplit split;
    split.test.assign(rotated.begin(), rotated.begin() + static_cast<long>(test));
    split.dev.assign(rotated.begin() + static_cast<long>(test), rotated.begin() + static_cast<long>(test + dev));
    split.train.assign(rotated.begin() + static_cast<long>(test + dev), rotated.end());
    for (auto* part : {&split.train, &split.dev, &split.test}) std::sort(part->begin(), part->end());
    plan.folds.push_back(std::move(split));
  }
  std::sort(plan.heldout.begin(), plan.heldout.end());
  return plan;
}

nlohmann::json to_json(const FoldPlan& plan) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : plan.folds) folds.push_back({{"train", f.train}, {"dev", f.dev}, {"test", f.test}});
  return {{"fold_count", plan.fold_count}, {"seed", plan.seed}, {"heldout", plan.heldout}, {"folds", folds}};
}

std::vector<std::string> document_ids(std::span<const RelationInstance> instances) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& inst : instances)
    if (seen.insert(inst.doc_id).second) out.push_back(inst.doc_id);
  return out;
}

std::vector<RelationInstance> select_documents(std::span<const RelationInstance> instances,
                                               std::span<const std::string> doc_ids) {
  const std::set<std::string> wanted(doc_ids.begin(), doc_ids.end());
  std::vector<RelationInstance> out;
  for (const auto& inst : instances)
    if (wanted.count(inst.doc_id)) out.push_back(inst);
  return out;
}

}  // namespace attnsup
