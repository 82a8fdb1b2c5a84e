// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Pass criterion names as arguments to run a subset.
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "attnsup/cli.hpp"
#include "attnsup/evalstats.hpp"
#include "attnsup/interpret.hpp"
#include "oracles.hpp"

using namespace attnsup;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int digits = 4) {
  std::ostringstream s;
  s << std::setprecision(digits) << x;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Analytic vs central-difference gradients of the full-size model, every
// parameter, all three training modes.
Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::string> words = {"alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta"};
  const std::vector<std::string> labels = {"negative", "positive", "none"};
  ModelConfig full;
  ModelParams params(full, Vocabulary(words), LabelSet(labels), 17);
  Rng rng(23);
  double worst = 0.0;
  std::string worst_at;
  std::size_t checked = 0;
  std::set<std::string> groups;
  for (auto mode : {TrainMode::baseline, TrainMode::attn_trained, TrainMode::pred_rationales}) {
    TrainConfig cfg;
    cfg.mode = mode;
    cfg.gamma = 0.5;
    cfg.lambda_r = 0.5;
    for (int trial = 0; trial < 20; ++trial) {
      auto inst = oracle::random_instance(rng, 5, labels, words, static_cast<int>(full.pos_vocab),
                                          static_cast<int>(full.senti_vocab));
      inst.id = static_cast<std::size_t>(trial);
      SubsampleMask mask{0.5, {inst.id}, 0};
      for (const auto& gc : oracle::check_gradients(params, inst, cfg, &mask, rng)) {
        groups.insert(gc.param);
        checked += gc.checked;
        if (gc.worst_rel > worst) {
          worst = gc.worst_rel;
          worst_at = to_string(mode) + "/" + gc.param;
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 120.0,
          std::to_string(groups.size()) + " parameter groups, " + std::to_string(checked) +
              " coordinates, worst relative error " + fmt(worst) + " at " + worst_at + ", " + fmt(secs, 3) + "s"};
}

// Attention vectors with weights k / 2^20: every partial sum is exact in
// double, so the oracle and the library must agree bit for bit.
std::vector<double> dyadic_attention(Rng& rng, std::size_t n) {
  constexpr std::uint64_t total = 1u << 20;
  const bool coarse = rng.bernoulli(0.4);  // coarse grids force ties
  std::vector<std::uint64_t> cuts{0, total};
  for (std::size_t k = 0; k + 1 < n; ++k)
    cuts.push_back(coarse ? (rng.below(17) << 16) : rng.below(total + 1));
  std::sort(cuts.begin(), cuts.end());
  std::vector<double> att;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k)
    att.push_back(static_cast<double>(cuts[k + 1] - cuts[k]) / static_cast<double>(total));
  return att;
}

Outcome metric_oracles() {
  Rng rng(101);
  std::size_t metric_mismatch = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const auto att = dyadic_attention(rng, 1 + rng.below(40));
    const std::size_t i = rng.below(att.size());
    const auto [probes, mass] = oracle::probes_and_mass(att, i);
    if (probes_needed(att, i) != probes || mass_needed(att, i) != mass) ++metric_mismatch;
  }
  std::size_t score_mismatch = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::string> names{"a", "b", "c", "d"};
    names.resize(1 + rng.below(4));
    if (rng.bernoulli(0.6)) names.push_back(std::string(kNullLabel));
    const LabelSet set(names);
    std::vector<std::pair<std::size_t, std::size_t>> pairs(rng.below(40));
    for (auto& [g, p] : pairs) {
      g = rng.below(set.size());
      p = rng.below(set.size());
    }
    if (!oracle::same_scores(score_predictions(pairs, set), oracle::score(pairs, set))) ++score_mismatch;
  }
  return {metric_mismatch == 0 && score_mismatch == 0,
          std::to_string(metric_mismatch) + "/10000 attention-metric mismatches, " + std::to_string(score_mismatch) +
              "/1000 scoring mismatches"};
}

Outcome ground_truth_and_unbiasedness() {
  std::size_t cases = 0, bad = 0;
  for (std::size_t n = 1; n <= 6; ++n) {
    RelationInstance r;
    r.tokens.assign(n, "x");
    r.label = kNullLabel;
    ++cases;
    if (ground_truth_attention(r) != oracle::truth(n, true, {})) ++bad;
    r.label = "positive";
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t e = s + 1; e <= n; ++e) {
        r.rationale = Span{s, e};
        const auto a = ground_truth_attention(r);
        double sum = 0.0;
        for (double x : a) sum += x;
        ++cases;
        if (a != oracle::truth(n, false, {s, e}) || std::abs(sum - 1.0) > 1e-12) ++bad;
      }
    }
  }

  Rng rng(77);
  std::vector<RelationInstance> items;
  std::vector<double> losses;
  double full = 0.0;
  for (std::size_t i = 0; i < 400; ++i) {
    RelationInstance r;
    r.id = i;
    r.label = i % 4 == 0 ? kNullLabel : "positive";
    items.push_back(r);
    losses.push_back(rng.uniform(0.0, 3.0));
    full += losses.back();
  }
  double worst_bias = 0.0;
  for (double gamma : {0.1, 0.25, 0.5, 1.0}) {
    double mean = 0.0;
    for (int m = 0; m < 1000; ++m) {
      const auto mask = draw_subsample_mask(items, gamma, static_cast<std::uint64_t>(m) + 1000);
      double total = 0.0;
      for (std::size_t i = 0; i < items.size(); ++i)
        total += loss_attn_subsampled(items[i].id, items[i].is_null(), losses[i], mask);
      mean += total / 1000.0;
    }
    worst_bias = std::max(worst_bias, std::abs(mean - full) / full);
  }
  return {bad == 0 && worst_bias < 0.02, std::to_string(cases) + " exhaustive cases, " + std::to_string(bad) +
                                             " wrong; worst relative bias over 1000 masks " + fmt(worst_bias)};
}

// Attention from freshly initialized models: what a system that has learned
// nothing about which token matters would show.
Outcome random_attention_mass() {
  const std::vector<std::string> words = {"w0", "w1", "w2", "w3", "w4", "w5", "w6", "w7", "w8", "w9"};
  const std::vector<std::string> labels = {"negative", "positive", "none"};
  const ModelConfig config = ModelConfig::compact();
  Rng rng(2024);
  double total = 0.0;
  std::size_t count = 0;
  for (std::uint64_t model = 0; model < 100; ++model) {
    ModelParams params(config, Vocabulary(words), LabelSet(labels), 500 + model);
    for (int k = 0; k < 100; ++k) {
      auto inst = oracle::random_instance(rng, 10 + rng.below(31), labels, words, static_cast<int>(config.pos_vocab),
                                          static_cast<int>(config.senti_vocab));
      Graph g;
      const auto fr = forward(g, params, encode(params, inst), {});
      total += mass_needed(fr.attention_weights, rng.below(inst.size()));
      ++count;
    }
  }
  const double mean = total / static_cast<double>(count);
  return {std::abs(mean - 0.5) <= 0.05, "mean mass-needed " + fmt(mean) + " over " + std::to_string(count) + " vectors"};
}

struct SweepOutcomes {
  Outcome direction;
  Outcome sweep;
};

// One sweep over rationale fractions; its gamma 0 (baseline) and gamma 1
// (fully supervised) models are also audited on the test split.
SweepOutcomes sweep_criteria() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto config = SyntheticConfig::lexical();
  const auto corpus = generate_synthetic(config, 42);
  const auto plan = make_folds(document_ids(corpus), 42);
  SweepData data{select_documents(corpus, plan.folds[0].train), select_documents(corpus, plan.folds[0].dev),
                 select_documents(corpus, plan.folds[0].test)};
  TrainConfig base;
  base.model = ModelConfig::compact();
  base.max_epochs = 30;
  base.patience = 5;
  const std::vector<double> gammas{0.0, 0.1, 0.5, 1.0};
  const std::vector<std::uint64_t> seeds{1, 2, 3};

  std::map<double, std::vector<AuditGroup>> audits;
  auto inspect = [&](const SweepCell& cell, const ModelParams& params) {
    std::cerr << "  gamma " << cell.gamma << " seed " << cell.seed << " metric " << fmt(cell.metric) << '\n';
    if (cell.gamma == 0.0 || cell.gamma == 1.0) audits[cell.gamma].push_back(audit(params, data.test).summary.all);
  };
  const auto table = rationale_sweep(data, gammas, seeds, base, {}, inspect);
  const double secs = seconds_since(t0);

  SweepOutcomes out;
  std::size_t failed = 0;
  for (const auto& c : table.cells) failed += c.error ? 1 : 0;

  auto mean_of = [](const std::vector<AuditGroup>& groups, double AuditGroup::*field) {
    double s = 0.0;
    for (const auto& g : groups) s += g.*field;
    return groups.empty() ? std::nan("") : s / static_cast<double>(groups.size());
  };
  const double base_probes = mean_of(audits[0.0], &AuditGroup::plausibility_probes);
  const double attn_probes = mean_of(audits[1.0], &AuditGroup::plausibility_probes);
  const double base_mass = mean_of(audits[0.0], &AuditGroup::faithfulness_mass);
  const double attn_mass = mean_of(audits[1.0], &AuditGroup::faithfulness_mass);
  out.direction = {failed == 0 && audits[0.0].size() == 3 && audits[1.0].size() == 3 && attn_probes < base_probes &&
                       attn_mass < 0.5,
                   "plausibility probes baseline " + fmt(base_probes) + " vs attn-trained " + fmt(attn_probes) +
                       "; faithfulness mass baseline " + fmt(base_mass) + " vs attn-trained " + fmt(attn_mass)};

  std::vector<double> means;
  std::string listing;
  for (const auto& row : table.rows) {
    means.push_back(row.metric_mean);
    listing += (listing.empty() ? "" : ", ") + fmt(row.gamma, 2) + ":" + fmt(row.metric_mean);
  }
  bool nondecreasing = true;
  for (std::size_t k = 1; k < means.size(); ++k) nondecreasing = nondecreasing && means[k] >= means[k - 1];
  const double early = means[1] - means[0];
  const double late = means[3] - means[2];
  out.sweep = {failed == 0 && nondecreasing && early > late,
               "mean test metric by gamma {" + listing + "}; gain 0->0.1 " + fmt(early) + ", 0.5->1 " + fmt(late) +
                   "; " + std::to_string(failed) + " failed cells; " + fmt(secs, 4) + "s"};
  return out;
}

Outcome overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  auto config = SyntheticConfig::defaults();
  config.num_instances = 60;
  config.sentences_per_doc = 1;
  auto corpus = generate_synthetic(config, 11);
  corpus.resize(std::min<std::size_t>(corpus.size(), 50));
  TrainConfig cfg;
  cfg.mode = TrainMode::baseline;
  cfg.model = ModelConfig::compact();
  cfg.max_epochs = 200;
  cfg.patience = 200;
  cfg.seed = 1;
  // Model selection on the training set itself: the question is capacity.
  const auto run = train(corpus, corpus, cfg);
  std::size_t right = 0;
  for (const auto& inst : corpus)
    right += predict(run.params, inst).label == run.params.labels().index_of(inst.label) ? 1 : 0;
  const double acc = static_cast<double>(right) / static_cast<double>(corpus.size());
  const double secs = seconds_since(t0);
  return {corpus.size() == 50 && acc >= 0.98 && secs < 60.0,
          "train accuracy " + fmt(acc) + " on " + std::to_string(corpus.size()) + " instances, best epoch " +
              std::to_string(run.report.best_epoch) + ", " + fmt(secs, 3) + "s"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// The same commands twice, in separate directories.
Outcome determinism() {
  std::vector<std::string> differing;
  std::vector<fs::path> dirs;
  for (const char* name : {"attnsup_acceptance_det1", "attnsup_acceptance_det2"}) {
    const auto dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    dirs.push_back(dir);
    auto call = [&](std::vector<std::string> args) {
      args.insert(args.begin(), {"--quiet", "--seed", "7", "--out-dir", dir.string()});
      const int code = cli::run(args);
      if (code != 0) throw std::runtime_error("command failed with exit code " + std::to_string(code));
    };
    const auto f0 = dir / "fold0";
    call({"gen-synthetic", "--preset", "lexical", "--num-instances", "300"});
    call({"ingest", "--corpus", (dir / "corpus.jsonl").string(), "--folds", "2"});
    call({"train", "--corpus", (f0 / "train.jsonl").string(), "--dev", (f0 / "dev.jsonl").string(), "--preset",
          "compact", "--mode", "attn-trained", "--gamma", "0.5", "--max-epochs", "3"});
    call({"eval", "--checkpoint", (dir / "model.ckpt").string(), "--corpus", (f0 / "test.jsonl").string()});
    call({"audit", "--checkpoint", (dir / "model.ckpt").string(), "--corpus", (f0 / "test.jsonl").string()});
    call({"sweep", "--gammas", "0,0.5", "--seeds", "1,2", "--corpus", (dir / "corpus.jsonl").string(), "--preset",
          "compact", "--max-epochs", "2"});
  }
  const std::vector<std::string> files{"corpus.jsonl", "folds.json", "model.ckpt", "eval.json",
                                       "audit.jsonl", "audit_summary.json", "sweep.csv", "sweep.json"};
  for (const auto& f : files)
    if (slurp(dirs[0] / f) != slurp(dirs[1] / f) || slurp(dirs[0] / f).empty()) differing.push_back(f);
  std::string detail = std::to_string(files.size() - differing.size()) + "/" + std::to_string(files.size()) +
                       " output files byte-identical across repeated runs";
  for (const auto& f : differing) detail += "; differs: " + f;
  return {differing.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<std::string> only(argv + 1, argv + argc);
  auto wanted = [&](const std::string& name) { return only.empty() || only.count(name) > 0; };

  std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
      {"gradient-check", gradients},
      {"metric-oracles", metric_oracles},
      {"ground-truth-attention", ground_truth_and_unbiasedness},
      {"random-attention-mass", random_attention_mass},
      {"overfit", overfit},
      {"determinism", determinism},
  };
  int failures = 0;
  auto report = [&](const std::string& name, const Outcome& o) {
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    failures += o.pass ? 0 : 1;
  };
  for (const auto& [name, fn] : checks) {
    if (!wanted(name)) continue;
    try {
      report(name, fn());
    } catch (const std::exception& e) {
      report(name, {false, std::string("exception: ") + e.what()});
    }
  }
  if (wanted("supervision-direction") || wanted("rationale-sweep")) {
    try {
      const auto s = sweep_criteria();
      if (wanted("supervision-direction")) report("supervision-direction", s.direction);
      if (wanted("rationale-sweep")) report("rationale-sweep", s.sweep);
    } catch (const std::exception& e) {
      report("supervision-direction", {false, std::string("exception: ") + e.what()});
      report("rationale-sweep", {false, std::string("exception: ") + e.what()});
    }
  }
  std::cout << (failures == 0 ? "all acceptance criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
