#include "attnsup/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "attnsup/corpus.hpp"
#include "attnsup/errors.hpp"
#include "attnsup/evalstats.hpp"
#include "attnsup/interpret.hpp"
#include "attnsup/judge_server.hpp"
#include "attnsup/model.hpp"
#include "attnsup/training.hpp"

namespace attnsup::cli {

namespace fs = std::filesystem;

namespace {

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

std::vector<double> parse_doubles(const std::string& list) {
  std::vector<double> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw CLI::ValidationError("bad number '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError("empty list");
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& list) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos)
      throw CLI::ValidationError("bad seed '" + item + "'");
    out.push_back(std::stoull(item));
  }
  if (out.empty()) throw CLI::ValidationError("empty seed list");
  return out;
}

// Options shared by the commands that train models.
struct TrainFlags {
  std::string config_path;
  std::string mode;
  std::optional<double> gamma;
  std::optional<std::size_t> max_epochs;
  std::string preset = "full";
  std::string labels;
  std::string vocab_path;

  void add(CLI::App* app, bool with_mode) {
    app->add_option("--config", config_path, "training config JSON")->check(CLI::ExistingFile);
    if (with_mode)
      app->add_option("--mode", mode, "baseline | attn-trained | pred-rationales")
          ->check(CLI::IsMember({"baseline", "attn-trained", "pred-rationales"}));
    app->add_option("--gamma", gamma, "fraction of rationales used (attn-trained)");
    app->add_option("--max-epochs", max_epochs);
    app->add_option("--preset", preset, "model dimensions before the config file is applied")
        ->check(CLI::IsMember({"full", "compact"}));
    app->add_option("--labels", labels, "comma-separated label set; inferred from the training data if absent");
    app->add_option("--vocab", vocab_path, "vocabulary file: token followed by optional embedding values")
        ->check(CLI::ExistingFile);
  }

  TrainConfig build(std::uint64_t seed) const {
    TrainConfig base;
    if (preset == "compact") base.model = ModelConfig::compact();
    TrainConfig c = config_path.empty() ? base : train_config_from_json(read_json(config_path), base);
    if (!mode.empty()) c.mode = parse_train_mode(mode);
    if (gamma) c.gamma = *gamma;
    if (max_epochs) c.max_epochs = *max_epochs;
    c.seed = seed;
    c.validate();
    return c;
  }

  TrainOptions options(std::ostream* log) const {
    TrainOptions o;
    o.log = log;
    if (!labels.empty()) o.labels = LabelSet::parse(labels);
    if (!vocab_path.empty()) {
      auto file = load_vocabulary(vocab_path);
      o.vocabulary = std::move(file.vocabulary);
      o.embeddings = std::move(file.embeddings);
    }
    return o;
  }
};

int dispatch(CLI::App& app, const std::vector<std::string>& args) {
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  bool quiet = false;
  app.add_option("--seed", seed, "seed for every random choice")->capture_default_str();
  app.add_option("--out-dir", out_dir, "directory receiving all outputs")->capture_default_str();
  app.add_flag("--quiet", quiet, "suppress progress messages");
  app.fallthrough();

  // gen-synthetic
  auto* gen = app.add_subcommand("gen-synthetic", "write a synthetic corpus with planted cue rationales");
  std::string syn_config;
  std::string syn_preset = "default";
  std::optional<std::size_t> syn_instances;
  std::optional<std::size_t> syn_generated;
  gen->add_option("--config", syn_config, "synthetic generator config JSON")->check(CLI::ExistingFile);
  gen->add_option("--preset", syn_preset, "base generator settings, overridden by --config")
      ->check(CLI::IsMember({"default", "lexical"}))
      ->capture_default_str();
  gen->add_option("--num-instances", syn_instances);
  gen->add_option("--generated-cues", syn_generated, "extra generated cue words per label");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "validate a corpus, balance null pairs and write fold files");
  std::string ingest_corpus;
  std::string ingest_labels;
  double ratio = 1.0;
  std::size_t fold_count = 5;
  ingest->add_option("--corpus", ingest_corpus)->required()->check(CLI::ExistingFile);
  ingest->add_option("--labels", ingest_labels, "comma-separated label set");
  ingest->add_option("--ratio", ratio, "kept null pairs per non-null pair; 0 keeps all")->capture_default_str();
  ingest->add_option("--folds", fold_count)->capture_default_str();

  // train
  auto* train_cmd = app.add_subcommand("train", "train one model and write a checkpoint");
  TrainFlags train_flags;
  std::string train_corpus;
  std::string dev_corpus;
  train_flags.add(train_cmd, true);
  train_cmd->add_option("--corpus", train_corpus)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--dev", dev_corpus)->required()->check(CLI::ExistingFile);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a corpus");
  std::string eval_ckpt;
  std::string eval_corpus;
  eval_cmd->add_option("--checkpoint", eval_ckpt)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--corpus", eval_corpus)->required()->check(CLI::ExistingFile);

  // audit
  auto* audit_cmd = app.add_subcommand("audit", "faithfulness and plausibility of a checkpoint's attention");
  std::string audit_ckpt;
  std::string audit_corpus;
  std::optional<int> audit_fold;
  audit_cmd->add_option("--checkpoint", audit_ckpt)->required()->check(CLI::ExistingFile);
  audit_cmd->add_option("--corpus", audit_corpus)->required()->check(CLI::ExistingFile);
  audit_cmd->add_option("--fold", audit_fold, "fold number stored with each record");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "train over rationale fractions and seeds");
  TrainFlags sweep_flags;
  std::string gammas_arg = "0,0.1,0.5,1";
  std::string seeds_arg = "1,2,3";
  std::string sweep_corpus;
  std::size_t sweep_fold = 0;
  sweep_flags.add(sweep_cmd, false);
  sweep_cmd->add_option("--gammas", gammas_arg, "0 trains without attention supervision")->capture_default_str();
  sweep_cmd->add_option("--seeds", seeds_arg)->capture_default_str();
  sweep_cmd->add_option("--corpus", sweep_corpus, "corpus to fold; a lexical synthetic corpus is generated if absent")
      ->check(CLI::ExistingFile);
  sweep_cmd->add_option("--fold", sweep_fold)->capture_default_str();

  // judge-serve
  auto* serve_cmd = app.add_subcommand("judge-serve", "serve blinded pairwise attention judgments over HTTP");
  std::string serve_a;
  std::string serve_b;
  std::string host = "127.0.0.1";
  int port = 8080;
  JudgeOptions judge_options;
  serve_cmd->add_option("--a", serve_a, "audit JSONL of the first system")->required()->check(CLI::ExistingFile);
  serve_cmd->add_option("--b", serve_b, "audit JSONL of the second system")->required()->check(CLI::ExistingFile);
  serve_cmd->add_option("--host", host)->capture_default_str();
  serve_cmd->add_option("--port", port)->capture_default_str()->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--per-fold", judge_options.per_fold)->capture_default_str();
  serve_cmd->add_option("--min-confidence", judge_options.min_confidence)->capture_default_str();

  // judge-report
  auto* report_cmd = app.add_subcommand("judge-report", "aggregate stored judgments");
  std::string judgments_path;
  report_cmd->add_option("--judgments", judgments_path, "judgments JSONL; defaults to <out-dir>/judgments.jsonl");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  app.parse(reversed);

  std::ostream* log = quiet ? nullptr : &std::cerr;
  const fs::path out(out_dir);
  fs::create_directories(out);

  if (gen->parsed()) {
    SyntheticConfig config = syn_preset == "lexical" ? SyntheticConfig::lexical() : SyntheticConfig::defaults();
    if (!syn_config.empty()) config = synthetic_config_from_json(read_json(syn_config));
    if (syn_instances) config.num_instances = *syn_instances;
    if (syn_generated) config.generated_cues = *syn_generated;
    config.validate();
    auto corpus = generate_synthetic(config, seed);
    save_corpus(out / "corpus.jsonl", corpus);
    write_json(out / "synthetic_config.json", to_json(config));
    if (log) *log << "wrote " << corpus.size() << " instances to " << (out / "corpus.jsonl").string() << '\n';
    return kOk;
  }

  if (ingest->parsed()) {
    std::optional<LabelSet> labels;
    if (!ingest_labels.empty()) labels = LabelSet::parse(ingest_labels);
    auto corpus = load_corpus(ingest_corpus, labels ? &*labels : nullptr);
    if (ratio < 0) throw CLI::ValidationError("--ratio must be non-negative");
    if (ratio > 0) corpus = undersample(corpus, ratio, seed);
    const auto plan = make_folds(document_ids(corpus), seed, fold_count);
    write_json(out / "folds.json", to_json(plan));
    save_corpus(out / "heldout.jsonl", select_documents(corpus, plan.heldout));
    for (std::size_t k = 0; k < plan.folds.size(); ++k) {
      const fs::path dir = out / ("fold" + std::to_string(k));
      fs::create_directories(dir);
      save_corpus(dir / "train.jsonl", select_documents(corpus, plan.folds[k].train));
      save_corpus(dir / "dev.jsonl", select_documents(corpus, plan.folds[k].dev));
      save_corpus(dir / "test.jsonl", select_documents(corpus, plan.folds[k].test));
    }
    if (log) *log << "ingested " << corpus.size() << " instances into " << plan.folds.size() << " folds\n";
    return kOk;
  }

  if (train_cmd->parsed()) {
    const TrainConfig config = train_flags.build(seed);
    TrainOptions options = train_flags.options(log);
    const LabelSet* labels = options.labels ? &*options.labels : nullptr;
    auto train_set = load_corpus(train_corpus, labels);
    auto dev_set = load_corpus(dev_corpus, labels);
    options.checkpoint_path = out / "model.ckpt";
    auto result = train(train_set, dev_set, config, options);
    write_json(out / "train_report.json", to_json(result.report));
    write_json(out / "train_config.json", to_json(config));
    return kOk;
  }

  if (eval_cmd->parsed()) {
    auto ckpt = load_checkpoint(eval_ckpt);
    auto corpus = load_corpus(eval_corpus, &ckpt.params.labels());
    const auto summary = evaluate_corpus(ckpt.params, corpus);
    auto j = to_json(summary);
    write_json(out / "eval.json", j);
    std::cout << j.dump(2) << '\n';
    return kOk;
  }

  if (audit_cmd->parsed()) {
    auto ckpt = load_checkpoint(audit_ckpt);
    auto corpus = load_corpus(audit_corpus, &ckpt.params.labels());
    const auto result = audit(ckpt.params, corpus, audit_fold);
    std::string lines;
    for (const auto& r : result.records) lines += to_json(r).dump() + "\n";
    write_text(out / "audit.jsonl", lines);
    const auto summary = to_json(result.summary);
    write_json(out / "audit_summary.json", summary);
    std::cout << summary.dump(2) << '\n';
    return kOk;
  }

  if (sweep_cmd->parsed()) {
    const auto gammas = parse_doubles(gammas_arg);
    const auto seeds = parse_seeds(seeds_arg);
    TrainConfig base = sweep_flags.build(seed);
    TrainOptions options = sweep_flags.options(log);
    std::vector<RelationInstance> corpus;
    if (sweep_corpus.empty()) {
      corpus = generate_synthetic(SyntheticConfig::lexical(), seed);
    } else {
      corpus = load_corpus(sweep_corpus, options.labels ? &*options.labels : nullptr);
    }
    const auto plan = make_folds(document_ids(corpus), seed);
    if (sweep_fold >= plan.folds.size()) throw CLI::ValidationError("--fold out of range");
    const auto& split = plan.folds[sweep_fold];
    SweepData data{select_documents(corpus, split.train), select_documents(corpus, split.dev),
                   select_documents(corpus, split.test)};
    const auto table = rationale_sweep(data, gammas, seeds, base, options);
    const std::string csv = sweep_csv(table);
    write_text(out / "sweep.csv", csv);
    write_json(out / "sweep.json", to_json(table));
    std::cout << csv;
    for (const auto& cell : table.cells)
      if (cell.error) return kDataError;
    return kOk;
  }

  if (serve_cmd->parsed()) {
    judge_options.seed = seed;
    judge_options.out_dir = out;
    JudgeSession session(load_audit_dump(serve_a), load_audit_dump(serve_b), judge_options);
    if (log) *log << "serving " << session.task_count() << " tasks on http://" << host << ':' << port << '\n';
    serve_judging(session, host, port);
    return kOk;
  }

  if (report_cmd->parsed()) {
    const fs::path path = judgments_path.empty() ? out / "judgments.jsonl" : fs::path(judgments_path);
    const auto records = load_judgments(path);
    const auto j = to_json(aggregate_judgments(records));
    write_json(out / "judgment_report.json", j);
    std::cout << j.dump(2) << '\n';
    return kOk;
  }
  return kUsage;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Attention supervision toolkit for relation classification", "attnsup"};
  try {
    return dispatch(app, args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace attnsup::cli
