#include <filesystem>
#include <fstream>
#include <sstream>

#include "attnsup/cli.hpp"
#include "attnsup/corpus.hpp"
#include "attnsup/interpret.hpp"
#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using attnsup::cli::run;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("attnsup_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run_in(const fs::path& dir, std::vector<std::string> args) {
  args.insert(args.begin(), {"--quiet", "--out-dir", dir.string()});
  return run(args);
}

// gen-synthetic -> ingest -> train -> eval -> audit, all inside `dir`.
void pipeline(const fs::path& dir) {
  REQUIRE(run_in(dir, {"--seed", "3", "gen-synthetic", "--num-instances", "240"}) == 0);
  REQUIRE(run_in(dir, {"ingest", "--corpus", (dir / "corpus.jsonl").string(), "--folds", "2"}) == 0);
  const auto f0 = dir / "fold0";
  REQUIRE(run_in(dir, {"--seed", "5", "train", "--corpus", (f0 / "train.jsonl").string(), "--dev",
                       (f0 / "dev.jsonl").string(), "--preset", "compact", "--mode", "attn-trained", "--gamma", "0.5",
                       "--max-epochs", "2"}) == 0);
  REQUIRE(run_in(dir, {"eval", "--checkpoint", (dir / "model.ckpt").string(), "--corpus",
                       (f0 / "test.jsonl").string()}) == 0);
  REQUIRE(run_in(dir, {"audit", "--checkpoint", (dir / "model.ckpt").string(), "--corpus",
                       (f0 / "test.jsonl").string(), "--fold", "0"}) == 0);
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  const auto dir = fresh_dir("usage");
  CHECK(run_in(dir, {"no-such-command"}) == 1);
  CHECK(run_in(dir, {"train"}) == 1);  // missing required options
  CHECK(run_in(dir, {"eval", "--checkpoint", (dir / "missing.ckpt").string(), "--corpus", "x"}) == 1);
  CHECK(run_in(dir, {"gen-synthetic", "--preset", "odd"}) == 1);
  CHECK(run_in(dir, {"train", "--corpus", "a", "--dev", "b", "--mode", "fancy"}) == 1);
}

TEST_CASE("bad data and config exit with 2") {
  const auto dir = fresh_dir("data");
  {
    std::ofstream out(dir / "bad.jsonl");
    out << "{\"tokens\": [\"a\"]}\n";
  }
  CHECK(run_in(dir, {"ingest", "--corpus", (dir / "bad.jsonl").string()}) == 2);
  {
    std::ofstream out(dir / "config.json");
    out << R"({"learning_rate": 0.5, "not_a_field": 1})";
  }
  REQUIRE(run_in(dir, {"gen-synthetic", "--num-instances", "40"}) == 0);
  const auto corpus = (dir / "corpus.jsonl").string();
  CHECK(run_in(dir, {"train", "--corpus", corpus, "--dev", corpus, "--config", (dir / "config.json").string()}) == 2);
  {
    std::ofstream out(dir / "judgments.jsonl");
    out << R"({"instance_id":"y","a_sensible":false,"b_sensible":true,"preferred":"a"})" << "\n";
  }
  CHECK(run_in(dir, {"judge-report"}) == 2);
}

TEST_CASE("divergent training exits with 3") {
  const auto dir = fresh_dir("diverge");
  REQUIRE(run_in(dir, {"gen-synthetic", "--num-instances", "60"}) == 0);
  {
    std::ofstream out(dir / "config.json");
    out << R"({"learning_rate": 1e308})";
  }
  const auto corpus = (dir / "corpus.jsonl").string();
  CHECK(run_in(dir, {"train", "--corpus", corpus, "--dev", corpus, "--preset", "compact", "--max-epochs", "2",
                     "--config", (dir / "config.json").string()}) == 3);
}

TEST_CASE("full pipeline writes every artifact and reruns byte-identically") {
  const auto one = fresh_dir("pipe1");
  const auto two = fresh_dir("pipe2");
  pipeline(one);
  pipeline(two);
  for (const char* name : {"corpus.jsonl", "synthetic_config.json", "folds.json", "heldout.jsonl", "fold0/train.jsonl",
                           "fold1/test.jsonl", "model.ckpt", "train_config.json", "eval.json",
                           "audit.jsonl", "audit_summary.json"}) {
    INFO(name);
    REQUIRE(fs::exists(one / name));
    CHECK(slurp(one / name) == slurp(two / name));
  }
  // The report names its own checkpoint path; everything else must agree.
  auto report_one = nlohmann::json::parse(slurp(one / "train_report.json"));
  auto report_two = nlohmann::json::parse(slurp(two / "train_report.json"));
  CHECK(report_one["checkpoint_path"] == (one / "model.ckpt").string());
  report_one.erase("checkpoint_path");
  report_two.erase("checkpoint_path");
  CHECK(report_one.dump() == report_two.dump());
  const auto eval = nlohmann::json::parse(slurp(one / "eval.json"));
  CHECK(eval.contains("f_score"));
  const auto summary = nlohmann::json::parse(slurp(one / "audit_summary.json"));
  CHECK(summary.is_object());

  // Every audit line parses back into a record.
  std::ifstream audit(one / "audit.jsonl");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(audit, line)) {
    CHECK_NOTHROW(attnsup::audit_record_from_json(nlohmann::json::parse(line)));
    ++lines;
  }
  CHECK(lines > 0);

  const auto folds = nlohmann::json::parse(slurp(one / "folds.json"));
  CHECK(folds["folds"].size() == 2);
  CHECK(!folds["heldout"].empty());
}

TEST_CASE("judge-report aggregates a judgments file") {
  const auto dir = fresh_dir("report");
  {
    std::ofstream out(dir / "judgments.jsonl");
    out << R"({"instance_id":"1","a_sensible":true,"b_sensible":true,"preferred":"a"})" << "\n";
    out << R"({"instance_id":"2","a_sensible":true,"b_sensible":false})" << "\n";
    out << R"({"instance_id":"3","a_sensible":true,"b_sensible":true,"preferred":"draw"})" << "\n";
  }
  REQUIRE(run_in(dir, {"judge-report"}) == 0);
  const auto j = nlohmann::json::parse(slurp(dir / "judgment_report.json"));
  CHECK(j["a_better"] == 2);
  CHECK(j["draws"] == 1);
  CHECK(j["p_value"].get<double>() == doctest::Approx(0.5));
}
