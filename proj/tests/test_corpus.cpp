#include <filesystem>
#include <fstream>
#include <set>

#include "attnsup/corpus.hpp"
#include "attnsup/errors.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace attnsup;

namespace {

const char* kCollaborator =
    R"({"doc_id":"d1","tokens":["I","respect","my","collaborator"],"pos_ids":[1,2,3,4],"senti_ids":[0,1,0,0],)"
    R"("source":[0,1],"target":[2,4],"rationale":[1,2],"label":"positive"})";

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
  auto path = std::filesystem::temp_directory_path() / ("attnsup_test_" + name);
  std::ofstream(path) << content;
  return path;
}

}  // namespace

TEST_CASE("load_corpus reads the collaborator example") {
  auto corpus = parse_corpus(std::string(kCollaborator) + "\n");
  REQUIRE(corpus.size() == 1);
  const auto& inst = corpus[0];
  CHECK(inst.source == Span{0, 1});
  CHECK(inst.target == Span{2, 4});
  CHECK(inst.rationale == Span{1, 2});
  CHECK(inst.label == "positive");
  CHECK(inst.tokens.size() == 4);
}

TEST_CASE("load_corpus on an empty file gives an empty list") {
  CHECK(load_corpus(temp_file("empty.jsonl", "")).empty());
}

TEST_CASE("ingestion errors name the offending line") {
  const std::string bad =
      R"({"doc_id":"d","tokens":["a","b","c","d"],"source":[0,1],"target":[1,2],"rationale":[5,9],"label":"positive"})";
  try {
    parse_corpus(std::string(kCollaborator) + "\n" + bad + "\n");
    FAIL("expected an ingestion error");
  } catch (const IngestionError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  const std::string mismatch =
      R"({"doc_id":"d","tokens":["a","b"],"pos_ids":[1],"source":[0,1],"target":[1,2],"rationale":null,"label":"none"})";
  CHECK_THROWS_AS(parse_corpus(mismatch), IngestionError);
  LabelSet labels({"positive", "none"});
  const std::string unknown =
      R"({"doc_id":"d","tokens":["a","b","c"],"source":[0,1],"target":[1,2],"rationale":[2,3],"label":"angry"})";
  CHECK_THROWS_AS(parse_corpus(unknown, &labels), IngestionError);
  CHECK_THROWS_AS(parse_corpus("{not json"), IngestionError);
}

TEST_CASE("omitted tag ids become zeros") {
  auto c = parse_corpus(
      R"({"doc_id":"d","tokens":["a","b","c"],"source":[0,1],"target":[1,2],"rationale":null,"label":"none"})");
  CHECK(c[0].pos_ids == std::vector<int>{0, 0, 0});
  CHECK(c[0].senti_ids == std::vector<int>{0, 0, 0});
}

TEST_CASE("ingestion round-trips") {
  auto corpus = generate_synthetic(SyntheticConfig::defaults(), 5);
  auto path = std::filesystem::temp_directory_path() / "attnsup_test_roundtrip.jsonl";
  save_corpus(path, corpus);
  CHECK(load_corpus(path) == corpus);
}

TEST_CASE("generate_pairs") {
  Sentence s{"d", {"a", "b", "c", "d"}, {0, 0, 0, 0}, {0, 0, 0, 0}};
  std::vector<Span> three{{0, 1}, {1, 2}, {3, 4}};
  std::vector<AnnotatedRelation> one{{0, 2, "positive", Span{2, 3}}};
  auto pairs = generate_pairs(three, one, s);
  CHECK(pairs.size() == 6);
  CHECK(std::count_if(pairs.begin(), pairs.end(), [](const auto& p) { return p.is_null(); }) == 5);

  std::vector<Span> single{{0, 1}};
  CHECK(generate_pairs(single, {}, s).empty());

  std::vector<Span> two{{0, 1}, {3, 4}};
  std::vector<AnnotatedRelation> both{{0, 1, "positive", Span{1, 2}}, {1, 0, "negative", Span{2, 3}}};
  auto directed = generate_pairs(two, both, s);
  CHECK(directed.size() == 2);
  CHECK(std::none_of(directed.begin(), directed.end(), [](const auto& p) { return p.is_null(); }));

  for (std::size_t n = 2; n <= 5; ++n) {
    std::vector<Span> ents;
    for (std::size_t i = 0; i < n; ++i) ents.push_back({i, i + 1});
    Sentence wide{"d", std::vector<std::string>(n, "x"), std::vector<int>(n, 0), std::vector<int>(n, 0)};
    CHECK(generate_pairs(ents, {}, wide).size() == n * (n - 1));
  }
}

TEST_CASE("undersample") {
  std::vector<RelationInstance> items;
  for (int i = 0; i < 110; ++i) {
    RelationInstance r;
    r.id = static_cast<std::size_t>(i);
    r.label = i < 10 ? "positive" : kNullLabel;
    items.push_back(r);
  }
  auto kept = undersample(items, 1.0, 4);
  CHECK(kept.size() == 20);
  CHECK(std::count_if(kept.begin(), kept.end(), [](const auto& r) { return !r.is_null(); }) == 10);
  CHECK(undersample(items, 1.0, 4) == kept);

  std::vector<RelationInstance> no_null(items.begin(), items.begin() + 10);
  CHECK(undersample(no_null, 1.0, 9) == no_null);
}

TEST_CASE("ground_truth_attention examples") {
  RelationInstance r;
  r.tokens = {"a", "b", "c", "d"};
  r.label = kNullLabel;
  CHECK(ground_truth_attention(r) == std::vector<double>{0.25, 0.25, 0.25, 0.25});
  r.label = "positive";
  r.rationale = Span{1, 3};
  CHECK(ground_truth_attention(r) == std::vector<double>{0, 0.5, 0.5, 0});
  r.rationale = Span{1, 2};
  CHECK(ground_truth_attention(r) == std::vector<double>{0, 1, 0, 0});
  r.rationale.reset();
  CHECK_THROWS_AS(ground_truth_attention(r), ContractError);
}

TEST_CASE("ground_truth_attention matches the case oracle on every small span") {
  for (std::size_t n = 1; n <= 6; ++n) {
    RelationInstance r;
    r.tokens.assign(n, "x");
    r.label = kNullLabel;
    CHECK(ground_truth_attention(r) == oracle::truth(n, true, {}));
    r.label = "positive";
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t e = s + 1; e <= n; ++e) {
        r.rationale = Span{s, e};
        const auto a = ground_truth_attention(r);
        CHECK(a == oracle::truth(n, false, {s, e}));
        double total = 0.0;
        for (double x : a) total += x;
        CHECK(std::abs(total - 1.0) <= 1e-12);
      }
    }
  }
}

TEST_CASE("make_folds") {
  std::vector<std::string> docs;
  for (int i = 0; i < 100; ++i) docs.push_back("doc" + std::to_string(i));
  auto plan = make_folds(docs, 7);
  CHECK(plan.heldout.size() == 10);
  REQUIRE(plan.folds.size() == 5);
  for (const auto& f : plan.folds) {
    CHECK(f.train.size() == 58);
    CHECK(f.dev.size() == 14);
    CHECK(f.test.size() == 18);
    std::set<std::string> all;
    for (const auto* part : {&f.train, &f.dev, &f.test})
      for (const auto& d : *part) CHECK(all.insert(d).second);  // disjoint
    std::set<std::string> pool(docs.begin(), docs.end());
    for (const auto& d : plan.heldout) pool.erase(d);
    CHECK(all == pool);
  }
  std::vector<std::string> ten(docs.begin(), docs.begin() + 10);
  CHECK(to_json(make_folds(ten, 3)) == to_json(make_folds(ten, 3)));
  std::vector<std::string> nine(docs.begin(), docs.begin() + 9);
  CHECK_THROWS_AS(make_folds(nine, 3), ConfigError);
}

TEST_CASE("draw_subsample_mask") {
  std::vector<RelationInstance> items;
  for (std::size_t i = 0; i < 2450; ++i) {
    RelationInstance r;
    r.id = i;
    r.label = "positive";
    items.push_back(r);
  }
  CHECK(draw_subsample_mask(items, 1.0, 1).member_ids.size() == 2450);
  CHECK(draw_subsample_mask(items, 0.04, 1).member_ids.size() == 98);
  CHECK(draw_subsample_mask(items, 0.3, 1).member_ids == draw_subsample_mask(items, 0.3, 1).member_ids);
  CHECK(draw_subsample_mask(items, 0.3, 1).member_ids != draw_subsample_mask(items, 0.3, 2).member_ids);
  CHECK_THROWS_AS(draw_subsample_mask(items, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(draw_subsample_mask(items, 1.5, 1), ConfigError);
}

TEST_CASE("synthetic corpus: planted cues, distractors, regeneration oracle") {
  auto config = SyntheticConfig::defaults();
  config.cues = {{"positive", {"good"}}, {"negative", {"bad"}}};
  auto corpus = generate_synthetic(config, 11);
  REQUIRE(!corpus.empty());
  std::size_t distracted = 0, sentences = 0;
  std::set<std::pair<std::string, std::vector<std::string>>> seen;
  for (const auto& inst : corpus) {
    if (inst.is_null()) {
      CHECK(!inst.rationale);
      continue;
    }
    REQUIRE(inst.rationale);
    // Independent checker: the label is recovered from the single cue lying
    // strictly between the two entities.
    const std::size_t lo = std::min(inst.source.end, inst.target.end);
    const std::size_t hi = std::max(inst.source.start, inst.target.start);
    std::vector<std::size_t> inside;
    for (std::size_t i = lo; i < hi; ++i)
      if (inst.tokens[i] == "good" || inst.tokens[i] == "bad") inside.push_back(i);
    REQUIRE(inside.size() == 1);
    CHECK(inst.rationale == Span{inside[0], inside[0] + 1});
    CHECK(inst.label == (inst.tokens[inside[0]] == "good" ? "positive" : "negative"));
    if (seen.insert({inst.doc_id, inst.tokens}).second) {
      ++sentences;
      const auto cues = std::count_if(inst.tokens.begin(), inst.tokens.end(),
                                      [](const auto& t) { return t == "good" || t == "bad"; });
      if (cues == 2) ++distracted;
    }
  }
  const double rate = static_cast<double>(distracted) / static_cast<double>(sentences);
  CHECK(rate == doctest::Approx(0.5).epsilon(0.1));
  CHECK(generate_synthetic(config, 11) == corpus);

  config.distractor_rate = 2.0;
  CHECK_THROWS_AS(generate_synthetic(config, 1), ConfigError);
}

TEST_CASE("generated cue lexicon") {
  SyntheticConfig config = SyntheticConfig::defaults();
  config.cues = {{"positive", {}}, {"negative", {}}};
  config.generated_cues = 3;
  auto lex = config.lexicon();
  CHECK(lex["positive"] == std::vector<std::string>{"positive#0", "positive#1", "positive#2"});
  config.tag_cues = false;
  auto corpus = generate_synthetic(config, 2);
  for (const auto& inst : corpus) {
    if (!inst.rationale) continue;
    CHECK(inst.tokens[inst.rationale->start].rfind(inst.label + "#", 0) == 0);
    CHECK(inst.senti_ids[inst.rationale->start] == 0);
  }
  CHECK(synthetic_config_from_json(to_json(config)).lexicon() == config.lexicon());
}

TEST_CASE("label sets and vocabularies") {
  auto corpus = parse_corpus(std::string(kCollaborator));
  auto labels = LabelSet::infer(corpus);
  CHECK(labels.names() == std::vector<std::string>{"positive"});
  auto parsed = LabelSet::parse("negative,none,positive");
  CHECK(parsed.null_index() == 1);
  auto vocab = Vocabulary::build(corpus);
  CHECK(vocab.token(0) == "<unk>");
  CHECK(vocab.id("respect") != Vocabulary::kUnk);
  CHECK(vocab.id("never-seen") == Vocabulary::kUnk);

  auto path = temp_file("vocab.txt", "good 0.5 0.25\nbad\n");
  auto file = load_vocabulary(path);
  CHECK(file.vocabulary.id("good") != Vocabulary::kUnk);
  CHECK(file.embeddings.at(file.vocabulary.id("good")) == std::vector<double>{0.5, 0.25});
  CHECK(file.embeddings.count(file.vocabulary.id("bad")) == 0);
}
