#include "attnsup/judge_server.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "attnsup/errors.hpp"
#include "attnsup/rng.hpp"
#include "httplib.h"

namespace attnsup {

namespace fs = std::filesystem;

namespace {

std::string task_key(const AttentionAuditRecord& r) {
  return r.fold ? "f" + std::to_string(*r.fold) + "-" + std::to_string(r.instance_id)
                : std::to_string(r.instance_id);
}

bool servable(const AttentionAuditRecord& r, double min_confidence) {
  return r.correct && r.confidence > min_confidence;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

void append_line(const fs::path& path, const std::string& line) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw IngestionError("cannot append to " + path.string());
  out << line << '\n';
  out.flush();
}

nlohmann::json error_body(const std::string& message) { return {{"error", message}}; }

}  // namespace

JudgeSession::JudgeSession(std::vector<AttentionAuditRecord> system_a, std::vector<AttentionAuditRecord> system_b,
                           JudgeOptions options)
    : a_records_(std::move(system_a)), b_records_(std::move(system_b)), options_(std::move(options)) {
  std::map<std::string, const AttentionAuditRecord*> b_by_key;
  for (const auto& r : b_records_) b_by_key.emplace(task_key(r), &r);

  // Candidates grouped by fold; records without a fold form one group.
  std::map<int, std::vector<JudgeTask>> by_fold;
  for (const auto& a : a_records_) {
    const std::string key = task_key(a);
    auto it = b_by_key.find(key);
    if (it == b_by_key.end()) continue;
    const auto* b = it->second;
    if (a.tokens != b->tokens || a.source.start != b->source.start || a.source.end != b->source.end ||
        a.target.start != b->target.start || a.target.end != b->target.end)
      throw IngestionError("audit dumps disagree on instance " + key);
    if (!servable(a, options_.min_confidence) || !servable(*b, options_.min_confidence)) continue;
    by_fold[a.fold.value_or(-1)].push_back(JudgeTask{key, &a, b, true});
  }

  Rng rng(options_.seed);
  for (auto& [fold, candidates] : by_fold) {
    rng.shuffle(std::span(candidates));
    if (candidates.size() > options_.per_fold) candidates.resize(options_.per_fold);
    for (auto& task : candidates) {
      task.left_is_a = rng.bernoulli(0.5);
      task_index_[task.id] = tasks_.size();
      tasks_.push_back(task);
    }
  }

  if (!options_.out_dir.empty()) {
    fs::create_directories(options_.out_dir);
    std::ofstream out(options_.out_dir / "assignments.json", std::ios::binary);
    if (!out) throw IngestionError("cannot write assignments.json");
    out << assignments().dump(2) << '\n';
    const fs::path existing = options_.out_dir / "judgments.jsonl";
    if (fs::exists(existing)) {
      judgments_ = load_judgments(existing);
      for (const auto& j : judgments_) judged_tasks_.insert(j.instance_id);
    }
  }
}

nlohmann::json task_payload(const JudgeTask& task) {
  const auto& left = task.left_is_a ? *task.a : *task.b;
  const auto& right = task.left_is_a ? *task.b : *task.a;
  return {{"id", task.id},
          {"tokens", task.a->tokens},
          {"spans",
           {{"source", {task.a->source.start, task.a->source.end}},
            {"target", {task.a->target.start, task.a->target.end}}}},
          {"label", task.a->gold_label},
          {"attention_left", left.attention},
          {"attention_right", right.attention}};
}

nlohmann::json JudgeSession::tasks(std::size_t limit) const {
  std::lock_guard lock(mutex_);
  nlohmann::json out = nlohmann::json::array();
  for (const auto& task : tasks_) {
    if (out.size() >= limit) break;
    if (judged_tasks_.count(task.id)) continue;
    out.push_back(task_payload(task));
  }
  return out;
}

std::pair<int, nlohmann::json> JudgeSession::submit(const nlohmann::json& body) {
  if (!body.is_object()) return {400, error_body("judgment must be a JSON object")};
  std::string key;
  JudgmentRecord record;
  const JudgeTask* task = nullptr;
  try {
    if (body.contains("idempotency_key")) key = body.at("idempotency_key").get<std::string>();
    const std::string id = body.at("id").get<std::string>();
    auto it = task_index_.find(id);
    if (it == task_index_.end()) return {404, error_body("unknown task '" + id + "'")};
    task = &tasks_[it->second];
    const bool left = body.at("sensible_left").get<bool>();
    const bool right = body.at("sensible_right").get<bool>();
    record.instance_id = id;
    record.a_sensible = task->left_is_a ? left : right;
    record.b_sensible = task->left_is_a ? right : left;
    std::string side;
    if (body.contains("preferred") && !body["preferred"].is_null()) side = body["preferred"].get<std::string>();
    // Checked in the client's left/right terms so errors never name a system.
    if (side.empty() && left && right) return {400, error_body("both sides sensible but no preference given")};
    if (side == "draw" && !(left && right)) return {400, error_body("a draw requires both sides to be sensible")};
    if (side == "left" && !left) return {400, error_body("preferred left side is not marked sensible")};
    if (side == "right" && !right) return {400, error_body("preferred right side is not marked sensible")};
    if (!side.empty()) {
      if (side == "draw") {
        record.preferred = Preference::draw;
      } else if (side == "left" || side == "right") {
        const bool picks_a = (side == "left") == task->left_is_a;
        record.preferred = picks_a ? Preference::a : Preference::b;
      } else {
        return {400, error_body("preferred must be left, right or draw")};
      }
    }
    record.strength = body.value("strength", 0);
    record.annotator = body.value("annotator", std::string());
    validate(record);
  } catch (const nlohmann::json::exception& e) {
    return {400, error_body(std::string("malformed judgment: ") + e.what())};
  } catch (const ContractError& e) {
    std::string message = e.what();
    return {400, error_body(message)};
  }

  std::lock_guard lock(mutex_);
  if (!key.empty()) {
    auto seen = idempotent_replies_.find(key);
    if (seen != idempotent_replies_.end()) return {200, seen->second};
  }
  record.timestamp = utc_now();
  if (!options_.out_dir.empty()) append_line(options_.out_dir / "judgments.jsonl", to_json(record).dump());
  judgments_.push_back(record);
  judged_tasks_.insert(record.instance_id);
  nlohmann::json reply = {{"accepted", true}, {"id", record.instance_id}, {"count", judgments_.size()}};
  if (!key.empty()) idempotent_replies_[key] = reply;
  return {201, reply};
}

std::pair<int, nlohmann::json> JudgeSession::submit_rationale(const nlohmann::json& body) {
  if (!body.is_object()) return {400, error_body("rationale must be a JSON object")};
  nlohmann::json line;
  try {
    const std::string id = body.at("id").get<std::string>();
    auto it = task_index_.find(id);
    if (it == task_index_.end()) return {404, error_body("unknown task '" + id + "'")};
    const auto& rec = *tasks_[it->second].a;
    const auto span = body.at("rationale").get<std::vector<long>>();
    if (span.size() != 2 || span[0] < 0 || span[1] <= span[0] || static_cast<std::size_t>(span[1]) > rec.tokens.size())
      return {400, error_body("rationale must be one non-empty [start, end) span inside the sentence")};
    line = {{"id", id},
            {"instance_id", rec.instance_id},
            {"doc_id", rec.doc_id},
            {"rationale", span},
            {"annotator", body.value("annotator", std::string())}};
  } catch (const nlohmann::json::exception& e) {
    return {400, error_body(std::string("malformed rationale: ") + e.what())};
  }
  std::lock_guard lock(mutex_);
  if (!options_.out_dir.empty()) append_line(options_.out_dir / "rationales.jsonl", line.dump());
  return {201, {{"accepted", true}}};
}

nlohmann::json JudgeSession::report() const {
  std::lock_guard lock(mutex_);
  auto j = to_json(aggregate_judgments(judgments_));
  j["tasks"] = tasks_.size();
  j["pending"] = tasks_.size() - std::min(tasks_.size(), judged_tasks_.size());
  return j;
}

nlohmann::json JudgeSession::assignments() const {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& t : tasks_) {
    nlohmann::json entry = {{"left", t.left_is_a ? "a" : "b"},
                            {"right", t.left_is_a ? "b" : "a"},
                            {"instance_id", t.a->instance_id}};
    if (t.a->fold) entry["fold"] = *t.a->fold;
    out[t.id] = entry;
  }
  return out;
}

std::vector<JudgmentRecord> JudgeSession::judgments() const {
  std::lock_guard lock(mutex_);
  return judgments_;
}

void JudgeSession::bind(httplib::Server& server) {
  auto send = [](httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  };
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  server.Get("/api/tasks", [this, send](const httplib::Request& req, httplib::Response& res) {
    std::size_t limit = 10;
    if (req.has_param("limit")) {
      const std::string raw = req.get_param_value("limit");
      if (raw.empty() || raw.find_first_not_of("0123456789") != std::string::npos || raw.size() > 9)
        return send(res, 400, error_body("limit must be a non-negative integer"));
      limit = std::stoul(raw);
    }
    send(res, 200, tasks(limit));
  });
  server.Post("/api/judgments", [this, send](const httplib::Request& req, httplib::Response& res) {
    auto body = nlohmann::json::parse(req.body, nullptr, false);
    if (body.is_discarded()) return send(res, 400, error_body("body is not valid JSON"));
    if (auto key = req.get_header_value("Idempotency-Key"); !key.empty() && body.is_object())
      body["idempotency_key"] = key;
    auto [status, reply] = submit(body);
    send(res, status, reply);
  });
  server.Post("/api/rationales", [this, send](const httplib::Request& req, httplib::Response& res) {
    auto body = nlohmann::json::parse(req.body, nullptr, false);
    if (body.is_discarded()) return send(res, 400, error_body("body is not valid JSON"));
    auto [status, reply] = submit_rationale(body);
    send(res, status, reply);
  });
  server.Get("/api/report", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, 200, report());
  });
}

std::vector<AttentionAuditRecord> load_audit_dump(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.string());
  std::vector<AttentionAuditRecord> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(audit_record_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw IngestionError(path.string() + ": " + e.what(), number);
    }
  }
  return out;
}

void serve_judging(JudgeSession& session, const std::string& host, int port) {
  httplib::Server server;
  session.bind(server);
  if (!server.listen(host, port)) throw IngestionError("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace attnsup
