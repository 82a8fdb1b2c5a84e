#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "attnsup/evalstats.hpp"
#include "attnsup/interpret.hpp"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace attnsup {

struct JudgeTask {
  std::string id;
  const AttentionAuditRecord* a = nullptr;
  const AttentionAuditRecord* b = nullptr;
  bool left_is_a = true;
};

struct JudgeOptions {
  std::size_t per_fold = 40;
  double min_confidence = 0.5;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;  // judgments.jsonl, assignments.json, rationales.jsonl
};

// Blinded pairwise-judgment store behind the HTTP endpoints. Tasks are
// instances both systems predicted correctly above the confidence bar,
// sampled per fold; the left/right side of each system is randomized and
// kept server-side.
class JudgeSession {
 public:
  JudgeSession(std::vector<AttentionAuditRecord> system_a, std::vector<AttentionAuditRecord> system_b,
               JudgeOptions options);

  std::size_t task_count() const { return tasks_.size(); }
  // Pending (unjudged) tasks in client form, at most `limit`.
  nlohmann::json tasks(std::size_t limit) const;
  // Returns (http status, response body).
  std::pair<int, nlohmann::json> submit(const nlohmann::json& body);
  std::pair<int, nlohmann::json> submit_rationale(const nlohmann::json& body);
  nlohmann::json report() const;
  nlohmann::json assignments() const;
  std::vector<JudgmentRecord> judgments() const;

  void bind(httplib::Server& server);

 private:
  std::vector<AttentionAuditRecord> a_records_;
  std::vector<AttentionAuditRecord> b_records_;
  JudgeOptions options_;
  std::vector<JudgeTask> tasks_;
  std::map<std::string, std::size_t> task_index_;

  mutable std::mutex mutex_;
  std::vector<JudgmentRecord> judgments_;
  std::set<std::string> judged_tasks_;
  std::map<std::string, nlohmann::json> idempotent_replies_;
};

nlohmann::json task_payload(const JudgeTask& task);
std::vector<AttentionAuditRecord> load_audit_dump(const std::filesystem::path& path);

// Blocks until the server stops.
void serve_judging(JudgeSession& session, const std::string& host, int port);

}  // namespace attnsup
