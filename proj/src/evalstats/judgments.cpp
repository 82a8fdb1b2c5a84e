#include <cmath>
#include <fstream>

#include "attnsup/errors.hpp"
#include "attnsup/evalstats.hpp"

namespace attnsup {

std::string to_string(Preference p) {
  switch (p) {
    case Preference::a: return "a";
    case Preference::b: return "b";
    case Preference::draw: return "draw";
  }
  return "draw";
}

Preference parse_preference(std::string_view s) {
  if (s == "a") return Preference::a;
  if (s == "b") return Preference::b;
  if (s == "draw") return Preference::draw;
  throw ContractError("unknown preference '" + std::string(s) + "'");
}

void validate(const JudgmentRecord& r) {
  if (r.instance_id.empty()) throw ContractError("judgment without instance id");
  if (r.strength < 0 || r.strength > 3) throw ContractError("strength must lie in 1..3 when given");
  if (!r.preferred) {
    if (r.a_sensible && r.b_sensible) throw ContractError("both systems sensible but no preference given");
    return;
  }
  switch (*r.preferred) {
    case Preference::draw:
      if (!(r.a_sensible && r.b_sensible)) throw ContractError("a draw requires both systems to be sensible");
      break;
    case Preference::a:
      if (!r.a_sensible) throw ContractError("preferred system a is not marked sensible");
      break;
    case Preference::b:
      if (!r.b_sensible) throw ContractError("preferred system b is not marked sensible");
      break;
  }
}

Preference verdict(const JudgmentRecord& r) {
  if (r.a_sensible && !r.b_sensible) return Preference::a;
  if (r.b_sensible && !r.a_sensible) return Preference::b;
  if (r.a_sensible && r.b_sensible && r.preferred) return *r.preferred;
  return Preference::draw;
}

nlohmann::json to_json(const JudgmentRecord& r) {
  return {{"instance_id", r.instance_id},
          {"a_sensible", r.a_sensible},
          {"b_sensible", r.b_sensible},
          {"preferred", r.preferred ? nlohmann::json(to_string(*r.preferred)) : nlohmann::json(nullptr)},
          {"strength", r.strength},
          {"annotator", r.annotator},
          {"timestamp", r.timestamp}};
}

JudgmentRecord judgment_from_json(const nlohmann::json& j) {
  try {
    JudgmentRecord r;
    r.instance_id = j.at("instance_id").get<std::string>();
    r.a_sensible = j.at("a_sensible").get<bool>();
    r.b_sensible = j.at("b_sensible").get<bool>();
    if (j.contains("preferred") && !j["preferred"].is_null()) r.preferred = parse_preference(j["preferred"].get<std::string>());
    r.strength = j.value("strength", 0);
    r.annotator = j.value("annotator", "");
    r.timestamp = j.value("timestamp", "");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("malformed judgment: ") + e.what());
  }
}

std::vector<JudgmentRecord> load_judgments(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open judgment store " + path.string());
  std::vector<JudgmentRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto record = judgment_from_json(nlohmann::json::parse(line));
      validate(record);
      out.push_back(std::move(record));
    } catch (const std::exception& e) {
      throw IngestionError(e.what(), line_no);
    }
  }
  return out;
}

double sign_test_p_value(std::size_t a_wins, std::size_t b_wins) {
  const std::size_t n = a_wins + b_wins;
  if (n == 0) throw ContractError("sign test needs at least one non-draw comparison");
  const std::size_t k = std::min(a_wins, b_wins);
  // Sum C(n, i) / 2^n in log space; stable for large n.
  const double log_half_n = static_cast<double>(n) * std::log(0.5);
  double tail = 0.0;
  for (std::size_t i = 0; i <= k; ++i) {
    const double log_c = std::lgamma(static_cast<double>(n) + 1) - std::lgamma(static_cast<double>(i) + 1) -
                         std::lgamma(static_cast<double>(n - i) + 1);
    tail += std::exp(log_c + log_half_n);
  }
  return std::min(1.0, 2.0 * tail);
}

PlausibilityReport aggregate_judgments(std::span<const JudgmentRecord> records) {
  PlausibilityReport r;
  r.total = records.size();
  for (const auto& rec : records) {
    r.a_sensible += rec.a_sensible;
    r.b_sensible += rec.b_sensible;
    switch (verdict(rec)) {
      case Preference::a: ++r.a_better; break;
      case Preference::b: ++r.b_better; break;
      case Preference::draw: ++r.draws; break;
    }
  }
  if (r.total) {
    const double n = static_cast<double>(r.total);
    r.a_sensible_rate = static_cast<double>(r.a_sensible) / n;
    r.b_sensible_rate = static_cast<double>(r.b_sensible) / n;
    r.a_better_rate = static_cast<double>(r.a_better) / n;
    r.b_better_rate = static_cast<double>(r.b_better) / n;
    r.draw_rate = static_cast<double>(r.draws) / n;
  }
  if (r.a_better + r.b_better > 0) r.p_value = sign_test_p_value(r.a_better, r.b_better);
  return r;
}

nlohmann::json to_json(const PlausibilityReport& r) {
  return {{"total", r.total},
          {"a_sensible", r.a_sensible},
          {"b_sensible", r.b_sensible},
          {"a_better", r.a_better},
          {"b_better", r.b_better},
          {"draws", r.draws},
          {"a_sensible_rate", r.a_sensible_rate},
          {"b_sensible_rate", r.b_sensible_rate},
          {"a_better_rate", r.a_better_rate},
          {"b_better_rate", r.b_better_rate},
          {"draw_rate", r.draw_rate},
          {"p_value", r.p_value ? nlohmann::json(*r.p_value) : nlohmann::json(nullptr)},
          {"p_value_undefined", !r.p_value.has_value()}};
}

}  // namespace attnsup
