#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <tuple>

#include "attnsup/errors.hpp"
#include "attnsup/evalstats.hpp"

namespace attnsup {

namespace {

std::pair<double, double> mean_sd(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

}  // namespace

std::vector<SweepRow> summarize_sweep(std::span<const SweepCell> cells, std::span<const double> gammas) {
  std::vector<SweepRow> rows;
  for (double gamma : gammas) {
    std::vector<double> metric, attn;
    for (const auto& c : cells) {
      if (c.gamma == gamma && !c.error) {
        metric.push_back(c.metric);
        attn.push_back(c.attn_loss);
      }
    }
    SweepRow row;
    row.gamma = gamma;
    row.runs = metric.size();
    std::tie(row.metric_mean, row.metric_sd) = mean_sd(metric);
    std::tie(row.attn_loss_mean, row.attn_loss_sd) = mean_sd(attn);
    rows.push_back(row);
  }
  return rows;
}

SweepTable rationale_sweep(const SweepData& data, std::span<const double> gammas, std::span<const std::uint64_t> seeds,
                           const TrainConfig& base, const TrainOptions& options, const SweepInspector& inspect) {
  if (gammas.empty() || seeds.empty()) throw ConfigError("sweep needs at least one gamma and one seed");
  for (double g : gammas)
    if (!(g >= 0.0 && g <= 1.0)) throw ConfigError("sweep gamma outside [0, 1]");
  if (data.test.empty()) throw ConfigError("sweep test set is empty");
  SweepTable table;
  for (double gamma : gammas) {
    for (std::uint64_t seed : seeds) {
      SweepCell cell;
      cell.gamma = gamma;
      cell.seed = seed;
      TrainConfig config = base;
      config.seed = seed;
      if (gamma == 0.0) {
        config.mode = TrainMode::baseline;
      } else {
        config.mode = TrainMode::attn_trained;
        config.gamma = gamma;
      }
      TrainOptions opts = options;
      opts.checkpoint_path.clear();
      try {
        TrainResult result = train(data.train, data.dev, config, opts);
        cell.metric = evaluate_corpus(result.params, data.test).primary();
        cell.attn_loss = mean_attention_loss(result.params, data.test);
        if (inspect) inspect(cell, result.params);
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
      if (options.log) {
        *options.log << "sweep gamma " << gamma << " seed " << seed;
        if (cell.error) {
          *options.log << " failed: " << *cell.error << '\n';
        } else {
          *options.log << " metric " << cell.metric << " attn_loss " << cell.attn_loss << '\n';
        }
      }
      table.cells.push_back(std::move(cell));
    }
  }
  table.rows = summarize_sweep(table.cells, gammas);
  return table;
}

std::string sweep_csv(const SweepTable& table) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "gamma,seed,metric,attn_loss\n";
  for (const auto& c : table.cells) {
    out << c.gamma << ',' << c.seed << ',';
    if (c.error) {
      out << ",\n";
    } else {
      out << c.metric << ',' << c.attn_loss << '\n';
    }
  }
  return out.str();
}

nlohmann::json to_json(const SweepTable& table) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : table.cells) {
    cells.push_back({{"gamma", c.gamma},
                     {"seed", c.seed},
                     {"metric", c.metric},
                     {"attn_loss", c.attn_loss},
                     {"error", c.error ? nlohmann::json(*c.error) : nlohmann::json(nullptr)}});
  }
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : table.rows) {
    rows.push_back({{"gamma", r.gamma},
                    {"runs", r.runs},
                    {"metric_mean", r.metric_mean},
                    {"metric_sd", r.metric_sd},
                    {"attn_loss_mean", r.attn_loss_mean},
                    {"attn_loss_sd", r.attn_loss_sd}});
  }
  return {{"cells", cells}, {"summary", rows}};
}

}  // namespace attnsup
