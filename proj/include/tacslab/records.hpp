#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace tacslab {

// Evaluation metrics of one pass over the held-out split.
struct MetricsRecord {
  double accuracy = 0.0;
  double oracle_agreement = 0.0;
  double cross_class_rate = 0.0;
  double mean_entropy = 0.0;
  bool has_selection = false;  // false for the no-context method
};

struct EpochRecord {
  int epoch = 0;
  double grad_loss = 0.0;
  double policy_loss = 0.0;
  double total_loss = 0.0;
  MetricsRecord metrics;
};

// Full run output. Everything except wall_clock_seconds is a pure function
// of (config, seed).
struct RunReport {
  std::string method;
  std::string benchmark;
  std::uint64_t seed = 0;
  std::string version;
  std::map<std::string, std::string> config_echo;
  std::vector<EpochRecord> epochs;  // epochs + 1 entries (epoch 0 = initial)
  MetricsRecord final_metrics;
  std::uint64_t dataset_hash = 0;
  std::uint64_t pool_hash = 0;
  double wall_clock_seconds = 0.0;
};

}  // namespace tacslab
