#pragma once

#include <cstdio>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tacslab/common.hpp"
#include "tacslab/synthbench.hpp"
#include "tacslab/trainer.hpp"

namespace tacslab {

inline const std::vector<std::string>& method_tags() {
  static const std::vector<std::string> tags = {
      "tacs",     "no_context", "random", "frozen_sim",
      "feat_avg", "blank",      "duplicate", "noisy"};
  return tags;
}

inline bool is_method_tag(const std::string& tag) {
  for (const auto& t : method_tags())
    if (t == tag) return true;
  return false;
}

// Whole-run configuration. File format: flat `key = value` lines under
// [section] headers; '#' starts a comment; unknown sections or keys are hard
// errors so a typo cannot silently fall back to a default.
struct RunConfig {
  // [run]
  std::string method = "tacs";
  std::string benchmark = "keymatch";
  std::uint64_t seed = 17;
  std::string out_dir = "runs";

  // [trainer]
  HybridConfig trainer;

  // [selector]
  std::size_t selector_hidden = 64;
  std::size_t selector_embedding = 64;

  // [tasknet]
  std::size_t tasknet_hidden = 64;

  // [baselines]
  std::size_t feature_averaged_k = 5;

  // [benchmark] explicit overrides, applied over the benchmark's defaults.
  std::map<std::string, std::string> benchmark_overrides;

  BenchmarkSpec resolve_benchmark() const {
    BenchmarkSpec spec = BenchmarkSpec::defaults(benchmark);
    spec.seed = seed;
    for (const auto& [key, value] : benchmark_overrides) {
      if (key == "classes") spec.classes = parse_size(key, value);
      else if (key == "input_dim") spec.input_dim = parse_size(key, value);
      else if (key == "keys") spec.keys = parse_size(key, value);
      else if (key == "pool_size") spec.pool_size = parse_size(key, value);
      else if (key == "train_size") spec.train_size = parse_size(key, value);
      else if (key == "eval_size") spec.eval_size = parse_size(key, value);
      else if (key == "distractor_strength")
        spec.distractor_strength = parse_double(key, value);
      else
        throw ConfigError("unknown benchmark key '" + key + "'");
    }
    spec.validate();
    return spec;
  }

  void validate() const {
    if (!is_method_tag(method))
      throw ConfigError("unknown method '" + method + "'");
    trainer.validate();
    if (selector_hidden == 0 || selector_embedding == 0 || tasknet_hidden == 0)
      throw ConfigError("network sizes must be positive");
    resolve_benchmark();
  }

  static double parse_double(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
    }
  }

  static std::size_t parse_size(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const long long n = std::stoll(v, &used);
      if (used != v.size() || n < 0) throw std::invalid_argument(v);
      return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': expected a non-negative integer, got '" +
                        v + "'");
    }
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  auto fail = [&](const std::string& what) {
    throw ConfigError("config line " + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("malformed section header '" + line + "'");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (section != "run" && section != "trainer" && section != "selector" &&
          section != "tasknet" && section != "benchmark" &&
          section != "baselines")
        fail("unknown section [" + section + "]");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) fail("expected 'key = value', got '" + line + "'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) fail("empty key or value");
    if (section.empty()) fail("key '" + key + "' outside any section");

    try {
      if (section == "run") {
        if (key == "method") cfg.method = value;
        else if (key == "benchmark") cfg.benchmark = value;
        else if (key == "seed")
          cfg.seed = static_cast<std::uint64_t>(std::stoull(value));
        else if (key == "out") cfg.out_dir = value;
        else fail("unknown key '" + key + "' in [run]");
      } else if (section == "trainer") {
        if (key == "temperature")
          cfg.trainer.temperature = RunConfig::parse_double(key, value);
        else if (key == "hybrid_weight")
          cfg.trainer.hybrid_weight = RunConfig::parse_double(key, value);
        else if (key == "epochs")
          cfg.trainer.epochs = static_cast<int>(RunConfig::parse_size(key, value));
        else if (key == "batch_size")
          cfg.trainer.batch_size = static_cast<int>(RunConfig::parse_size(key, value));
        else if (key == "learning_rate")
          cfg.trainer.learning_rate = RunConfig::parse_double(key, value);
        else if (key == "momentum")
          cfg.trainer.momentum = RunConfig::parse_double(key, value);
        else if (key == "advantage_mode") {
          if (value == "standardized")
            cfg.trainer.advantage_mode = AdvantageMode::kStandardized;
          else if (value == "raw")
            cfg.trainer.advantage_mode = AdvantageMode::kRaw;
          else fail("advantage_mode must be 'standardized' or 'raw'");
        } else if (key == "ablation") {
          if (value == "full") cfg.trainer.ablation = AblationMode::kFull;
          else if (value == "soft_only")
            cfg.trainer.ablation = AblationMode::kSoftOnly;
          else if (value == "policy_only")
            cfg.trainer.ablation = AblationMode::kPolicyOnly;
          else fail("ablation must be 'full', 'soft_only' or 'policy_only'");
        } else {
          fail("unknown key '" + key + "' in [trainer]");
        }
      } else if (section == "selector") {
        if (key == "hidden") cfg.selector_hidden = RunConfig::parse_size(key, value);
        else if (key == "embedding")
          cfg.selector_embedding = RunConfig::parse_size(key, value);
        else fail("unknown key '" + key + "' in [selector]");
      } else if (section == "tasknet") {
        if (key == "hidden") cfg.tasknet_hidden = RunConfig::parse_size(key, value);
        else fail("unknown key '" + key + "' in [tasknet]");
      } else if (section == "baselines") {
        if (key == "feature_averaged_k")
          cfg.feature_averaged_k = RunConfig::parse_size(key, value);
        else fail("unknown key '" + key + "' in [baselines]");
      } else {  // benchmark
        if (key != "classes" && key != "input_dim" && key != "keys" &&
            key != "pool_size" && key != "train_size" && key != "eval_size" &&
            key != "distractor_strength")
          fail("unknown key '" + key + "' in [benchmark]");
        cfg.benchmark_overrides[key] = value;
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      fail(std::string("bad value '") + value + "' (" + e.what() + ")");
    }
  }
  cfg.trainer.seed = cfg.seed;
  return cfg;
}

inline RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

inline std::string emit_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << "[run]\n";
  out << "method = " << cfg.method << "\n";
  out << "benchmark = " << cfg.benchmark << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "out = " << cfg.out_dir << "\n";
  out << "\n[trainer]\n";
  out << "temperature = " << detail::format_double(cfg.trainer.temperature) << "\n";
  out << "hybrid_weight = " << detail::format_double(cfg.trainer.hybrid_weight)
      << "\n";
  out << "epochs = " << cfg.trainer.epochs << "\n";
  out << "batch_size = " << cfg.trainer.batch_size << "\n";
  out << "learning_rate = " << detail::format_double(cfg.trainer.learning_rate)
      << "\n";
  out << "momentum = " << detail::format_double(cfg.trainer.momentum) << "\n";
  out << "advantage_mode = " << to_string(cfg.trainer.advantage_mode) << "\n";
  out << "ablation = " << to_string(cfg.trainer.ablation) << "\n";
  out << "\n[selector]\n";
  out << "hidden = " << cfg.selector_hidden << "\n";
  out << "embedding = " << cfg.selector_embedding << "\n";
  out << "\n[tasknet]\n";
  out << "hidden = " << cfg.tasknet_hidden << "\n";
  out << "\n[baselines]\n";
  out << "feature_averaged_k = " << cfg.feature_averaged_k << "\n";
  if (!cfg.benchmark_overrides.empty()) {
    out << "\n[benchmark]\n";
    for (const auto& [key, value] : cfg.benchmark_overrides)
      out << key << " = " << value << "\n";
  }
  return out.str();
}

inline bool operator==(const RunConfig& a, const RunConfig& b) {
  return emit_config(a) == emit_config(b);
}

}  // namespace tacslab
