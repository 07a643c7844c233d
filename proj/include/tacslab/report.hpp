#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tacslab/common.hpp"
#include "tacslab/records.hpp"

namespace tacslab {

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// epochs.csv: one row per epoch record; selection statistics are left empty
// for methods without a categorical selection. Formatting is fixed so equal
// runs produce byte-identical files.
inline std::string epochs_csv(const std::vector<EpochRecord>& records) {
  std::ostringstream out;
  out << "epoch,grad_loss,policy_loss,total_loss,accuracy,"
         "oracle_agreement,cross_class_rate,mean_entropy\n";
  for (const auto& r : records) {
    out << r.epoch << ',' << detail::fmt17(r.grad_loss) << ','
        << detail::fmt17(r.policy_loss) << ',' << detail::fmt17(r.total_loss)
        << ',' << detail::fmt17(r.metrics.accuracy) << ',';
    if (r.metrics.has_selection) {
      out << detail::fmt17(r.metrics.oracle_agreement) << ','
          << detail::fmt17(r.metrics.cross_class_rate) << ','
          << detail::fmt17(r.metrics.mean_entropy);
    } else {
      out << ",,";
    }
    out << '\n';
  }
  return out.str();
}

inline nlohmann::json metrics_json(const MetricsRecord& m) {
  nlohmann::json j;
  j["accuracy"] = m.accuracy;
  if (m.has_selection) {
    j["oracle_agreement"] = m.oracle_agreement;
    j["cross_class_rate"] = m.cross_class_rate;
    j["mean_entropy"] = m.mean_entropy;
  }
  return j;
}

inline nlohmann::json report_json(const RunReport& report,
                                  const std::string& config_echo) {
  nlohmann::json j;
  j["version"] = report.version;
  j["method"] = report.method;
  j["benchmark"] = report.benchmark;
  j["seed"] = report.seed;
  j["config"] = config_echo;
  j["dataset_hash"] = report.dataset_hash;
  j["pool_hash"] = report.pool_hash;
  j["wall_clock_seconds"] = report.wall_clock_seconds;
  j["final"] = metrics_json(report.final_metrics);
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& r : report.epochs) {
    nlohmann::json e;
    e["epoch"] = r.epoch;
    e["grad_loss"] = r.grad_loss;
    e["policy_loss"] = r.policy_loss;
    e["total_loss"] = r.total_loss;
    e["metrics"] = metrics_json(r.metrics);
    epochs.push_back(std::move(e));
  }
  j["epochs"] = std::move(epochs);
  return j;
}

// Creates a fresh run directory <out>/<stem>-NNN. Existing directories are
// never reused, so reruns never overwrite earlier reports.
inline std::filesystem::path make_run_dir(const std::string& out_root,
                                          const std::string& stem) {
  namespace fs = std::filesystem;
  fs::create_directories(out_root);
  for (int n = 1; n < 100000; ++n) {
    char suffix[16];
    std::snprintf(suffix, sizeof suffix, "-%03d", n);
    fs::path dir = fs::path(out_root) / (stem + suffix);
    if (!fs::exists(dir)) {
      fs::create_directories(dir);
      return dir;
    }
  }
  throw Error("make_run_dir: run directory space exhausted for " + stem);
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw InvalidArgumentError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace tacslab
