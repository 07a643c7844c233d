#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tacslab/baselines.hpp"
#include "tacslab/config.hpp"
#include "tacslab/report.hpp"
#include "tacslab/train_loop.hpp"

namespace tacslab {

inline BaselineKind baseline_kind_from_tag(const std::string& tag) {
  if (tag == "no_context") return BaselineKind::kNoContext;
  if (tag == "random") return BaselineKind::kRandom;
  if (tag == "frozen_sim") return BaselineKind::kFrozenSimilarity;
  if (tag == "feat_avg") return BaselineKind::kFeatureAveraged;
  if (tag == "blank") return BaselineKind::kBlank;
  if (tag == "duplicate") return BaselineKind::kDuplicate;
  if (tag == "noisy") return BaselineKind::kNoisy;
  throw ConfigError("unknown baseline method '" + tag + "'");
}

struct RunResult {
  RunReport report;
  std::filesystem::path directory;
};

// Executes one configured run in memory (no files). Exposed separately so
// tests and the acceptance suite can run methods without touching disk.
inline RunReport execute_run(const RunConfig& cfg,
                             const EpochCallback& on_epoch = nullptr) {
  cfg.validate();
  const BenchmarkSpec spec = cfg.resolve_benchmark();
  const BenchmarkData data = generate_benchmark(spec);

  Rng init = rng_substream(cfg.seed, "init");
  SelectorNet selector(spec.input_dim, cfg.selector_hidden,
                       cfg.selector_embedding, init);
  TaskNet tasknet(spec.input_dim, cfg.tasknet_hidden, spec.classes, init);
  const SelectorNet frozen_snapshot = selector;  // pre-training copy

  RunReport report;
  report.method = cfg.method;
  report.benchmark = spec.name;
  report.seed = cfg.seed;
  report.version = kVersion;
  report.dataset_hash = hash_samples(data.train) ^
                        (hash_samples(data.eval) * 0x9e3779b97f4a7c15ULL);
  report.pool_hash = data.pool.pool_version;

  const auto t0 = std::chrono::steady_clock::now();
  if (cfg.method == "tacs") {
    report.epochs = train(selector, tasknet, data, cfg.trainer, on_epoch);
  } else {
    BaselineOptions options;
    options.kind = baseline_kind_from_tag(cfg.method);
    options.feature_averaged_k = cfg.feature_averaged_k;
    report.epochs = train_baseline(tasknet, frozen_snapshot, data, cfg.trainer,
                                   options, on_epoch);
  }
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  report.final_metrics = report.epochs.back().metrics;
  return report;
}

inline nlohmann::json benchmark_spec_json(const BenchmarkSpec& spec) {
  nlohmann::json j;
  j["name"] = spec.name;
  j["classes"] = spec.classes;
  j["input_dim"] = spec.input_dim;
  j["keys"] = spec.keys;
  j["pool_size"] = spec.pool_size;
  j["train_size"] = spec.train_size;
  j["eval_size"] = spec.eval_size;
  j["distractor_strength"] = spec.distractor_strength;
  return j;
}

// Full `run` subcommand: executes the configured method and persists
// report.json, epochs.csv and the config echo into a fresh run directory.
// Epoch rows are flushed as they complete, so an aborted run leaves a
// readable partial record behind.
inline RunResult run_to_directory(const RunConfig& cfg) {
  cfg.validate();
  const BenchmarkSpec spec = cfg.resolve_benchmark();
  const std::string stem =
      cfg.method + "-" + spec.name + "-s" + std::to_string(cfg.seed);
  const std::filesystem::path dir = make_run_dir(cfg.out_dir, stem);
  const std::string config_echo = emit_config(cfg);
  write_text_file(dir / "config.txt", config_echo);

  std::ofstream csv(dir / "epochs.csv", std::ios::binary);
  csv << "epoch,grad_loss,policy_loss,total_loss,accuracy,"
         "oracle_agreement,cross_class_rate,mean_entropy\n";
  csv.flush();
  auto flush_epoch = [&csv](const EpochRecord& r) {
    std::vector<EpochRecord> one = {r};
    const std::string block = epochs_csv(one);
    csv << block.substr(block.find('\n') + 1);  // strip the header line
    csv.flush();
  };

  RunResult result;
  result.directory = dir;
  try {
    result.report = execute_run(cfg, flush_epoch);
  } catch (const std::exception& e) {
    nlohmann::json j;
    j["error"] = e.what();
    j["config"] = config_echo;
    write_text_file(dir / "report.json", j.dump(2) + "\n");
    throw;
  }
  nlohmann::json j = report_json(result.report, config_echo);
  j["benchmark_spec"] = benchmark_spec_json(spec);
  char hash_line[64];
  std::snprintf(hash_line, sizeof hash_line, "%016llx %016llx\n",
                static_cast<unsigned long long>(result.report.dataset_hash),
                static_cast<unsigned long long>(result.report.pool_hash));
  write_text_file(dir / "dataset.hash", hash_line);
  write_text_file(dir / "report.json", j.dump(2) + "\n");
  return result;
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

struct MethodSummary {
  std::string method;
  std::size_t runs = 0;
  double accuracy_mean = 0.0, accuracy_std = 0.0;
  double agreement_mean = 0.0, agreement_std = 0.0;
  double cross_mean = 0.0, cross_std = 0.0;
  bool has_selection = false;
};

struct CompareResult {
  std::vector<MethodSummary> methods;
  std::vector<std::string> ordering_violations;
  std::string text;
  std::string csv;
};

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
  return {mean, std::sqrt(var)};
}

}  // namespace detail

inline CompareResult compare_runs(const std::vector<std::string>& run_dirs) {
  namespace fs = std::filesystem;
  if (run_dirs.size() < 2)
    throw InvalidArgumentError("compare: need at least 2 run directories");

  struct Entry {
    std::string method;
    nlohmann::json spec;
    double accuracy = 0.0, agreement = 0.0, cross = 0.0;
    bool has_selection = false;
  };
  std::vector<Entry> entries;
  for (const auto& d : run_dirs) {
    const fs::path path = fs::path(d) / "report.json";
    if (!fs::exists(path))
      throw InvalidArgumentError("compare: missing report " + path.string());
    nlohmann::json j = nlohmann::json::parse(read_text_file(path));
    Entry e;
    e.method = j.at("method").get<std::string>();
    e.spec = j.value("benchmark_spec", nlohmann::json());
    const auto& fin = j.at("final");
    e.accuracy = fin.at("accuracy").get<double>();
    if (fin.contains("oracle_agreement")) {
      e.has_selection = true;
      e.agreement = fin.at("oracle_agreement").get<double>();
      e.cross = fin.at("cross_class_rate").get<double>();
    }
    entries.push_back(std::move(e));
  }
  for (std::size_t i = 1; i < entries.size(); ++i)
    if (entries[i].spec != entries[0].spec)
      throw InvalidArgumentError(
          "compare: run " + run_dirs[i] +
          " uses an incompatible benchmark (spec mismatch)");

  std::map<std::string, std::vector<Entry*>> by_method;
  for (auto& e : entries) by_method[e.method].push_back(&e);

  CompareResult result;
  for (auto& [method, list] : by_method) {
    MethodSummary s;
    s.method = method;
    s.runs = list.size();
    std::vector<double> acc, agree, cross;
    for (Entry* e : list) {
      acc.push_back(e->accuracy);
      if (e->has_selection) {
        s.has_selection = true;
        agree.push_back(e->agreement);
        cross.push_back(e->cross);
      }
    }
    std::tie(s.accuracy_mean, s.accuracy_std) = detail::mean_std(acc);
    std::tie(s.agreement_mean, s.agreement_std) = detail::mean_std(agree);
    std::tie(s.cross_mean, s.cross_std) = detail::mean_std(cross);
    result.methods.push_back(std::move(s));
  }

  // Expected qualitative ranking when the classic quartet is present.
  auto mean_of = [&](const std::string& m) -> const MethodSummary* {
    for (const auto& s : result.methods)
      if (s.method == m) return &s;
    return nullptr;
  };
  const MethodSummary* tacs = mean_of("tacs");
  const MethodSummary* frozen = mean_of("frozen_sim");
  const MethodSummary* random = mean_of("random");
  const MethodSummary* noctx = mean_of("no_context");
  auto flag = [&result](const std::string& msg) {
    result.ordering_violations.push_back(msg);
  };
  if (tacs && frozen && !(tacs->accuracy_mean > frozen->accuracy_mean))
    flag("expected tacs > frozen_sim on mean accuracy");
  if (frozen && random && !(frozen->accuracy_mean >= random->accuracy_mean))
    flag("expected frozen_sim >= random on mean accuracy");
  if (random && noctx && !(random->accuracy_mean >= noctx->accuracy_mean))
    flag("expected random >= no_context on mean accuracy");

  std::ostringstream text, csv;
  char line[256];
  text << "method          runs  accuracy           agreement          "
          "cross_class\n";
  csv << "method,runs,accuracy_mean,accuracy_std,agreement_mean,"
         "agreement_std,cross_class_mean,cross_class_std\n";
  for (const auto& s : result.methods) {
    if (s.has_selection) {
      std::snprintf(line, sizeof line,
                    "%-15s %4zu  %.4f +/- %.4f  %.4f +/- %.4f  %.4f +/- %.4f\n",
                    s.method.c_str(), s.runs, s.accuracy_mean, s.accuracy_std,
                    s.agreement_mean, s.agreement_std, s.cross_mean,
                    s.cross_std);
    } else {
      std::snprintf(line, sizeof line,
                    "%-15s %4zu  %.4f +/- %.4f  %-18s %s\n", s.method.c_str(),
                    s.runs, s.accuracy_mean, s.accuracy_std, "-", "-");
    }
    text << line;
    std::snprintf(line, sizeof line, "%s,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  s.method.c_str(), s.runs, s.accuracy_mean, s.accuracy_std,
                  s.agreement_mean, s.agreement_std, s.cross_mean, s.cross_std);
    csv << line;
  }
  for (const auto& v : result.ordering_violations)
    text << "ordering violation: " << v << "\n";
  if (result.ordering_violations.empty() && tacs && frozen && random && noctx)
    text << "ordering ok: tacs > frozen_sim >= random >= no_context\n";
  result.text = text.str();
  result.csv = csv.str();
  return result;
}

// ---------------------------------------------------------------------------
// plot: minimal SVG curves from epochs.csv files
// ---------------------------------------------------------------------------

inline std::string plot_svg(const std::vector<std::string>& run_dirs) {
  struct Curve {
    std::string label;
    std::vector<double> loss, accuracy;
  };
  std::vector<Curve> curves;
  for (const auto& d : run_dirs) {
    const std::string csv = read_text_file(std::filesystem::path(d) / "epochs.csv");
    Curve c;
    c.label = std::filesystem::path(d).filename().string();
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      std::istringstream row(line);
      std::string cell;
      std::vector<std::string> cells;
      while (std::getline(row, cell, ',')) cells.push_back(cell);
      if (cells.size() < 5) continue;
      c.loss.push_back(std::atof(cells[3].c_str()));
      c.accuracy.push_back(std::atof(cells[4].c_str()));
    }
    if (!c.accuracy.empty()) curves.push_back(std::move(c));
  }
  if (curves.empty())
    throw InvalidArgumentError("plot: no epoch data found");

  const double width = 420, height = 300, margin = 40;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                 "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 2 * width
      << "\" height=\"" << height << "\">\n";
  auto panel = [&](double x0, const std::string& title, bool use_loss) {
    double hi = 1e-9;
    for (const auto& c : curves)
      for (double v : (use_loss ? c.loss : c.accuracy)) hi = std::max(hi, v);
    if (!use_loss) hi = 1.0;
    svg << "<rect x=\"" << x0 + margin << "\" y=\"" << margin - 20
        << "\" width=\"" << width - 2 * margin << "\" height=\""
        << height - 2 * margin << "\" fill=\"none\" stroke=\"#999\"/>\n";
    svg << "<text x=\"" << x0 + width / 2 << "\" y=\"15\" text-anchor=\"middle\" "
        << "font-size=\"12\">" << title << "</text>\n";
    int ci = 0;
    for (const auto& c : curves) {
      const auto& ys = use_loss ? c.loss : c.accuracy;
      if (ys.empty()) continue;
      svg << "<polyline fill=\"none\" stroke=\"" << colors[ci % 8]
          << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < ys.size(); ++i) {
        const double px =
            x0 + margin +
            (width - 2 * margin) * (ys.size() > 1 ? static_cast<double>(i) /
                                                        (ys.size() - 1)
                                                  : 0.0);
        const double py =
            (margin - 20) + (height - 2 * margin) * (1.0 - ys[i] / hi);
        svg << px << "," << py << " ";
      }
      svg << "\"/>\n";
      ++ci;
    }
  };
  panel(0, "total loss", true);
  panel(width, "eval accuracy", false);
  double ly = height - 12;
  int ci = 0;
  for (const auto& c : curves) {
    svg << "<text x=\"10\" y=\"" << ly << "\" font-size=\"10\" fill=\""
        << colors[ci % 8] << "\">" << c.label << "</text>\n";
    ly -= 12;
    ++ci;
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace tacslab
