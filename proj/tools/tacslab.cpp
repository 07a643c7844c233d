// Experiment runner: configuration, seeding, run persistence, comparison
// tables and the statistical verification suite.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tacslab/config.hpp"
#include "tacslab/data.hpp"
#include "tacslab/report.hpp"
#include "tacslab/runner.hpp"
#include "tacslab/synthbench.hpp"
#include "tacslab/verify.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string method;
  std::string benchmark;
  std::int64_t seed = -1;
  std::string out_dir;
};

tacslab::RunConfig load_config(const CommonFlags& flags) {
  tacslab::RunConfig cfg;
  if (!flags.config_path.empty())
    cfg = tacslab::parse_config_file(flags.config_path);
  if (!flags.method.empty()) cfg.method = flags.method;
  if (!flags.benchmark.empty()) cfg.benchmark = flags.benchmark;
  if (flags.seed >= 0) {
    cfg.seed = static_cast<std::uint64_t>(flags.seed);
    cfg.trainer.seed = cfg.seed;
  }
  if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
  return cfg;
}

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "Configuration file");
  cmd->add_option("--method", flags.method,
                  "tacs, no_context, random, frozen_sim, feat_avg, blank, "
                  "duplicate or noisy");
  cmd->add_option("--benchmark", flags.benchmark, "keymatch or crossclass");
  cmd->add_option("--seed", flags.seed, "Run seed");
  cmd->add_option("--out", flags.out_dir, "Output directory");
}

int do_run(const CommonFlags& flags) {
  const tacslab::RunConfig cfg = load_config(flags);
  const tacslab::RunResult result = tacslab::run_to_directory(cfg);
  const auto& m = result.report.final_metrics;
  std::printf("run %s on %s (seed %llu): accuracy %.4f",
              result.report.method.c_str(), result.report.benchmark.c_str(),
              static_cast<unsigned long long>(result.report.seed), m.accuracy);
  if (m.has_selection)
    std::printf(", oracle agreement %.4f, cross-class %.4f",
                m.oracle_agreement, m.cross_class_rate);
  std::printf("\n-> %s\n", result.directory.string().c_str());
  return 0;
}

int do_compare(const std::vector<std::string>& dirs,
               const std::string& csv_out) {
  const tacslab::CompareResult result = tacslab::compare_runs(dirs);
  std::fputs(result.text.c_str(), stdout);
  if (!csv_out.empty()) {
    tacslab::write_text_file(csv_out, result.csv);
    std::printf("csv -> %s\n", csv_out.c_str());
  }
  return 0;
}

int do_verify(std::uint64_t seed) {
  const auto results = tacslab::verify::run_all(seed);
  bool all_ok = true;
  for (const auto& r : results) {
    std::printf("[%s] %-26s %s (%.2fs)\n", r.passed ? "PASS" : "FAIL",
                r.name.c_str(), r.details.c_str(), r.seconds);
    all_ok = all_ok && r.passed;
  }
  return all_ok ? 0 : 1;
}

int do_gradcheck(std::uint64_t seed) {
  const auto op = tacslab::verify::check_op_gradients(seed);
  const auto st = tacslab::verify::check_straight_through(seed);
  for (const auto& r : {op, st})
    std::printf("[%s] %-26s %s (%.2fs)\n", r.passed ? "PASS" : "FAIL",
                r.name.c_str(), r.details.c_str(), r.seconds);
  return (op.passed && st.passed) ? 0 : 1;
}

int do_plot(const std::vector<std::string>& dirs, const std::string& out) {
  tacslab::write_text_file(out, tacslab::plot_svg(dirs));
  std::printf("svg -> %s\n", out.c_str());
  return 0;
}

int do_export(const CommonFlags& flags, const std::string& format) {
  tacslab::RunConfig cfg = load_config(flags);
  const tacslab::BenchmarkSpec spec = cfg.resolve_benchmark();
  const tacslab::BenchmarkData data = tacslab::generate_benchmark(spec);
  namespace fs = std::filesystem;
  const fs::path dir = cfg.out_dir.empty() ? fs::path(".") : fs::path(cfg.out_dir);
  fs::create_directories(dir);
  const std::int64_t d = static_cast<std::int64_t>(spec.input_dim);
  const std::int64_t c = static_cast<std::int64_t>(spec.classes);
  auto dump = [&](const std::string& name,
                  const std::vector<tacslab::LabeledSample>& rows) {
    if (format == "csv") {
      std::ofstream out(dir / (name + ".csv"), std::ios::binary);
      tacslab::write_samples_csv(out, rows, d);
    } else {
      std::ofstream out(dir / (name + ".bin"), std::ios::binary);
      tacslab::write_samples_binary(out, rows, d, c);
    }
  };
  dump("train", data.train);
  dump("eval", data.eval);
  dump("pool", data.pool.candidates);
  std::printf("exported %s (seed %llu) to %s as %s\n", spec.name.c_str(),
              static_cast<unsigned long long>(spec.seed),
              dir.string().c_str(), format.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Task-aligned context selection lab"};
  app.require_subcommand(1);

  CommonFlags run_flags;
  CLI::App* run_cmd = app.add_subcommand("run", "Execute one training run");
  add_common_flags(run_cmd, run_flags);

  std::vector<std::string> compare_dirs;
  std::string compare_csv;
  CLI::App* compare_cmd =
      app.add_subcommand("compare", "Summarize runs into a method table");
  compare_cmd->add_option("dirs", compare_dirs, "Run directories")->required();
  compare_cmd->add_option("--csv", compare_csv, "Also write a CSV table");

  std::uint64_t verify_seed = 17;
  CLI::App* verify_cmd =
      app.add_subcommand("verify", "Run the statistical verification suite");
  verify_cmd->add_option("--seed", verify_seed, "Suite seed");

  std::uint64_t gradcheck_seed = 17;
  CLI::App* gradcheck_cmd =
      app.add_subcommand("gradcheck", "Run the gradient checks only");
  gradcheck_cmd->add_option("--seed", gradcheck_seed, "Suite seed");

  std::vector<std::string> plot_dirs;
  std::string plot_out = "curves.svg";
  CLI::App* plot_cmd =
      app.add_subcommand("plot", "Render loss/accuracy curves as SVG");
  plot_cmd->add_option("dirs", plot_dirs, "Run directories")->required();
  plot_cmd->add_option("--out", plot_out, "Output SVG path");

  CommonFlags export_flags;
  std::string export_format = "bin";
  CLI::App* export_cmd = app.add_subcommand(
      "export-dataset", "Write benchmark snapshots to disk");
  add_common_flags(export_cmd, export_flags);
  export_cmd->add_option("--format", export_format, "bin or csv")
      ->check(CLI::IsMember({"bin", "csv"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return do_run(run_flags);
    if (compare_cmd->parsed()) return do_compare(compare_dirs, compare_csv);
    if (verify_cmd->parsed()) return do_verify(verify_seed);
    if (gradcheck_cmd->parsed()) return do_gradcheck(gradcheck_seed);
    if (plot_cmd->parsed()) return do_plot(plot_dirs, plot_out);
    if (export_cmd->parsed()) return do_export(export_flags, export_format);
  } catch (const tacslab::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const tacslab::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const tacslab::InvalidArgumentError& e) {
    std::fprintf(stderr, "invalid argument: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
