#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cgid/cluster/kmeans.hpp"
#include "cgid/errors.hpp"
#include "cgid/experiment/compare.hpp"
#include "cgid/experiment/runner.hpp"
#include "cgid/numeric/log.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct ConfigSource {
  std::string file;
  std::string preset;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", file, "JSON config file with nested sections");
    cmd->add_option("-p,--preset", preset, "Named preset applied before the config file")
        ->check(CLI::IsMember(cgid::preset_names()));
    cmd->add_option("-s,--set", overrides, "Override a field by dotted path, e.g. plrd.tau=0.5")
        ->allow_extra_args(false);
  }

  cgid::RunConfig resolve() const {
    nlohmann::json doc = nlohmann::json::object();
    if (!preset.empty()) doc = cgid::preset(preset);
    if (!file.empty()) {
      std::ifstream in(file);
      if (!in) throw cgid::ConfigError("cannot read config file", file);
      nlohmann::json user;
      try {
        user = nlohmann::json::parse(in, nullptr, true, true);
      } catch (const nlohmann::json::parse_error& e) {
        throw cgid::ConfigError(std::string("invalid JSON: ") + e.what(), file);
      }
      doc.merge_patch(user);
    }
    for (const auto& o : overrides) cgid::apply_override(doc, o);
    return cgid::run_config_from_json(doc);
  }
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void print_summary(const cgid::RunResult& r) {
  const auto& last = r.reports.back();
  std::cout << r.config.method_label() << " seed=" << r.config.seed << " stages=" << r.reports.size()
            << " A_ALL=" << cgid::format_double(last.a_all)
            << " F_ALL=" << (last.f_all ? cgid::format_double(*last.f_all) : std::string("-"))
            << " invariant_violations=" << r.invariants.violations << " seconds=" << r.seconds << '\n';
  if (r.paths) std::cout << "  report: " << r.paths->structured.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual generalized intent discovery experiments"};
  app.require_subcommand(1);
  std::string log_level = "warning";
  app.add_option("--log-level", log_level, "debug, info, warning or silent")
      ->check(CLI::IsMember({"debug", "info", "warning", "silent"}));

  ConfigSource run_source;
  std::string run_output;
  bool resume = false;
  auto* run = app.add_subcommand("run", "Run one experiment and write its reports");
  run_source.attach(run);
  run->add_option("-o,--output", run_output, "Output directory")->required();
  run->add_flag("--resume", resume, "Continue from the newest stage checkpoint in the output directory");

  ConfigSource sweep_source;
  std::string sweep_output;
  std::string sweep_seeds;
  std::string sweep_methods;
  std::string sweep_ratios;
  std::size_t workers = 0;
  auto* sweep = app.add_subcommand("sweep", "Run every method x ratio x seed combination");
  sweep_source.attach(sweep);
  sweep->add_option("-o,--output", sweep_output, "Root output directory")->required();
  sweep->add_option("--seeds", sweep_seeds, "Comma-separated seeds (default: config seed)");
  sweep->add_option("--methods", sweep_methods, "Comma-separated methods (default: config method)");
  sweep->add_option("--ratios", sweep_ratios, "Comma-separated OOD ratios (default: config ratio)");
  sweep->add_option("-j,--workers", workers, "Concurrent runs (default: $CGID_WORKERS or 1)");

  std::vector<std::string> compare_paths;
  std::string compare_output;
  auto* compare = app.add_subcommand("compare", "Median metrics per method across report files");
  compare->add_option("reports", compare_paths, "report.jsonl files or run directories")->required();
  compare->add_option("-o,--output", compare_output, "Write the CSV here instead of stdout");

  ConfigSource estimate_source;
  std::string estimate_corpus;
  std::size_t k_prime = 0;
  std::uint64_t estimate_seed = 0;
  auto* estimate = app.add_subcommand("estimate-k", "Estimate the class count of a corpus by over-clustering");
  estimate_source.attach(estimate);
  estimate->add_option("--corpus", estimate_corpus, "Embedding file (default: the configured data source)");
  estimate->add_option("--k-prime", k_prime, "Over-clustering size (default: twice the labeled class count)");
  estimate->add_option("--seed", estimate_seed, "k-means seed");

  ConfigSource export_source;
  std::string export_path;
  auto* export_corpus = app.add_subcommand("export-corpus", "Write the configured corpus in the embedding format");
  export_source.attach(export_corpus);
  export_corpus->add_option("-o,--output", export_path, "Destination file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  cgid::log::set_level(cgid::log::parse_level(log_level));

  try {
    if (run->parsed()) {
      const auto config = run_source.resolve();
      const auto result = cgid::run_experiment(config, {run_output, resume});
      print_summary(result);
      return result.invariants.violations == 0 ? kExitOk : kExitRuntime;
    }
    if (sweep->parsed()) {
      const auto base = sweep_source.resolve();
      std::vector<cgid::Method> methods;
      for (const auto& m : split_list(sweep_methods)) methods.push_back(cgid::parse_method(m));
      std::vector<double> ratios;
      for (const auto& r : split_list(sweep_ratios)) {
        try {
          ratios.push_back(std::stod(r));
        } catch (const std::exception&) {
          throw cgid::ConfigError("not a number: " + r, "--ratios");
        }
      }
      std::vector<std::int64_t> seeds;
      for (const auto& s : split_list(sweep_seeds)) {
        try {
          seeds.push_back(std::stoll(s));
        } catch (const std::exception&) {
          throw cgid::ConfigError("not an integer: " + s, "--seeds");
        }
      }
      // Validate every combination before any run starts.
      auto entries = cgid::plan_sweep(base, methods, ratios, seeds, sweep_output);
      for (auto& e : entries) e.config = cgid::run_config_from_json(cgid::to_json(e.config));
      int status = kExitOk;
      for (const auto& r : cgid::run_sweep(entries, workers)) {
        print_summary(r);
        if (r.invariants.violations > 0) status = kExitRuntime;
      }
      return status;
    }
    if (compare->parsed()) {
      std::vector<std::filesystem::path> paths(compare_paths.begin(), compare_paths.end());
      const auto comparison = cgid::compare_runs(paths);
      if (compare_output.empty()) {
        cgid::write_comparison(std::cout, comparison);
      } else {
        std::ofstream out(compare_output);
        if (!out) throw cgid::IoError("cannot write " + compare_output);
        cgid::write_comparison(out, comparison);
      }
      return kExitOk;
    }
    if (estimate->parsed()) {
      auto config = estimate_source.resolve();
      if (!estimate_corpus.empty()) {
        config.data.source = "file";
        config.data.path = estimate_corpus;
      }
      const auto corpus = cgid::load_corpus(config);
      const std::size_t kp = k_prime > 0 ? k_prime : 2 * corpus.num_classes;
      const std::size_t k = cgid::estimate_num_classes(corpus.features, kp, estimate_seed, config.k.max_iterations);
      std::cout << nlohmann::json{{"estimated_k", k}, {"k_prime", kp}, {"labeled_classes", corpus.num_classes},
                                  {"samples", corpus.size()}}
                       .dump()
                << '\n';
      return kExitOk;
    }
    if (export_corpus->parsed()) {
      const auto config = export_source.resolve();
      cgid::export_embedding_corpus(export_path, cgid::load_corpus(config));
      return kExitOk;
    }
  } catch (const cgid::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const cgid::ComparisonError& e) {
    std::cerr << "comparison error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
