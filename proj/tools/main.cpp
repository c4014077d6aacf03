#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "medorch/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent clinical pipelines and benchmark harness"};
  app.require_subcommand(1);

  std::string config_path;
  medorch::cli::RunOverrides overrides;
  std::uint64_t sample_seed = 0;
  std::uint64_t fold_seed = 0;
  int workers = 0;
  std::string output_dir;
  auto* run = app.add_subcommand("run", "Execute a benchmark run from a config file");
  run->add_option("config", config_path, "Run config (JSON)")->required();
  auto* sample_opt = run->add_option("--sample-seed", sample_seed, "Override the sampling seed");
  auto* fold_opt = run->add_option("--fold-seed", fold_seed, "Override the fold seed");
  auto* workers_opt = run->add_option("--workers", workers, "Override the worker count");
  auto* out_opt = run->add_option("--output-dir", output_dir, "Override the output directory");

  std::string transcript_path;
  auto* replay = app.add_subcommand("replay", "Pretty-print a persisted transcript");
  replay->add_option("path", transcript_path, "Transcript JSONL file")->required();

  std::string dataset_path;
  std::string kind = "mcq";
  auto* validate = app.add_subcommand("validate", "Validate a dataset file");
  validate->add_option("path", dataset_path, "Dataset JSONL file")->required();
  validate->add_option("--kind", kind, "Dataset kind (mcq|clinical)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      if (*sample_opt) overrides.sample_seed = sample_seed;
      if (*fold_opt) overrides.fold_seed = fold_seed;
      if (*workers_opt) overrides.workers = workers;
      if (*out_opt) overrides.output_dir = output_dir;
      return medorch::cli::cmd_run(config_path, overrides, std::cout, std::cerr);
    }
    if (replay->parsed()) {
      return medorch::cli::cmd_replay(transcript_path, std::cout, std::cerr);
    }
    return medorch::cli::cmd_validate(dataset_path, medorch::evalkit::parse_dataset_kind(kind),
                                      std::cout, std::cerr);
  } catch (const medorch::Error& e) {
    std::cerr << "error [" << e.kind() << "] " << e.what() << "\n";
    return 1;
  }
}
