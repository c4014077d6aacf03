#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "medorch/backend.hpp"
#include "medorch/evalkit.hpp"

namespace medorch::cli {

/// One self-contained run description; the JSON config file mirrors this
/// struct field for field.
struct RunConfig {
  evalkit::PipelineKind pipeline = evalkit::PipelineKind::Cod;
  std::filesystem::path dataset_path;
  evalkit::DatasetKind dataset_kind = evalkit::DatasetKind::Clinical;
  std::string dataset_name;  // defaults to the file stem
  std::vector<backend::BackendSpec> backends;
  backend::RouteConfig route;
  std::size_t n_sample = 0;
  std::size_t k_folds = 3;
  std::uint64_t sample_seed = 0;
  std::uint64_t fold_seed = 0;
  int max_iters = 3;
  int max_turns = 20;
  int workers = 1;
  std::filesystem::path output_dir;
};

/// Parse and cross-check a config file. Throws ConfigError naming the field
/// path (e.g. "route.overrides.medagents.gather").
RunConfig load_run_config(const std::filesystem::path& path);

/// Flags may override only these.
struct RunOverrides {
  std::optional<std::uint64_t> sample_seed;
  std::optional<std::uint64_t> fold_seed;
  std::optional<int> workers;
  std::optional<std::string> output_dir;
};

/// Execute a run: sample, evaluate, write table + CSVs + transcripts + a
/// config snapshot into the output dir. Returns 0 on completion (even with
/// entry failures), nonzero on config/dataset errors.
int cmd_run(const std::filesystem::path& config_path, const RunOverrides& overrides,
            std::ostream& out, std::ostream& err);

/// Pretty-print a persisted transcript ("Doctor: ..." lines; encounter
/// transcripts end with the verdict trailer).
int cmd_replay(const std::filesystem::path& transcript_path, std::ostream& out,
               std::ostream& err);

/// Validate a dataset file: entry count, option histogram, leakage results.
/// Nonzero exit when any record is invalid.
int cmd_validate(const std::filesystem::path& dataset_path, evalkit::DatasetKind kind,
                 std::ostream& out, std::ostream& err);

/// Rendering behind cmd_replay, exposed for tests.
std::string render_transcript(const Transcript& transcript);

}  // namespace medorch::cli
