#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "medorch/backend.hpp"
#include "medorch/domain.hpp"

namespace medorch::evalkit {

enum class DatasetKind { Mcq, Clinical };
enum class PipelineKind { Cod, MedAgents, AgentClinic };

std::string_view to_string(DatasetKind kind);
std::string_view to_string(PipelineKind kind);
DatasetKind parse_dataset_kind(std::string_view s);    // throws ConfigError
PipelineKind parse_pipeline_kind(std::string_view s);  // throws ConfigError

struct Dataset {
  DatasetKind kind = DatasetKind::Mcq;
  std::string name;
  std::vector<McqItem> mcq;
  std::vector<ClinicalCase> clinical;

  std::size_t size() const { return kind == DatasetKind::Mcq ? mcq.size() : clinical.size(); }
  const std::string& entry_id(std::size_t i) const {
    return kind == DatasetKind::Mcq ? mcq[i].id : clinical[i].id;
  }
};

/// Load and validate a UTF-8 JSONL dataset. Throws IoError, EmptyDataset, or
/// ParseError naming the 1-based record index.
Dataset load_dataset(const std::filesystem::path& path, DatasetKind kind);

/// Seeded uniform sample without replacement; output keeps original dataset
/// order. Throws SampleTooLarge.
std::vector<std::size_t> sample_indices(std::size_t total, std::size_t n, std::uint64_t seed);
Dataset sample(const Dataset& dataset, std::size_t n, std::uint64_t seed);

struct FoldPlan {
  std::uint64_t seed = 0;
  std::vector<std::vector<std::string>> folds;  // disjoint entry-id lists
};

/// Seeded shuffle then contiguous chunks; fold sizes differ by at most one.
/// Throws TooFewEntries.
FoldPlan split_folds(std::span<const std::string> entry_ids, std::size_t k, std::uint64_t seed);

struct Aggregate {
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // sample std over fold means, 0 when k = 1
  double mean_runtime_seconds = 0.0;
};

Aggregate aggregate(std::span<const double> fold_accuracies,
                    std::span<const double> entry_runtimes);

struct EntryRecord {
  std::string id;
  Verdict verdict = Verdict::Incorrect;
  double runtime_seconds = 0.0;
  bool failed = false;
  std::string failure_reason;
  std::string transcript_path;
};

struct EvalReport {
  std::string pipeline;
  std::string route_name;
  std::string dataset_name;
  std::string std_convention = "sample";
  std::vector<double> fold_accuracies;  // percent
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  double mean_runtime_seconds = 0.0;
  double overall_accuracy = 0.0;  // correct / total, percent
  std::size_t failure_count = 0;
  std::vector<EntryRecord> entries;  // dataset order
};

struct EvalOptions {
  std::size_t k_folds = 3;
  std::uint64_t fold_seed = 0;
  int workers = 1;
  int max_iters = 3;
  int max_turns = 20;
  std::filesystem::path transcript_dir;  // empty = do not persist
  std::shared_ptr<backend::Clock> clock;
};

/// Run every entry once, assign verdicts to folds, aggregate. Entry failures
/// (backend aborts) count as incorrect and are flagged; per-entry runtime is
/// the wall time of the pipeline call (sum of call latencies under a virtual
/// clock).
EvalReport evaluate(PipelineKind pipeline, const Dataset& dataset,
                    const backend::BackendRegistry& registry, const backend::RouteConfig& route,
                    const EvalOptions& options);

/// "MEAN ± STD" with two decimals, e.g. "78.91 ± 6.92".
std::string format_accuracy_cell(double mean, double std);

struct RenderedTable {
  std::string text;  // aligned, 2-decimal cells
  std::string csv;   // full precision
};

/// One row per route config, accuracy/runtime column pair per dataset.
RenderedTable emit_table(std::span<const EvalReport> reports);

/// Per-entry CSV for one report (id, fold, verdict, runtime, failed, path).
std::string entries_csv(const EvalReport& report, const FoldPlan& plan);

/// Write <dir>/<dataset>/<pipeline>/<entry_id>.jsonl atomically, one event
/// per line with fields {role, text, backend_name, latency_seconds}.
/// Throws IoError.
std::filesystem::path persist_transcript(const Transcript& transcript,
                                         const std::filesystem::path& dir,
                                         std::string_view dataset, std::string_view pipeline);

/// Read back a persisted transcript. Throws IoError or ParseError.
Transcript load_transcript(const std::filesystem::path& path);

/// Fixed-decimal and full-precision ("%.17g") double rendering.
std::string format_fixed(double value, int decimals);
std::string format_full(double value);

}  // namespace medorch::evalkit
