#include "medorch/evalkit.hpp"

#include <algorithm>
#include <atomic>
#include <set>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "medorch/agentclinic.hpp"
#include "medorch/cod.hpp"
#include "medorch/medagents.hpp"
#include "medorch/textutil.hpp"

namespace medorch::evalkit {

namespace {

std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

}  // namespace

std::string_view to_string(DatasetKind kind) {
  return kind == DatasetKind::Mcq ? "mcq" : "clinical";
}

std::string_view to_string(PipelineKind kind) {
  switch (kind) {
    case PipelineKind::Cod: return "cod";
    case PipelineKind::MedAgents: return "medagents";
    case PipelineKind::AgentClinic: return "agentclinic";
  }
  return "?";
}

DatasetKind parse_dataset_kind(std::string_view s) {
  if (s == "mcq") return DatasetKind::Mcq;
  if (s == "clinical") return DatasetKind::Clinical;
  throw Error("ConfigError", "unknown dataset kind '" + std::string(s) + "' (mcq|clinical)");
}

PipelineKind parse_pipeline_kind(std::string_view s) {
  if (s == "cod") return PipelineKind::Cod;
  if (s == "medagents") return PipelineKind::MedAgents;
  if (s == "agentclinic") return PipelineKind::AgentClinic;
  throw Error("ConfigError",
              "unknown pipeline '" + std::string(s) + "' (cod|medagents|agentclinic)");
}

Dataset load_dataset(const std::filesystem::path& path, DatasetKind kind) {
  std::ifstream in(path);
  if (!in) {
    throw Error("IoError", "cannot open dataset file '" + path.string() + "'");
  }
  Dataset dataset;
  dataset.kind = kind;
  dataset.name = path.stem().string();

  std::string line;
  std::size_t record_index = 0;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    ++record_index;
    nlohmann::json record = nlohmann::json::parse(line, nullptr, false);
    if (record.is_discarded()) {
      throw Error("ParseError", "record " + std::to_string(record_index) + " in '" +
                                    path.string() + "' is not valid JSON");
    }
    try {
      if (kind == DatasetKind::Mcq) {
        dataset.mcq.push_back(validate_mcq(record));
        if (!ids.insert(dataset.mcq.back().id).second) {
          throw Error("ParseError", "duplicate id '" + dataset.mcq.back().id + "'");
        }
      } else {
        dataset.clinical.push_back(validate_case(record));
        if (!ids.insert(dataset.clinical.back().id).second) {
          throw Error("ParseError", "duplicate id '" + dataset.clinical.back().id + "'");
        }
      }
    } catch (const Error& e) {
      throw Error(e.kind() == "ParseError" ? "ParseError" : e.kind(),
                  "record " + std::to_string(record_index) + " in '" + path.string() +
                      "': " + e.what());
    }
  }
  if (dataset.size() == 0) {
    throw Error("EmptyDataset", "dataset file '" + path.string() + "' has no records");
  }
  return dataset;
}

std::vector<std::size_t> sample_indices(std::size_t total, std::size_t n, std::uint64_t seed) {
  if (n < 1 || n > total) {
    throw Error("SampleTooLarge", "cannot sample " + std::to_string(n) + " of " +
                                      std::to_string(total) + " entries");
  }
  std::vector<std::size_t> indices(total);
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = i + static_cast<std::size_t>(bounded(rng, total - i));
    std::swap(indices[i], indices[j]);
  }
  indices.resize(n);
  std::sort(indices.begin(), indices.end());  // original dataset order
  return indices;
}

Dataset sample(const Dataset& dataset, std::size_t n, std::uint64_t seed) {
  auto indices = sample_indices(dataset.size(), n, seed);
  Dataset out;
  out.kind = dataset.kind;
  out.name = dataset.name;
  for (std::size_t index : indices) {
    if (dataset.kind == DatasetKind::Mcq) {
      out.mcq.push_back(dataset.mcq[index]);
    } else {
      out.clinical.push_back(dataset.clinical[index]);
    }
  }
  return out;
}

FoldPlan split_folds(std::span<const std::string> entry_ids, std::size_t k, std::uint64_t seed) {
  if (k < 1 || entry_ids.size() < k) {
    throw Error("TooFewEntries", "cannot split " + std::to_string(entry_ids.size()) +
                                     " entries into " + std::to_string(k) + " folds");
  }
  std::vector<std::string> shuffled(entry_ids.begin(), entry_ids.end());
  std::mt19937_64 rng(seed);
  for (std::size_t i = shuffled.size(); i > 1; --i) {
    std::swap(shuffled[i - 1], shuffled[bounded(rng, i)]);
  }

  FoldPlan plan;
  plan.seed = seed;
  const std::size_t base = shuffled.size() / k;
  const std::size_t extra = shuffled.size() % k;  // first `extra` folds get one more
  std::size_t cursor = 0;
  for (std::size_t f = 0; f < k; ++f) {
    std::size_t size = base + (f < extra ? 1 : 0);
    plan.folds.emplace_back(shuffled.begin() + cursor, shuffled.begin() + cursor + size);
    cursor += size;
  }
  return plan;
}

Aggregate aggregate(std::span<const double> fold_accuracies,
                    std::span<const double> entry_runtimes) {
  if (fold_accuracies.empty()) {
    throw Error("ConfigError", "aggregate needs at least one fold accuracy");
  }
  Aggregate out;
  bool all_equal = std::all_of(fold_accuracies.begin(), fold_accuracies.end(),
                               [&](double v) { return v == fold_accuracies.front(); });
  if (all_equal) {
    out.mean_accuracy = fold_accuracies.front();
    out.std_accuracy = 0.0;
  } else {
    double sum = std::accumulate(fold_accuracies.begin(), fold_accuracies.end(), 0.0);
    out.mean_accuracy = sum / static_cast<double>(fold_accuracies.size());
    double ss = 0.0;
    for (double v : fold_accuracies) {
      ss += (v - out.mean_accuracy) * (v - out.mean_accuracy);
    }
    out.std_accuracy = std::sqrt(ss / static_cast<double>(fold_accuracies.size() - 1));
  }
  if (!entry_runtimes.empty()) {
    out.mean_runtime_seconds =
        std::accumulate(entry_runtimes.begin(), entry_runtimes.end(), 0.0) /
        static_cast<double>(entry_runtimes.size());
  }
  return out;
}

namespace {

struct EntryOutcome {
  Verdict verdict = Verdict::Incorrect;
  double runtime_seconds = 0.0;
  bool failed = false;
  std::string failure_reason;
  Transcript transcript;
};

EntryOutcome run_one(PipelineKind pipeline, const Dataset& dataset, std::size_t index,
                     const backend::BackendRegistry& registry, const backend::RouteConfig& route,
                     const EvalOptions& options) {
  EntryOutcome outcome;
  auto clock = options.clock;
  const double start = clock->now();
  try {
    switch (pipeline) {
      case PipelineKind::Cod: {
        auto result = cod::diagnose(dataset.clinical[index], registry, route, clock);
        outcome.verdict = result.verdict;
        outcome.transcript = std::move(result.transcript);
        break;
      }
      case PipelineKind::MedAgents: {
        auto result =
            medagents::run_medagents(dataset.mcq[index], registry, route, clock, options.max_iters);
        outcome.verdict = result.verdict;
        outcome.transcript = std::move(result.transcript);
        break;
      }
      case PipelineKind::AgentClinic: {
        auto result = agentclinic::run_encounter(dataset.clinical[index], registry, route, clock,
                                                 options.max_turns);
        outcome.verdict = result.verdict;
        outcome.failed = result.failed;
        outcome.failure_reason = result.failure_reason;
        outcome.transcript = std::move(result.transcript);
        break;
      }
    }
  } catch (const Error& e) {
    outcome.verdict = Verdict::Incorrect;
    outcome.failed = true;
    outcome.failure_reason = std::string(e.kind()) + ": " + e.what();
    outcome.transcript.entry_id = dataset.entry_id(index);
  }
  if (clock->is_virtual()) {
    // Schedule-independent: charge the entry its own calls only.
    outcome.runtime_seconds = 0.0;
    for (const auto& event : outcome.transcript.events) {
      outcome.runtime_seconds += event.latency_seconds;
    }
  } else {
    outcome.runtime_seconds = clock->now() - start;
  }
  return outcome;
}

}  // namespace

EvalReport evaluate(PipelineKind pipeline, const Dataset& dataset,
                    const backend::BackendRegistry& registry, const backend::RouteConfig& route,
                    const EvalOptions& options) {
  const bool mcq_pipeline = pipeline == PipelineKind::MedAgents;
  if (mcq_pipeline != (dataset.kind == DatasetKind::Mcq)) {
    throw Error("ConfigError", std::string("pipeline '") + std::string(to_string(pipeline)) +
                                   "' does not accept " +
                                   std::string(to_string(dataset.kind)) + " datasets");
  }
  if (options.workers < 1) throw Error("ConfigError", "workers must be >= 1");

  EvalOptions opts = options;
  if (!opts.clock) opts.clock = std::make_shared<backend::SystemClock>();

  const std::size_t n = dataset.size();
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = dataset.entry_id(i);
  FoldPlan plan = split_folds(ids, opts.k_folds, opts.fold_seed);

  std::vector<EntryOutcome> outcomes(n);
  if (opts.workers == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      outcomes[i] = run_one(pipeline, dataset, i, registry, route, opts);
    }
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        outcomes[i] = run_one(pipeline, dataset, i, registry, route, opts);
      }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < opts.workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  EvalReport report;
  report.pipeline = std::string(to_string(pipeline));
  report.route_name = route.name;
  report.dataset_name = dataset.name;
  report.entries.resize(n);
  std::size_t correct_total = 0;
  std::vector<double> runtimes(n);
  for (std::size_t i = 0; i < n; ++i) {
    EntryRecord& record = report.entries[i];
    record.id = ids[i];
    record.verdict = outcomes[i].verdict;
    record.runtime_seconds = outcomes[i].runtime_seconds;
    record.failed = outcomes[i].failed;
    record.failure_reason = outcomes[i].failure_reason;
    runtimes[i] = record.runtime_seconds;
    if (record.verdict == Verdict::Correct) ++correct_total;
    if (record.failed) ++report.failure_count;
    if (!opts.transcript_dir.empty()) {
      Transcript transcript = std::move(outcomes[i].transcript);
      if (transcript.entry_id.empty()) transcript.entry_id = ids[i];
      record.transcript_path =
          persist_transcript(transcript, opts.transcript_dir, dataset.name, report.pipeline)
              .string();
    }
  }

  std::map<std::string, Verdict> verdict_by_id;
  for (const auto& record : report.entries) verdict_by_id[record.id] = record.verdict;
  for (const auto& fold : plan.folds) {
    std::size_t correct = 0;
    for (const auto& id : fold) {
      if (verdict_by_id.at(id) == Verdict::Correct) ++correct;
    }
    report.fold_accuracies.push_back(100.0 * static_cast<double>(correct) /
                                     static_cast<double>(fold.size()));
  }

  Aggregate agg = aggregate(report.fold_accuracies, runtimes);
  report.mean_accuracy = agg.mean_accuracy;
  report.std_accuracy = agg.std_accuracy;
  report.mean_runtime_seconds = agg.mean_runtime_seconds;
  report.overall_accuracy = 100.0 * static_cast<double>(correct_total) / static_cast<double>(n);

  // With equal-sized folds the mean of fold means must equal overall accuracy.
  if (n % opts.k_folds == 0 &&
      std::abs(report.mean_accuracy - report.overall_accuracy) > 1e-9) {
    throw Error("ConfigError", "fold-mean accuracy diverged from overall accuracy");
  }
  return report;
}

std::string format_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
  return buf;
}

std::string format_full(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

std::string format_accuracy_cell(double mean, double std) {
  return format_fixed(mean, 2) + " ± " + format_fixed(std, 2);
}

namespace {

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

RenderedTable emit_table(std::span<const EvalReport> reports) {
  // Column order: datasets in order of first appearance; rows likewise.
  std::vector<std::string> datasets;
  std::vector<std::string> rows;
  std::map<std::pair<std::string, std::string>, const EvalReport*> cells;
  for (const auto& report : reports) {
    if (std::find(datasets.begin(), datasets.end(), report.dataset_name) == datasets.end()) {
      datasets.push_back(report.dataset_name);
    }
    if (std::find(rows.begin(), rows.end(), report.route_name) == rows.end()) {
      rows.push_back(report.route_name);
    }
    cells[{report.route_name, report.dataset_name}] = &report;
  }

  RenderedTable out;

  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header{"Backbone"};
  for (const auto& dataset : datasets) {
    header.push_back(dataset + " Accuracy(%)");
    header.push_back(dataset + " Runtime(s)");
  }
  grid.push_back(header);
  for (const auto& row : rows) {
    std::vector<std::string> line{row};
    for (const auto& dataset : datasets) {
      auto it = cells.find({row, dataset});
      if (it == cells.end()) {
        line.push_back("-");
        line.push_back("-");
      } else {
        line.push_back(format_accuracy_cell(it->second->mean_accuracy, it->second->std_accuracy));
        line.push_back(format_fixed(it->second->mean_runtime_seconds, 2));
      }
    }
    grid.push_back(std::move(line));
  }

  std::vector<std::size_t> widths(grid.front().size(), 0);
  for (const auto& line : grid) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      // Count display width, not bytes ("±" is two bytes, one column).
      std::size_t width = 0;
      for (char ch : line[c]) {
        if ((static_cast<unsigned char>(ch) & 0xC0) != 0x80) ++width;
      }
      widths[c] = std::max(widths[c], width);
    }
  }
  for (const auto& line : grid) {
    std::string rendered;
    for (std::size_t c = 0; c < line.size(); ++c) {
      std::size_t width = 0;
      for (char ch : line[c]) {
        if ((static_cast<unsigned char>(ch) & 0xC0) != 0x80) ++width;
      }
      rendered += line[c];
      if (c + 1 < line.size()) rendered.append(widths[c] - width + 2, ' ');
    }
    while (!rendered.empty() && rendered.back() == ' ') rendered.pop_back();
    out.text += rendered;
    out.text += '\n';
  }

  out.csv = "pipeline,route,dataset,mean_accuracy,std_accuracy,mean_runtime_seconds,"
            "fold_accuracies,entries,failures,std_convention\n";
  for (const auto& report : reports) {
    std::string folds;
    for (std::size_t f = 0; f < report.fold_accuracies.size(); ++f) {
      if (f > 0) folds += ';';
      folds += format_full(report.fold_accuracies[f]);
    }
    out.csv += csv_escape(report.pipeline) + ',' + csv_escape(report.route_name) + ',' +
               csv_escape(report.dataset_name) + ',' + format_full(report.mean_accuracy) + ',' +
               format_full(report.std_accuracy) + ',' +
               format_full(report.mean_runtime_seconds) + ',' + csv_escape(folds) + ',' +
               std::to_string(report.entries.size()) + ',' +
               std::to_string(report.failure_count) + ',' + report.std_convention + '\n';
  }
  return out;
}

std::string entries_csv(const EvalReport& report, const FoldPlan& plan) {
  std::map<std::string, std::size_t> fold_of;
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    for (const auto& id : plan.folds[f]) fold_of[id] = f;
  }
  std::string out = "id,fold,verdict,runtime_seconds,failed,failure_reason,transcript_path\n";
  for (const auto& record : report.entries) {
    out += csv_escape(record.id) + ',' + std::to_string(fold_of.at(record.id)) + ',' +
           std::string(to_string(record.verdict)) + ',' + format_full(record.runtime_seconds) +
           ',' + (record.failed ? "true" : "false") + ',' + csv_escape(record.failure_reason) +
           ',' + csv_escape(record.transcript_path) + '\n';
  }
  return out;
}

std::filesystem::path persist_transcript(const Transcript& transcript,
                                         const std::filesystem::path& dir,
                                         std::string_view dataset, std::string_view pipeline) {
  namespace fs = std::filesystem;
  fs::path target_dir =
      dir / text::sanitize_filename(dataset) / text::sanitize_filename(pipeline);
  std::error_code ec;
  fs::create_directories(target_dir, ec);
  if (ec) {
    throw Error("IoError", "cannot create '" + target_dir.string() + "': " + ec.message());
  }
  fs::path target = target_dir / (text::sanitize_filename(transcript.entry_id) + ".jsonl");
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("IoError", "cannot write '" + tmp.string() + "'");
    for (const auto& event : transcript.events) {
      nlohmann::ordered_json line;
      line["role"] = event.role;
      line["text"] = event.text;
      line["backend_name"] = event.backend_name;
      line["latency_seconds"] = event.latency_seconds;
      out << line.dump() << '\n';
    }
  }
  fs::rename(tmp, target, ec);
  if (ec) {
    throw Error("IoError", "cannot move transcript into place: " + ec.message());
  }
  return target;
}

Transcript load_transcript(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("IoError", "cannot open transcript '" + path.string() + "'");
  Transcript transcript;
  transcript.entry_id = path.stem().string();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    ++line_no;
    nlohmann::json event = nlohmann::json::parse(line, nullptr, false);
    if (event.is_discarded() || !event.is_object() || !event.contains("role") ||
        !event.contains("text") || !event.contains("backend_name") ||
        !event.contains("latency_seconds")) {
      throw Error("ParseError", "transcript '" + path.string() + "' line " +
                                    std::to_string(line_no) + " is not a valid event");
    }
    transcript.events.push_back({event["role"].get<std::string>(),
                                 event["text"].get<std::string>(),
                                 event["backend_name"].get<std::string>(),
                                 event["latency_seconds"].get<double>()});
  }
  if (transcript.events.empty()) {
    throw Error("ParseError", "transcript '" + path.string() + "' is empty");
  }
  return transcript;
}

}  // namespace medorch::evalkit
