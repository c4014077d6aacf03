#include "medorch/cli.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "medorch/textutil.hpp"

namespace medorch::cli {

namespace {

using nlohmann::json;

[[noreturn]] void config_error(const std::string& field, const std::string& why) {
  throw Error("ConfigError", field + ": " + why);
}

const json& need(const json& obj, const char* field, const std::string& prefix) {
  if (!obj.contains(field)) config_error(prefix + field, "missing");
  return obj.at(field);
}

std::string need_string(const json& obj, const char* field, const std::string& prefix) {
  const json& v = need(obj, field, prefix);
  if (!v.is_string()) config_error(prefix + field, "must be a string");
  return v.get<std::string>();
}

std::uint64_t need_u64(const json& obj, const char* field, const std::string& prefix) {
  const json& v = need(obj, field, prefix);
  if (!v.is_number_unsigned() && !v.is_number_integer()) {
    config_error(prefix + field, "must be an integer");
  }
  return v.get<std::uint64_t>();
}

backend::BackendSpec parse_backend_spec(const json& obj, const std::string& prefix) {
  backend::BackendSpec spec;
  spec.name = need_string(obj, "name", prefix);
  std::string kind = need_string(obj, "kind", prefix);
  if (kind == "scripted") {
    spec.kind = backend::BackendSpec::Kind::Scripted;
  } else if (kind == "live") {
    spec.kind = backend::BackendSpec::Kind::Live;
  } else {
    config_error(prefix + "kind", "must be 'scripted' or 'live'");
  }
  if (obj.contains("retry_limit")) spec.retry_limit = obj["retry_limit"].get<int>();
  if (spec.retry_limit < 0) config_error(prefix + "retry_limit", "must be >= 0");
  if (obj.contains("backoff_seconds")) spec.backoff_seconds = obj["backoff_seconds"].get<double>();

  if (spec.kind == backend::BackendSpec::Kind::Live) {
    spec.endpoint = need_string(obj, "endpoint", prefix);
    spec.model = need_string(obj, "model", prefix);
    spec.credential_env = need_string(obj, "credential_env", prefix);
    if (obj.contains("timeout_seconds")) spec.timeout_seconds = obj["timeout_seconds"].get<double>();
    if (spec.timeout_seconds <= 0) config_error(prefix + "timeout_seconds", "must be > 0");
    if (obj.contains("temperature")) spec.temperature = obj["temperature"].get<double>();
    if (obj.contains("max_tokens")) spec.max_tokens = obj["max_tokens"].get<int>();
  } else {
    if (obj.contains("latency_seconds")) spec.latency_seconds = obj["latency_seconds"].get<double>();
    const json& script = need(obj, "script", prefix);
    if (!script.is_array()) config_error(prefix + "script", "must be an array of rules");
    for (const auto& rule_json : script) {
      backend::ScriptRule rule;
      if (rule_json.contains("match")) rule.match = rule_json["match"].get<std::string>();
      rule.reply = rule_json.value("reply", std::string{});
      rule.sticky = rule_json.value("sticky", false);
      rule.fail = rule_json.value("fail", false);
      spec.script.push_back(std::move(rule));
    }
  }
  return spec;
}

std::string verdict_trailer(const Transcript& transcript) {
  for (auto it = transcript.events.rbegin(); it != transcript.events.rend(); ++it) {
    if (it->text.rfind("The diagnosis was ", 0) == 0) return it->text;
  }
  return {};
}

std::string pretty_role(const std::string& role) {
  if (role == "doctor") return "Doctor";
  if (role == "patient") return "Patient";
  if (role == "measurement") return "Measurement";
  if (role == "moderator") return "Moderator";
  return role;
}

}  // namespace

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("ConfigError", "cannot open config file '" + path.string() + "'");
  json root = json::parse(in, nullptr, false);
  if (root.is_discarded() || !root.is_object()) {
    throw Error("ConfigError", "config file '" + path.string() + "' is not a JSON object");
  }

  RunConfig config;
  config.pipeline = evalkit::parse_pipeline_kind(need_string(root, "pipeline", ""));

  const json& dataset = need(root, "dataset", "");
  config.dataset_path = need_string(dataset, "path", "dataset.");
  config.dataset_kind = evalkit::parse_dataset_kind(need_string(dataset, "kind", "dataset."));
  config.dataset_name = dataset.contains("name") ? dataset["name"].get<std::string>()
                                                 : config.dataset_path.stem().string();

  const json& backends = need(root, "backends", "");
  if (!backends.is_array() || backends.empty()) {
    config_error("backends", "must be a non-empty array");
  }
  std::set<std::string> backend_names;
  for (std::size_t i = 0; i < backends.size(); ++i) {
    std::string prefix = "backends[" + std::to_string(i) + "].";
    config.backends.push_back(parse_backend_spec(backends[i], prefix));
    if (!backend_names.insert(config.backends.back().name).second) {
      config_error(prefix + "name", "duplicate backend name '" + config.backends.back().name + "'");
    }
  }

  const json& route = need(root, "route", "");
  config.route.name = route.value("name", std::string{});
  config.route.default_backend = need_string(route, "default", "route.");
  if (!backend_names.count(config.route.default_backend)) {
    config_error("route.default",
                 "backend '" + config.route.default_backend + "' is not defined");
  }
  if (route.contains("overrides")) {
    const json& overrides = route.at("overrides");
    if (!overrides.is_object()) config_error("route.overrides", "must be an object");
    for (const auto& [key, value] : overrides.items()) {
      if (!backend::is_route_key(key)) {
        config_error("route.overrides." + key, "unrecognized route key");
      }
      if (!value.is_string() || !backend_names.count(value.get<std::string>())) {
        config_error("route.overrides." + key,
                     "backend '" + value.dump() + "' is not defined");
      }
      config.route.overrides.emplace_back(key, value.get<std::string>());
    }
  }

  config.n_sample = need_u64(root, "n_sample", "");
  config.k_folds = need_u64(root, "k_folds", "");
  const json& seeds = need(root, "seeds", "");
  config.sample_seed = need_u64(seeds, "sample", "seeds.");
  config.fold_seed = need_u64(seeds, "fold", "seeds.");
  config.max_iters = static_cast<int>(root.value("max_iters", 3));
  config.max_turns = static_cast<int>(root.value("max_turns", 20));
  config.workers = static_cast<int>(root.value("workers", 1));
  config.output_dir = need_string(root, "output_dir", "");

  if (config.k_folds < 1) config_error("k_folds", "must be >= 1");
  if (config.n_sample < config.k_folds) config_error("n_sample", "must be >= k_folds");
  if (config.workers < 1) config_error("workers", "must be >= 1");
  if (config.max_iters < 1) config_error("max_iters", "must be >= 1");
  if (config.max_turns < 1) config_error("max_turns", "must be >= 1");
  return config;
}

int cmd_run(const std::filesystem::path& config_path, const RunOverrides& overrides,
            std::ostream& out, std::ostream& err) {
  namespace fs = std::filesystem;
  try {
    RunConfig config = load_run_config(config_path);
    if (overrides.sample_seed) config.sample_seed = *overrides.sample_seed;
    if (overrides.fold_seed) config.fold_seed = *overrides.fold_seed;
    if (overrides.workers) config.workers = *overrides.workers;
    if (overrides.output_dir) config.output_dir = *overrides.output_dir;

    // Scripted-only runs use the virtual clock so reruns are byte-identical.
    bool all_scripted = std::all_of(
        config.backends.begin(), config.backends.end(),
        [](const backend::BackendSpec& s) { return s.kind == backend::BackendSpec::Kind::Scripted; });
    std::shared_ptr<backend::Clock> clock;
    if (all_scripted) {
      clock = std::make_shared<backend::VirtualClock>();
    } else {
      clock = std::make_shared<backend::SystemClock>();
    }

    backend::BackendRegistry registry;
    for (const auto& spec : config.backends) {
      registry.add(backend::make_backend(spec, clock));
    }
    backend::validate_route(config.route, registry);

    evalkit::Dataset full = evalkit::load_dataset(config.dataset_path, config.dataset_kind);
    full.name = config.dataset_name;
    evalkit::Dataset sampled = evalkit::sample(full, config.n_sample, config.sample_seed);

    fs::create_directories(config.output_dir);

    evalkit::EvalOptions options;
    options.k_folds = config.k_folds;
    options.fold_seed = config.fold_seed;
    options.workers = config.workers;
    options.max_iters = config.max_iters;
    options.max_turns = config.max_turns;
    options.transcript_dir = config.output_dir / "transcripts";
    options.clock = clock;

    evalkit::EvalReport report =
        evalkit::evaluate(config.pipeline, sampled, registry, config.route, options);

    std::vector<std::string> ids;
    for (std::size_t i = 0; i < sampled.size(); ++i) ids.push_back(sampled.entry_id(i));
    evalkit::FoldPlan plan = evalkit::split_folds(ids, config.k_folds, config.fold_seed);

    evalkit::RenderedTable table = evalkit::emit_table({&report, 1});
    out << table.text;

    std::ofstream(config.output_dir / "table.txt") << table.text;
    std::ofstream(config.output_dir / "report.csv") << table.csv;
    std::ofstream(config.output_dir / "entries.csv") << evalkit::entries_csv(report, plan);
    {
      // Snapshot the config next to the results it produced.
      std::ifstream src(config_path, std::ios::binary);
      std::ofstream dst(config.output_dir / "config.json", std::ios::binary);
      dst << src.rdbuf();
    }

    out << "entries: " << report.entries.size() << ", failures: " << report.failure_count
        << "\n";
    return 0;
  } catch (const Error& e) {
    err << "error [" << e.kind() << "] " << e.what() << "\n";
    return 1;
  }
}

std::string render_transcript(const Transcript& transcript) {
  std::string out;
  const std::string trailer = verdict_trailer(transcript);
  for (const auto& event : transcript.events) {
    if (!trailer.empty() && event.text == trailer) continue;
    out += pretty_role(event.role);
    out += ": ";
    out += event.text;
    out += "\n\n";
  }
  if (!trailer.empty()) {
    out += trailer;
    out += '\n';
  }
  return out;
}

int cmd_replay(const std::filesystem::path& transcript_path, std::ostream& out,
               std::ostream& err) {
  try {
    Transcript transcript = evalkit::load_transcript(transcript_path);
    out << render_transcript(transcript);
    return 0;
  } catch (const Error& e) {
    err << "error [" << e.kind() << "] " << e.what() << "\n";
    return 1;
  }
}

int cmd_validate(const std::filesystem::path& dataset_path, evalkit::DatasetKind kind,
                 std::ostream& out, std::ostream& err) {
  std::ifstream in(dataset_path);
  if (!in) {
    err << "error [IoError] cannot open dataset file '" << dataset_path.string() << "'\n";
    return 1;
  }
  std::size_t total = 0;
  std::size_t invalid = 0;
  std::map<std::size_t, std::size_t> option_histogram;
  std::string line;
  std::size_t record_index = 0;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    ++record_index;
    ++total;
    nlohmann::json record = nlohmann::json::parse(line, nullptr, false);
    if (record.is_discarded()) {
      ++invalid;
      err << "record " << record_index << ": invalid JSON\n";
      continue;
    }
    try {
      if (kind == evalkit::DatasetKind::Mcq) {
        McqItem item = validate_mcq(record);
        ++option_histogram[item.options.size()];
      } else {
        validate_case(record);
      }
    } catch (const Error& e) {
      ++invalid;
      err << "record " << record_index << " [" << e.kind() << "] " << e.what() << "\n";
    }
  }
  out << total << " entries\n";
  if (kind == evalkit::DatasetKind::Mcq) {
    for (const auto& [count, freq] : option_histogram) {
      out << count << " options: " << freq << " entries\n";
    }
  } else {
    out << "leakage check: " << (invalid == 0 ? "clean" : "violations found") << "\n";
  }
  if (total == 0) {
    err << "error [EmptyDataset] no records\n";
    return 1;
  }
  out << "invalid records: " << invalid << "\n";
  return invalid == 0 ? 0 : 1;
}

}  // namespace medorch::cli
