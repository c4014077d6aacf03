#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "medorch/backend.hpp"
#include "medorch/domain.hpp"

namespace testsupport {

namespace mb = medorch::backend;

/// Self-deleting temp directory for fixture files and run outputs.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("medorch_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path file(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Counting decorator: the independent call-accounting oracle.
class CountingBackend : public mb::ChatBackend {
 public:
  CountingBackend(std::string name, std::shared_ptr<mb::ChatBackend> inner)
      : mb::ChatBackend(std::move(name), 0, 0.0, std::make_shared<mb::SystemClock>()),
        inner_(std::move(inner)) {}

  int calls() const { return calls_.load(); }

 protected:
  std::string send_once(const mb::ChatRequest& request) override {
    calls_.fetch_add(1);
    return inner_->complete(request).text;
  }

 private:
  std::shared_ptr<mb::ChatBackend> inner_;
  std::atomic<int> calls_{0};
};

inline std::shared_ptr<mb::ScriptedBackend> scripted(
    std::string name, std::vector<mb::ScriptRule> rules,
    std::shared_ptr<mb::Clock> clock = nullptr, double per_call_latency = 0.0,
    int retry_limit = 0) {
  return std::make_shared<mb::ScriptedBackend>(std::move(name), std::move(rules),
                                               std::move(clock), per_call_latency, retry_limit,
                                               0.0);
}

inline mb::ScriptRule reply_rule(std::string reply) { return {std::nullopt, std::move(reply)}; }

inline mb::ScriptRule sticky_rule(std::string reply) {
  return {std::nullopt, std::move(reply), true, false};
}

inline mb::ScriptRule match_rule(std::string match, std::string reply, bool sticky = false) {
  return {std::move(match), std::move(reply), sticky, false};
}

inline mb::ScriptRule fail_rule() { return {std::nullopt, "", false, true}; }

inline std::vector<mb::ScriptRule> repeat_rule(std::string reply, int n) {
  std::vector<mb::ScriptRule> rules;
  for (int i = 0; i < n; ++i) rules.push_back(reply_rule(reply));
  return rules;
}

/// Uniform route: every stage goes to one backend.
inline mb::RouteConfig uniform_route(std::string backend_name, std::string name = "test") {
  return {std::move(name), std::move(backend_name), {}};
}

// ---- fixture corpora -------------------------------------------------------

inline nlohmann::json mcq_record(const std::string& id, const std::string& question,
                                 const std::vector<std::string>& options,
                                 const std::string& answer) {
  nlohmann::json record;
  record["id"] = id;
  record["question"] = question;
  nlohmann::json opts = nlohmann::json::object();
  for (std::size_t i = 0; i < options.size(); ++i) {
    opts[std::string(1, static_cast<char>('A' + i))] = options[i];
  }
  record["options"] = opts;
  record["answer"] = answer;
  return record;
}

inline nlohmann::json case_record(
    const std::string& id, const std::string& profile, const std::string& symptoms,
    const std::vector<std::pair<std::string, std::string>>& candidates,
    const std::vector<std::pair<std::string, std::string>>& tests, const std::string& gold) {
  nlohmann::json record;
  record["id"] = id;
  record["patient_profile"] = profile;
  record["explicit_symptoms"] = symptoms;
  auto cands = nlohmann::json::array();
  for (const auto& [name, description] : candidates) {
    cands.push_back({{"name", name}, {"description", description}});
  }
  record["candidates"] = cands;
  auto tst = nlohmann::json::object();
  for (const auto& [name, result] : tests) tst[name] = result;
  record["tests"] = tst;
  record["correct_diagnosis"] = gold;
  return record;
}

inline void write_jsonl(const std::filesystem::path& path,
                        const std::vector<nlohmann::json>& records) {
  std::ofstream out(path);
  for (const auto& record : records) out << record.dump() << "\n";
}

/// Disease-ish names built from word lists; deterministic per seed.
inline std::string fuzz_name(std::mt19937_64& rng) {
  static const char* first[] = {"Acute",   "Chronic", "Atypical", "Primary",
                                "Relapsing", "Nodular", "Diffuse",  "Focal"};
  static const char* second[] = {"Bursitis",  "Nephritis", "Dermatitis", "Myelitis",
                                 "Carditis",  "Synovitis", "Colitis",    "Pleuritis"};
  static const char* organ[] = {"Renal",   "Hepatic", "Cardiac", "Pulmonary",
                                "Gastric", "Neural",  "Dermal",  "Ocular"};
  return std::string(first[rng() % 8]) + " " + organ[rng() % 8] + " " + second[rng() % 8];
}

/// n validated-by-construction clinical cases with >= 2 candidates each;
/// the gold candidate sits at position gold_pos (clamped to pool size).
inline std::vector<nlohmann::json> fuzz_cases(int n, std::uint64_t seed,
                                              std::size_t gold_pos = 0) {
  std::mt19937_64 rng(seed);
  std::vector<nlohmann::json> records;
  for (int i = 0; i < n; ++i) {
    std::size_t pool = 2 + rng() % 4;
    std::vector<std::pair<std::string, std::string>> candidates;
    std::set<std::string> used;
    while (candidates.size() < pool) {
      std::string name = fuzz_name(rng);
      if (!used.insert(name).second) continue;
      candidates.emplace_back(name, "presents with pattern " + std::to_string(rng() % 1000));
    }
    std::size_t g = std::min(gold_pos, pool - 1);
    std::string gold = candidates[g].first;
    std::string profile = "patient id" + std::to_string(i) + " reports marker-" +
                          std::to_string(rng() % 100000) + " complaints since last week";
    std::string symptoms = "localized discomfort, pattern " + std::to_string(rng() % 1000);
    std::vector<std::pair<std::string, std::string>> tests = {
        {"Basic_Panel", "NORMAL READINGS"}};
    records.push_back(
        case_record("case-" + std::to_string(i), profile, symptoms, candidates, tests, gold));
  }
  return records;
}

/// n MCQ items, 4 options, deterministic answer letters.
inline std::vector<nlohmann::json> fuzz_mcq(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<nlohmann::json> records;
  for (int i = 0; i < n; ++i) {
    std::vector<std::string> options;
    for (int o = 0; o < 4; ++o) options.push_back(fuzz_name(rng));
    std::string answer(1, static_cast<char>('A' + rng() % 4));
    records.push_back(mcq_record("q-" + std::to_string(i),
                                 "question stem token-" + std::to_string(rng() % 100000) +
                                     " about a clinical presentation",
                                 options, answer));
  }
  return records;
}

}  // namespace testsupport
