#include "medorch/cod.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <random>

#include "medorch/textutil.hpp"

namespace medorch::cod {

namespace {

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }

// Deterministic bounded integer from the engine, independent of the standard
// library's distribution implementation.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

}  // namespace

std::string option_label(std::size_t index) {
  std::string label;
  std::size_t n = index;
  for (;;) {
    label.insert(label.begin(), static_cast<char>('A' + n % 26));
    if (n < 26) break;
    n = n / 26 - 1;
  }
  return label;
}

std::optional<std::size_t> parse_choice(std::string_view reply,
                                        std::span<const std::string> option_names,
                                        std::span<const std::string> labels) {
  if (labels.empty()) return std::nullopt;

  // (1) first standalone uppercase-letter token equal to a label.
  std::size_t i = 0;
  while (i < reply.size()) {
    if (!is_upper(reply[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < reply.size() && is_upper(reply[j])) ++j;
    bool bounded_left = i == 0 || !is_alnum(reply[i - 1]);
    bool bounded_right = j == reply.size() || !is_alnum(reply[j]);
    if (bounded_left && bounded_right) {
      std::string_view token = reply.substr(i, j - i);
      for (std::size_t k = 0; k < labels.size(); ++k) {
        if (labels[k] == token) return k;
      }
    }
    i = j + 1;
  }

  // (2) longest case-insensitive option-name match.
  std::optional<std::size_t> best;
  std::size_t best_len = 0;
  for (std::size_t k = 0; k < option_names.size(); ++k) {
    const std::string& name = option_names[k];
    if (name.empty()) continue;
    if (text::contains_ci(reply, name) && name.size() > best_len) {
      best = k;
      best_len = name.size();
    }
  }
  return best;
}

std::optional<OptionId> parse_choice_mcq(std::string_view reply, const McqItem& item) {
  std::vector<std::string> names;
  std::vector<std::string> labels;
  names.reserve(item.options.size());
  labels.reserve(item.options.size());
  for (const auto& [letter, body] : item.options) {
    labels.push_back(letter.str());
    names.push_back(body);
  }
  auto index = parse_choice(reply, names, labels);
  if (!index) return std::nullopt;
  return item.options[*index].first;
}

RankingPrompt build_ranking_prompt(const ClinicalCase& kase,
                                   std::optional<std::uint64_t> shuffle_seed) {
  if (kase.candidates.empty()) {
    throw Error("EmptyCandidatePool", "case '" + kase.id + "' has no candidate diseases");
  }

  RankingPrompt prompt;
  prompt.candidate_order.resize(kase.candidates.size());
  std::iota(prompt.candidate_order.begin(), prompt.candidate_order.end(), std::size_t{0});
  if (shuffle_seed) {
    std::mt19937_64 rng(*shuffle_seed);
    for (std::size_t i = prompt.candidate_order.size(); i > 1; --i) {
      std::swap(prompt.candidate_order[i - 1], prompt.candidate_order[bounded(rng, i)]);
    }
  }

  std::string body;
  body += "Patient symptoms:\n";
  body += kase.explicit_symptoms.empty() ? kase.patient_profile : kase.explicit_symptoms;
  body += "\n\nCandidate diseases:\n";
  for (std::size_t pos = 0; pos < prompt.candidate_order.size(); ++pos) {
    const DiseaseCandidate& cand = kase.candidates[prompt.candidate_order[pos]];
    prompt.labels.push_back(option_label(pos));
    body += prompt.labels.back();
    body += ") ";
    body += cand.name;
    if (!cand.description.empty()) {
      body += " — ";
      body += cand.description;
    }
    body += '\n';
  }
  body +=
      "\nRank the candidate diseases by how well they explain the symptoms and "
      "answer with the single letter of the most likely disease.";

  prompt.request = backend::ChatRequest::single_user(std::move(body), "rank");
  return prompt;
}

CodResult diagnose(const ClinicalCase& kase, const backend::BackendRegistry& registry,
                   const backend::RouteConfig& route, std::shared_ptr<backend::Clock> clock,
                   std::optional<std::uint64_t> shuffle_seed) {
  backend::Session session(registry, route, std::move(clock), kase.id);
  CodResult result;

  if (kase.candidates.size() == 1) {
    result.chosen = kase.candidates.front().name;
    session.note("rank", "single candidate '" + *result.chosen + "' chosen without a call");
  } else {
    RankingPrompt prompt = build_ranking_prompt(kase, shuffle_seed);
    backend::ChatResponse response = session.call("cod.rank", "rank", prompt.request);
    result.raw_response = response.text;

    std::vector<std::string> names;
    names.reserve(prompt.candidate_order.size());
    for (std::size_t index : prompt.candidate_order) {
      names.push_back(kase.candidates[index].name);
    }
    auto pick = parse_choice(response.text, names, prompt.labels);
    if (pick) {
      result.chosen = names[*pick];
    } else {
      session.note("system", "unparseable ranking reply; recorded as incorrect");
    }
  }

  if (result.chosen &&
      text::normalize_label(*result.chosen) == text::normalize_label(kase.correct_diagnosis)) {
    result.verdict = Verdict::Correct;
  }
  result.call_count = session.total_calls();
  result.transcript = std::move(session.transcript());
  for (const auto& event : result.transcript.events) {
    result.latency_seconds += event.latency_seconds;
  }
  return result;
}

}  // namespace medorch::cod
