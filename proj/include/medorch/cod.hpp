#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "medorch/backend.hpp"
#include "medorch/domain.hpp"

namespace medorch::cod {

inline constexpr std::string_view kRankPromptVersion = "cod-rank/1";

/// Candidate label for an enumeration position: A..Z, then AA, AB, ...
std::string option_label(std::size_t index);

/// Pick an option from a free-form model reply.
/// Precedence: (1) first standalone uppercase letter token equal to one of
/// `labels`, (2) longest case-insensitive option-name substring match,
/// (3) nothing -> nullopt. Never throws.
std::optional<std::size_t> parse_choice(std::string_view reply,
                                        std::span<const std::string> option_names,
                                        std::span<const std::string> labels);

/// MCQ convenience: labels are the item's own letters.
std::optional<OptionId> parse_choice_mcq(std::string_view reply, const McqItem& item);

struct RankingPrompt {
  backend::ChatRequest request;
  std::vector<std::size_t> candidate_order;  // prompt position -> candidate index
  std::vector<std::string> labels;
};

/// One composite user message: explicit symptoms, then every candidate as a
/// lettered "LETTER) name — description" entry in dataset order (or seeded
/// shuffle order when requested), then the single-letter instruction.
/// Throws EmptyCandidatePool.
RankingPrompt build_ranking_prompt(const ClinicalCase& kase,
                                   std::optional<std::uint64_t> shuffle_seed = std::nullopt);

struct CodResult {
  std::optional<std::string> chosen;  // candidate name, absent when unparseable
  std::string raw_response;
  Verdict verdict = Verdict::Incorrect;
  double latency_seconds = 0.0;
  int call_count = 0;
  Transcript transcript;
};

/// Rank-and-select over the candidate pool with a single routed call
/// (cod.rank). A single-candidate case short-circuits with zero calls.
CodResult diagnose(const ClinicalCase& kase, const backend::BackendRegistry& registry,
                   const backend::RouteConfig& route, std::shared_ptr<backend::Clock> clock,
                   std::optional<std::uint64_t> shuffle_seed = std::nullopt);

}  // namespace medorch::cod
