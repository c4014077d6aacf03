#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "medorch/backend.hpp"
#include "medorch/domain.hpp"

namespace medorch::medagents {

inline constexpr int kExpertCount = 5;
inline constexpr int kDefaultMaxIters = 3;

struct ExpertRole {
  std::string name;
  std::string description;

  bool operator==(const ExpertRole&) const = default;
};

struct VoteRound {
  int round_index = 1;  // 1-based
  std::vector<std::pair<ExpertRole, bool>> votes;  // recruitment order, true = yes
  std::optional<ExpertRole> refiner;  // present iff any "no"

  bool unanimous_yes() const;
};

struct MedAgentsResult {
  std::vector<ExpertRole> experts;
  std::vector<std::pair<ExpertRole, std::string>> analyses;  // recruitment order
  std::string report;
  std::vector<VoteRound> vote_history;
  std::optional<OptionId> answer;  // absent when the decision was unparseable
  Verdict verdict = Verdict::Incorrect;
  int call_count = 0;
  Transcript transcript;
};

/// Split a recruitment reply (one role per line, or a single delimited list)
/// into roles, case-insensitively de-duplicated, order preserved.
/// "Name: description" / "Name - description" pieces keep the description.
std::vector<ExpertRole> parse_expert_list(std::string_view reply);

/// Stage 1: exactly five distinct roles from one call, backfilled by at most
/// one re-prompt. Throws ExpertParseFailure after both attempts fall short.
std::vector<ExpertRole> gather_experts(const McqItem& item, backend::Session& session);

/// Stage 2: one independent analysis per expert; experts do not see each
/// other's analyses.
std::string propose_analysis(const ExpertRole& role, const McqItem& item,
                             backend::Session& session);

/// Stage 3: aggregate all five labeled analyses into one tentative report.
std::string summarize(const std::vector<std::pair<ExpertRole, std::string>>& analyses,
                      const McqItem& item, backend::Session& session);

struct ConsultOutcome {
  std::string report;
  std::vector<VoteRound> rounds;
};

/// Stage 4: vote-and-refine until unanimity or max_iters. Votes parse
/// leniently (leading yes/no token); anything else counts as "no" and is
/// flagged in the transcript. The first dissenting expert in recruitment
/// order refines the report.
ConsultOutcome consult(std::string report, const std::vector<ExpertRole>& experts,
                       const McqItem& item, backend::Session& session, int max_iters);

/// Stage 5: one call, answer parsed with the shared choice parser.
/// nullopt = unparseable (recorded as incorrect by the caller).
std::optional<OptionId> decide(const McqItem& item, const std::string& report,
                               backend::Session& session);

/// All five stages in order. call_count = 1(+re-prompt) + 5 + 1 +
/// sum over rounds of (5 + 1 if refined) + 1.
MedAgentsResult run_medagents(const McqItem& item, const backend::BackendRegistry& registry,
                              const backend::RouteConfig& route,
                              std::shared_ptr<backend::Clock> clock,
                              int max_iters = kDefaultMaxIters);

}  // namespace medorch::medagents
