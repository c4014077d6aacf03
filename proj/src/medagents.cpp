#include "medorch/medagents.hpp"

#include <algorithm>
#include <set>

#include "medorch/cod.hpp"
#include "medorch/textutil.hpp"

namespace medorch::medagents {

namespace {

std::string options_block(const McqItem& item) {
  std::string out;
  for (const auto& [letter, body] : item.options) {
    out += letter.str();
    out += ") ";
    out += body;
    out += '\n';
  }
  return out;
}

std::string question_block(const McqItem& item) {
  return "Clinical question:\n" + item.question + "\n\nOptions:\n" + options_block(item);
}

// Strip list bullets / numbering and surrounding quotes from one piece.
std::string_view strip_decoration(std::string_view piece) {
  piece = medorch::text::trim(piece);
  while (!piece.empty() && (piece.front() == '-' || piece.front() == '*' || piece.front() == '"' ||
                            piece.front() == '\'')) {
    piece.remove_prefix(1);
    piece = medorch::text::trim(piece);
  }
  std::size_t i = 0;
  while (i < piece.size() && std::isdigit(static_cast<unsigned char>(piece[i]))) ++i;
  if (i > 0 && i < piece.size() && (piece[i] == '.' || piece[i] == ')')) {
    piece.remove_prefix(i + 1);
  }
  piece = medorch::text::trim(piece);
  while (!piece.empty() && (piece.back() == '"' || piece.back() == '\'')) {
    piece.remove_suffix(1);
    piece = medorch::text::trim(piece);
  }
  return piece;
}

ExpertRole role_from_piece(std::string_view piece) {
  piece = strip_decoration(piece);
  ExpertRole role;
  std::size_t sep = piece.find(':');
  std::size_t dash = piece.find(" - ");
  if (dash != std::string_view::npos && (sep == std::string_view::npos || dash < sep)) {
    role.name = medorch::text::trim(piece.substr(0, dash));
    role.description = medorch::text::trim(piece.substr(dash + 3));
  } else if (sep != std::string_view::npos) {
    role.name = medorch::text::trim(piece.substr(0, sep));
    role.description = medorch::text::trim(piece.substr(sep + 1));
  } else {
    role.name = piece;
  }
  return role;
}

// Leading yes/no token, case-insensitive; nullopt when neither leads.
std::optional<bool> parse_vote(std::string_view reply) {
  auto t = medorch::text::trim(reply);
  std::size_t end = 0;
  while (end < t.size() && std::isalpha(static_cast<unsigned char>(t[end]))) ++end;
  std::string token = medorch::text::to_lower(t.substr(0, end));
  if (token == "yes") return true;
  if (token == "no") return false;
  return std::nullopt;
}

void append_distinct(std::vector<ExpertRole>& roles, std::set<std::string>& seen,
                     const std::vector<ExpertRole>& parsed) {
  for (const auto& role : parsed) {
    if (static_cast<int>(roles.size()) >= kExpertCount) break;
    if (seen.insert(medorch::text::normalize_label(role.name)).second) {
      roles.push_back(role);
    }
  }
}

}  // namespace

bool VoteRound::unanimous_yes() const {
  return std::all_of(votes.begin(), votes.end(), [](const auto& v) { return v.second; });
}

std::vector<ExpertRole> parse_expert_list(std::string_view reply) {
  std::vector<std::string> pieces;
  auto lines = text::split_lines(reply);
  std::erase_if(lines, [](const std::string& l) { return text::trim(l).empty(); });
  if (lines.size() >= 2) {
    pieces = std::move(lines);
  } else {
    pieces = text::split_any(reply, ",;\n");
  }

  std::vector<ExpertRole> roles;
  std::set<std::string> seen;
  for (const auto& piece : pieces) {
    ExpertRole role = role_from_piece(piece);
    if (role.name.empty()) continue;
    if (seen.insert(text::normalize_label(role.name)).second) {
      roles.push_back(std::move(role));
    }
  }
  return roles;
}

std::vector<ExpertRole> gather_experts(const McqItem& item, backend::Session& session) {
  backend::ChatRequest request = backend::ChatRequest::single_user(
      question_block(item) +
          "\nCreate five medical experts from distinct specialties suited to this question. "
          "Reply with one specialty per line, as \"Name: one-line description\".",
      "gather");

  std::vector<ExpertRole> roles;
  std::set<std::string> seen;
  append_distinct(roles, seen, parse_expert_list(session.call("medagents.gather", "gather", request).text));
  if (static_cast<int>(roles.size()) < kExpertCount) {
    std::string have;
    for (const auto& role : roles) {
      if (!have.empty()) have += ", ";
      have += role.name;
    }
    backend::ChatRequest reprompt = backend::ChatRequest::single_user(
        question_block(item) + "\nThe expert panel so far: " + (have.empty() ? "(none)" : have) +
            ". Name additional distinct specialties to bring the panel to five. "
            "Reply with one specialty per line, as \"Name: one-line description\".",
        "gather");
    append_distinct(roles, seen,
                    parse_expert_list(session.call("medagents.gather", "gather", reprompt).text));
  }
  if (static_cast<int>(roles.size()) < kExpertCount) {
    throw Error("ExpertParseFailure",
                "could not assemble five distinct experts for item '" + item.id + "' (got " +
                    std::to_string(roles.size()) + " after re-prompt)");
  }
  roles.resize(kExpertCount);
  return roles;
}

std::string propose_analysis(const ExpertRole& role, const McqItem& item,
                             backend::Session& session) {
  std::string body = "You are a medical expert in " + role.name + ".";
  if (!role.description.empty()) body += " " + role.description + ".";
  body += "\n\n" + question_block(item) +
          "\nFrom your specialty's perspective, analyze the question and state which option the "
          "evidence favors and why.";
  backend::ChatRequest request =
      backend::ChatRequest::single_user(std::move(body), "analyze:" + role.name);
  return session.call("medagents.analyze", "analyze:" + role.name, request).text;
}

std::string summarize(const std::vector<std::pair<ExpertRole, std::string>>& analyses,
                      const McqItem& item, backend::Session& session) {
  if (static_cast<int>(analyses.size()) != kExpertCount) {
    throw Error("ConfigError", "summarize expects exactly five analyses, got " +
                                   std::to_string(analyses.size()));
  }
  std::string body = question_block(item) + "\nExpert analyses:\n";
  for (const auto& [role, analysis] : analyses) {
    body += "[" + role.name + "]\n" + analysis + "\n\n";
  }
  body += "Aggregate these five analyses into one tentative summary report for the panel to vote on.";
  backend::ChatRequest request = backend::ChatRequest::single_user(std::move(body), "summarize");
  return session.call("medagents.summarize", "summarize", request).text;
}

ConsultOutcome consult(std::string report, const std::vector<ExpertRole>& experts,
                       const McqItem& item, backend::Session& session, int max_iters) {
  if (max_iters < 1) throw Error("ConfigError", "max_iters must be >= 1");
  ConsultOutcome outcome;

  for (int round = 1; round <= max_iters; ++round) {
    VoteRound votes;
    votes.round_index = round;
    for (const auto& expert : experts) {
      backend::ChatRequest request = backend::ChatRequest::single_user(
          "You are the " + expert.name + " expert on the panel.\n\n" + question_block(item) +
              "\nCurrent summary report:\n" + report +
              "\n\nDo you agree this report supports the best answer? Reply \"yes\" or \"no\", "
              "then your reasoning.",
          "vote:" + expert.name);
      std::string reply = session.call("medagents.consult", "vote:" + expert.name, request).text;
      auto vote = parse_vote(reply);
      if (!vote) {
        session.note("system",
                     "unparseable vote from " + expert.name + "; counted as no");
      }
      votes.votes.emplace_back(expert, vote.value_or(false));
    }

    if (votes.unanimous_yes()) {
      outcome.rounds.push_back(std::move(votes));
      break;
    }

    auto dissent = std::find_if(votes.votes.begin(), votes.votes.end(),
                                [](const auto& v) { return !v.second; });
    const ExpertRole refiner = dissent->first;
    votes.refiner = refiner;
    outcome.rounds.push_back(std::move(votes));

    backend::ChatRequest refine_request = backend::ChatRequest::single_user(
        "You are the " + refiner.name + " expert and you dissented from the current report.\n\n" +
            question_block(item) + "\nCurrent summary report:\n" + report +
            "\n\nRewrite the summary report to address your objection. Reply with the full "
            "revised report.",
        "refine:" + refiner.name);
    report = session.call("medagents.consult", "refine:" + refiner.name, refine_request).text;
  }

  outcome.report = std::move(report);
  return outcome;
}

std::optional<OptionId> decide(const McqItem& item, const std::string& report,
                               backend::Session& session) {
  backend::ChatRequest request = backend::ChatRequest::single_user(
      question_block(item) + "\nFinal panel report:\n" + report +
          "\n\nAnswer with the single letter of the best option.",
      "decide");
  std::string reply = session.call("medagents.decide", "decide", request).text;
  auto answer = cod::parse_choice_mcq(reply, item);
  if (!answer) {
    session.note("system", "unparseable decision reply; recorded as incorrect");
  }
  return answer;
}

MedAgentsResult run_medagents(const McqItem& item, const backend::BackendRegistry& registry,
                              const backend::RouteConfig& route,
                              std::shared_ptr<backend::Clock> clock, int max_iters) {
  backend::Session session(registry, route, std::move(clock), item.id);
  MedAgentsResult result;

  result.experts = gather_experts(item, session);
  for (const auto& expert : result.experts) {
    result.analyses.emplace_back(expert, propose_analysis(expert, item, session));
  }
  std::string report = summarize(result.analyses, item, session);
  ConsultOutcome outcome = consult(std::move(report), result.experts, item, session, max_iters);
  result.report = std::move(outcome.report);
  result.vote_history = std::move(outcome.rounds);
  result.answer = decide(item, result.report, session);
  result.verdict = (result.answer && *result.answer == item.answer) ? Verdict::Correct
                                                                    : Verdict::Incorrect;
  result.call_count = session.total_calls();
  result.transcript = std::move(session.transcript());
  return result;
}

}  // namespace medorch::medagents
