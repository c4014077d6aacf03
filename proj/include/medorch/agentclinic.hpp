#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "medorch/backend.hpp"
#include "medorch/domain.hpp"

namespace medorch::agentclinic {

inline constexpr int kDefaultMaxTurns = 20;
inline constexpr std::string_view kTestRequestToken = "REQUEST TEST:";
inline constexpr std::string_view kDiagnosisReadyToken = "DIAGNOSIS READY:";
inline constexpr std::string_view kNormalReadings = "RESULTS: NORMAL READINGS";

/// In-band protocol token found in a doctor utterance.
struct Marker {
  enum class Kind { None, TestRequest, DiagnosisReady };
  Kind kind = Kind::None;
  std::string payload;

  bool operator==(const Marker&) const = default;
};

/// Scan for the literal "REQUEST TEST:" / "DIAGNOSIS READY:" tokens
/// (case-sensitive; payload is the remainder of that line, trimmed; first
/// occurrence with a non-empty payload wins; DIAGNOSIS READY takes
/// precedence when both appear).
Marker detect_marker(std::string_view utterance);

struct EncounterState {
  const ClinicalCase* kase = nullptr;
  backend::Session* session = nullptr;
  int turn_index = 0;
  std::optional<std::string> pending_test;
  bool finished = false;
  std::optional<std::string> declared_diagnosis;

  Transcript& dialogue() { return session->transcript(); }
};

/// One routed doctor call: diagnostic-role system prompt + dialogue so far.
/// Appends the utterance and bumps turn_index.
std::string doctor_turn(EncounterState& state);

/// One routed patient call. The persona is built from the patient profile
/// and explicit symptoms only; the gold diagnosis and the tests map never
/// appear in it.
std::string patient_turn(EncounterState& state);

/// Resolve a requested test: a stored result answers with zero calls
/// ("RESULTS: " + stored text); an unknown test asks the measurement
/// backbone, falling back to "RESULTS: NORMAL READINGS" if it fails.
std::string measurement_turn(const std::string& test_name, const ClinicalCase& kase,
                             backend::Session& session);

/// Tier 1: normalized exact match (case-fold, trim, punctuation stripped),
/// zero calls. Tier 2: one yes/no backbone call; unparseable or failing ->
/// INCORRECT.
Verdict moderate(const std::string& declared, const std::string& gold,
                 backend::Session& session);

struct EncounterResult {
  std::optional<std::string> declared_diagnosis;
  Verdict verdict = Verdict::Incorrect;
  int turns_used = 0;
  bool failed = false;
  std::string failure_reason;
  std::map<std::string, int> role_calls;
  Transcript transcript;
};

/// Full doctor/patient/measurement loop with the moderator verdict
/// appended as the final transcript event ("The diagnosis was CORRECT").
/// When the turn budget runs out without a declaration, one forced-diagnosis
/// doctor call is issued, so doctor calls <= max_turns + 1.
EncounterResult run_encounter(const ClinicalCase& kase, const backend::BackendRegistry& registry,
                              const backend::RouteConfig& route,
                              std::shared_ptr<backend::Clock> clock,
                              int max_turns = kDefaultMaxTurns);

}  // namespace medorch::agentclinic
