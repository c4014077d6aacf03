#pragma once

#include <compare>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace medorch {

/// Error with a machine-checkable kind ("MissingField", "Timeout", ...)
/// alongside the human message.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

/// A lettered answer option, A through E.
struct OptionId {
  char letter = 'A';

  static constexpr char kMinLetter = 'A';
  static constexpr char kMaxLetter = 'E';

  static bool is_valid(char c) { return c >= kMinLetter && c <= kMaxLetter; }
  static std::optional<OptionId> parse(std::string_view token);

  std::size_t index() const { return static_cast<std::size_t>(letter - kMinLetter); }
  std::string str() const { return std::string(1, letter); }

  auto operator<=>(const OptionId&) const = default;
};

enum class Verdict { Correct, Incorrect };

inline std::string_view to_string(Verdict v) {
  return v == Verdict::Correct ? "CORRECT" : "INCORRECT";
}

/// A multiple-choice clinical question with a gold answer.
struct McqItem {
  std::string id;
  std::string question;
  std::vector<std::pair<OptionId, std::string>> options;  // contiguous from A
  OptionId answer;

  const std::string& option_text(OptionId id) const;
};

struct DiseaseCandidate {
  std::string name;
  std::string description;
};

/// A clinical encounter case: what the patient knows, what the measurement
/// agent can report, and the gold diagnosis (never shown to the patient).
struct ClinicalCase {
  std::string id;
  std::string patient_profile;
  std::string explicit_symptoms;
  std::vector<DiseaseCandidate> candidates;                 // may be empty
  std::vector<std::pair<std::string, std::string>> tests;   // name -> result
  std::string correct_diagnosis;

  /// Stored result for a test name, matched after normalization
  /// (case-fold, '_'/'-'/space collapsed).
  std::optional<std::string> lookup_test(std::string_view name) const;
};

struct TranscriptEvent {
  std::string role;
  std::string text;
  std::string backend_name;
  double latency_seconds = 0.0;

  bool operator==(const TranscriptEvent&) const = default;
};

/// Request text as it was sent, kept for leakage assertions. Not serialized.
struct PromptRecord {
  std::string role;
  std::string text;
};

struct Transcript {
  std::string entry_id;
  std::vector<TranscriptEvent> events;
  std::vector<PromptRecord> prompts;
};

/// Validate a raw MCQ record. Throws Error with kind MissingField,
/// UnknownAnswerLetter or NonContiguousOptions; messages name the item id
/// and offending field.
McqItem validate_mcq(const nlohmann::json& record);

/// Validate a raw clinical-case record. Throws Error with kind MissingField,
/// DiagnosisLeakage or DuplicateTest.
ClinicalCase validate_case(const nlohmann::json& record);

}  // namespace medorch
