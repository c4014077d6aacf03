#include "medorch/domain.hpp"

#include <set>

#include "medorch/textutil.hpp"

namespace medorch {

namespace {

using nlohmann::json;

std::string where(const json& record, const char* field) {
  std::string id = record.contains("id") && record["id"].is_string()
                       ? record["id"].get<std::string>()
                       : std::string("<no id>");
  return "item '" + id + "', field '" + field + "'";
}

const json& require_field(const json& record, const char* field) {
  if (!record.contains(field)) {
    throw Error("MissingField", "missing " + where(record, field));
  }
  return record.at(field);
}

std::string require_string(const json& record, const char* field, bool allow_empty = false) {
  const json& value = require_field(record, field);
  if (!value.is_string()) {
    throw Error("MissingField", "non-string " + where(record, field));
  }
  std::string s{text::trim(value.get<std::string>())};
  if (s.empty() && !allow_empty) {
    throw Error("MissingField", "empty " + where(record, field));
  }
  return s;
}

}  // namespace

std::optional<OptionId> OptionId::parse(std::string_view token) {
  auto t = text::trim(token);
  if (t.size() != 1 || !is_valid(t[0])) return std::nullopt;
  return OptionId{t[0]};
}

const std::string& McqItem::option_text(OptionId wanted) const {
  for (const auto& [letter, body] : options) {
    if (letter == wanted) return body;
  }
  throw Error("UnknownAnswerLetter", "option " + wanted.str() + " not present in item '" + id + "'");
}

std::optional<std::string> ClinicalCase::lookup_test(std::string_view name) const {
  const std::string wanted = text::normalize_test_name(name);
  for (const auto& [key, result] : tests) {
    if (text::normalize_test_name(key) == wanted) return result;
  }
  return std::nullopt;
}

McqItem validate_mcq(const json& record) {
  McqItem item;
  item.id = require_string(record, "id");
  item.question = require_string(record, "question");

  const json& options = require_field(record, "options");
  if (!options.is_object() || options.empty()) {
    throw Error("MissingField", "options must be a non-empty object, " + where(record, "options"));
  }
  // nlohmann objects iterate in key order, so letters come out sorted.
  for (const auto& [key, value] : options.items()) {
    auto letter = OptionId::parse(key);
    if (!letter) {
      throw Error("NonContiguousOptions",
                  "option key '" + key + "' is not a letter in A..E, " + where(record, "options"));
    }
    if (!value.is_string() || text::trim(value.get<std::string>()).empty()) {
      throw Error("MissingField", "empty text for option " + key + ", " + where(record, "options"));
    }
    item.options.emplace_back(*letter, std::string(text::trim(value.get<std::string>())));
  }
  if (item.options.size() < 2 || item.options.size() > 5) {
    throw Error("NonContiguousOptions",
                "expected 2..5 options, got " + std::to_string(item.options.size()) + ", " +
                    where(record, "options"));
  }
  for (std::size_t i = 0; i < item.options.size(); ++i) {
    char expected = static_cast<char>(OptionId::kMinLetter + i);
    if (item.options[i].first.letter != expected) {
      throw Error("NonContiguousOptions",
                  std::string("option letters must be contiguous from A; expected ") + expected +
                      " at position " + std::to_string(i) + ", " + where(record, "options"));
    }
  }

  const std::string answer = require_string(record, "answer");
  auto parsed = OptionId::parse(answer);
  if (!parsed) {
    throw Error("UnknownAnswerLetter", "answer '" + answer + "' is not a letter in A..E, " +
                                           where(record, "answer"));
  }
  item.answer = *parsed;
  bool present = false;
  for (const auto& [letter, _] : item.options) present |= (letter == item.answer);
  if (!present) {
    throw Error("UnknownAnswerLetter",
                "answer '" + answer + "' has no matching option, " + where(record, "answer"));
  }
  return item;
}

ClinicalCase validate_case(const json& record) {
  ClinicalCase c;
  c.id = require_string(record, "id");
  c.patient_profile = require_string(record, "patient_profile");
  c.explicit_symptoms = require_string(record, "explicit_symptoms", /*allow_empty=*/true);
  c.correct_diagnosis = require_string(record, "correct_diagnosis");

  if (record.contains("candidates")) {
    const json& cands = record.at("candidates");
    if (!cands.is_array()) {
      throw Error("MissingField", "candidates must be an array, " + where(record, "candidates"));
    }
    std::set<std::string> seen;
    for (const auto& entry : cands) {
      DiseaseCandidate cand;
      cand.name = require_string(entry.is_object() ? entry : json::object(), "name");
      if (entry.contains("description") && entry["description"].is_string()) {
        cand.description = std::string(text::trim(entry["description"].get<std::string>()));
      }
      if (!seen.insert(text::normalize_label(cand.name)).second) {
        throw Error("MissingField", "duplicate candidate '" + cand.name + "', " +
                                        where(record, "candidates"));
      }
      c.candidates.push_back(std::move(cand));
    }
  }

  if (record.contains("tests")) {
    const json& tests = record.at("tests");
    if (!tests.is_object()) {
      throw Error("MissingField", "tests must be an object, " + where(record, "tests"));
    }
    std::set<std::string> seen;
    for (const auto& [key, value] : tests.items()) {
      if (!value.is_string()) {
        throw Error("MissingField", "non-string result for test '" + key + "', " +
                                        where(record, "tests"));
      }
      if (!seen.insert(text::normalize_test_name(key)).second) {
        throw Error("DuplicateTest", "test '" + key + "' collides with another entry after "
                                     "name normalization, " + where(record, "tests"));
      }
      c.tests.emplace_back(key, value.get<std::string>());
    }
  }

  // The patient persona is built from these two fields; the gold label must
  // not be recoverable from either.
  if (text::contains_ci(c.patient_profile, c.correct_diagnosis)) {
    throw Error("DiagnosisLeakage", "patient_profile contains the gold diagnosis, " +
                                        where(record, "patient_profile"));
  }
  if (text::contains_ci(c.explicit_symptoms, c.correct_diagnosis)) {
    throw Error("DiagnosisLeakage", "explicit_symptoms contains the gold diagnosis, " +
                                        where(record, "explicit_symptoms"));
  }
  return c;
}

}  // namespace medorch
