#include "medorch/agentclinic.hpp"

#include "medorch/textutil.hpp"

namespace medorch::agentclinic {

namespace {

// First occurrence of `token` whose same-line payload is non-empty.
std::optional<std::string> find_payload(std::string_view utterance, std::string_view token) {
  std::size_t pos = 0;
  while ((pos = utterance.find(token, pos)) != std::string_view::npos) {
    std::size_t start = pos + token.size();
    std::size_t eol = utterance.find('\n', start);
    std::string_view payload = utterance.substr(
        start, eol == std::string_view::npos ? std::string_view::npos : eol - start);
    payload = text::trim(payload);
    if (!payload.empty()) return std::string(payload);
    pos = start;
  }
  return std::nullopt;
}

std::string doctor_system_prompt() {
  return std::string(
      "You are a doctor interviewing a patient to reach a diagnosis. Ask one focused question "
      "per turn. You may order a clinical test by writing a line \"") +
      std::string(kTestRequestToken) + " <test name>\". When you are confident, declare your "
      "conclusion with a line \"" + std::string(kDiagnosisReadyToken) + " <diagnosis>\".";
}

backend::ChatRequest doctor_request(const EncounterState& state, bool forced) {
  backend::ChatRequest request;
  request.system = doctor_system_prompt();
  request.turn_label = "doctor";
  for (const auto& event : state.session->transcript().events) {
    if (event.role == "doctor") {
      request.messages.push_back({backend::ChatMessage::Speaker::Assistant, event.text});
    } else if (event.role == "patient") {
      request.messages.push_back({backend::ChatMessage::Speaker::User, "Patient: " + event.text});
    } else if (event.role == "measurement") {
      request.messages.push_back(
          {backend::ChatMessage::Speaker::User, "Measurement: " + event.text});
    }
  }
  if (forced) {
    request.messages.push_back(
        {backend::ChatMessage::Speaker::User,
         std::string("The consultation is over. Based on the interaction so far, provide the "
                     "most probable diagnosis now as a line \"") +
             std::string(kDiagnosisReadyToken) + " <diagnosis>\"."});
  } else if (request.messages.empty()) {
    request.messages.push_back(
        {backend::ChatMessage::Speaker::User, "The patient has arrived. Begin the consultation."});
  }
  return request;
}

}  // namespace

Marker detect_marker(std::string_view utterance) {
  if (auto payload = find_payload(utterance, kDiagnosisReadyToken)) {
    return {Marker::Kind::DiagnosisReady, std::move(*payload)};
  }
  if (auto payload = find_payload(utterance, kTestRequestToken)) {
    return {Marker::Kind::TestRequest, std::move(*payload)};
  }
  return {};
}

std::string doctor_turn(EncounterState& state) {
  if (state.finished) {
    throw Error("ConfigError", "doctor_turn on a finished encounter");
  }
  backend::ChatResponse response =
      state.session->call("agentclinic.doctor", "doctor", doctor_request(state, false));
  ++state.turn_index;
  return response.text;
}

std::string patient_turn(EncounterState& state) {
  const ClinicalCase& kase = *state.kase;
  backend::ChatRequest request;
  request.turn_label = "patient";
  std::string persona =
      "You are a patient speaking with a doctor. Your situation: " + kase.patient_profile;
  if (!kase.explicit_symptoms.empty()) {
    persona += "\nYour current symptoms: " + kase.explicit_symptoms;
  }
  persona +=
      "\nYou do not know your diagnosis. Answer the doctor's questions truthfully from your "
      "situation, in first person, without inventing test results.";
  request.system = std::move(persona);
  for (const auto& event : state.session->transcript().events) {
    if (event.role == "doctor") {
      request.messages.push_back({backend::ChatMessage::Speaker::User, event.text});
    } else if (event.role == "patient") {
      request.messages.push_back({backend::ChatMessage::Speaker::Assistant, event.text});
    }
  }
  return state.session->call("agentclinic.patient", "patient", request).text;
}

std::string measurement_turn(const std::string& test_name, const ClinicalCase& kase,
                             backend::Session& session) {
  if (auto stored = kase.lookup_test(test_name)) {
    std::string reply = "RESULTS: " + *stored;
    session.note("measurement", reply);
    return reply;
  }
  backend::ChatRequest request = backend::ChatRequest::single_user(
      "You are the measurement agent reporting clinical test results. The requested test \"" +
          test_name + "\" has no recorded result for this patient. Reply exactly \"" +
          std::string(kNormalReadings) + "\".",
      "measurement");
  try {
    return session.call("agentclinic.measurement", "measurement", request).text;
  } catch (const backend::BackendError&) {
    std::string reply{kNormalReadings};
    session.note("measurement", reply);
    session.note("system", "measurement backend failed for unknown test '" + test_name +
                               "'; normal readings substituted");
    return reply;
  }
}

Verdict moderate(const std::string& declared, const std::string& gold,
                 backend::Session& session) {
  if (text::trim(declared).empty()) {
    throw Error("ConfigError", "moderate called with an empty declared diagnosis");
  }
  if (text::normalize_loose(declared) == text::normalize_loose(gold)) {
    session.note("moderator", "exact match for '" + declared + "'");
    return Verdict::Correct;
  }
  backend::ChatRequest request = backend::ChatRequest::single_user(
      "The doctor declared the diagnosis: \"" + declared + "\".\nThe correct diagnosis is: \"" +
          gold +
          "\".\nDo these denote the same diagnosis, even if the doctor's phrasing is slightly "
          "off? Reply \"yes\" or \"no\".",
      "moderator");
  std::string reply;
  try {
    reply = session.call("agentclinic.moderator", "moderator", request).text;
  } catch (const backend::BackendError&) {
    session.note("system", "moderator backend failed; verdict recorded as incorrect");
    return Verdict::Incorrect;
  }
  return text::starts_with_ci(text::trim(reply), "yes") ? Verdict::Correct : Verdict::Incorrect;
}

EncounterResult run_encounter(const ClinicalCase& kase, const backend::BackendRegistry& registry,
                              const backend::RouteConfig& route,
                              std::shared_ptr<backend::Clock> clock, int max_turns) {
  if (max_turns < 1) throw Error("ConfigError", "max_turns must be >= 1");

  backend::Session session(registry, route, std::move(clock), kase.id);
  EncounterState state;
  state.kase = &kase;
  state.session = &session;

  EncounterResult result;
  auto finish = [&](const std::string& declared) {
    state.declared_diagnosis = declared;
    state.finished = true;
    result.declared_diagnosis = declared;
    result.verdict = moderate(declared, kase.correct_diagnosis, session);
    session.note("moderator",
                 "The diagnosis was " + std::string(to_string(result.verdict)));
  };

  while (state.turn_index < max_turns && !state.finished) {
    std::string utterance = doctor_turn(state);
    Marker marker = detect_marker(utterance);
    switch (marker.kind) {
      case Marker::Kind::DiagnosisReady:
        finish(marker.payload);
        break;
      case Marker::Kind::TestRequest:
        state.pending_test = marker.payload;
        measurement_turn(marker.payload, kase, session);
        state.pending_test.reset();
        break;
      case Marker::Kind::None:
        patient_turn(state);
        break;
    }
  }

  if (!state.finished) {
    // Budget exhausted: force the most probable diagnosis out of the doctor.
    backend::ChatResponse response =
        session.call("agentclinic.doctor", "doctor", doctor_request(state, true));
    Marker marker = detect_marker(response.text);
    std::string declared = marker.kind == Marker::Kind::DiagnosisReady
                               ? marker.payload
                               : std::string(text::trim(response.text));
    if (declared.empty()) {
      result.failed = true;
      result.failure_reason = "forced-diagnosis reply was empty";
      result.verdict = Verdict::Incorrect;
      session.note("moderator", "The diagnosis was INCORRECT");
    } else {
      finish(declared);
    }
  }

  result.turns_used = state.turn_index;
  for (std::string_view key :
       {"agentclinic.doctor", "agentclinic.patient", "agentclinic.measurement",
        "agentclinic.moderator"}) {
    result.role_calls[std::string(key.substr(key.find('.') + 1))] = session.calls_for(key);
  }
  result.transcript = std::move(session.transcript());
  return result;
}

}  // namespace medorch::agentclinic
