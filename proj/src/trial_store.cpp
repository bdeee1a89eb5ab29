#include "procrm/trial_store.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <random>

namespace procrm {

namespace {

constexpr double kClockSlack = 1e-9;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

std::string patient_key(int id) { return "patient/" + std::to_string(id); }

PatientRecord* find_patient(TrialState& state, int id) {
  for (auto& p : state.patients) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json derived_json(const TrialDocument& doc) {
  json patients = json::array();
  json derived = {{"last_seq", doc.last_seq()}};
  if (doc.created()) {
    const auto& s = doc.state();
    for (const auto& p : s.patients) {
      patients.push_back({{"id", p.id},
                          {"entry_time", p.entry_time},
                          {"dose_level", p.dose_level},
                          {"clin_event_time", optional_number(p.clin_event_time)},
                          {"pat_event_time", optional_number(p.pat_event_time)}});
    }
    derived["now"] = s.now;
    derived["config"] = to_json(s.config);
  } else {
    derived["now"] = nullptr;
    derived["config"] = nullptr;
  }
  derived["patients"] = patients;
  derived["final_dose"] = doc.final_dose() ? json(*doc.final_dose()) : json(nullptr);
  return derived;
}

// Smallest seq whose replayed effect disagrees with the cached block.
long first_divergence(const TrialDocument& replayed, const json& cached) {
  const json expected = derived_json(replayed);
  const auto& prov = replayed.provenance();
  long first = -1;
  auto note = [&](const std::string& key) {
    const auto it = prov.find(key);
    const long seq = it != prov.end() ? it->second : replayed.last_seq() + 1;
    if (first < 0 || seq < first) first = seq;
  };
  if (!cached.is_object()) return replayed.events().empty() ? 1 : replayed.events().front().seq;
  for (const char* key : {"now", "config", "final_dose"}) {
    if (!cached.contains(key) || cached[key] != expected[key]) note(key);
  }
  if (!cached.contains("last_seq") || cached["last_seq"] != expected["last_seq"]) {
    note("last_seq");
  }
  const json empty = json::array();
  const json& got = cached.contains("patients") ? cached["patients"] : empty;
  const json& want = expected["patients"];
  const std::size_t n = std::max(got.size(), want.size());
  for (std::size_t i = 0; i < n; ++i) {
    const int id = static_cast<int>(i) + 1;
    if (i >= got.size() || i >= want.size()) {
      note(patient_key(id));
      continue;
    }
    for (const char* field : {"id", "entry_time", "dose_level"}) {
      if (!got[i].contains(field) || got[i][field] != want[i][field]) note(patient_key(id));
    }
    if (!got[i].contains("clin_event_time") || got[i]["clin_event_time"] != want[i]["clin_event_time"]) {
      note(patient_key(id) + "/clinician");
    }
    if (!got[i].contains("pat_event_time") || got[i]["pat_event_time"] != want[i]["pat_event_time"]) {
      note(patient_key(id) + "/patient");
    }
  }
  return first;
}

}  // namespace

std::string_view event_type(const EventPayload& payload) {
  return std::visit(overloaded{
                        [](const TrialCreated&) { return std::string_view("TrialCreated"); },
                        [](const PatientEnrolled&) { return std::string_view("PatientEnrolled"); },
                        [](const OutcomeReported&) { return std::string_view("OutcomeReported"); },
                        [](const FollowupClockAdvanced&) {
                          return std::string_view("FollowupClockAdvanced");
                        },
                        [](const TrialFinalized&) { return std::string_view("TrialFinalized"); },
                    },
                    payload);
}

json to_json(const TrialEvent& event) {
  json j = {{"seq", event.seq}, {"at", event.at}, {"type", event_type(event.payload)}};
  if (!event.wall_clock.empty()) j["wall_clock"] = event.wall_clock;
  std::visit(overloaded{
                 [&](const TrialCreated& e) { j["config"] = to_json(e.config); },
                 [&](const PatientEnrolled& e) {
                   j["patient_id"] = e.patient_id;
                   j["dose_level"] = e.dose_level;
                   if (e.override_dose) {
                     j["override"] = true;
                     j["note"] = e.note;
                   }
                 },
                 [&](const OutcomeReported& e) {
                   j["patient_id"] = e.patient_id;
                   j["stream"] = to_string(e.stream);
                   j["event_time_weeks"] = e.event_time;
                 },
                 [&](const FollowupClockAdvanced&) {},
                 [&](const TrialFinalized& e) {
                   j["final_dose"] = e.final_dose;
                   if (e.override_dose) {
                     j["override"] = true;
                     j["note"] = e.note;
                   }
                 },
             },
             event.payload);
  return j;
}

TrialEvent trial_event_from_json(const json& j, const std::string& pointer, bool allow_missing_seq) {
  ObjectReader r(j, pointer);
  TrialEvent event;
  if (allow_missing_seq && r.find("seq") == nullptr) {
    event.seq = 0;
  } else {
    event.seq = r.integer("seq");
    if (event.seq < 1) r.error("seq", "must be positive");
  }
  event.at = r.number("at");
  event.wall_clock = r.string_or("wall_clock", "");
  const std::string type = r.string("type");
  if (type == "TrialCreated") {
    event.payload = TrialCreated{design_config_from_json(r.require("config"), r.pointer_to("config"))};
  } else if (type == "PatientEnrolled") {
    PatientEnrolled e;
    e.patient_id = r.integer("patient_id");
    e.dose_level = r.integer("dose_level");
    e.override_dose = r.boolean_or("override", false);
    e.note = r.string_or("note", "");
    event.payload = e;
  } else if (type == "OutcomeReported") {
    OutcomeReported e;
    e.patient_id = r.integer("patient_id");
    const std::string stream = r.string("stream");
    if (stream != "clinician" && stream != "patient") {
      r.error("stream", "expected \"clinician\" or \"patient\"");
    }
    e.stream = parse_stream(stream);
    e.event_time = r.number("event_time_weeks");
    event.payload = e;
  } else if (type == "FollowupClockAdvanced") {
    event.payload = FollowupClockAdvanced{};
  } else if (type == "TrialFinalized") {
    TrialFinalized e;
    e.final_dose = r.integer("final_dose");
    e.override_dose = r.boolean_or("override", false);
    e.note = r.string_or("note", "");
    event.payload = e;
  } else {
    r.error("type", "unknown event type '" + type + "'");
  }
  r.finish();
  return event;
}

const TrialState& TrialDocument::state() const {
  if (!state_) fail(ErrorCode::state, "trial has not been created");
  return *state_;
}

bool TrialDocument::operator==(const TrialDocument& other) const {
  return trial_id_ == other.trial_id_ && state_ == other.state_ &&
         final_dose_ == other.final_dose_ && to_json(*this) == to_json(other);
}

void TrialDocument::apply(const TrialEvent& event) {
  if (event.seq != last_seq() + 1) {
    fail(ErrorCode::conflict, "expected seq " + std::to_string(last_seq() + 1) + ", got " +
                                  std::to_string(event.seq));
  }
  apply_unchecked_seq(event);
}

void TrialDocument::apply_unchecked_seq(const TrialEvent& event) {
  const std::string where = "event " + std::to_string(event.seq) + ": ";
  if (finalized()) fail(ErrorCode::state, where + "trial is finalized");
  if (!std::isfinite(event.at) || event.at < 0.0) {
    fail(ErrorCode::validation, where + "time must be a finite nonnegative number of weeks");
  }
  const bool is_creation = std::holds_alternative<TrialCreated>(event.payload);
  if (!is_creation && !state_) fail(ErrorCode::state, where + "trial has not been created");
  if (state_ && event.at < state_->now) {
    fail(ErrorCode::validation, where + "clock regression (at " + std::to_string(event.at) +
                                    " < now " + std::to_string(state_->now) + ")");
  }

  std::optional<TrialState> next = state_;
  std::optional<int> final_dose = final_dose_;
  std::vector<std::string> touched = {"now", "last_seq"};

  std::visit(
      overloaded{
          [&](const TrialCreated& e) {
            if (state_) fail(ErrorCode::validation, where + "trial already created");
            e.config.validate();
            next = TrialState{e.config, {}, event.at};
            touched.push_back("config");
          },
          [&](const PatientEnrolled& e) {
            const auto& cfg = next->config;
            if (next->enrolled() >= cfg.n_max) {
              fail(ErrorCode::trial_complete, where + "enrollment capacity reached");
            }
            if (e.patient_id != next->enrolled() + 1) {
              fail(ErrorCode::validation, where + "patient ids are assigned in order, expected " +
                                              std::to_string(next->enrolled() + 1));
            }
            if (e.dose_level < 1 || e.dose_level > cfg.dose_levels()) {
              fail(ErrorCode::validation, where + "dose level out of range");
            }
            next->now = event.at;
            const int expected = next_dose(*next);
            if (e.override_dose) {
              if (e.note.empty()) fail(ErrorCode::validation, where + "dose override needs a note");
            } else if (e.dose_level != expected) {
              fail(ErrorCode::validation, where + "enrollment dose " + std::to_string(e.dose_level) +
                                              " differs from the recommended dose " +
                                              std::to_string(expected));
            }
            next->patients.push_back({e.patient_id, event.at, e.dose_level, std::nullopt, std::nullopt});
            touched.push_back(patient_key(e.patient_id));
          },
          [&](const OutcomeReported& e) {
            PatientRecord* p = find_patient(*next, e.patient_id);
            if (p == nullptr) {
              fail(ErrorCode::validation, where + "unknown patient " + std::to_string(e.patient_id));
            }
            auto& slot = e.stream == Stream::clinician ? p->clin_event_time : p->pat_event_time;
            if (slot) {
              fail(ErrorCode::validation, where + "duplicate " + std::string(to_string(e.stream)) +
                                              " outcome for patient " + std::to_string(e.patient_id));
            }
            if (!(e.event_time > 0.0) || !std::isfinite(e.event_time)) {
              fail(ErrorCode::validation, where + "event time must be positive");
            }
            if (p->entry_time + e.event_time > event.at + kClockSlack) {
              fail(ErrorCode::validation, where + "reported event lies after the report time");
            }
            slot = e.event_time;
            touched.push_back(patient_key(e.patient_id) + "/" + std::string(to_string(e.stream)));
          },
          [&](const FollowupClockAdvanced&) {},
          [&](const TrialFinalized& e) {
            next->now = event.at;
            if (next->enrolled() < next->config.n_max || !next->follow_up_complete()) {
              fail(ErrorCode::not_ready, where + "finalization needs full enrollment and follow-up");
            }
            const int expected = final_recommendation(*next);
            if (e.override_dose) {
              if (e.note.empty()) fail(ErrorCode::validation, where + "dose override needs a note");
              if (e.final_dose < 1 || e.final_dose > next->config.dose_levels()) {
                fail(ErrorCode::validation, where + "dose level out of range");
              }
            } else if (e.final_dose != expected) {
              fail(ErrorCode::validation, where + "final dose " + std::to_string(e.final_dose) +
                                              " differs from the recommendation " +
                                              std::to_string(expected));
            }
            final_dose = e.final_dose;
            touched.push_back("final_dose");
          },
      },
      event.payload);

  next->now = event.at;
  state_ = std::move(next);
  final_dose_ = final_dose;
  events_.push_back(event);
  for (const auto& key : touched) provenance_[key] = event.seq;
}

const TrialEvent& TrialDocument::append(EventPayload payload, double at, std::string wall_clock) {
  apply(TrialEvent{last_seq() + 1, at, std::move(wall_clock), std::move(payload)});
  return events_.back();
}

TrialDocument apply_event(TrialDocument doc, const TrialEvent& event) {
  doc.apply(event);
  return doc;
}

TrialDocument replay(const std::string& trial_id, const std::vector<TrialEvent>& events) {
  TrialDocument doc(trial_id);
  for (const auto& e : events) doc.apply(e);
  return doc;
}

Recommendation recommendation(const TrialDocument& doc, double at) {
  if (doc.finalized()) fail(ErrorCode::state, "trial is finalized");
  TrialState state = doc.state();
  if (!std::isfinite(at) || at < state.now) {
    fail(ErrorCode::validation, "recommendation time precedes the trial clock");
  }
  state.now = at;
  Recommendation rec;
  rec.at = at;
  if (state.enrolled() < state.config.n_max) {
    rec.phase = Recommendation::Phase::next;
    rec.decision = next_decision(state);
  } else if (state.follow_up_complete()) {
    rec.phase = Recommendation::Phase::final;
    rec.decision = final_decision(state);
  } else {
    double until = 0.0;
    for (const auto& p : state.patients) until = std::max(until, p.entry_time + state.config.window);
    fail(ErrorCode::not_ready, "enrollment complete; final recommendation available at week " +
                                   std::to_string(until));
  }
  const auto clin = snapshot_observations(state, Stream::clinician);
  const auto pat = snapshot_observations(state, Stream::patient);
  for (std::size_t k = 0; k < state.patients.size(); ++k) {
    const auto& p = state.patients[k];
    rec.patients.push_back({p.id, p.entry_time, p.dose_level,
                            std::min(std::max(at - p.entry_time, 0.0), state.config.window), clin[k],
                            pat[k]});
  }
  return rec;
}

json to_json(const Recommendation& rec, const DesignConfig& config) {
  auto stream_json = [](const StreamEstimate& e, double target) {
    return json{{"posterior_mean", e.posterior_mean},
                {"curve", e.curve},
                {"target", target},
                {"choice", e.choice}};
  };
  const auto& d = rec.decision;
  json patients = json::array();
  for (const auto& p : rec.patients) {
    patients.push_back({{"id", p.id},
                        {"entry_time", p.entry_time},
                        {"dose_level", p.dose_level},
                        {"follow_up", p.follow_up},
                        {"clinician", {{"weight", p.clinician.weight}, {"dlt", p.clinician.dlt}}},
                        {"patient", {{"weight", p.patient.weight}, {"dlt", p.patient.dlt}}}});
  }
  return {
      {"phase", rec.phase == Recommendation::Phase::next ? "next" : "final"},
      {"at", rec.at},
      {"kind", to_string(config.kind)},
      {"dose", d.dose},
      {"model_choice", d.model_choice},
      {"start_dose_rule", d.start_dose_rule},
      {"constraint_binding", d.dose != d.model_choice},
      {"patient_stream_used", d.patient_used},
      {"clinician_only_choice", d.clinician.choice},
      {"min_rule_choice", std::min(d.clinician.choice, d.patient.choice)},
      {"clinician", stream_json(d.clinician, config.clinician_target.value())},
      {"patient", stream_json(d.patient, config.patient_target.value())},
      {"patients", patients},
  };
}

json to_json(const TrialDocument& doc) {
  json events = json::array();
  for (const auto& e : doc.events()) events.push_back(to_json(e));
  return {{"schema", "trial_document"},
          {"version", kSchemaVersion},
          {"trial_id", doc.trial_id()},
          {"events", events},
          {"derived", derived_json(doc)}};
}

TrialDocument trial_document_from_json(const json& j) {
  ObjectReader r(j, "");
  r.header("trial_document");
  const std::string id = r.string("trial_id");
  const json& events = r.require("events");
  if (!events.is_array()) r.error("events", "expected an array");
  const json* cached = r.find("derived");
  r.finish();

  TrialDocument doc(id);
  for (std::size_t i = 0; i < events.size(); ++i) {
    const std::string pointer = "/events/" + std::to_string(i);
    const TrialEvent event = trial_event_from_json(events[i], pointer);
    try {
      doc.apply(event);
    } catch (const FieldError&) {
      throw;
    } catch (const Error& e) {
      const ErrorCode code = e.code() == ErrorCode::conflict ? ErrorCode::integrity : ErrorCode::validation;
      if (code == ErrorCode::integrity) {
        throw IntegrityError(std::string("event sequence broken: ") + e.what(), doc.last_seq() + 1);
      }
      throw FieldError(code, pointer, e.what());
    }
  }
  if (cached != nullptr && !cached->is_null()) {
    const long seq = first_divergence(doc, *cached);
    if (seq >= 0) {
      throw IntegrityError("cached derived state disagrees with the event replay, first at seq " +
                               std::to_string(seq),
                           seq);
    }
  }
  return doc;
}

std::string serialize(const TrialDocument& doc) { return to_json(doc).dump(2) + "\n"; }

TrialDocument deserialize(std::string_view text) {
  // Count events that parsed completely so truncation can be located.
  long complete_events = 0;
  bool in_events = false;
  auto callback = [&](int depth, json::parse_event_t event, json& parsed) {
    if (depth == 1 && event == json::parse_event_t::key && parsed == "events") in_events = true;
    if (in_events && depth == 1 && event == json::parse_event_t::array_end) in_events = false;
    if (in_events && depth == 2 && event == json::parse_event_t::object_end) ++complete_events;
    return true;
  };
  json j;
  try {
    j = json::parse(text, callback);
  } catch (const json::parse_error& e) {
    throw IntegrityError(std::string("corrupt trial document: ") + e.what() +
                             " (first unreadable event seq " + std::to_string(complete_events + 1) + ")",
                         complete_events + 1);
  }
  return trial_document_from_json(j);
}

void persist(const TrialDocument& doc, const std::filesystem::path& path) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::state, "cannot write '" + tmp.string() + "'");
    out << serialize(doc);
    if (!out) fail(ErrorCode::state, "write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

TrialDocument load(const std::filesystem::path& path) { return deserialize(read_text_file(path.string())); }

TrialStore::TrialStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path TrialStore::path_for(const std::string& id) const {
  const bool safe = !id.empty() && std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
  });
  if (!safe) fail(ErrorCode::not_found, "unknown trial '" + id + "'");
  return dir_ / (id + ".json");
}

std::mutex& TrialStore::lock_for(const std::string& id) {
  std::lock_guard guard(registry_mutex_);
  auto& slot = locks_[id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

TrialDocument TrialStore::create(const DesignConfig& config, double at, std::string wall_clock) {
  static thread_local std::mt19937_64 gen{std::random_device{}()};
  std::string id;
  do {
    char buffer[17];
    std::snprintf(buffer, sizeof buffer, "%016llx", static_cast<unsigned long long>(gen()));
    id = std::string("trial-") + std::string(buffer, 12);
  } while (std::filesystem::exists(path_for(id)));

  std::lock_guard guard(lock_for(id));
  TrialDocument doc(id);
  doc.append(TrialCreated{config}, at, wall_clock.empty() ? utc_timestamp() : std::move(wall_clock));
  persist(doc, path_for(id));
  return doc;
}

TrialDocument TrialStore::get(const std::string& id) const {
  const auto path = path_for(id);
  if (!std::filesystem::exists(path)) fail(ErrorCode::not_found, "unknown trial '" + id + "'");
  return load(path);
}

TrialEvent TrialStore::append(const std::string& id, TrialEvent event) {
  std::lock_guard guard(lock_for(id));
  TrialDocument doc = get(id);
  if (event.seq == 0) event.seq = doc.last_seq() + 1;
  if (event.wall_clock.empty()) event.wall_clock = utc_timestamp();
  doc.apply(event);
  persist(doc, path_for(id));
  return doc.events().back();
}

std::vector<std::string> TrialStore::ids() const {
  std::vector<std::string> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    if (entry.path().extension() == ".json") out.push_back(entry.path().stem().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buffer[32];
  std::strftime(buffer, sizeof buffer, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buffer;
}

}  // namespace procrm
