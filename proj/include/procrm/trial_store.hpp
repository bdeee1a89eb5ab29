#pragma once

// Event-sourced record of a live trial. The derived TrialState is always a
// fold of the event list; documents persist as canonical JSON.

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "procrm/designs.hpp"
#include "procrm/json_io.hpp"

namespace procrm {

struct TrialCreated {
  DesignConfig config;
};

struct PatientEnrolled {
  int patient_id = 0;
  int dose_level = 1;
  // Deviation from the engine's recommendation; requires a note.
  bool override_dose = false;
  std::string note;
};

struct OutcomeReported {
  int patient_id = 0;
  Stream stream = Stream::clinician;
  // Weeks from the patient's entry.
  double event_time = 0.0;
};

struct FollowupClockAdvanced {};

struct TrialFinalized {
  int final_dose = 0;
  bool override_dose = false;
  std::string note;
};

using EventPayload =
    std::variant<TrialCreated, PatientEnrolled, OutcomeReported, FollowupClockAdvanced, TrialFinalized>;

struct TrialEvent {
  long seq = 0;
  // Trial weeks since creation; all statistics use this clock.
  double at = 0.0;
  std::string wall_clock;
  EventPayload payload;
};

std::string_view event_type(const EventPayload& payload);

json to_json(const TrialEvent& event);
// seq may be omitted when allow_missing_seq is set (it is assigned on append).
TrialEvent trial_event_from_json(const json& j, const std::string& pointer = "",
                                 bool allow_missing_seq = false);

class TrialDocument {
 public:
  TrialDocument() = default;
  explicit TrialDocument(std::string trial_id) : trial_id_(std::move(trial_id)) {}

  const std::string& trial_id() const noexcept { return trial_id_; }
  const std::vector<TrialEvent>& events() const noexcept { return events_; }
  long last_seq() const noexcept { return events_.empty() ? 0 : events_.back().seq; }
  bool created() const noexcept { return state_.has_value(); }
  bool finalized() const noexcept { return final_dose_.has_value(); }
  std::optional<int> final_dose() const noexcept { return final_dose_; }

  // Throws state error before TrialCreated.
  const TrialState& state() const;

  // Validates and appends one event; the document is unchanged on error.
  void apply(const TrialEvent& event);
  // Assigns seq = last_seq + 1 and applies.
  const TrialEvent& append(EventPayload payload, double at, std::string wall_clock = {});

  // Seq of the event that last changed each derived item; used to locate
  // divergence between a cached state and the replay.
  const std::map<std::string, long>& provenance() const noexcept { return provenance_; }

  bool operator==(const TrialDocument& other) const;

 private:
  void apply_unchecked_seq(const TrialEvent& event);

  std::string trial_id_;
  std::vector<TrialEvent> events_;
  std::optional<TrialState> state_;
  std::optional<int> final_dose_;
  std::map<std::string, long> provenance_;
};

TrialDocument apply_event(TrialDocument doc, const TrialEvent& event);
TrialDocument replay(const std::string& trial_id, const std::vector<TrialEvent>& events);

struct PatientView {
  int id = 0;
  double entry_time = 0.0;
  int dose_level = 1;
  double follow_up = 0.0;
  WeightedObservation clinician;
  WeightedObservation patient;
};

struct Recommendation {
  enum class Phase { next, final };
  Phase phase = Phase::next;
  double at = 0.0;
  Decision decision;
  std::vector<PatientView> patients;
};

/// Next dose (or the end-of-trial estimate once capacity and follow-up are
/// complete) at a transient clock `at`. Pure function of the document.
Recommendation recommendation(const TrialDocument& doc, double at);
json to_json(const Recommendation& rec, const DesignConfig& config);

json to_json(const TrialDocument& doc);
// Replays the events and checks the cached "derived" block, if present.
TrialDocument trial_document_from_json(const json& j);

// Stable key order, two-space indentation, trailing newline.
std::string serialize(const TrialDocument& doc);
// Tolerates nothing: truncation or a cached state that differs from the
// replay raises IntegrityError; invariant violations raise validation errors.
TrialDocument deserialize(std::string_view text);

void persist(const TrialDocument& doc, const std::filesystem::path& path);
TrialDocument load(const std::filesystem::path& path);

// Directory of trial documents with one writer at a time per trial.
class TrialStore {
 public:
  explicit TrialStore(std::filesystem::path dir);

  TrialDocument create(const DesignConfig& config, double at = 0.0, std::string wall_clock = {});
  TrialDocument get(const std::string& id) const;
  // Applies the event (seq assigned when zero) and persists atomically.
  TrialEvent append(const std::string& id, TrialEvent event);
  std::vector<std::string> ids() const;

 private:
  std::filesystem::path path_for(const std::string& id) const;
  std::mutex& lock_for(const std::string& id);

  std::filesystem::path dir_;
  std::mutex registry_mutex_;
  std::map<std::string, std::unique_ptr<std::mutex>> locks_;
};

std::string utc_timestamp();

}  // namespace procrm
