#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "procrm/dose_model.hpp"

namespace procrm {

enum class DesignKind { tite_crm, pro_crm, tite_pro_crm, tite_crm_plus_pro };

enum class Stream { clinician, patient };

std::string_view to_string(DesignKind kind);
std::string_view to_string(Stream stream);
// Accepts "TITE_CRM" style identifiers as well as the display names
// ("TITE-CRM", "PRO-CRM", "TITE-PRO-CRM", "TITE-CRM+PRO").
DesignKind parse_design_kind(std::string_view text);
Stream parse_stream(std::string_view text);
std::string_view display_name(DesignKind kind);

// True when the design consults patient-reported data for dose assignment.
bool assigns_with_patient_stream(DesignKind kind);

struct DesignConfig {
  DesignKind kind = DesignKind::tite_pro_crm;
  int n_max = 18;
  double window = 6.0;
  ToxicityTarget clinician_target{0.25};
  ToxicityTarget patient_target{0.35};
  Skeleton clinician_skeleton{{0.08, 0.16, 0.25, 0.35, 0.46}};
  Skeleton patient_skeleton{{0.13, 0.23, 0.35, 0.47, 0.58}};
  PriorSpec clinician_prior{0.522};
  PriorSpec patient_prior{0.59};
  int start_dose = 1;
  bool no_skip = true;

  int dose_levels() const noexcept { return clinician_skeleton.size(); }
  // Throws invalid_configuration on any broken invariant.
  void validate() const;

  bool operator==(const DesignConfig&) const = default;
};

// Calibrated settings of the motivating example for N in {18, 30, 40}.
DesignConfig reference_design(DesignKind kind, int n_max);

struct PatientRecord {
  int id = 0;
  double entry_time = 0.0;
  int dose_level = 1;
  // Event times are measured from entry. Absent means no event observed.
  std::optional<double> clin_event_time;
  std::optional<double> pat_event_time;

  const std::optional<double>& event_time(Stream stream) const {
    return stream == Stream::clinician ? clin_event_time : pat_event_time;
  }

  bool operator==(const PatientRecord&) const = default;
};

struct TrialState {
  DesignConfig config;
  std::vector<PatientRecord> patients;
  double now = 0.0;

  int enrolled() const noexcept { return static_cast<int>(patients.size()); }
  int highest_dose_tried() const noexcept;
  // Every enrolled patient has been followed for the full window.
  bool follow_up_complete() const noexcept;

  bool operator==(const TrialState&) const = default;
};

std::vector<WeightedObservation> snapshot_observations(const TrialState& state, Stream stream);

int constrained_next_dose(int model_choice, const TrialState& state);

struct StreamEstimate {
  double posterior_mean = 0.0;
  std::vector<double> curve;
  int choice = 1;
};

struct Decision {
  int dose = 1;
  // Choice before the no-skip constraint.
  int model_choice = 1;
  bool start_dose_rule = false;
  StreamEstimate clinician;
  StreamEstimate patient;
  bool patient_used = false;
};

/// Next assignment with the estimates behind it. The patient estimate is
/// always reported, even for designs that ignore it during the trial.
Decision next_decision(const TrialState& state);
int next_dose(const TrialState& state);

/// End-of-trial estimate once every patient has completed follow-up.
Decision final_decision(const TrialState& state);
int final_recommendation(const TrialState& state);

/// min(clinician MTD, patient MTD) for the true toxicity curves, or nothing
/// when one of the constraints admits no dose.
std::optional<int> true_optimal_dose(const std::vector<double>& clin_probs,
                                     const std::vector<double>& pat_probs,
                                     ToxicityTarget clinician_target,
                                     ToxicityTarget patient_target);

}  // namespace procrm
