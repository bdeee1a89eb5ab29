#include "procrm/designs.hpp"

#include <algorithm>

#include "procrm/errors.hpp"

namespace procrm {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_configuration: return "invalid_configuration";
    case ErrorCode::validation: return "validation";
    case ErrorCode::numerical: return "numerical";
    case ErrorCode::trial_complete: return "trial_complete";
    case ErrorCode::not_ready: return "not_ready";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::state: return "state";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::integrity: return "integrity";
  }
  return "unknown";
}

std::string_view to_string(DesignKind kind) {
  switch (kind) {
    case DesignKind::tite_crm: return "TITE_CRM";
    case DesignKind::pro_crm: return "PRO_CRM";
    case DesignKind::tite_pro_crm: return "TITE_PRO_CRM";
    case DesignKind::tite_crm_plus_pro: return "TITE_CRM_PLUS_PRO";
  }
  return "unknown";
}

std::string_view display_name(DesignKind kind) {
  switch (kind) {
    case DesignKind::tite_crm: return "TITE-CRM";
    case DesignKind::pro_crm: return "PRO-CRM";
    case DesignKind::tite_pro_crm: return "TITE-PRO-CRM";
    case DesignKind::tite_crm_plus_pro: return "TITE-CRM+PRO";
  }
  return "unknown";
}

std::string_view to_string(Stream stream) {
  return stream == Stream::clinician ? "clinician" : "patient";
}

DesignKind parse_design_kind(std::string_view text) {
  for (auto kind : {DesignKind::tite_crm, DesignKind::pro_crm, DesignKind::tite_pro_crm,
                    DesignKind::tite_crm_plus_pro}) {
    if (text == to_string(kind) || text == display_name(kind)) return kind;
  }
  fail(ErrorCode::validation, "unknown design kind '" + std::string(text) + "'");
}

Stream parse_stream(std::string_view text) {
  if (text == "clinician") return Stream::clinician;
  if (text == "patient") return Stream::patient;
  fail(ErrorCode::validation, "unknown stream '" + std::string(text) + "'");
}

bool assigns_with_patient_stream(DesignKind kind) {
  return kind == DesignKind::pro_crm || kind == DesignKind::tite_pro_crm;
}

void DesignConfig::validate() const {
  if (clinician_skeleton.size() != patient_skeleton.size()) {
    fail(ErrorCode::invalid_configuration, "clinician and patient skeletons differ in length");
  }
  if (start_dose < 1 || start_dose > dose_levels()) {
    fail(ErrorCode::invalid_configuration, "start_dose must lie in 1..number of dose levels");
  }
  if (n_max < 1) fail(ErrorCode::invalid_configuration, "n_max must be at least 1");
  if (!(window > 0.0)) fail(ErrorCode::invalid_configuration, "window must be positive");
}

DesignConfig reference_design(DesignKind kind, int n_max) {
  DesignConfig config;
  config.kind = kind;
  config.n_max = n_max;
  switch (n_max) {
    case 18:
      break;
    case 30:
      config.clinician_skeleton = Skeleton({0.06, 0.14, 0.25, 0.38, 0.50});
      config.clinician_prior = PriorSpec(0.627);
      break;
    case 40:
      config.patient_skeleton = Skeleton({0.10, 0.21, 0.35, 0.49, 0.61});
      config.patient_prior = PriorSpec(0.69);
      break;
    default:
      fail(ErrorCode::invalid_configuration, "calibrated settings exist only for N = 18, 30, 40");
  }
  return config;
}

int TrialState::highest_dose_tried() const noexcept {
  int highest = 0;
  for (const auto& p : patients) highest = std::max(highest, p.dose_level);
  return highest;
}

bool TrialState::follow_up_complete() const noexcept {
  return std::all_of(patients.begin(), patients.end(), [&](const PatientRecord& p) {
    return now >= p.entry_time + config.window;
  });
}

std::vector<WeightedObservation> snapshot_observations(const TrialState& state, Stream stream) {
  const double window = state.config.window;
  std::vector<WeightedObservation> obs;
  obs.reserve(state.patients.size());
  for (const auto& p : state.patients) {
    const double followed = state.now >= p.entry_time + window
                                ? window
                                : std::max(state.now - p.entry_time, 0.0);
    const auto& event = p.event_time(stream);
    const bool dlt = event.has_value() && *event <= followed;
    obs.push_back({p.dose_level, follow_up_weight(followed, window, dlt), dlt});
  }
  return obs;
}

int constrained_next_dose(int model_choice, const TrialState& state) {
  if (state.patients.empty()) return state.config.start_dose;
  if (!state.config.no_skip) return model_choice;
  return std::min(model_choice, state.highest_dose_tried() + 1);
}

namespace {

StreamEstimate estimate(const TrialState& state, Stream stream) {
  const auto& cfg = state.config;
  const bool clin = stream == Stream::clinician;
  const Skeleton& skeleton = clin ? cfg.clinician_skeleton : cfg.patient_skeleton;
  const auto obs = snapshot_observations(state, stream);
  StreamEstimate est;
  est.posterior_mean = posterior_mean(clin ? cfg.clinician_prior : cfg.patient_prior, obs, skeleton);
  est.curve = estimated_curve(skeleton, est.posterior_mean);
  est.choice = select_dose(skeleton, est.posterior_mean,
                           clin ? cfg.clinician_target : cfg.patient_target);
  return est;
}

int next_dose_impl(const TrialState& state, Decision* detail) {
  if (state.enrolled() >= state.config.n_max) {
    fail(ErrorCode::trial_complete, "trial already enrolled " + std::to_string(state.config.n_max) +
                                        " patients");
  }
  if (state.patients.empty() && detail == nullptr) return state.config.start_dose;

  const bool use_patient = assigns_with_patient_stream(state.config.kind);
  const StreamEstimate clin = estimate(state, Stream::clinician);
  int model_choice = clin.choice;
  std::optional<StreamEstimate> pat;
  if (use_patient || detail != nullptr) pat = estimate(state, Stream::patient);
  if (use_patient) model_choice = std::min(model_choice, pat->choice);
  const int dose = constrained_next_dose(model_choice, state);

  if (detail != nullptr) {
    detail->dose = dose;
    detail->model_choice = model_choice;
    detail->start_dose_rule = state.patients.empty();
    detail->clinician = clin;
    detail->patient = *pat;
    detail->patient_used = use_patient;
  }
  return dose;
}

}  // namespace

Decision next_decision(const TrialState& state) {
  Decision d;
  next_dose_impl(state, &d);
  return d;
}

int next_dose(const TrialState& state) { return next_dose_impl(state, nullptr); }

Decision final_decision(const TrialState& state) {
  if (!state.follow_up_complete()) {
    fail(ErrorCode::not_ready, "final recommendation needs complete follow-up of every patient");
  }
  if (state.enrolled() < state.config.n_max) {
    fail(ErrorCode::not_ready, "final recommendation needs all " +
                                   std::to_string(state.config.n_max) + " patients enrolled");
  }
  Decision d;
  d.clinician = estimate(state, Stream::clinician);
  d.patient = estimate(state, Stream::patient);
  d.patient_used = state.config.kind != DesignKind::tite_crm;
  d.model_choice = d.patient_used ? std::min(d.clinician.choice, d.patient.choice) : d.clinician.choice;
  d.dose = d.model_choice;
  return d;
}

int final_recommendation(const TrialState& state) { return final_decision(state).dose; }

std::optional<int> true_optimal_dose(const std::vector<double>& clin_probs,
                                     const std::vector<double>& pat_probs,
                                     ToxicityTarget clinician_target,
                                     ToxicityTarget patient_target) {
  if (clin_probs.size() != pat_probs.size()) {
    fail(ErrorCode::validation, "clinician and patient probability vectors differ in length");
  }
  auto largest_admissible = [](const std::vector<double>& probs, double limit) {
    int best = 0;
    for (std::size_t j = 0; j < probs.size(); ++j) {
      if (probs[j] <= limit) best = static_cast<int>(j) + 1;
    }
    return best;
  };
  const int clin = largest_admissible(clin_probs, clinician_target.value());
  const int pat = largest_admissible(pat_probs, patient_target.value());
  if (clin == 0 || pat == 0) return std::nullopt;
  return std::min(clin, pat);
}

}  // namespace procrm
