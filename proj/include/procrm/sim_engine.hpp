#pragma once

// Monte-Carlo operating characteristics of the sequential designs:
// correlated Weibull event times through a Clayton copula, Poisson accrual,
// and the per-trial event loop.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "procrm/designs.hpp"
#include "procrm/random.hpp"

namespace procrm {

struct Scenario {
  std::string name;
  std::vector<double> clin_probs;
  std::vector<double> pat_probs;
  double hazard_shape = 1.0;
  double copula_theta = 0.1;
  double accrual_per_window = 2.0;

  void validate() const;
  bool operator==(const Scenario&) const = default;
};

// Reference clinician/patient toxicity scenario by 1-based index (1..7).
// Defaults: constant hazard with theta 0.1, accrual of two per window.
Scenario reference_scenario(int index);

struct SimJob {
  Scenario scenario;
  DesignConfig design;
  int n_replicates = 1;
  std::uint64_t seed = 0;
};

struct OperatingCharacteristics {
  int n_replicates = 0;
  std::optional<int> true_dose;
  std::vector<double> selection_pct;
  double pcs = 0.0;
  double mean_overdose_patients = 0.0;
  double mean_mtd_patients = 0.0;
  double mean_clin_dlt = 0.0;
  double mean_pat_dlt = 0.0;
  double mean_duration_weeks = 0.0;

  bool operator==(const OperatingCharacteristics&) const = default;
};

/// Weibull scale giving P(T <= window) = prob_by_window. Returns +infinity
/// for probability 0 (the event never happens).
double weibull_scale(double prob_by_window, double window, double shape);

/// Clayton copula pair from two independent uniforms by conditional
/// inversion; theta below 1e-9 leaves them independent.
std::pair<double, double> clayton_from_uniforms(double theta, double s, double t);
std::pair<double, double> clayton_pair(double theta, RandomStream& rng);

struct EventTimes {
  std::optional<double> clin_time;
  std::optional<double> pat_time;
};

// Latent times are kept even when they fall past the window.
EventTimes draw_event_times(int dose_level, const Scenario& scenario, double window,
                            RandomStream& rng);

double next_arrival(double previous_entry, double accrual_per_window, double window,
                    RandomStream& rng);

struct TrialResult {
  int final_dose = 0;
  std::vector<PatientRecord> patients;
  std::vector<bool> clin_dlt;
  std::vector<bool> pat_dlt;
  double duration_weeks = 0.0;
};

TrialResult run_trial(const DesignConfig& design, const Scenario& scenario, std::uint64_t seed,
                      std::uint64_t replicate);

// threads <= 0 uses the hardware concurrency. Output depends only on the job.
OperatingCharacteristics run_simulation(const SimJob& job, int threads = 1);

OperatingCharacteristics summarize(const std::vector<TrialResult>& trials, const Scenario& scenario,
                                   const DesignConfig& design);

}  // namespace procrm
