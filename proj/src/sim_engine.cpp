#include "procrm/sim_engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "procrm/errors.hpp"

namespace procrm {

namespace {

constexpr double kIndependenceTheta = 1e-9;

void check_probs(const std::vector<double>& probs, const char* label) {
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (!(probs[j] >= 0.0 && probs[j] < 1.0)) {
      fail(ErrorCode::invalid_configuration,
           std::string(label) + " probability at level " + std::to_string(j + 1) +
               " must lie in [0,1)");
    }
    if (j > 0 && probs[j] < probs[j - 1]) {
      fail(ErrorCode::invalid_configuration,
           std::string(label) + " probabilities must be nondecreasing in dose");
    }
  }
}

double weibull_time(double prob, double window, double shape, double u) {
  const double scale = weibull_scale(prob, window, shape);
  return scale * std::pow(-std::log(u), 1.0 / shape);
}

}  // namespace

void Scenario::validate() const {
  if (clin_probs.empty() || clin_probs.size() != pat_probs.size()) {
    fail(ErrorCode::invalid_configuration,
         "scenario probability vectors must be non-empty and of equal length");
  }
  check_probs(clin_probs, "clinician");
  check_probs(pat_probs, "patient");
  if (!(hazard_shape > 0.0)) fail(ErrorCode::invalid_configuration, "hazard_shape must be positive");
  if (!(copula_theta >= 0.0)) fail(ErrorCode::invalid_configuration, "copula_theta must be >= 0");
  if (!(accrual_per_window > 0.0)) {
    fail(ErrorCode::invalid_configuration, "accrual_per_window must be positive");
  }
}

Scenario reference_scenario(int index) {
  Scenario s;
  s.name = "scenario" + std::to_string(index);
  switch (index) {
    case 1:
      s.clin_probs = {0.05, 0.05, 0.25, 0.40, 0.55};
      s.pat_probs = {0.17, 0.18, 0.35, 0.50, 0.65};
      break;
    case 2:
      s.clin_probs = {0.05, 0.25, 0.40, 0.55, 0.70};
      s.pat_probs = {0.10, 0.15, 0.35, 0.50, 0.65};
      break;
    case 3:
      s.clin_probs = {0.01, 0.02, 0.05, 0.10, 0.25};
      s.pat_probs = {0.04, 0.09, 0.17, 0.20, 0.35};
      break;
    case 4:
      s.clin_probs = {0.02, 0.05, 0.10, 0.25, 0.40};
      s.pat_probs = {0.09, 0.17, 0.20, 0.35, 0.50};
      break;
    case 5:
      s.clin_probs = {0.05, 0.10, 0.16, 0.25, 0.40};
      s.pat_probs = {0.05, 0.20, 0.35, 0.50, 0.65};
      break;
    case 6:
      s.clin_probs = {0.05, 0.18, 0.20, 0.25, 0.40};
      s.pat_probs = {0.17, 0.35, 0.50, 0.65, 0.80};
      break;
    case 7:
      s.clin_probs = {0.01, 0.05, 0.10, 0.16, 0.25};
      s.pat_probs = {0.04, 0.05, 0.20, 0.35, 0.50};
      break;
    default:
      fail(ErrorCode::invalid_configuration, "scenarios are numbered 1..7");
  }
  return s;
}

double weibull_scale(double prob_by_window, double window, double shape) {
  if (!(window > 0.0) || !(shape > 0.0)) {
    fail(ErrorCode::invalid_configuration, "weibull_scale needs positive window and shape");
  }
  if (prob_by_window == 0.0) return std::numeric_limits<double>::infinity();
  if (!(prob_by_window > 0.0 && prob_by_window < 1.0)) {
    fail(ErrorCode::invalid_configuration, "probability by window must lie in [0,1)");
  }
  return window / std::pow(-std::log1p(-prob_by_window), 1.0 / shape);
}

std::pair<double, double> clayton_from_uniforms(double theta, double s, double t) {
  if (!(theta >= 0.0)) fail(ErrorCode::invalid_configuration, "Clayton theta must be >= 0");
  if (theta < kIndependenceTheta) return {s, t};
  const double v =
      std::pow((std::pow(t, -theta / (1.0 + theta)) - 1.0) * std::pow(s, -theta) + 1.0, -1.0 / theta);
  return {s, v};
}

std::pair<double, double> clayton_pair(double theta, RandomStream& rng) {
  const double s = rng.uniform();
  const double t = rng.uniform();
  return clayton_from_uniforms(theta, s, t);
}

EventTimes draw_event_times(int dose_level, const Scenario& scenario, double window,
                            RandomStream& rng) {
  if (dose_level < 1 || dose_level > static_cast<int>(scenario.clin_probs.size())) {
    fail(ErrorCode::validation, "dose level outside the scenario");
  }
  const auto j = static_cast<std::size_t>(dose_level - 1);
  const auto [u, v] = clayton_pair(scenario.copula_theta, rng);
  EventTimes times;
  if (scenario.clin_probs[j] > 0.0) {
    times.clin_time = weibull_time(scenario.clin_probs[j], window, scenario.hazard_shape, u);
  }
  if (scenario.pat_probs[j] > 0.0) {
    times.pat_time = weibull_time(scenario.pat_probs[j], window, scenario.hazard_shape, v);
  }
  return times;
}

double next_arrival(double previous_entry, double accrual_per_window, double window,
                    RandomStream& rng) {
  if (!(accrual_per_window > 0.0)) {
    fail(ErrorCode::invalid_configuration, "accrual rate must be positive");
  }
  const double mean_gap = window / accrual_per_window;
  return previous_entry - mean_gap * std::log(rng.uniform());
}

TrialResult run_trial(const DesignConfig& design, const Scenario& scenario, std::uint64_t seed,
                      std::uint64_t replicate) {
  TrialState state{design, {}, 0.0};
  state.patients.reserve(static_cast<std::size_t>(design.n_max));
  RandomStream arrivals(seed, replicate, 0, Purpose::arrivals);
  const bool gated = design.kind == DesignKind::pro_crm;

  double arrival = 0.0;
  double entry = 0.0;
  for (int i = 1; i <= design.n_max; ++i) {
    if (i > 1) {
      // Arrivals form a Poisson process of their own; gating only delays
      // when an arrived patient can start treatment.
      arrival = next_arrival(arrival, scenario.accrual_per_window, design.window, arrivals);
      entry = gated ? std::max(arrival, entry + design.window) : arrival;
    }
    state.now = entry;
    const int dose = next_dose(state);
    RandomStream events(seed, replicate, static_cast<std::uint64_t>(i), Purpose::event_times);
    const auto times = draw_event_times(dose, scenario, design.window, events);
    state.patients.push_back({i, entry, dose, times.clin_time, times.pat_time});
  }

  state.now = entry + design.window;
  TrialResult result;
  result.final_dose = final_recommendation(state);
  result.duration_weeks = state.now;
  for (const auto& p : state.patients) {
    result.clin_dlt.push_back(p.clin_event_time && *p.clin_event_time <= design.window);
    result.pat_dlt.push_back(p.pat_event_time && *p.pat_event_time <= design.window);
  }
  result.patients = std::move(state.patients);
  return result;
}

OperatingCharacteristics summarize(const std::vector<TrialResult>& trials, const Scenario& scenario,
                                   const DesignConfig& design) {
  OperatingCharacteristics oc;
  const int m = design.dose_levels();
  oc.n_replicates = static_cast<int>(trials.size());
  oc.true_dose = true_optimal_dose(scenario.clin_probs, scenario.pat_probs, design.clinician_target,
                                   design.patient_target);
  std::vector<long> picks(static_cast<std::size_t>(m), 0);
  double overdose = 0.0;
  double at_mtd = 0.0;
  double clin = 0.0;
  double pat = 0.0;
  double duration = 0.0;
  for (const auto& t : trials) {
    ++picks[static_cast<std::size_t>(t.final_dose - 1)];
    for (const auto& p : t.patients) {
      if (!oc.true_dose || p.dose_level > *oc.true_dose) overdose += 1.0;
      if (oc.true_dose && p.dose_level == *oc.true_dose) at_mtd += 1.0;
    }
    clin += static_cast<double>(std::count(t.clin_dlt.begin(), t.clin_dlt.end(), true));
    pat += static_cast<double>(std::count(t.pat_dlt.begin(), t.pat_dlt.end(), true));
    duration += t.duration_weeks;
  }
  const double n = static_cast<double>(trials.size());
  for (long c : picks) oc.selection_pct.push_back(100.0 * static_cast<double>(c) / n);
  oc.pcs = oc.true_dose ? oc.selection_pct[static_cast<std::size_t>(*oc.true_dose - 1)] : 0.0;
  oc.mean_overdose_patients = overdose / n;
  oc.mean_mtd_patients = at_mtd / n;
  oc.mean_clin_dlt = clin / n;
  oc.mean_pat_dlt = pat / n;
  oc.mean_duration_weeks = duration / n;
  return oc;
}

OperatingCharacteristics run_simulation(const SimJob& job, int threads) {
  job.design.validate();
  job.scenario.validate();
  if (job.n_replicates < 1) fail(ErrorCode::invalid_configuration, "n_replicates must be >= 1");
  if (static_cast<int>(job.scenario.clin_probs.size()) != job.design.dose_levels()) {
    fail(ErrorCode::invalid_configuration, "scenario and design disagree on the number of doses");
  }

  std::vector<TrialResult> trials(static_cast<std::size_t>(job.n_replicates));
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, job.n_replicates);

  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    try {
      for (int r = next++; r < job.n_replicates; r = next++) {
        trials[static_cast<std::size_t>(r)] =
            run_trial(job.design, job.scenario, job.seed, static_cast<std::uint64_t>(r));
      }
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
      next = job.n_replicates;
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
  return summarize(trials, job.scenario, job.design);
}

}  // namespace procrm
