#pragma once

// One-parameter empiric working model, TITE-weighted likelihood and posterior
// mean estimation for a single toxicity stream (clinician or patient).
//
// Dose levels are 1-based everywhere in the public API.

#include <span>
#include <string>
#include <vector>

namespace procrm {

class Skeleton {
 public:
  // Throws invalid_configuration unless the values are strictly increasing,
  // inside (0,1) and there are at least two of them.
  explicit Skeleton(std::vector<double> values);

  int size() const noexcept { return static_cast<int>(values_.size()); }
  // level is 1-based.
  double at(int level) const { return values_.at(static_cast<std::size_t>(level - 1)); }
  const std::vector<double>& values() const noexcept { return values_; }

  bool operator==(const Skeleton&) const = default;

 private:
  std::vector<double> values_;
};

class ToxicityTarget {
 public:
  explicit ToxicityTarget(double value);
  double value() const noexcept { return value_; }
  bool operator==(const ToxicityTarget&) const = default;

 private:
  double value_;
};

// Normal(0, sd) prior on the log-exponent of the working model.
class PriorSpec {
 public:
  explicit PriorSpec(double sd);
  double mean() const noexcept { return 0.0; }
  double sd() const noexcept { return sd_; }
  bool operator==(const PriorSpec&) const = default;

 private:
  double sd_;
};

struct WeightedObservation {
  int dose_level = 1;
  double weight = 0.0;
  bool dlt = false;

  bool operator==(const WeightedObservation&) const = default;
};

/// Linear TITE weight: 1 once a DLT is seen, otherwise the fraction of the
/// observation window already followed, capped at 1.
double follow_up_weight(double follow_up_time, double window, bool dlt_observed);

/// skeleton_value ^ exp(param). Equals the skeleton at param = 0.
double model_probability(double skeleton_value, double param);

/// Weighted likelihood prod_k (w p)^y (1 - w p)^(1-y) evaluated in log space.
double log_weighted_likelihood(double param, std::span<const WeightedObservation> obs,
                               const Skeleton& skeleton);
double weighted_likelihood(double param, std::span<const WeightedObservation> obs,
                           const Skeleton& skeleton);

/// Posterior mean of the model parameter under a Normal(0, sd) prior, by
/// 201-node Gauss-Legendre quadrature on [-8 sd, 8 sd].
///
/// Throws a numerical error when the integrand is degenerate or still carries
/// appreciable mass at the integration bounds.
double posterior_mean(const PriorSpec& prior, std::span<const WeightedObservation> obs,
                      const Skeleton& skeleton);

/// Estimated toxicity probability per dose level at a plug-in parameter.
std::vector<double> estimated_curve(const Skeleton& skeleton, double param_estimate);

/// argmin_j |model_probability(skeleton_j, estimate) - target|; ties go to the
/// lower dose.
int select_dose(const Skeleton& skeleton, double param_estimate, ToxicityTarget target);

}  // namespace procrm
