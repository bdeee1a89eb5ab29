#include "procrm/dose_model.hpp"

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "procrm/errors.hpp"

namespace procrm {

namespace {

constexpr int kQuadratureNodes = 201;
constexpr double kHalfWidthInSd = 8.0;
// Relative density at the integration bounds above which the posterior is
// considered to leak out of the quadrature interval.
constexpr double kBoundaryTolerance = 1e-4;

struct GaussLegendre {
  std::array<double, kQuadratureNodes> nodes{};
  std::array<double, kQuadratureNodes> weights{};
};

// Newton iteration on P_n with the Chebyshev-like initial guess.
GaussLegendre make_gauss_legendre() {
  GaussLegendre rule;
  constexpr int n = kQuadratureNodes;
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    // Recompute derivative at the converged root.
    double p0 = 1.0;
    double p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[static_cast<std::size_t>(i)] = -x;
    rule.nodes[static_cast<std::size_t>(n - 1 - i)] = x;
    rule.weights[static_cast<std::size_t>(i)] = w;
    rule.weights[static_cast<std::size_t>(n - 1 - i)] = w;
  }
  return rule;
}

const GaussLegendre& gauss_legendre() {
  static const GaussLegendre rule = make_gauss_legendre();
  return rule;
}

void check_levels(std::span<const WeightedObservation> obs, const Skeleton& skeleton) {
  for (const auto& o : obs) {
    if (o.dose_level < 1 || o.dose_level > skeleton.size()) {
      fail(ErrorCode::validation, "observation dose level " + std::to_string(o.dose_level) +
                                      " outside 1.." + std::to_string(skeleton.size()));
    }
    if (!(o.weight >= 0.0 && o.weight <= 1.0)) {
      fail(ErrorCode::validation, "observation weight must lie in [0,1]");
    }
  }
}

// Sufficient statistics of the weighted likelihood: complete non-DLT
// observations and DLTs collapse to per-dose counts, only partially followed
// non-DLT observations need to be visited one by one.
struct LikelihoodSummary {
  std::vector<double> log_skeleton;
  std::vector<int> dlt_count;
  std::vector<int> complete_count;
  std::vector<WeightedObservation> partial;
  double log_dlt_weights = 0.0;

  LikelihoodSummary(std::span<const WeightedObservation> obs, const Skeleton& skeleton)
      : dlt_count(static_cast<std::size_t>(skeleton.size()), 0),
        complete_count(static_cast<std::size_t>(skeleton.size()), 0) {
    log_skeleton.reserve(skeleton.values().size());
    for (double u : skeleton.values()) log_skeleton.push_back(std::log(u));
    for (const auto& o : obs) {
      const auto j = static_cast<std::size_t>(o.dose_level - 1);
      if (o.dlt) {
        ++dlt_count[j];
        log_dlt_weights += std::log(o.weight);
      } else if (o.weight == 1.0) {
        ++complete_count[j];
      } else if (o.weight > 0.0) {
        partial.push_back(o);
      }
    }
  }

  double log_likelihood(double param) const {
    const double exponent = std::exp(param);
    double total = log_dlt_weights;
    for (std::size_t j = 0; j < log_skeleton.size(); ++j) {
      if (dlt_count[j] == 0 && complete_count[j] == 0) continue;
      const double log_p = exponent * log_skeleton[j];
      total += dlt_count[j] * log_p;
      if (complete_count[j] > 0) total += complete_count[j] * std::log1p(-std::exp(log_p));
    }
    for (const auto& o : partial) {
      const double p = std::exp(exponent * log_skeleton[static_cast<std::size_t>(o.dose_level - 1)]);
      total += std::log1p(-o.weight * p);
    }
    return total;
  }
};

}  // namespace

Skeleton::Skeleton(std::vector<double> values) : values_(std::move(values)) {
  if (values_.size() < 2) {
    fail(ErrorCode::invalid_configuration, "skeleton needs at least two dose levels");
  }
  for (std::size_t j = 0; j < values_.size(); ++j) {
    if (!(values_[j] > 0.0 && values_[j] < 1.0)) {
      fail(ErrorCode::invalid_configuration,
           "skeleton value at level " + std::to_string(j + 1) + " must lie strictly inside (0,1)");
    }
    if (j > 0 && !(values_[j] > values_[j - 1])) {
      fail(ErrorCode::invalid_configuration,
           "skeleton must be strictly increasing (level " + std::to_string(j + 1) + ")");
    }
  }
}

ToxicityTarget::ToxicityTarget(double value) : value_(value) {
  if (!(value > 0.0 && value < 1.0)) {
    fail(ErrorCode::invalid_configuration, "toxicity target must lie strictly inside (0,1)");
  }
}

PriorSpec::PriorSpec(double sd) : sd_(sd) {
  if (!(sd > 0.0) || !std::isfinite(sd)) {
    fail(ErrorCode::invalid_configuration, "prior sd must be positive");
  }
}

double follow_up_weight(double follow_up_time, double window, bool dlt_observed) {
  if (!(window > 0.0)) fail(ErrorCode::invalid_configuration, "observation window must be positive");
  if (dlt_observed) return 1.0;
  return std::clamp(follow_up_time / window, 0.0, 1.0);
}

double model_probability(double skeleton_value, double param) {
  return std::pow(skeleton_value, std::exp(param));
}

double log_weighted_likelihood(double param, std::span<const WeightedObservation> obs,
                               const Skeleton& skeleton) {
  check_levels(obs, skeleton);
  double total = 0.0;
  for (const auto& o : obs) {
    const double p = model_probability(skeleton.at(o.dose_level), param);
    const double wp = o.weight * p;
    if (o.dlt) {
      total += std::log(wp);
    } else {
      assert(wp < 1.0);
      total += std::log1p(-wp);
    }
  }
  return total;
}

double weighted_likelihood(double param, std::span<const WeightedObservation> obs,
                           const Skeleton& skeleton) {
  return std::exp(log_weighted_likelihood(param, obs, skeleton));
}

double posterior_mean(const PriorSpec& prior, std::span<const WeightedObservation> obs,
                      const Skeleton& skeleton) {
  check_levels(obs, skeleton);
  const LikelihoodSummary summary(obs, skeleton);
  const auto& rule = gauss_legendre();
  const double half = kHalfWidthInSd * prior.sd();
  const double inv_two_var = 1.0 / (2.0 * prior.sd() * prior.sd());

  auto log_integrand = [&](double b) { return summary.log_likelihood(b) - b * b * inv_two_var; };

  std::array<double, kQuadratureNodes> log_values{};
  double peak = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < kQuadratureNodes; ++i) {
    const double b = half * rule.nodes[static_cast<std::size_t>(i)];
    const double v = log_integrand(b);
    log_values[static_cast<std::size_t>(i)] = v;
    if (v > peak) peak = v;
  }

  double numerator = 0.0;
  double denominator = 0.0;
  for (int i = 0; i < kQuadratureNodes; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double b = half * rule.nodes[k];
    const double f = rule.weights[k] * std::exp(log_values[k] - peak);
    numerator += b * f;
    denominator += f;
  }

  const double lower_edge = log_integrand(-half) - peak;
  const double upper_edge = log_integrand(half) - peak;
  const double edge_limit = std::log(kBoundaryTolerance);
  if (!std::isfinite(peak) || !(denominator > 0.0) || !std::isfinite(numerator) ||
      lower_edge > edge_limit || upper_edge > edge_limit) {
    std::ostringstream msg;
    msg << "posterior quadrature failed: peak log-density " << peak << ", mass " << denominator
        << ", relative log-density at bounds (" << lower_edge << ", " << upper_edge << ") over "
        << obs.size() << " observations";
    fail(ErrorCode::numerical, msg.str());
  }
  return numerator / denominator;
}

std::vector<double> estimated_curve(const Skeleton& skeleton, double param_estimate) {
  std::vector<double> curve;
  curve.reserve(skeleton.values().size());
  for (double u : skeleton.values()) curve.push_back(model_probability(u, param_estimate));
  return curve;
}

int select_dose(const Skeleton& skeleton, double param_estimate, ToxicityTarget target) {
  int best = 1;
  double best_distance = std::numeric_limits<double>::infinity();
  for (int level = 1; level <= skeleton.size(); ++level) {
    const double distance =
        std::abs(model_probability(skeleton.at(level), param_estimate) - target.value());
    if (distance < best_distance) {
      best_distance = distance;
      best = level;
    }
  }
  return best;
}

}  // namespace procrm
