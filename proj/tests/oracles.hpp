#pragma once

// Independent reference computations used only by the tests. Nothing here
// calls into the library's numerical paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace oracle {

struct Obs {
  int dose;  // 1-based
  double weight;
  bool dlt;
};

// Plain product form of the weighted likelihood, linear scale.
inline double likelihood(double b, const std::vector<Obs>& obs, const std::vector<double>& skeleton) {
  double L = 1.0;
  for (const auto& o : obs) {
    const double p = std::pow(skeleton[o.dose - 1], std::exp(b));
    L *= o.dlt ? o.weight * p : 1.0 - o.weight * p;
  }
  return L;
}

// Binomial-form CRM likelihood for complete data: per dose,
// p^tox (1-p)^(n-tox).
inline double unweighted_crm_likelihood(double b, const std::vector<int>& n_per_dose,
                                        const std::vector<int>& tox_per_dose,
                                        const std::vector<double>& skeleton) {
  double L = 1.0;
  for (std::size_t j = 0; j < skeleton.size(); ++j) {
    const double p = std::pow(skeleton[j], std::exp(b));
    L *= std::pow(p, tox_per_dose[j]) * std::pow(1.0 - p, n_per_dose[j] - tox_per_dose[j]);
  }
  return L;
}

// Trapezoid rule, 100,001 points over [-10 sd, 10 sd], in log space.
inline double trapezoid_posterior_mean(double sd, const std::vector<Obs>& obs,
                                       const std::vector<double>& skeleton) {
  constexpr int points = 100001;
  const double lo = -10.0 * sd;
  const double h = 20.0 * sd / (points - 1);
  std::vector<double> logf(points);
  double peak = -INFINITY;
  for (int i = 0; i < points; ++i) {
    const double b = lo + i * h;
    double ll = 0.0;
    for (const auto& o : obs) {
      const double p = std::pow(skeleton[o.dose - 1], std::exp(b));
      ll += o.dlt ? std::log(o.weight * p) : std::log(1.0 - o.weight * p);
    }
    logf[i] = ll - b * b / (2.0 * sd * sd);
    peak = std::max(peak, logf[i]);
  }
  double num = 0.0;
  double den = 0.0;
  for (int i = 0; i < points; ++i) {
    const double b = lo + i * h;
    const double c = (i == 0 || i == points - 1) ? 0.5 : 1.0;
    const double f = c * std::exp(logf[i] - peak);
    num += b * f;
    den += f;
  }
  return num / den;
}

// Straight-line evaluation of the two argmins and their minimum.
inline int argmin_distance(const std::vector<double>& skeleton, double b, double target) {
  int best = 0;
  for (int j = 1; j < static_cast<int>(skeleton.size()); ++j) {
    if (std::fabs(std::pow(skeleton[j], std::exp(b)) - target) <
        std::fabs(std::pow(skeleton[best], std::exp(b)) - target)) {
      best = j;
    }
  }
  return best + 1;
}

// Conditional Clayton CDF dC/du at (u, v).
inline double clayton_conditional(double theta, double u, double v) {
  return std::pow(u, -theta - 1.0) * std::pow(std::pow(u, -theta) + std::pow(v, -theta) - 1.0, -1.0 / theta - 1.0);
}

// Solves clayton_conditional(theta, u, v) = t for v by bisection.
inline double clayton_inverse_bisection(double theta, double u, double t) {
  double lo = 1e-15;
  double hi = 1.0 - 1e-15;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (clayton_conditional(theta, u, mid) < t) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Kendall's tau for continuous data (no ties): sort by x, then count
// discordant pairs as inversions of y with a merge sort.
inline double kendall_tau(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
  std::vector<double> buffer(n);
  long double inversions = 0;
  for (std::size_t width = 1; width < n; width *= 2) {
    for (std::size_t lo = 0; lo < n; lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, n);
      const std::size_t hi = std::min(lo + 2 * width, n);
      std::size_t i = lo, j = mid, k = lo;
      while (i < mid && j < hi) {
        if (ys[i] <= ys[j]) {
          buffer[k++] = ys[i++];
        } else {
          inversions += static_cast<long double>(mid - i);
          buffer[k++] = ys[j++];
        }
      }
      while (i < mid) buffer[k++] = ys[i++];
      while (j < hi) buffer[k++] = ys[j++];
    }
    ys.swap(buffer);
  }
  const long double pairs = static_cast<long double>(n) * (n - 1) / 2.0L;
  return static_cast<double>(1.0L - 2.0L * inversions / pairs);
}

}  // namespace oracle
