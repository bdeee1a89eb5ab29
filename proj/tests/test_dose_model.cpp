#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "procrm/dose_model.hpp"
#include "procrm/errors.hpp"

using namespace procrm;

namespace {

const std::vector<double> kClinSkeleton = {0.08, 0.16, 0.25, 0.35, 0.46};
const std::vector<double> kPatSkeleton = {0.13, 0.23, 0.35, 0.47, 0.58};

std::vector<oracle::Obs> to_oracle(const std::vector<WeightedObservation>& obs) {
  std::vector<oracle::Obs> out;
  for (const auto& o : obs) out.push_back({o.dose_level, o.weight, o.dlt});
  return out;
}

// Random fixture: complete or partially followed patients, DLTs only with
// weight 1, more DLTs at higher doses.
std::vector<WeightedObservation> random_fixture(std::mt19937_64& gen, int n, bool complete) {
  std::uniform_int_distribution<int> dose(1, 5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<WeightedObservation> obs;
  for (int k = 0; k < n; ++k) {
    const int d = dose(gen);
    const bool dlt = unit(gen) < 0.08 * d;
    const double w = dlt || complete ? 1.0 : (unit(gen) < 0.5 ? 1.0 : unit(gen));
    obs.push_back({d, w, dlt});
  }
  return obs;
}

}  // namespace

TEST_CASE("follow_up_weight is linear and capped") {
  CHECK(follow_up_weight(3, 6, false) == doctest::Approx(0.5));
  CHECK(follow_up_weight(2, 6, true) == 1.0);
  CHECK(follow_up_weight(9, 6, false) == 1.0);
  CHECK(follow_up_weight(0, 6, false) == 0.0);
  CHECK_THROWS_AS(follow_up_weight(1, 0, false), Error);
  CHECK_THROWS_AS(follow_up_weight(1, -2, false), Error);

  double previous = 0.0;
  for (double t = 0.0; t <= 8.0; t += 0.25) {
    const double w = follow_up_weight(t, 6.0, false);
    CHECK(w >= previous);
    previous = w;
  }
}

TEST_CASE("model_probability") {
  CHECK(model_probability(0.25, 0.0) == doctest::Approx(0.25));
  CHECK(model_probability(0.25, std::log(2.0)) == doctest::Approx(0.0625));
  CHECK(model_probability(0.08, 0.0) == doctest::Approx(0.08));
  // decreasing in the parameter, increasing across the skeleton
  CHECK(model_probability(0.25, 0.3) < model_probability(0.25, 0.1));
  for (double b : {-2.0, -0.5, 0.0, 0.7, 2.5}) {
    for (std::size_t j = 1; j < kClinSkeleton.size(); ++j) {
      CHECK(model_probability(kClinSkeleton[j], b) > model_probability(kClinSkeleton[j - 1], b));
    }
  }
}

TEST_CASE("Skeleton and target invariants") {
  CHECK_THROWS_AS(Skeleton({0.1}), Error);
  CHECK_THROWS_AS(Skeleton({0.1, 0.1, 0.2}), Error);
  CHECK_THROWS_AS(Skeleton({0.0, 0.1}), Error);
  CHECK_THROWS_AS(Skeleton({0.5, 1.0}), Error);
  CHECK_THROWS_AS(ToxicityTarget(0.0), Error);
  CHECK_THROWS_AS(ToxicityTarget(1.0), Error);
  CHECK_THROWS_AS(PriorSpec(0.0), Error);
  CHECK_NOTHROW(Skeleton{kClinSkeleton});
}

TEST_CASE("weighted_likelihood examples") {
  const Skeleton u(kClinSkeleton);
  const std::vector<WeightedObservation> dlt = {{3, 1.0, true}};
  const std::vector<WeightedObservation> partial = {{3, 0.5, false}};
  CHECK(weighted_likelihood(0.0, dlt, u) == doctest::Approx(0.25));
  CHECK(weighted_likelihood(0.0, partial, u) == doctest::Approx(0.875));
  CHECK(weighted_likelihood(0.0, {}, u) == 1.0);
  const std::vector<WeightedObservation> bad = {{6, 1.0, false}};
  CHECK_THROWS_AS(weighted_likelihood(0.0, bad, u), Error);
}

TEST_CASE("weighted_likelihood factorizes and reduces to the binomial CRM likelihood") {
  const Skeleton u(kClinSkeleton);
  std::mt19937_64 gen(11);
  for (int rep = 0; rep < 50; ++rep) {
    const auto a = random_fixture(gen, 7, false);
    const auto b = random_fixture(gen, 5, false);
    auto ab = a;
    ab.insert(ab.end(), b.begin(), b.end());
    const double param = std::uniform_real_distribution<double>(-1.5, 1.5)(gen);
    CHECK(weighted_likelihood(param, ab, u) ==
          doctest::Approx(weighted_likelihood(param, a, u) * weighted_likelihood(param, b, u)).epsilon(1e-12));
    CHECK(weighted_likelihood(param, ab, u) == doctest::Approx(oracle::likelihood(param, to_oracle(ab), kClinSkeleton)).epsilon(1e-12));

    const auto complete = random_fixture(gen, 12, true);
    std::vector<int> n(5, 0);
    std::vector<int> tox(5, 0);
    for (const auto& o : complete) {
      ++n[static_cast<std::size_t>(o.dose_level - 1)];
      if (o.dlt) ++tox[static_cast<std::size_t>(o.dose_level - 1)];
    }
    CHECK(weighted_likelihood(param, complete, u) ==
          doctest::Approx(oracle::unweighted_crm_likelihood(param, n, tox, kClinSkeleton)).epsilon(1e-12));
  }
}

TEST_CASE("posterior_mean against frozen and trapezoid oracles") {
  const Skeleton u(kClinSkeleton);
  const PriorSpec prior(0.522);

  CHECK(std::abs(posterior_mean(prior, {}, u)) < 1e-6);

  // Frozen with adaptive quadrature in an independent environment.
  const std::vector<WeightedObservation> one_dlt = {{3, 1.0, true}};
  CHECK(posterior_mean(prior, one_dlt, u) == doctest::Approx(-0.3078168603247742).epsilon(1e-6));
  const std::vector<WeightedObservation> mixed = {{1, 1.0, false}, {1, 1.0, false}, {2, 1.0, false},
                                                  {2, 1.0, true},  {3, 0.5, false}, {3, 1.0, true}};
  CHECK(posterior_mean(prior, mixed, u) == doctest::Approx(-0.3125739159454345).epsilon(1e-6));

  CHECK(std::abs(posterior_mean(prior, one_dlt, u) -
                 oracle::trapezoid_posterior_mean(0.522, to_oracle(one_dlt), kClinSkeleton)) < 1e-4);

  std::mt19937_64 gen(2024);
  const auto eighteen = random_fixture(gen, 18, true);
  CHECK(std::abs(posterior_mean(prior, eighteen, u) -
                 oracle::trapezoid_posterior_mean(0.522, to_oracle(eighteen), kClinSkeleton)) < 1e-4);
}

TEST_CASE("posterior_mean reports quadrature failure instead of returning") {
  // A thousand DLTs at the lowest dose pull the posterior past -8 sd.
  const Skeleton u(kClinSkeleton);
  std::vector<WeightedObservation> obs(1000, {1, 1.0, true});
  bool threw = false;
  try {
    posterior_mean(PriorSpec(0.522), obs, u);
  } catch (const Error& e) {
    threw = true;
    CHECK(e.code() == ErrorCode::numerical);
    CHECK(std::string(e.what()).find("bounds") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("select_dose") {
  const Skeleton u(kClinSkeleton);
  const Skeleton v(kPatSkeleton);
  CHECK(select_dose(u, 0.0, ToxicityTarget(0.25)) == 3);
  CHECK(select_dose(v, 0.0, ToxicityTarget(0.35)) == 3);
  CHECK(select_dose(u, 3.0, ToxicityTarget(0.25)) == 5);
  CHECK(select_dose(u, -3.0, ToxicityTarget(0.25)) == 1);
  // exact tie between 0.2 and 0.3 around 0.25 goes to the lower dose
  CHECK(select_dose(Skeleton({0.1, 0.2, 0.3, 0.4}), 0.0, ToxicityTarget(0.25)) == 2);
}

TEST_CASE("select_dose responds to data in the expected direction") {
  const Skeleton u(kClinSkeleton);
  const PriorSpec prior(0.522);
  const ToxicityTarget theta(0.25);
  std::mt19937_64 gen(77);
  for (int rep = 0; rep < 100; ++rep) {
    auto obs = random_fixture(gen, std::uniform_int_distribution<int>(1, 20)(gen), false);
    const int before = select_dose(u, posterior_mean(prior, obs, u), theta);

    auto with_dlt = obs;
    with_dlt.push_back({5, 1.0, true});
    CHECK(select_dose(u, posterior_mean(prior, with_dlt, u), theta) <= before);

    auto with_safe = obs;
    with_safe.push_back({before, 1.0, false});
    CHECK(select_dose(u, posterior_mean(prior, with_safe, u), theta) >= before);
  }
}

TEST_CASE("posterior_mean matches the trapezoid oracle on 100 random fixtures") {
  std::mt19937_64 gen(5150);
  int checked = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const bool clinician = rep % 2 == 0;
    const auto& skel = clinician ? kClinSkeleton : kPatSkeleton;
    const double sd = clinician ? 0.522 : 0.59;
    const auto obs = random_fixture(gen, std::uniform_int_distribution<int>(0, 40)(gen), rep % 3 == 0);
    const double got = posterior_mean(PriorSpec(sd), obs, Skeleton(skel));
    const double want = oracle::trapezoid_posterior_mean(sd, to_oracle(obs), skel);
    CHECK(std::abs(got - want) < 1e-4);
    ++checked;
  }
  CHECK(checked == 100);
}
