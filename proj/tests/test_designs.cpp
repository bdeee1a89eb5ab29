#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "procrm/designs.hpp"
#include "procrm/errors.hpp"

using namespace procrm;

namespace {

const DesignKind kAllKinds[] = {DesignKind::tite_crm, DesignKind::pro_crm, DesignKind::tite_pro_crm,
                                DesignKind::tite_crm_plus_pro};

PatientRecord patient(int id, double entry, int dose, std::optional<double> clin = std::nullopt,
                      std::optional<double> pat = std::nullopt) {
  PatientRecord p;
  p.id = id;
  p.entry_time = entry;
  p.dose_level = dose;
  p.clin_event_time = clin;
  p.pat_event_time = pat;
  return p;
}

TrialState state_of(DesignKind kind, std::vector<PatientRecord> patients, double now) {
  TrialState s;
  s.config.kind = kind;
  s.patients = std::move(patients);
  s.now = now;
  return s;
}

// Complete 18-patient dataset; events inside the window where flagged.
TrialState complete_fixture(DesignKind kind, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<PatientRecord> pts;
  for (int i = 0; i < 18; ++i) {
    const int dose = 1 + i / 4;
    const double p_clin = 0.05 + 0.1 * dose;
    const double p_pat = 0.1 + 0.12 * dose;
    std::optional<double> clin;
    std::optional<double> pat;
    if (unit(gen) < p_clin) clin = 6.0 * unit(gen);
    if (unit(gen) < p_pat) pat = 6.0 * unit(gen);
    pts.push_back(patient(i + 1, 3.0 * i, dose, clin, pat));
  }
  return state_of(kind, pts, 3.0 * 17 + 6.0);
}

}  // namespace

TEST_CASE("snapshot_observations examples") {
  auto s = state_of(DesignKind::tite_pro_crm, {patient(1, 0.0, 1)}, 3.0);
  auto obs = snapshot_observations(s, Stream::clinician);
  REQUIRE(obs.size() == 1);
  CHECK(obs[0].weight == doctest::Approx(0.5));
  CHECK_FALSE(obs[0].dlt);

  s = state_of(DesignKind::tite_pro_crm, {patient(1, 0.0, 1, 2.0)}, 3.0);
  obs = snapshot_observations(s, Stream::clinician);
  CHECK(obs[0].weight == 1.0);
  CHECK(obs[0].dlt);
  // the other stream is unaffected
  obs = snapshot_observations(s, Stream::patient);
  CHECK(obs[0].weight == doctest::Approx(0.5));
  CHECK_FALSE(obs[0].dlt);

  s = state_of(DesignKind::tite_pro_crm, {patient(1, 0.0, 1, 7.0)}, 10.0);
  obs = snapshot_observations(s, Stream::clinician);
  CHECK(obs[0].weight == 1.0);
  CHECK_FALSE(obs[0].dlt);

  // an event not yet reached counts as not observed
  s = state_of(DesignKind::tite_pro_crm, {patient(1, 0.0, 1, 4.0)}, 3.0);
  obs = snapshot_observations(s, Stream::clinician);
  CHECK(obs[0].weight == doctest::Approx(0.5));
  CHECK_FALSE(obs[0].dlt);
}

TEST_CASE("constrained_next_dose examples") {
  auto s = state_of(DesignKind::tite_crm, {patient(1, 0.0, 2)}, 1.0);
  CHECK(constrained_next_dose(4, s) == 3);
  s = state_of(DesignKind::tite_crm, {patient(1, 0.0, 3)}, 1.0);
  CHECK(constrained_next_dose(1, s) == 1);
  s = state_of(DesignKind::tite_crm, {}, 0.0);
  CHECK(constrained_next_dose(4, s) == 1);
  s.config.start_dose = 2;
  CHECK(constrained_next_dose(4, s) == 2);
  s = state_of(DesignKind::tite_crm, {patient(1, 0.0, 1)}, 1.0);
  s.config.no_skip = false;
  CHECK(constrained_next_dose(5, s) == 5);
}

TEST_CASE("next_dose on an empty trial is the start dose for every kind") {
  for (auto kind : kAllKinds) {
    const auto s = state_of(kind, {}, 0.0);
    CHECK(next_dose(s) == 1);
    const Decision d = next_decision(s);
    CHECK(d.dose == 1);
    CHECK(d.start_dose_rule);
    // prior curves equal the skeletons
    CHECK(d.clinician.curve[2] == doctest::Approx(0.25));
    CHECK(d.patient.curve[2] == doctest::Approx(0.35));
  }
}

TEST_CASE("next_dose raises trial_complete at capacity") {
  std::vector<PatientRecord> pts;
  for (int i = 0; i < 18; ++i) pts.push_back(patient(i + 1, i * 3.0, 1));
  const auto s = state_of(DesignKind::tite_pro_crm, pts, 60.0);
  try {
    next_dose(s);
    FAIL("expected trial_complete");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::trial_complete);
  }
}

TEST_CASE("PRO dominance and escalation bound by exhaustive small-state enumeration") {
  // Up to four patients, doses 1..3, every clinician/patient DLT pattern,
  // staggered entries so most follow-ups are partial.
  int states = 0;
  for (int n = 1; n <= 4; ++n) {
    int combos = 1;
    for (int k = 0; k < n; ++k) combos *= 12;
    for (int code = 0; code < combos; ++code) {
      std::vector<PatientRecord> pts;
      int c = code;
      for (int k = 0; k < n; ++k) {
        const int cell = c % 12;
        c /= 12;
        const int dose = 1 + cell % 3;
        const bool clin = (cell / 3) % 2 == 1;
        const bool pat = (cell / 6) == 1;
        pts.push_back(patient(k + 1, 2.5 * k, dose, clin ? std::optional<double>(1.0) : std::nullopt,
                              pat ? std::optional<double>(1.5) : std::nullopt));
      }
      const double now = 2.5 * n;
      auto tite = state_of(DesignKind::tite_crm, pts, now);
      auto pro = state_of(DesignKind::tite_pro_crm, pts, now);
      auto plus = state_of(DesignKind::tite_crm_plus_pro, pts, now);
      const Decision dt = next_decision(tite);
      const Decision dp = next_decision(pro);
      CHECK(dp.model_choice <= dt.model_choice);
      CHECK(dp.dose <= dt.dose);
      CHECK(next_decision(plus).dose == dt.dose);
      CHECK(dt.dose <= tite.highest_dose_tried() + 1);
      CHECK(dp.dose <= pro.highest_dose_tried() + 1);
      ++states;
    }
  }
  CHECK(states == 12 + 144 + 1728 + 20736);
}

TEST_CASE("complete-data coincidence of TITE-PRO-CRM and PRO-CRM") {
  std::mt19937_64 gen(31);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<PatientRecord> pts;
    std::uniform_int_distribution<int> dose(1, 4);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int n = 1 + rep % 10;
    for (int k = 0; k < n; ++k) {
      std::optional<double> clin;
      std::optional<double> pat;
      if (unit(gen) < 0.25) clin = 6.0 * unit(gen);
      if (unit(gen) < 0.35) pat = 6.0 * unit(gen);
      pts.push_back(patient(k + 1, 6.0 * k, dose(gen), clin, pat));
    }
    const double now = 6.0 * n;
    auto a = state_of(DesignKind::tite_pro_crm, pts, now);
    auto b = state_of(DesignKind::pro_crm, pts, now);
    REQUIRE(a.follow_up_complete());
    CHECK(next_dose(a) == next_dose(b));
  }
}

TEST_CASE("determinism of next_dose and final_recommendation") {
  const auto s = complete_fixture(DesignKind::tite_pro_crm, 3);
  CHECK(final_recommendation(s) == final_recommendation(s));
  auto partial = s;
  partial.patients.resize(9);
  partial.now = 26.0;
  CHECK(next_dose(partial) == next_dose(partial));
  const Decision a = next_decision(partial);
  const Decision b = next_decision(partial);
  CHECK(a.clinician.posterior_mean == b.clinician.posterior_mean);
  CHECK(a.patient.posterior_mean == b.patient.posterior_mean);
}

TEST_CASE("final_recommendation with no toxicity is the top dose for every kind") {
  for (auto kind : kAllKinds) {
    std::vector<PatientRecord> pts;
    for (int i = 0; i < 18; ++i) pts.push_back(patient(i + 1, 3.0 * i, 1 + i % 5));
    const auto s = state_of(kind, pts, 3.0 * 17 + 6.0);
    CHECK(final_recommendation(s) == 5);
  }
}

TEST_CASE("final_recommendation against a straight-line oracle") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto tite = complete_fixture(DesignKind::tite_crm, seed);
    const auto plus = complete_fixture(DesignKind::tite_crm_plus_pro, seed);
    const auto pro = complete_fixture(DesignKind::tite_pro_crm, seed);
    const auto& cfg = tite.config;

    std::vector<oracle::Obs> clin;
    std::vector<oracle::Obs> pat;
    for (const auto& p : tite.patients) {
      clin.push_back({p.dose_level, 1.0, p.clin_event_time.has_value()});
      pat.push_back({p.dose_level, 1.0, p.pat_event_time.has_value()});
    }
    const double b = oracle::trapezoid_posterior_mean(0.522, clin, cfg.clinician_skeleton.values());
    const double g = oracle::trapezoid_posterior_mean(0.59, pat, cfg.patient_skeleton.values());
    const int c = oracle::argmin_distance(cfg.clinician_skeleton.values(), b, 0.25);
    const int p = oracle::argmin_distance(cfg.patient_skeleton.values(), g, 0.35);

    CHECK(final_recommendation(tite) == c);
    CHECK(final_recommendation(plus) == std::min(c, p));
    CHECK(final_recommendation(pro) == std::min(c, p));
    CHECK(final_recommendation(plus) <= final_recommendation(tite));
  }
}

TEST_CASE("final_recommendation requires capacity and complete follow-up") {
  auto s = complete_fixture(DesignKind::tite_pro_crm, 4);
  auto early = s;
  early.now = s.patients.back().entry_time + 5.0;
  auto short_trial = s;
  short_trial.patients.resize(17);
  for (const auto& bad : {early, short_trial}) {
    try {
      final_recommendation(bad);
      FAIL("expected not_ready");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::not_ready);
    }
  }
}

TEST_CASE("true_optimal_dose examples") {
  const ToxicityTarget theta(0.25);
  const ToxicityTarget phi(0.35);
  CHECK(true_optimal_dose({0.05, 0.05, 0.25, 0.40, 0.55}, {0.17, 0.18, 0.35, 0.50, 0.65}, theta, phi) == 3);
  CHECK(true_optimal_dose({0.05, 0.10, 0.16, 0.25, 0.40}, {0.05, 0.20, 0.35, 0.50, 0.65}, theta, phi) == 3);
  CHECK_FALSE(true_optimal_dose({0.5, 0.6, 0.7}, {0.5, 0.6, 0.7}, theta, ToxicityTarget(0.25)).has_value());
}

TEST_CASE("design names and configuration checks") {
  for (auto kind : kAllKinds) {
    CHECK(parse_design_kind(to_string(kind)) == kind);
    CHECK(parse_design_kind(display_name(kind)) == kind);
  }
  CHECK_THROWS_AS(parse_design_kind("CRM"), Error);
  DesignConfig cfg;
  cfg.start_dose = 6;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = DesignConfig{};
  cfg.patient_skeleton = Skeleton({0.1, 0.2, 0.3});
  CHECK_THROWS_AS(cfg.validate(), Error);
  CHECK_NOTHROW(reference_design(DesignKind::tite_crm, 40).validate());
  CHECK_THROWS_AS(reference_design(DesignKind::tite_crm, 25), Error);
}
