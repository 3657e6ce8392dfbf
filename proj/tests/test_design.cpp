#include <gtest/gtest.h>

#include "support.hpp"

using namespace activeid;
using namespace testing_support;

namespace {

double channel_fraction(const Vector& U, Eigen::Index nu, Eigen::Index channel) {
  double on = 0.0;
  for (Eigen::Index t = 0; t < U.size() / nu; ++t) on += U(t * nu + channel) * U(t * nu + channel);
  return on / U.squaredNorm();
}

double plan_budget(const Scenario& sc, int tau) { return sc.gamma_u() * sc.gamma_u() * tau; }

}  // namespace

TEST(Design, ExampleUsesOnlyFirstChannel) {
  for (int d : {1, 4, 9}) {
    const Scenario sc = scenarios::example_3_1(d);
    const ExcitationPlan p = design_oracle_input(sc, 5);
    EXPECT_GE(channel_fraction(p.U, sc.n_u(), 0), 1.0 - 1e-6) << d;
    EXPECT_NEAR(p.energy, plan_budget(sc, 5), 1e-9);
  }
}

TEST(Design, ScaledIdentityObjective) {
  const Scenario sc = scenarios::example_3_1(0);
  for (int tau : {1, 4, 7}) {
    const ExcitationPlan p = design_oracle_input(sc, tau);
    const auto prof = build_profile(sc, 1, tau);
    EXPECT_NEAR(p.achieved_minimum, 0.01 * tau + prof.noise_trace, 1e-12);
    EXPECT_NEAR(p.energy, tau, 1e-9);
  }
}

TEST(Design, SphereOracleTwoAlternatives) {
  Rng gen(100);
  for (int trial = 0; trial < 4; ++trial) {
    const Eigen::Index nu = trial % 2 ? 2 : 1;
    const int tau = nu == 2 ? 3 : 6;
    const Scenario sc = random_scenario(gen, 2, nu, 2);
    const ExcitationPlan p = design_oracle_input(sc, tau);
    Rng rng(200 + trial);
    const double oracle = sphere_oracle(alternative_profiles(sc, tau), plan_budget(sc, tau), 200000, rng);
    EXPECT_GE(p.achieved_minimum, 0.99 * oracle) << trial;
    EXPECT_LE(p.achieved_minimum, p.upper_bound + 1e-8 * (1.0 + p.upper_bound));
  }
}

TEST(Design, WeakDualitySandwichAndFeasibility) {
  Rng gen(101);
  for (int trial = 0; trial < 20; ++trial) {
    const Scenario sc = random_scenario(gen, 2 + trial % 2, 1 + trial % 3, 1 + trial % 4, true, 0.5 + trial * 0.1);
    const int tau = 1 + trial % 5;
    const Vector x0 = trial % 2 ? randn(gen, sc.n_x()) : Vector(Vector::Zero(sc.n_x()));
    const ExcitationPlan p = design_oracle_input(sc, tau, x0);
    EXPECT_LE(p.energy, plan_budget(sc, tau) * (1.0 + 1e-9));
    EXPECT_LE(p.achieved_minimum, p.upper_bound + 1e-8 * (1.0 + p.upper_bound));
    if (x0.norm() == 0.0) {
      double max_const = 0.0;
      for (const auto& prof : alternative_profiles(sc, tau)) max_const = std::max(max_const, prof.noise_trace);
      EXPECT_LE(p.achieved_minimum, plan_budget(sc, tau) * p.mixture_value + max_const + 1e-8);
    }
    // Never worse than the scaled mixture eigenvector.
    const auto profs = profiles_against(sc, sc.true_index(), tau, x0);
    Vector u0 = std::sqrt(plan_budget(sc, tau)) * ExcitationDesigner(sc, tau).mixture(0).top_vector;
    double best_u0 = -std::numeric_limits<double>::infinity();
    for (const Vector& cand : {u0, Vector(-u0)}) {
      double v = std::numeric_limits<double>::infinity();
      for (const auto& prof : profs) v = std::min(v, prof.objective(cand));
      best_u0 = std::max(best_u0, v);
    }
    EXPECT_GE(p.achieved_minimum, best_u0 - 1e-12 * (1.0 + std::abs(best_u0)));
  }
}

TEST(Design, ScaleEquivariance) {
  Rng gen(102);
  for (int trial = 0; trial < 6; ++trial) {
    std::vector<DistinguishabilityProfile> profs(2);
    for (std::size_t i = 0; i < 2; ++i) {
      profs[i].index = i + 1;
      profs[i].tau = 3;
      profs[i].W = random_psd(gen, 6, 2 + trial % 3);
      profs[i].m = Vector::Zero(6);
    }
    const MixtureSolution mix = minimize_mixture(std::vector<Matrix>{profs[0].W, profs[1].W});
    const ExcitationPlan a = design_from_profiles(profs, mix, 3.0, 0);
    const ExcitationPlan b = design_from_profiles(profs, mix, 12.0, 0);
    EXPECT_NEAR(b.achieved_minimum, 4.0 * a.achieved_minimum, 1e-6 * (1.0 + b.achieved_minimum));
    EXPECT_NEAR(std::sqrt(b.energy), 2.0 * std::sqrt(a.energy), 1e-9);
  }
}

TEST(Design, CertaintyEquivalenceAtTruthIsOracle) {
  Rng gen(103);
  const Scenario sc = random_scenario(gen, 3, 2, 3);
  const Vector x0 = randn(gen, 3);
  const ExcitationPlan o = design_oracle_input(sc, 4, x0);
  const ExcitationPlan c = design_ce_input(sc, sc.true_index(), 4, x0);
  EXPECT_EQ(o.U, c.U);
  EXPECT_EQ(o.achieved_minimum, c.achieved_minimum);
}

TEST(Design, ExampleIsEstimateIndependent) {
  for (int d : {0, 3}) {
    const Scenario sc = scenarios::example_3_1(d);
    const ExcitationPlan a = design_ce_input(sc, 0, 5, Vector::Zero(sc.n_x()));
    const ExcitationPlan b = design_ce_input(sc, 1, 5, Vector::Zero(sc.n_x()));
    EXPECT_LT((a.U - b.U).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Design, FourCandidateDesignBeatsIsotropic) {
  const Scenario sc = scenarios::section5();
  const int tau = 15;
  const ExcitationPlan p = design_ce_input(sc, 1, tau, Vector::Zero(3));
  EXPECT_LE(p.energy, plan_budget(sc, tau) * (1.0 + 1e-9));
  const double s2 = sc.gamma_u() * sc.gamma_u() / static_cast<double>(sc.n_u());
  double iso = std::numeric_limits<double>::infinity();
  for (const auto& prof : profiles_against(sc, 1, tau, Vector::Zero(3)))
    iso = std::min(iso, expected_error(prof, Vector::Zero(prof.W.rows()), 1.0, s2));
  EXPECT_GE(p.achieved_minimum, iso);
}

TEST(Design, DesignerCachesPerReference) {
  const Scenario sc = scenarios::section5();
  const ExcitationDesigner des(sc, 5);
  Vector x0(3);
  x0 << 0.3, -1.0, 2.0;
  for (std::size_t r = 0; r < sc.size(); ++r) {
    const ExcitationPlan cached = des.design(r, x0);
    const ExcitationPlan fresh = design_ce_input(sc, r, 5, x0);
    EXPECT_EQ(cached.U, fresh.U);
    EXPECT_EQ(cached.reference, r);
  }
  EXPECT_THROW(des.design(4, x0), std::invalid_argument);
  EXPECT_THROW(des.design(0, Vector::Zero(2)), DimensionError);
}
