#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cascade/error.hpp"
#include "cascade/verifier.hpp"

using namespace cascade;

namespace {

FlatFn mono(Complex c, int p, Rational k, std::int64_t theta = 0) { return FlatFn::monomial(c, p, k, theta); }

const NonlinearitySpec cubic{1.0, Variant::cubic_modified};

StepConfig small_config() {
  StepConfig c;
  c.M = 1;
  c.growth = 0.0;
  c.prune_budget = 0.25;
  c.component_norms = false;
  return c;
}

// Three stages are enough for every check here and keep the suite quick.
const ConstructionState& three_stages() {
  static const ConstructionState st = iterate(small_config(), 3);
  return st;
}

double l1_sup(const ModeFn& v) { return norm(v, NormSpace::lp(1)).estimate; }

}  // namespace

TEST(Cutoff, Examples) {
  const Multiplier sharp = make_cutoff({CutoffKind::sharp, 0}, 5);
  EXPECT_EQ(sharp.at(3), Complex(1.0));
  EXPECT_EQ(sharp.count(6), 0u);
  const Multiplier fejer = make_cutoff({CutoffKind::fejer, 0}, 5);
  EXPECT_NEAR(fejer.at(3).real(), 0.4, 1e-15);
  EXPECT_NEAR(smooth_bump(0.0), 1.0, 1e-15);
  EXPECT_EQ(smooth_bump(2.0), 0.0);
  EXPECT_GT(smooth_bump(1.99), 0.0);
  EXPECT_THROW(make_cutoff({CutoffKind::sharp, 0}, 0), ValidationError);
}

TEST(Cutoff, EveryFamilyPassesTheAudit) {
  for (CutoffKind k : {CutoffKind::sharp, CutoffKind::fejer, CutoffKind::smooth_bump})
    EXPECT_EQ(audit_cutoff({k, 0}, 256), "") << to_string(k);
  EXPECT_EQ(audit_cutoff({CutoffKind::perturbed, 7}, 1024), "");
}

TEST(Cutoff, PerturbedIsDeterministicAndSeeded) {
  const auto a = make_cutoff({CutoffKind::perturbed, 3}, 100);
  const auto b = make_cutoff({CutoffKind::perturbed, 3}, 100);
  const auto c = make_cutoff({CutoffKind::perturbed, 4}, 100);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  for (const auto& [n, v] : a) EXPECT_LE(std::abs(v - 1.0), perturbation_amplitude(100) + 1e-15);
}

TEST(ApplyCutoff, Basics) {
  ModeFn v;
  v.set(10, mono(1.0, 0, 1));
  v.set(-12, mono(Complex(0, 2), 1, 2, 3));
  EXPECT_TRUE(apply_cutoff(v, make_cutoff({CutoffKind::sharp, 0}, 9)).empty());
  EXPECT_EQ(apply_cutoff(v, make_cutoff({CutoffKind::sharp, 0}, 12)), v);

  const Multiplier sharp = make_cutoff({CutoffKind::sharp, 0}, 11);
  const ModeFn once = apply_cutoff(v, sharp);
  EXPECT_EQ(apply_cutoff(once, sharp), once);
  EXPECT_EQ(once.support(), std::vector<std::int64_t>{10});

  for (CutoffKind k : {CutoffKind::fejer, CutoffKind::smooth_bump, CutoffKind::perturbed}) {
    const Multiplier m = make_cutoff({k, 1}, 8);
    double sup_m = 0.0;
    for (const auto& [n, z] : m) sup_m = std::max(sup_m, std::abs(z));
    EXPECT_LE(l1_sup(apply_cutoff(v, m)), sup_m * l1_sup(v) * (1 + 1e-12));
  }
}

TEST(Ode, ZeroPair) { EXPECT_EQ(ode_crosscheck(ModeFn{}, ModeFn{}, cubic), 0.0); }

TEST(Ode, RejectsCoarseSteps) {
  OdeOptions o;
  o.dt = 1e-2;
  EXPECT_THROW(ode_crosscheck(seed_x1(), residual(seed_x1(), cubic), cubic, o), ValidationError);
}

TEST(Ode, SeedIsReproduced) {
  const ModeFn x = seed_x1();
  EXPECT_LE(ode_crosscheck(x, residual(x, cubic), cubic), 1e-6);
}

TEST(Ode, OneStepAgreesAndFaultIsDetected) {
  StepConfig c;
  c.M = 1;
  c.epsilon = 0.5;
  c.component_norms = false;
  const StepResult r = step(seed_x1(), c);
  ASSERT_LE(max_oscillation(r.y, r.g) * 1e-4, 0.35);
  EXPECT_LE(ode_crosscheck(r.y, r.g, c.spec), 1e-6);

  ModeFn bad = r.g;
  const std::int64_t fresh = r.y.radius() + 1;
  bad.add(fresh, mono(1e-3 * std::exp(1.0), 0, 1));
  EXPECT_GE(ode_crosscheck(r.y, bad, c.spec), 1e-4);
}

TEST(Ode, QuadraticVariantsAgreeWithExactResidual) {
  for (Variant v : {Variant::quad_square, Variant::quad_conj_square}) {
    StepConfig c;
    c.M = 1;
    c.epsilon = 0.5;
    c.spec.variant = v;
    c.component_norms = false;
    const StepResult r = step(seed_x1(), c);
    ASSERT_LE(max_oscillation(r.y, r.g) * 1e-4, 0.35);
    EXPECT_LE(ode_crosscheck(r.y, r.g, c.spec), 1e-6) << to_string(v);
  }
}

TEST(IntegralEquation, StagesSatisfyItAndForcingMatters) {
  const auto& st = three_stages();
  const std::vector<double> ts{0.0, 0.25, 0.5, 0.75, 1.0};
  for (const Stage& s : st.stages) EXPECT_LE(integral_equation_check(s.x, s.f, st.config.spec, ts), 1e-9);
  const std::vector<double> zero{0.0};
  EXPECT_EQ(integral_equation_check(st.stages[0].x, st.stages[0].f, st.config.spec, zero), 0.0);

  const Stage& s = st.stages[0];
  const double without = integral_equation_check(s.x, s.f, st.config.spec, ts, false);
  double forcing = 0.0;
  for (const auto& [n, f] : s.f.entries())
    for (const auto& v : antiderivative_values(f, ts)) forcing = std::max(forcing, std::abs(v));
  EXPECT_NEAR(without, forcing, 1e-9);
  EXPECT_GT(without, 0.1);
}

TEST(Convergence, SharpCutoffBeyondSupportIsExact) {
  const auto& st = three_stages();
  ConvergenceOptions o;
  o.strict = false;
  const std::int64_t big = st.stages[1].x.radius();
  const auto rep = cutoff_convergence(st, {{CutoffKind::sharp, 0}}, {big}, st.config.space, o);
  for (const auto& c : rep.cells)
    if (c.k <= 2) EXPECT_EQ(c.deviation, 0.0) << c.k;
}

TEST(Convergence, SmoothBumpDeviationFallsWithN) {
  const auto& st = three_stages();
  ConvergenceOptions o;
  o.strict = false;
  o.max_k = 2;
  const std::vector<std::int64_t> Ns{32, 128, 512, 2048, 8192};
  const auto rep = cutoff_convergence(st, {{CutoffKind::smooth_bump, 0}}, Ns, st.config.space, o);
  for (int k = 1; k <= 2; ++k) {
    double prev = INFINITY;
    for (const auto& c : rep.cells) {
      if (c.k != k) continue;
      EXPECT_LE(c.deviation, prev) << "k=" << k << " N=" << c.N;
      prev = c.deviation;
    }
    EXPECT_LE(prev, 1e-3);
  }
}

TEST(Convergence, StrictModeNamesTheCell) {
  const auto& st = three_stages();
  ConvergenceOptions o;
  o.max_k = 2;
  o.deviation_tol = 1e-14;
  try {
    cutoff_convergence(st, {{CutoffKind::fejer, 0}}, {32}, st.config.space, o);
    FAIL();
  } catch (const AssertionFailure& e) {
    EXPECT_NE(std::string(e.what()).find("family=fejer, N=32"), std::string::npos) << e.what();
  }
  ConstructionState short_state = st;
  short_state.stages.resize(2);
  EXPECT_THROW(cutoff_convergence(short_state, {{CutoffKind::sharp, 0}}, {32}, st.config.space), ValidationError);
}

TEST(Convergence, CsvAndJsonShape) {
  const auto& st = three_stages();
  ConvergenceOptions o;
  o.strict = false;
  o.max_k = 2;
  const auto rep = cutoff_convergence(st, {{CutoffKind::sharp, 0}, {CutoffKind::fejer, 0}}, {32, 64}, st.config.space, o);
  const std::string csv = to_csv(rep);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "family,N,k,deviation,increment,fitted_C");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * 2 * 2);
  const Json j = to_json(rep);
  EXPECT_EQ(j["cells"].size(), 8u);
  EXPECT_FALSE(j["header"].get<std::string>().empty());
}

TEST(DesignedContribution, IsAScalarMultiple) {
  const auto& st = three_stages();
  for (std::size_t i = 0; i + 1 < st.stages.size(); ++i)
    for (CutoffKind k : {CutoffKind::sharp, CutoffKind::fejer, CutoffKind::smooth_bump, CutoffKind::perturbed})
      for (std::int64_t N : {32, 1024})
        EXPECT_LE(designed_contribution_mismatch(st.stages[i], make_cutoff({k, 5}, N), st.config.space, st.config.spec),
                  1e-8);
}
