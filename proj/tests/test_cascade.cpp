#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "cascade/cascade.hpp"
#include "cascade/error.hpp"

using namespace cascade;

namespace {

FlatFn mono(Complex c, int p, Rational k, std::int64_t theta = 0) { return FlatFn::monomial(c, p, k, theta); }

ModeFn single(std::int64_t n, const FlatFn& f) {
  ModeFn v;
  v.set(n, f);
  return v;
}

bool all_zero(const ModeFn& v, double tol = 1e-10) {
  for (const auto& [n, f] : v.entries())
    if (f.max_abs_coeff() > tol) return false;
  return true;
}

std::int64_t iabs(std::int64_t v) { return v < 0 ? -v : v; }

StepConfig seed_config(double s = -1.0) {
  StepConfig c;
  c.M = 1;
  c.epsilon = 0.1;
  c.space = NormSpace::l2s(s);
  return c;
}

StepConfig lp_config(int K) {
  StepConfig c;
  c.M = 4;
  c.epsilon = 10.0;
  c.growth = 0.0;
  c.K = K;
  c.space = NormSpace::lp(4);
  c.component_norms = false;
  return c;
}

}  // namespace

TEST(Seed, Shape) {
  const ModeFn x = seed_x1();
  EXPECT_EQ(x.support(), std::vector<std::int64_t>{0});
  EXPECT_NEAR(sup_norm(x.at(0)).estimate, 1.0, 1e-12);
  EXPECT_EQ(eval(x.at(0), 0.0), Complex{});
}

TEST(ChooseSDagger, CubicExample) {
  const SDagger sd = choose_sdagger({1}, {0, 1}, 100, Variant::cubic_modified);
  ASSERT_EQ(sd.pairs.size(), 1u);
  EXPECT_EQ(sd.pairs[0].m, 400);
  EXPECT_EQ(sd.pairs[0].m_prime, 799);
  EXPECT_EQ(2 * sd.pairs[0].m - sd.pairs[0].m_prime, 1);
  EXPECT_FALSE(check_constraints(sd, {0, 1}, 100, Variant::cubic_modified));
}

TEST(ChooseSDagger, QuadraticExample) {
  const SDagger sd = choose_sdagger({1}, {0, 1}, 100, Variant::quad_square);
  ASSERT_EQ(sd.pairs.size(), 1u);
  EXPECT_EQ(sd.pairs[0].m, 400);
  EXPECT_EQ(sd.pairs[0].m_prime, -399);
  EXPECT_FALSE(check_constraints(sd, {0, 1}, 100, Variant::quad_square));
}

TEST(ChooseSDagger, EmptyAndSmallM) {
  EXPECT_THROW(choose_sdagger({}, {0}, 100, Variant::cubic_modified), InfeasibleSupport);
  EXPECT_THROW(choose_sdagger({5}, {0}, 5, Variant::cubic_modified), ValidationError);
}

TEST(ChooseSDagger, CheckerFlagsBrokenDesigns) {
  SDagger sd = choose_sdagger({1, 2, -3}, {0, 1, 2, -3}, 10, Variant::cubic_modified);
  EXPECT_FALSE(check_constraints(sd, {0, 1, 2, -3}, 10, Variant::cubic_modified));
  SDagger broken = sd;
  broken.pairs[0].m_prime += 1;
  EXPECT_TRUE(check_constraints(broken, {0, 1, 2, -3}, 10, Variant::cubic_modified));
  SDagger close = sd;
  close.pairs[1] = {2, close.pairs[0].m + 1, 2 * (close.pairs[0].m + 1) - 2, 0};
  EXPECT_TRUE(check_constraints(close, {0, 1, 2, -3}, 10, Variant::cubic_modified));
}

TEST(ChooseSDagger, ManyQuadraticTargetsAtLargeM) {
  std::vector<std::int64_t> S;
  for (std::int64_t n = -60; n <= 60; n += 3) S.push_back(n);
  const std::int64_t M = 100000;
  for (Variant v : {Variant::quad_square, Variant::quad_conj_square}) {
    const SDagger sd = choose_sdagger(S, {0}, M, v, 0.0);
    EXPECT_EQ(sd.pairs.size(), S.size());
    EXPECT_FALSE(check_constraints(sd, {0}, M, v)) << to_string(v);
  }
}

TEST(ChooseSDagger, Deterministic) {
  const auto a = choose_sdagger({1, 4, 7}, {0, 1, 4, 7}, 20, Variant::cubic_modified);
  const auto b = choose_sdagger({7, 4, 1, 4}, {0, 1, 4, 7}, 20, Variant::cubic_modified);
  EXPECT_EQ(a.pairs, b.pairs);
}

TEST(SolveH, ReMultiplicationExample) {
  const ModeFn f = single(1, mono(0.5, 0, 3));
  SDagger sd;
  sd.pairs.push_back({1, 10, 19, 0});
  const ModeFn h = solve_h(f, sd, {1.0, Variant::cubic_modified}, StepConfig{});
  const double c = std::cbrt(0.5);
  EXPECT_NEAR(c, 0.79370, 1e-5);
  EXPECT_LT(coeff_distance(h.at(10), mono(c, 0, 1)), 1e-12);
  EXPECT_LT(coeff_distance(h.at(19), mono(Complex(0, c), 0, 1, 162)), 1e-12);
  const FlatFn back = shift_phase(scale(conj(h.at(19)) * h.at(10) * h.at(10), Complex(0, 1)), sigma(10, 19, 10, 1));
  EXPECT_LT(coeff_distance(back, f.at(1)), 1e-12);
}

TEST(SolveH, ZeroTargetGivesNothing) {
  SDagger sd;
  sd.pairs.push_back({1, 10, 19, 0});
  EXPECT_TRUE(solve_h(ModeFn{}, sd, {1.0, Variant::cubic_modified}, StepConfig{}).empty());
}

TEST(SolveH, RateAuditOnMultiTermTargets) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> pow(-3, 3), num(2, 9), osc(-6, 6);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<FlatTerm> terms;
    for (int i = 0; i < 4; ++i) terms.push_back({Complex(1.0 + i, -0.5 * i), pow(rng), Rational(num(rng), 2), osc(rng)});
    const ModeFn f = single(2, FlatFn(terms));
    const Rational kmin = f.at(2).min_rate();
    for (Variant v : {Variant::cubic_modified, Variant::quad_square}) {
      const SDagger sd = choose_sdagger({2}, {0, 2}, 10, v);
      const ModeFn h = solve_h(f, sd, {1.0, v}, StepConfig{});
      const Rational floor = kmin * Rational(1, v == Variant::cubic_modified ? 3 : 2);
      for (const auto& [m, fn] : h.entries())
        for (const auto& t : fn.terms()) EXPECT_GE(t.flat_rate, floor);
    }
  }
}

TEST(Step, SeedAtMinusOne) {
  const ModeFn x = seed_x1();
  const StepResult r = step(x, seed_config());
  ASSERT_TRUE(r.report.bounds_met);
  EXPECT_TRUE(r.report.constraints_verified);
  for (const auto& n : r.report.norms) EXPECT_LE(n.bound, 0.1) << n.name;
  const std::int64_t M = r.report.M_used;
  for (auto n : r.g.support()) {
    EXPECT_NE(n, 0);
    EXPECT_GE(iabs(n), M);
  }
  for (auto m : r.h.support()) EXPECT_FALSE(x.contains(m));
  EXPECT_TRUE(all_zero(residual(r.y, seed_config().spec) - r.g));
}

TEST(Step, DesignedTripleCancelsTarget) {
  const ModeFn x = seed_x1();
  const StepConfig cfg = seed_config();
  const ModeFn f = residual(x, cfg.spec);
  const StepResult r = step(x, cfg);
  const std::int64_t M = r.report.M_used;
  for (const auto& p : r.report.s_dagger.pairs) {
    const FlatFn triple = shift_phase(scale(r.h.at(p.m) * conj(r.h.at(p.m_prime)) * r.h.at(p.m), Complex(0, 1)),
                                      sigma(p.m, p.m_prime, p.m, p.n));
    EXPECT_LT(coeff_distance(triple, f.at(p.n)), 1e-10);
  }
  for (auto n : (n_main(r.h, cfg.spec) - f).support()) EXPECT_GE(iabs(n), M);
  const ModeFn cross = n_main(r.y, cfg.spec) - n_main(x, cfg.spec) - n_main(r.h, cfg.spec);
  for (auto n : cross.support()) EXPECT_GE(iabs(n), M);
}

TEST(Step, ZeroResidualShortCircuits) {
  const StepResult r = step(ModeFn{}, seed_config());
  EXPECT_TRUE(r.y.empty());
  EXPECT_TRUE(r.g.empty());
  EXPECT_TRUE(r.report.s_dagger.pairs.empty());
}

TEST(Step, PositiveSobolevExponentIsUnreachable) {
  StepConfig c = seed_config(1.0);
  c.max_escalations = 4;
  c.component_norms = false;
  EXPECT_THROW(step(seed_x1(), c), BoundUnreachable);
}

TEST(Step, DoublingMShrinksIncrementByTwoToTheS) {
  for (double s : {-1.0, -0.5}) {
    StepConfig c = seed_config(s);
    c.component_norms = false;
    const ModeFn x = seed_x1();
    const ModeFn f = residual(x, c.spec);
    double prev = 0.0;
    for (std::int64_t M = 32; M <= 512; M *= 2) {
      c.M = M;
      const double h = step_attempt(x, f, c).report.find("h")->estimate;
      if (prev > 0.0) EXPECT_LE(h / prev, std::pow(2.0, s + 0.1)) << "s=" << s << " M=" << M;
      prev = h;
    }
  }
}

TEST(Step, QuadraticSquareIsExact) {
  StepConfig c = seed_config();
  c.spec.variant = Variant::quad_square;
  const StepResult r = step(seed_x1(), c);
  EXPECT_TRUE(r.report.bounds_met);
  EXPECT_TRUE(all_zero(residual(r.y, c.spec) - r.g));
  for (auto n : r.g.support()) EXPECT_GE(iabs(n), r.report.M_used);
  EXPECT_THROW(step_quadratic(seed_x1(), seed_config()), VariantMismatch);
}

TEST(StepLp, DesignAudit) {
  const SDagger sd = choose_sdagger_lp({0, 3}, {0, 3}, 10, 3);
  ASSERT_TRUE(sd.m0);
  ASSERT_EQ(sd.pairs.size(), 6u);
  std::set<std::int64_t> seen;
  for (auto e : sd.elements()) EXPECT_TRUE(seen.insert(e).second) << e;
  for (const auto& p : sd.pairs) EXPECT_EQ(*sd.m0 + p.m - p.m_prime, p.n);
  EXPECT_FALSE(check_constraints(sd, {0, 3}, 10, Variant::cubic_modified));
}

TEST(StepLp, ExactResidualAndSplittingGain) {
  const ModeFn x = seed_x1();
  double prev = 0.0;
  for (int K : {1, 4, 16}) {
    const StepConfig c = lp_config(K);
    const StepResult r = design_increment(x, residual(x, c.spec), c);
    ASSERT_TRUE(r.report.s_dagger.m0);
    EXPECT_TRUE(r.report.constraints_verified);
    EXPECT_EQ(r.h.at(*r.report.s_dagger.m0).terms().size(), 1u);
    ModeFn rest = r.h;
    rest.set(*r.report.s_dagger.m0, FlatFn{});
    const double v = norm(rest, NormSpace::lp(4)).estimate;
    if (prev > 0.0) EXPECT_NEAR(v / prev, std::pow(4.0, -0.25), 0.05) << K;
    prev = v;
    EXPECT_TRUE(all_zero(residual(r.y, c.spec) - r.g));
  }
}

TEST(StepLp, RejectsWrongSpaces) {
  StepConfig c = lp_config(1);
  c.space = NormSpace::lp(2);
  EXPECT_THROW(step_lp(seed_x1(), c), ValidationError);
}

TEST(Iterate, FourStagesWithinBudget) {
  StepConfig c;
  c.M = 1;
  c.growth = 0.0;
  c.prune_budget = 0.25;
  c.component_norms = false;
  const ConstructionState st = iterate(c, 4);
  ASSERT_EQ(st.stages.size(), 4u);
  std::int64_t last_M = 0;
  for (std::size_t i = 0; i + 1 < st.stages.size(); ++i) {
    const Stage& s = st.stages[i];
    EXPECT_LE(s.delta, std::ldexp(1.0, -static_cast<int>(i) - 2));
    const double measured = norm(st.stages[i + 1].x - s.x, c.space).bound;
    EXPECT_LE(measured, st.target_deltas[i]);
    EXPECT_GT(s.report.M_used, last_M);
    last_M = s.report.M_used;
    // Low modes of the next forcing are exactly the pieces left untargeted.
    const auto& left = s.report.untargeted;
    for (auto n : st.stages[i + 1].f.support())
      if (iabs(n) < s.report.M_used) EXPECT_NE(std::find(left.begin(), left.end(), n), left.end()) << n;
  }
  for (const Stage& s : st.stages) {
    EXPECT_NEAR(sup_norm(s.x.at(0)).estimate, 1.0, 1e-12);
    for (const auto& [n, z] : eval(s.x, 0.0)) EXPECT_EQ(z, Complex{});
  }
}

TEST(ConfigJson, RoundTripAndUnknownFields) {
  StepConfig c = lp_config(4);
  c.spec.omega = -2.5;
  const StepConfig back = step_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
  Json j = to_json(c);
  j["surprise"] = 1;
  EXPECT_THROW(step_config_from_json(j), ParseError);
  Json bad = to_json(c);
  bad["epsilon"] = -1.0;
  EXPECT_THROW(step_config_from_json(bad), Error);
}

TEST(ConfigJson, ConstructionRoundTrip) {
  StepConfig c = seed_config();
  c.component_norms = false;
  const ConstructionState st = iterate(c, 2);
  const Json j = to_json(st);
  EXPECT_EQ(to_json(construction_from_json(j)).dump(), j.dump());
}
