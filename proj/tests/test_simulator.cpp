#include <doctest.h>

#include <cmath>
#include <random>

#include "core/error.hpp"
#include "core/simulator.hpp"

using namespace hetcoef;

namespace {

FirmState origin_state(double omega) {
  FirmState s;
  s.omega = omega;
  return s;
}

CoefficientVector bare(double m1, double m2) {
  CoefficientVector b;
  b.beta_m1 = m1;
  b.beta_m2 = m2;
  return b;
}

}  // namespace

TEST_CASE("expected exp eta") {
  CHECK(expected_exp_eta(0.0) == 1.0);
  CHECK(expected_exp_eta(1.0) == doctest::Approx(1.6487212707001281468).epsilon(1e-15));
  CHECK(expected_exp_eta(0.2) == doctest::Approx(1.0202013400267558106).epsilon(1e-15));
}

TEST_CASE("closed-form flexible inputs") {
  SUBCASE("benchmark at omega 0.5 against frozen optimizer values") {
    const auto b = eval_betas(benchmark_technology(), 0.5);
    const auto c = solve_flexible_inputs(origin_state(0.5), b, 1.0);
    CHECK(std::abs(c.m[0] - -1.6925874025140592366) < 1e-12);
    CHECK(std::abs(c.m[1] - -1.9157309538282689369) < 1e-12);
    const auto brute = brute_force_profit_maximizer(origin_state(0.5), b, 1.0);
    CHECK(std::abs(brute.m[0] - c.m[0]) < 1e-8);
    CHECK(std::abs(brute.m[1] - c.m[1]) < 1e-8);
  }
  SUBCASE("hand-built case with zero residual") {
    const auto b = bare(0.4, 0.2);
    const auto c = solve_flexible_inputs(origin_state(0.0), b, 1.0);
    CHECK(std::abs(c.m[0] - -2.6373004199653604177) < 1e-12);
    CHECK(std::abs(c.m[1] - -3.3304476005253057271) < 1e-12);
    for (int iota : {1, 2}) CHECK(std::abs(foc_residual(origin_state(0.0), b, c, 1.0, iota)) <= 1e-10);
  }
  SUBCASE("symmetric parameters give symmetric inputs") {
    const auto b = bare(0.25, 0.25);
    const auto c = solve_flexible_inputs(origin_state(0.0), b, 1.0);
    CHECK(c.m[0] == doctest::Approx(c.m[1]).epsilon(1e-15));
    const auto brute = brute_force_profit_maximizer(origin_state(0.0), b, 1.0);
    CHECK(std::abs(brute.m[0] - brute.m[1]) < 1e-8);
  }
  SUBCASE("output price elasticity of flexible inputs") {
    // beta_m1 + beta_m2 = 0.5 at omega = 1
    const auto b = eval_betas(benchmark_technology(), 1.0);
    FirmState s = origin_state(1.0);
    const auto base = solve_flexible_inputs(s, b, 1.0);
    s.prices.y = 2.0;
    const auto doubled = solve_flexible_inputs(s, b, 1.0);
    for (int i = 0; i < 2; ++i) CHECK(doubled.m[i] - base.m[i] == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    const auto brute = brute_force_profit_maximizer(s, b, 1.0);
    CHECK(std::abs(brute.m[0] - doubled.m[0]) < 1e-8);
  }
  SUBCASE("perturbed inputs leave a nonzero residual") {
    const auto b = eval_betas(benchmark_technology(), 0.5);
    auto c = solve_flexible_inputs(origin_state(0.5), b, 1.0);
    c.m[0] += 0.1;
    CHECK(std::abs(foc_residual(origin_state(0.5), b, c, 1.0, 1)) > 1e-3);
  }
  SUBCASE("no finite solution") {
    CHECK_THROWS_AS(solve_flexible_inputs(origin_state(0.0), bare(0.6, 0.4), 1.0), DomainError);
    CHECK_THROWS_AS(solve_flexible_inputs(origin_state(0.0), bare(0.0, 0.4), 1.0), DomainError);
  }
}

TEST_CASE("brute-force oracle near the returns-to-scale boundary") {
  const auto b = bare(0.5, 0.49);
  const auto c = solve_flexible_inputs(origin_state(0.0), b, 1.0);
  const auto brute = brute_force_profit_maximizer(origin_state(0.0), b, 1.0);
  CHECK(std::abs(brute.m[0] - c.m[0]) < 1e-6);
  CHECK(std::abs(brute.m[1] - c.m[1]) < 1e-6);
}

TEST_CASE("variant input solutions satisfy their first-order conditions") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (ModelVariant v : {ModelVariant::two_labor, ModelVariant::three_flexible, ModelVariant::single_m_flexible_labor}) {
    const auto tech = benchmark_technology(v);
    for (int rep = 0; rep < 10; ++rep) {
      FirmState s;
      s.l = u(rng);
      s.lu = u(rng);
      s.k = u(rng);
      s.omega = 0.5 * (u(rng) + 1.0);
      s.prices.y = std::exp(0.3 * u(rng));
      s.prices.l = std::exp(0.3 * u(rng));
      s.prices.m3 = std::exp(0.3 * u(rng));
      const auto b = eval_betas(tech, s.omega);
      const auto c = solve_flexible_inputs(s, b, 1.01, v);
      CHECK(c.count == flexible_count(v));
      for (int iota = 1; iota <= c.count; ++iota) CHECK(std::abs(foc_residual(s, b, c, 1.01, iota, v)) <= 1e-10);
      const auto brute = brute_force_profit_maximizer(s, b, 1.01, {}, v);
      for (int i = 0; i < c.count; ++i) CHECK(std::abs(brute.m[i] - c.m[i]) < 1e-8);
    }
  }
}

TEST_CASE("simulated cross-sections") {
  SUBCASE("no shock reproduces output exactly") {
    SimulationConfig cfg;
    cfg.n_firms = 1;
    cfg.eta_sigma = 0.0;
    const auto data = simulate_cross_section(cfg);
    const auto& f = data.firms.at(0);
    const auto& t = *f.truth;
    FirmState s;
    s.l = f.l;
    s.k = f.k;
    s.omega = t.omega;
    const double psi = log_output(s, t.betas, t.inputs);
    CHECK(f.output_value == doctest::Approx(std::exp(psi)).epsilon(1e-15));
    CHECK(t.eta == 0.0);
  }
  SUBCASE("shock mean") {
    SimulationConfig cfg;
    cfg.n_firms = 10000;
    const auto data = simulate_cross_section(cfg);
    double sum = 0.0, sq = 0.0;
    for (const auto& f : data.firms) {
      const double e = std::exp(f.truth->eta);
      sum += e;
      sq += e * e;
    }
    const double n = static_cast<double>(data.size());
    const double mean = sum / n;
    const double se = std::sqrt((sq / n - mean * mean) / n);
    CHECK(std::abs(mean - expected_exp_eta(cfg.eta_sigma)) < 3.0 * se);
  }
  SUBCASE("cost ratio equals elasticity ratio, residuals vanish") {
    SimulationConfig cfg;
    cfg.n_firms = 500;
    cfg.log_price_sd = 0.3;
    cfg.observe_prices = true;
    const auto data = simulate_cross_section(cfg);
    for (const auto& f : data.firms) {
      const auto& t = *f.truth;
      CHECK(std::abs(f.cost_m1 / f.cost_m2 - t.betas.beta_m1 / t.betas.beta_m2) <= 1e-10);
      FirmState s;
      s.l = f.l;
      s.k = f.k;
      s.omega = t.omega;
      s.prices = t.prices;
      for (int iota : {1, 2}) CHECK(std::abs(foc_residual(s, t.betas, t.inputs, t.e_exp_eta, iota)) <= 1e-10);
      CHECK(t.omega.first >= 0.0);
      CHECK(t.omega.first <= 1.0);
      CHECK(std::abs(f.l) <= 2.0);
      CHECK(std::abs(f.k) <= 2.0);
    }
  }
  SUBCASE("observables-only view") {
    SimulationConfig cfg;
    cfg.n_firms = 20;
    cfg.observe_prices = false;
    const auto data = observables_only(simulate_cross_section(cfg));
    CHECK_FALSE(data.has_truth());
    for (const auto& f : data.firms) {
      CHECK_FALSE(f.truth.has_value());
      CHECK_FALSE(f.observed_prices.has_value());
    }
  }
  SUBCASE("bit-identical for a fixed seed") {
    SimulationConfig cfg;
    cfg.n_firms = 300;
    cfg.omega_state_loading = 0.5;
    const auto a = simulate_cross_section(cfg);
    const auto b = simulate_cross_section(cfg);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a.firms[i].output_value == b.firms[i].output_value);
      CHECK(a.firms[i].cost_m1 == b.firms[i].cost_m1);
      CHECK(a.firms[i].k == b.firms[i].k);
    }
    cfg.seed += 1;
    const auto c = simulate_cross_section(cfg);
    CHECK(a.firms[0].output_value != c.firms[0].output_value);
  }
  SUBCASE("variant columns") {
    SimulationConfig cfg;
    cfg.n_firms = 50;
    cfg.variant = ModelVariant::single_m_flexible_labor;
    const auto single = simulate_cross_section(cfg);
    CHECK(std::isnan(single.firms[0].l));
    CHECK(single.firms[0].cost_l > 0.0);
    cfg.variant = ModelVariant::three_flexible;
    CHECK_THROWS_AS(simulate_cross_section(cfg), ConfigError);  // benchmark has no third flexible input
    cfg.technology = benchmark_technology(ModelVariant::three_flexible);
    const auto three = simulate_cross_section(cfg);
    CHECK(three.firms[0].cost_m3 > 0.0);
  }
  SUBCASE("dependent labor") {
    SimulationConfig cfg;
    cfg.n_firms = 50;
    cfg.dependent_labor = {0.1, 0.5, -0.4};
    for (const auto& f : simulate_cross_section(cfg).firms) {
      CHECK(f.l == doctest::Approx(0.1 + 0.5 * f.k - 0.4 * f.cost_m1 / f.cost_m2).epsilon(1e-12));
    }
  }
}

TEST_CASE("simulation config") {
  KeyValueConfig kv;
  kv.set("simulation.n_firms", "0");
  CHECK_THROWS_AS(simulation_from_config(kv), ConfigError);
  kv.set("simulation.n_firms", "25");
  kv.set("simulation.eta_sigma", "-1");
  CHECK_THROWS_AS(validate(simulation_from_config(kv)), ConfigError);
  kv.set("simulation.eta_sigma", "0.3");
  const auto cfg = simulation_from_config(kv);
  KeyValueConfig out;
  simulation_to_config(cfg, out);
  CHECK(out.get_string("simulation.n_firms", "") == "25");
  CHECK(out.get_double("simulation.eta_sigma", 0) == 0.3);
}
