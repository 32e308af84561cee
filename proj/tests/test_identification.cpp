#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "core/error.hpp"
#include "core/identification.hpp"
#include "harness/columns.hpp"

using namespace hetcoef;

namespace {

// One firm at a chosen technology, with hidden truth.
FirmRecord make_firm(const TechnologySpec& tech, double omega, double l, double k, double eta, double sigma = 0.1) {
  FirmState s;
  s.l = l;
  s.k = k;
  s.omega = omega;
  const double e = expected_exp_eta(sigma);
  const auto b = eval_betas(tech, omega);
  const auto c = solve_flexible_inputs(s, b, e);
  FirmRecord r;
  r.firm_id = "x";
  r.output_value = std::exp(log_output(s, b, c) + eta);
  r.cost_m1 = std::exp(c.m[0]);
  r.cost_m2 = std::exp(c.m[1]);
  r.cost_m3 = r.cost_l = std::nan("");
  r.l = l;
  r.lu = std::nan("");
  r.k = k;
  r.truth = HiddenTruth{omega, eta, e, b, c, Prices{}};
  return r;
}

Dataset simulate(std::size_t n, double sigma = 0.1, std::uint64_t seed = 20240601,
                 ModelVariant v = ModelVariant::baseline) {
  SimulationConfig cfg;
  cfg.n_firms = n;
  cfg.eta_sigma = sigma;
  cfg.seed = seed;
  cfg.variant = v;
  cfg.technology = benchmark_technology(v);
  return simulate_cross_section(cfg);
}

EstimatorConfig estimator(ModelVariant v = ModelVariant::baseline) {
  EstimatorConfig cfg;
  cfg.variant = v;
  return cfg;
}

}  // namespace

TEST_CASE("cost ratio") {
  FirmRecord r;
  r.cost_m1 = 2.0;
  r.cost_m2 = 1.0;
  CHECK(compute_ratio(r) == 2.0);
  r.cost_m1 = r.cost_m2 = 3.7;
  CHECK(compute_ratio(r) == 1.0);
  CHECK(compute_ratio(make_firm(benchmark_technology(), 0.5, 0.1, -0.2, 0.03)) == doctest::Approx(1.25).epsilon(1e-14));
  r.cost_m2 = 0.0;
  CHECK_THROWS_AS(compute_ratio(r), DataError);
  r.cost_m2 = -1.0;
  CHECK_THROWS_AS(compute_ratio(r), DataError);
}

TEST_CASE("oracle shares equal flexible elasticities") {
  Dataset data = simulate(400);
  data.firms.push_back(make_firm(benchmark_technology(), 0.5, 0.2, 0.4, -0.05));
  const auto cfg = estimator();
  const auto frame = build_frame(data, cfg);
  OracleSource oracle;
  const auto shares = estimate_shares(frame, data, cfg, oracle);
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(std::abs(shares.shares[i][0] - data.firms[i].truth->betas.beta_m1) <= 1e-12);
    CHECK(std::abs(shares.shares[i][1] - data.firms[i].truth->betas.beta_m2) <= 1e-12);
    CHECK(shares.flags[i] == FirmFlag::ok);
  }
  CHECK(shares.shares.back()[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(shares.shares.back()[1] == doctest::Approx(0.20).epsilon(1e-12));
}

TEST_CASE("estimated shares without a shock") {
  const Dataset data = simulate(2000, 0.0, 77);
  const auto cfg = estimator();
  const auto frame = build_frame(data, cfg);
  LocalLinearSource source(cfg);
  const auto shares = estimate_shares(frame, data, cfg, source);
  std::size_t kept = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (shares.flags[i] == FirmFlag::trimmed) continue;
    ++kept;
    CHECK(std::abs(shares.fits[i].estimate / data.firms[i].output_value - 1.0) < 0.1);
    CHECK(std::abs(shares.shares[i][0] - data.firms[i].truth->betas.beta_m1) < 0.03);
    CHECK(shares.shares[i][0] > cfg.share_epsilon);
    CHECK(shares.shares[i][0] + shares.shares[i][1] < 1.0);
  }
  CHECK(kept > 1900);
}

TEST_CASE("share clamping") {
  Dataset data = simulate(50);
  data.firms[0].cost_m1 = data.firms[0].output_value * 5.0;
  const auto cfg = estimator();
  const auto frame = build_frame(data, cfg);
  OracleSource oracle;
  const auto shares = estimate_shares(frame, data, cfg, oracle);
  CHECK(shares.flags[0] == FirmFlag::clamped);
  CHECK(shares.shares[0][0] <= 1.0 - cfg.share_epsilon);
  CHECK(shares.shares[0][0] + shares.shares[0][1] <= 1.0 - cfg.share_epsilon + 1e-15);
}

TEST_CASE("net output") {
  const Dataset data = simulate(300, 0.1);
  const auto cfg = estimator();
  const auto frame = build_frame(data, cfg);
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(net_output(frame, i, {0.0, 0.0, 0.0}) == frame.log_output[i]);
    const auto& t = *data.firms[i].truth;
    const double net = net_output(frame, i, {t.betas.beta_m1, t.betas.beta_m2, 0.0});
    const double expected = t.betas.beta_l * data.firms[i].l + t.betas.beta_k * data.firms[i].k + t.betas.beta_0 + t.eta;
    CHECK(std::abs(net - expected) <= 1e-10);
  }
  const Dataset calm = simulate(50, 0.0);
  const auto calm_frame = build_frame(calm, cfg);
  for (std::size_t i = 0; i < calm.size(); ++i) {
    const auto& t = *calm.firms[i].truth;
    const double net = net_output(calm_frame, i, {t.betas.beta_m1, t.betas.beta_m2, 0.0});
    CHECK(std::abs(net - (0.25 * calm.firms[i].l + 0.30 * calm.firms[i].k + t.omega.first)) <= 1e-10);
  }
}

TEST_CASE("oracle labor, capital and productivity stages") {
  Dataset data = simulate(300);
  data.firms.push_back(make_firm(benchmark_technology(), 0.5, -0.3, 0.6, 0.08));
  const auto cfg = estimator();
  const auto est = run_pipeline(data, cfg, ExpectationMode::oracle);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& t = data.firms[i].truth->betas;
    const auto& b = est.firms[i].betas;
    CHECK(std::abs(b.beta_l - t.beta_l) <= 1e-10);
    CHECK(std::abs(b.beta_k - t.beta_k) <= 1e-10);
    CHECK(std::abs(b.beta_m1 - t.beta_m1) <= 1e-10);
    CHECK(std::abs(b.beta_m2 - t.beta_m2) <= 1e-10);
    CHECK(std::abs(b.beta_0 - t.beta_0) <= 1e-10);
  }
  CHECK(std::abs(est.firms.back().betas.beta_0 - 0.5) <= 1e-10);
}

TEST_CASE("productivity stage with oracle elasticities and no shock") {
  const Dataset data = simulate(2000, 0.0, 77);
  const auto cfg = estimator();
  const auto frame = build_frame(data, cfg);
  OracleSource oracle;
  const auto shares = estimate_shares(frame, data, cfg, oracle);
  std::vector<double> net(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) net[i] = net_output(frame, i, shares.shares[i]);
  const auto states = estimate_labor_capital(frame, data, net, oracle);
  LocalLinearSource source(cfg);
  const auto productivity = estimate_additive_productivity(frame, data, net, states, source);
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(std::abs(productivity.residual_outputs[i] - data.firms[i].truth->betas.beta_0) <= 1e-10);
    // beta_0 is affine in r for the benchmark, so the local-linear level is exact
    if (productivity.fits[i].condition != FitCondition::trimmed) {
      CHECK(std::abs(productivity.beta_0[i] - data.firms[i].truth->betas.beta_0) <= 1e-8);
    }
  }
}

TEST_CASE("estimated labor and capital elasticities") {
  const Dataset data = simulate(4000, 0.1, 5);
  const auto est = run_pipeline(observables_only(data), estimator());
  double se_l = 0.0, se_k = 0.0;
  std::size_t n = 0;
  for (const auto& f : est.firms) {
    if (f.flag == FirmFlag::trimmed) continue;
    se_l += (f.betas.beta_l - 0.25) * (f.betas.beta_l - 0.25);
    se_k += (f.betas.beta_k - 0.30) * (f.betas.beta_k - 0.30);
    ++n;
  }
  CHECK(n > 3800);
  CHECK(std::sqrt(se_l / n) < 0.05);
  CHECK(std::sqrt(se_k / n) < 0.05);
}

TEST_CASE("constant additive productivity is recovered as a constant") {
  AffineParams p = *benchmark_technology().affine_params();
  p.b0 = {0.7, 0.0, 0.0};
  SimulationConfig sim;
  sim.technology = TechnologySpec::affine(p, {0.0, 1.0});
  sim.n_firms = 2000;
  sim.seed = 77;
  const auto est = run_pipeline(observables_only(simulate_cross_section(sim)), estimator());
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& f : est.firms) {
    if (f.flag == FirmFlag::trimmed) continue;
    sum += f.betas.beta_0;
    sq += f.betas.beta_0 * f.betas.beta_0;
    ++n;
  }
  const double mean = sum / n;
  CHECK(std::abs(mean - 0.7) < 0.05);
  CHECK(std::sqrt(sq / n - mean * mean) < 0.05);
}

TEST_CASE("functional dependence makes the labor fit singular") {
  SimulationConfig sim;
  sim.n_firms = 1000;
  sim.dependent_labor = {0.2, 0.5, 1.0};
  const Dataset data = simulate_cross_section(sim);
  const auto est = run_pipeline(observables_only(data), estimator());
  for (const auto& f : est.firms) {
    CHECK((f.state_fit == FitCondition::ridge_applied || f.state_fit == FitCondition::trimmed));
  }
}

TEST_CASE("variants in oracle mode") {
  for (ModelVariant v : {ModelVariant::two_labor, ModelVariant::three_flexible, ModelVariant::single_m_flexible_labor}) {
    CAPTURE(to_string(v));
    const Dataset data = simulate(300, 0.1, 3, v);
    const auto est = run_pipeline(data, estimator(v), ExpectationMode::oracle);
    for (std::size_t i = 0; i < data.size(); ++i) {
      for (const auto& c : coefficient_columns(v)) {
        CAPTURE(c.name);
        CHECK(std::abs(est.firms[i].betas.*c.member - data.firms[i].truth->betas.*c.member) <= 1e-10);
      }
      if (v == ModelVariant::single_m_flexible_labor) {
        CHECK(est.firms[i].betas.beta_l == est.firms[i].shares[0]);
        CHECK(data.firms[i].cost_l / data.firms[i].cost_m1 == est.firms[i].ratios.r);
      }
    }
  }
}

TEST_CASE("one ratio or two ratios with a one-dimensional technology") {
  const Dataset data = simulate(300, 0.1, 4, ModelVariant::three_flexible);
  auto both = estimator(ModelVariant::three_flexible);
  auto single = both;
  single.single_ratio = true;
  const auto a = run_pipeline(data, both, ExpectationMode::oracle);
  const auto b = run_pipeline(data, single, ExpectationMode::oracle);
  CHECK(build_frame(data, both).state_regressors.cols() == 4);
  CHECK(build_frame(data, single).state_regressors.cols() == 3);
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(a.firms[i].betas.beta_m3 == b.firms[i].betas.beta_m3);
    CHECK(std::memcmp(&a.firms[i].betas, &b.firms[i].betas, sizeof(CoefficientVector)) == 0);
  }
}

TEST_CASE("three flexible inputs with a two-dimensional technology") {
  AffineParams p = *benchmark_technology().affine_params();
  p.m1 = {0.2, 0.1, 0.0};
  p.m2 = {0.2, 0.0, 0.0};
  p.m3 = {0.15, 0.0, 0.05};
  SimulationConfig sim;
  sim.variant = ModelVariant::three_flexible;
  sim.technology = TechnologySpec::affine2d(p, {0.0, 1.0}, {0.0, 1.0});
  sim.n_firms = 300;
  const Dataset data = simulate_cross_section(sim);
  const auto est = run_pipeline(data, estimator(ModelVariant::three_flexible), ExpectationMode::oracle);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& t = data.firms[i].truth->betas;
    CHECK(std::abs(est.firms[i].betas.beta_m3 - t.beta_m3) <= 1e-10);
    CHECK(std::abs(est.firms[i].betas.beta_0 - t.beta_0) <= 1e-10);
    CHECK(est.firms[i].ratios.r23 == doctest::Approx(t.beta_m2 / t.beta_m3).epsilon(1e-12));
  }
}

TEST_CASE("observed non-unit prices") {
  SimulationConfig sim;
  sim.n_firms = 300;
  sim.log_price_sd = 0.3;
  sim.observe_prices = true;
  const Dataset data = simulate_cross_section(sim);
  const auto est = run_pipeline(data, estimator(), ExpectationMode::oracle);
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(std::abs(est.firms[i].betas.beta_l - 0.25) <= 1e-10);
    CHECK(std::abs(est.firms[i].betas.beta_0 - data.firms[i].truth->betas.beta_0) <= 1e-10);
  }
  Dataset hidden = data;
  for (auto& f : hidden.firms) f.observed_prices.reset();
  auto strict = estimator();
  strict.prices_are_unit = false;
  CHECK_THROWS_AS(run_pipeline(hidden, strict), DataError);
}

TEST_CASE("scale invariance of ratios and oracle shares") {
  const Dataset data = simulate(200);
  Dataset scaled = data;
  for (auto& f : scaled.firms) {
    f.output_value *= 7.3;
    f.cost_m1 *= 7.3;
    f.cost_m2 *= 7.3;
  }
  auto cfg = estimator();
  const auto a = run_pipeline(data, cfg, ExpectationMode::oracle);
  const auto b = run_pipeline(scaled, cfg, ExpectationMode::oracle);
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(std::abs(a.firms[i].ratios.r - b.firms[i].ratios.r) <= 4 * std::numeric_limits<double>::epsilon() * a.firms[i].ratios.r);
    for (int j = 0; j < 2; ++j) {
      CHECK(std::abs(a.firms[i].shares[j] - b.firms[i].shares[j]) <= 4 * std::numeric_limits<double>::epsilon() * a.firms[i].shares[j]);
    }
  }
}

TEST_CASE("pipeline is deterministic") {
  const Dataset data = observables_only(simulate(800));
  const auto a = run_pipeline(data, estimator());
  const auto b = run_pipeline(data, estimator());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(std::memcmp(&a.firms[i].betas, &b.firms[i].betas, sizeof(CoefficientVector)) == 0);
    CHECK(a.firms[i].flag == b.firms[i].flag);
  }
}

TEST_CASE("pipeline errors") {
  const Dataset data = simulate(100);
  CHECK_THROWS_AS(run_pipeline(data, estimator(ModelVariant::two_labor)), ConfigError);
  CHECK_THROWS_AS(run_pipeline(observables_only(data), estimator(), ExpectationMode::oracle), DataError);
  auto bad = estimator();
  bad.share_epsilon = 0.5;
  CHECK_THROWS_AS(run_pipeline(data, bad), ConfigError);
  Dataset broken = data;
  broken.firms[3].cost_m2 = 0.0;
  CHECK_THROWS_AS(run_pipeline(broken, estimator()), DataError);
  CHECK_THROWS_AS(run_pipeline(Dataset{}, estimator()), DataError);
}

TEST_CASE("too few firms are trimmed, not errors") {
  const Dataset data = simulate(5);
  const auto est = run_pipeline(observables_only(data), estimator());
  CHECK(est.count(FirmFlag::trimmed) == 5);
}

TEST_CASE("locality diagnostic") {
  SUBCASE("interior firms of a box design pass") {
    const Dataset data = simulate(2000, 0.1, 12);
    const auto report = locality_diagnostic(data, estimator());
    std::size_t interior = 0, passed = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& f = data.firms[i];
      const double w = f.truth->omega.first;
      if (std::abs(f.l) > 1.5 || std::abs(f.k) > 1.5 || w < 0.1 || w > 0.9) continue;
      ++interior;
      passed += report.entries[i].flagged ? 0 : 1;
    }
    CHECK(static_cast<double>(passed) > 0.95 * static_cast<double>(interior));
  }
  SUBCASE("a firm far from the data is flagged") {
    Dataset data = simulate(1000, 0.1, 12);
    data.firms.push_back(make_firm(benchmark_technology(), 0.5, 8.0, -8.0, 0.0));
    const auto report = locality_diagnostic(data, estimator());
    CHECK(report.entries.back().flagged);
    CHECK(report.entries.back().relative_density < estimator().density_floor);
  }
  SUBCASE("labor determined by capital and the ratio") {
    SimulationConfig sim;
    sim.n_firms = 1000;
    sim.dependent_labor = {0.2, 0.5, 1.0};
    const auto report = locality_diagnostic(simulate_cross_section(sim), estimator());
    CHECK(report.flagged_count() >= 990);
    CHECK(report.spread_names.front() == "log_labor");
  }
}

TEST_CASE("estimator config round trip") {
  EstimatorConfig cfg;
  cfg.kernel = Kernel::gaussian;
  cfg.state_bandwidth.rule = BandwidthRule::loo_cv;
  cfg.share_conditioning = ShareConditioning::states_and_ratios;
  cfg.winsorize_quantile = 0.99;
  KeyValueConfig kv;
  estimator_to_config(cfg, kv);
  const auto back = estimator_from_config(kv);
  CHECK(back.kernel == Kernel::gaussian);
  CHECK(back.state_bandwidth.rule == BandwidthRule::loo_cv);
  CHECK(back.share_conditioning == ShareConditioning::states_and_ratios);
  CHECK(back.winsorize_quantile == 0.99);
  CHECK(back.share_bandwidth.multiplier == cfg.share_bandwidth.multiplier);
  kv.set("estimator.trim.share_epsilon", "0.7");
  CHECK_THROWS_AS(estimator_from_config(kv), ConfigError);
}
