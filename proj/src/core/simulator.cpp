#include "core/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <Eigen/Dense>

#include "core/error.hpp"
#include "core/parallel.hpp"

namespace hetcoef {

namespace {

bool labor_flexible(ModelVariant v) { return v == ModelVariant::single_m_flexible_labor; }

// Part of Psi that does not depend on the flexible inputs.
double state_contribution(const FirmState& s, const CoefficientVector& b, ModelVariant v) {
  double out = b.beta_k * s.k + b.beta_lu * s.lu + b.beta_0;
  if (!labor_flexible(v)) out += b.beta_l * s.l;
  return out;
}

int flexible_prices(const Prices& p, ModelVariant v, double out[3]) {
  switch (v) {
    case ModelVariant::three_flexible:
      out[0] = p.m1;
      out[1] = p.m2;
      out[2] = p.m3;
      return 3;
    case ModelVariant::single_m_flexible_labor:
      out[0] = p.l;
      out[1] = p.m1;
      return 2;
    default:
      out[0] = p.m1;
      out[1] = p.m2;
      return 2;
  }
}

void require_finite_solution(const double* b, int count) {
  double sum = 0.0;
  for (int i = 0; i < count; ++i) {
    if (!(b[i] > 0.0)) throw DomainError("flexible elasticities must be positive");
    sum += b[i];
  }
  if (!(sum < 1.0)) {
    throw DomainError("flexible elasticities sum to " + format_double(sum) +
                      " >= 1; the expected-profit problem has no finite solution");
  }
}

double reflect_into(double x, Interval s) {
  if (s.width() <= 0.0) return s.lo;
  for (int guard = 0; guard < 64 && (x < s.lo || x > s.hi); ++guard) {
    if (x < s.lo) x = 2.0 * s.lo - x;
    if (x > s.hi) x = 2.0 * s.hi - x;
  }
  return std::clamp(x, s.lo, s.hi);
}

}  // namespace

double expected_exp_eta(double eta_sigma) {
  if (!(eta_sigma >= 0.0)) throw DomainError("eta_sigma must be nonnegative");
  return std::exp(0.5 * eta_sigma * eta_sigma);
}

double log_output(const FirmState& state, const CoefficientVector& betas, const FlexibleChoice& choice,
                  ModelVariant variant) {
  double b[3];
  const int count = flexible_elasticities(betas, variant, b);
  double psi = state_contribution(state, betas, variant);
  for (int i = 0; i < count; ++i) psi += b[i] * choice.m[i];
  return psi;
}

FlexibleChoice solve_flexible_inputs(const FirmState& state, const CoefficientVector& betas, double e_exp_eta,
                                     ModelVariant variant) {
  double b[3];
  double p[3];
  const int count = flexible_elasticities(betas, variant, b);
  flexible_prices(state.prices, variant, p);
  require_finite_solution(b, count);
  if (!(e_exp_eta > 0.0)) throw DomainError("E[exp(eta)] must be positive");

  // Log first-order conditions: m_i = c_i + sum_j b_j m_j with
  // c_i = ln p_y + ln(b_i / p_i) + S + ln E[exp eta].
  const double common = std::log(state.prices.y) + state_contribution(state, betas, variant) + std::log(e_exp_eta);
  double c[3];
  double weighted = 0.0;
  double total = 0.0;
  for (int i = 0; i < count; ++i) {
    c[i] = common + std::log(b[i] / p[i]);
    weighted += b[i] * c[i];
    total += b[i];
  }
  const double flexible_index = weighted / (1.0 - total);
  FlexibleChoice out;
  out.count = count;
  for (int i = 0; i < count; ++i) out.m[i] = c[i] + flexible_index;
  return out;
}

double foc_residual(const FirmState& state, const CoefficientVector& betas, const FlexibleChoice& choice,
                    double e_exp_eta, int iota, ModelVariant variant) {
  double b[3];
  double p[3];
  const int count = flexible_elasticities(betas, variant, b);
  flexible_prices(state.prices, variant, p);
  if (iota < 1 || iota > count) throw DomainError("foc_residual: iota out of range");
  const int i = iota - 1;
  const double psi = log_output(state, betas, choice, variant);
  const double lhs = state.prices.y * b[i] * std::exp(psi) * e_exp_eta;
  const double rhs = p[i] * std::exp(choice.m[i]);
  return (lhs - rhs) / rhs;
}

FlexibleChoice brute_force_profit_maximizer(const FirmState& state, const CoefficientVector& betas,
                                            double e_exp_eta, const MaximizerSettings& settings,
                                            ModelVariant variant) {
  double b[3];
  double p[3];
  const int count = flexible_elasticities(betas, variant, b);
  flexible_prices(state.prices, variant, p);
  require_finite_solution(b, count);
  const double base = state_contribution(state, betas, variant);
  const double revenue_scale = state.prices.y * e_exp_eta;

  auto profit = [&](const double* m) {
    double psi = base;
    double cost = 0.0;
    for (int i = 0; i < count; ++i) {
      psi += b[i] * m[i];
      cost += p[i] * std::exp(m[i]);
    }
    return revenue_scale * std::exp(psi) - cost;
  };

  const int g = std::max(3, count == 3 ? std::min(settings.grid_points, 41) : settings.grid_points);
  double lo[3];
  double hi[3];
  for (int i = 0; i < count; ++i) {
    lo[i] = settings.grid_lo;
    hi[i] = settings.grid_hi;
  }
  double best[3] = {0.0, 0.0, 0.0};
  for (int level = 0; level <= settings.zoom_levels; ++level) {
    double step[3];
    for (int i = 0; i < count; ++i) step[i] = (hi[i] - lo[i]) / (g - 1);
    std::size_t total = 1;
    for (int i = 0; i < count; ++i) total *= static_cast<std::size_t>(g);
    double best_value = -std::numeric_limits<double>::infinity();
    double m[3];
    for (std::size_t flat = 0; flat < total; ++flat) {
      std::size_t rest = flat;
      for (int i = 0; i < count; ++i) {
        m[i] = lo[i] + static_cast<double>(rest % g) * step[i];
        rest /= g;
      }
      const double v = profit(m);
      if (v > best_value) {
        best_value = v;
        std::copy(m, m + count, best);
      }
    }
    for (int i = 0; i < count; ++i) {
      lo[i] = best[i] - 2.0 * step[i];
      hi[i] = best[i] + 2.0 * step[i];
    }
  }

  // Newton on the profit gradient; merit is the largest relative FOC residual.
  Eigen::VectorXd m = Eigen::Map<Eigen::VectorXd>(best, count);
  auto merit_of = [&](const Eigen::VectorXd& x) {
    double psi = base;
    for (int i = 0; i < count; ++i) psi += b[i] * x(i);
    const double q = revenue_scale * std::exp(psi);
    double worst = 0.0;
    for (int i = 0; i < count; ++i) worst = std::max(worst, std::abs(q * b[i] / (p[i] * std::exp(x(i))) - 1.0));
    return worst;
  };
  double merit = merit_of(m);
  for (int it = 0; it < settings.max_newton_iterations && merit > 1e-14; ++it) {
    double psi = base;
    for (int i = 0; i < count; ++i) psi += b[i] * m(i);
    const double q = revenue_scale * std::exp(psi);
    Eigen::VectorXd grad(count);
    Eigen::MatrixXd hess(count, count);
    for (int i = 0; i < count; ++i) {
      const double ci = p[i] * std::exp(m(i));
      grad(i) = q * b[i] - ci;
      for (int j = 0; j < count; ++j) hess(i, j) = q * b[i] * b[j] - (i == j ? ci : 0.0);
    }
    Eigen::VectorXd dir;
    Eigen::LLT<Eigen::MatrixXd> neg(-hess);
    if (neg.info() == Eigen::Success) {
      dir = neg.solve(grad);
    } else {
      // Outside the concave region: ascend along the gradient in relative units.
      dir.resize(count);
      for (int i = 0; i < count; ++i) dir(i) = grad(i) / (p[i] * std::exp(m(i)));
    }
    double t = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls) {
      const Eigen::VectorXd trial = m + t * dir;
      const double trial_merit = merit_of(trial);
      if (trial_merit < merit) {
        m = trial;
        merit = trial_merit;
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) break;
  }
  if (!(merit < 1e-9)) {
    std::ostringstream msg;
    msg << "profit maximizer did not converge (relative FOC residual " << merit << ")";
    throw NumericError(msg.str());
  }
  FlexibleChoice out;
  out.count = count;
  for (int i = 0; i < count; ++i) out.m[i] = m(i);
  return out;
}

bool Dataset::has_truth() const {
  return !firms.empty() && std::all_of(firms.begin(), firms.end(), [](const FirmRecord& r) { return r.truth.has_value(); });
}

bool Dataset::has_prices() const {
  return !firms.empty() &&
         std::all_of(firms.begin(), firms.end(), [](const FirmRecord& r) { return r.observed_prices.has_value(); });
}

Dataset observables_only(const Dataset& data) {
  Dataset out = data;
  for (auto& r : out.firms) r.truth.reset();
  return out;
}

std::uint64_t substream_seed(std::uint64_t base, std::uint64_t index) {
  // splitmix64 finalizer over (base, index)
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void validate(const SimulationConfig& cfg) {
  if (cfg.n_firms < 1) throw ConfigError("simulation.n_firms must be >= 1");
  if (!(cfg.eta_sigma >= 0.0)) throw ConfigError("simulation.eta_sigma must be >= 0");
  if (!(cfg.state_sd > 0.0)) throw ConfigError("simulation.state.sd must be > 0");
  if (!(cfg.state_corr >= 0.0 && cfg.state_corr < 1.0)) throw ConfigError("simulation.state.corr must be in [0, 1)");
  if (!(cfg.state_box > 0.0)) throw ConfigError("simulation.state.box must be > 0");
  if (!(cfg.log_price_sd >= 0.0)) throw ConfigError("simulation.price.log_sd must be >= 0");
  if (!(cfg.omega_innovation_sd >= 0.0)) throw ConfigError("simulation.omega.innovation_sd must be >= 0");
  if (!cfg.dependent_labor.empty()) {
    if (cfg.dependent_labor.size() != 3) throw ConfigError("simulation.dependent_labor takes three numbers: a b c");
    if (cfg.variant == ModelVariant::single_m_flexible_labor) {
      throw ConfigError("simulation.dependent_labor needs pre-determined labor");
    }
  }
  const auto report = validate_assumptions(cfg.technology, 1001, cfg.variant);
  if (!report.all_passed()) {
    std::ostringstream msg;
    msg << "technology violates the model assumptions for variant " << to_string(cfg.variant) << ":";
    for (const auto& c : report.checks) {
      if (c.passed) continue;
      msg << " " << c.name;
      if (c.first_violation) msg << " (first violation at omega=" << format_double(c.first_violation->first) << ")";
    }
    throw ConfigError(msg.str());
  }
}

Dataset simulate_cross_section(const SimulationConfig& cfg) {
  validate(cfg);
  const TechnologySpec& tech = cfg.technology;
  const double e_exp_eta = expected_exp_eta(cfg.eta_sigma);
  const int n_states = cfg.variant == ModelVariant::two_labor ? 3
                       : cfg.variant == ModelVariant::single_m_flexible_labor ? 1
                                                                              : 2;

  Dataset data;
  data.variant = cfg.variant;
  data.firms.resize(cfg.n_firms);
  parallel_for(cfg.n_firms, [&](std::size_t idx) {
    std::mt19937_64 rng(substream_seed(cfg.seed, idx));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    const Interval s1 = tech.support();
    const Interval s2 = tech.support2();
    Omega lag{s1.lo + unif(rng) * s1.width(), tech.dimension() == 2 ? s2.lo + unif(rng) * s2.width() : 0.0};
    const double shift = cfg.omega_state_loading * (lag.first - 0.5 * (s1.lo + s1.hi));
    Omega omega = lag;
    if (cfg.omega_state_loading != 0.0) {
      omega.first = reflect_into(lag.first + cfg.omega_innovation_sd * normal(rng), s1);
      if (tech.dimension() == 2) omega.second = reflect_into(lag.second + cfg.omega_innovation_sd * normal(rng), s2);
    }

    double z[3] = {0.0, 0.0, 0.0};
    const double common_w = std::sqrt(cfg.state_corr);
    const double own_w = std::sqrt(1.0 - cfg.state_corr);
    for (int attempt = 0;; ++attempt) {
      const double z0 = normal(rng);
      bool inside = true;
      for (int i = 0; i < n_states; ++i) {
        z[i] = common_w * z0 + own_w * normal(rng);
        inside = inside && std::abs(z[i]) <= cfg.state_box;
      }
      if (inside) break;
      if (attempt > 100000) throw NumericError("state draw rejection sampling did not terminate");
    }
    FirmState state;
    auto state_value = [&](int i) { return cfg.state_mean + cfg.state_sd * z[i] + shift; };
    if (cfg.variant == ModelVariant::single_m_flexible_labor) {
      state.k = state_value(0);
    } else {
      state.l = state_value(0);
      state.k = state_value(1);
      if (n_states == 3) state.lu = state_value(2);
    }
    state.omega = omega;
    const CoefficientVector betas = eval_betas(tech, omega);
    if (!cfg.dependent_labor.empty()) {
      const double r = betas.beta_m1 / betas.beta_m2;
      state.l = cfg.dependent_labor[0] + cfg.dependent_labor[1] * state.k + cfg.dependent_labor[2] * r;
    }

    if (cfg.log_price_sd > 0.0) {
      state.prices.y = std::exp(cfg.log_price_sd * normal(rng));
      state.prices.m1 = std::exp(cfg.log_price_sd * normal(rng));
      state.prices.m2 = std::exp(cfg.log_price_sd * normal(rng));
      state.prices.m3 = std::exp(cfg.log_price_sd * normal(rng));
      state.prices.l = std::exp(cfg.log_price_sd * normal(rng));
    }
    const double eta = cfg.eta_sigma > 0.0 ? cfg.eta_sigma * normal(rng) : 0.0;

    const FlexibleChoice choice = solve_flexible_inputs(state, betas, e_exp_eta, cfg.variant);
    const double y = log_output(state, betas, choice, cfg.variant) + eta;

    FirmRecord& rec = data.firms[idx];
    rec.firm_id = std::to_string(idx + 1);
    rec.output_value = state.prices.y * std::exp(y);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    rec.cost_m1 = rec.cost_m2 = rec.cost_m3 = rec.cost_l = nan;
    rec.l = state.l;
    rec.lu = cfg.variant == ModelVariant::two_labor ? state.lu : nan;
    rec.k = state.k;
    switch (cfg.variant) {
      case ModelVariant::three_flexible:
        rec.cost_m3 = state.prices.m3 * std::exp(choice.m[2]);
        [[fallthrough]];
      case ModelVariant::baseline:
      case ModelVariant::two_labor:
        rec.cost_m1 = state.prices.m1 * std::exp(choice.m[0]);
        rec.cost_m2 = state.prices.m2 * std::exp(choice.m[1]);
        break;
      case ModelVariant::single_m_flexible_labor:
        rec.cost_l = state.prices.l * std::exp(choice.m[0]);
        rec.cost_m1 = state.prices.m1 * std::exp(choice.m[1]);
        rec.l = nan;
        break;
    }
    if (cfg.observe_prices) rec.observed_prices = state.prices;
    rec.truth = HiddenTruth{omega, eta, e_exp_eta, betas, choice, state.prices};
  });
  return data;
}

SimulationConfig simulation_from_config(const KeyValueConfig& cfg) {
  SimulationConfig sim;
  sim.variant = parse_variant(cfg.get_string("simulation.variant", std::string(to_string(sim.variant))));
  sim.technology = technology_from_config(cfg, sim.variant);
  const long long n = cfg.get_int("simulation.n_firms", static_cast<long long>(sim.n_firms));
  if (n < 1) throw ConfigError("simulation.n_firms must be >= 1");
  sim.n_firms = static_cast<std::size_t>(n);
  sim.eta_sigma = cfg.get_double("simulation.eta_sigma", sim.eta_sigma);
  sim.seed = static_cast<std::uint64_t>(cfg.get_int("simulation.seed", static_cast<long long>(sim.seed)));
  sim.state_mean = cfg.get_double("simulation.state.mean", sim.state_mean);
  sim.state_sd = cfg.get_double("simulation.state.sd", sim.state_sd);
  sim.state_corr = cfg.get_double("simulation.state.corr", sim.state_corr);
  sim.state_box = cfg.get_double("simulation.state.box", sim.state_box);
  sim.omega_state_loading = cfg.get_double("simulation.omega.state_loading", sim.omega_state_loading);
  sim.omega_innovation_sd = cfg.get_double("simulation.omega.innovation_sd", sim.omega_innovation_sd);
  sim.log_price_sd = cfg.get_double("simulation.price.log_sd", sim.log_price_sd);
  sim.observe_prices = cfg.get_bool("simulation.price.observed", sim.observe_prices);
  sim.dependent_labor = cfg.get_doubles("simulation.dependent_labor", sim.dependent_labor);
  return sim;
}

void simulation_to_config(const SimulationConfig& sim, KeyValueConfig& cfg) {
  technology_to_config(sim.technology, cfg);
  cfg.set("simulation.variant", std::string(to_string(sim.variant)));
  cfg.set("simulation.n_firms", std::to_string(sim.n_firms));
  cfg.set("simulation.eta_sigma", format_double(sim.eta_sigma));
  cfg.set("simulation.seed", std::to_string(sim.seed));
  cfg.set("simulation.state.mean", format_double(sim.state_mean));
  cfg.set("simulation.state.sd", format_double(sim.state_sd));
  cfg.set("simulation.state.corr", format_double(sim.state_corr));
  cfg.set("simulation.state.box", format_double(sim.state_box));
  cfg.set("simulation.omega.state_loading", format_double(sim.omega_state_loading));
  cfg.set("simulation.omega.innovation_sd", format_double(sim.omega_innovation_sd));
  cfg.set("simulation.price.log_sd", format_double(sim.log_price_sd));
  cfg.set("simulation.price.observed", sim.observe_prices ? "true" : "false");
  cfg.set("simulation.dependent_labor", format_doubles(sim.dependent_labor));
}

}  // namespace hetcoef
