#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core/model.hpp"
#include "core/technology.hpp"

namespace hetcoef {

// Unit prices (currency per unit). `l` is the wage when labor is flexible.
struct Prices {
  double y = 1.0;
  double m1 = 1.0;
  double m2 = 1.0;
  double m3 = 1.0;
  double l = 1.0;
};

// Pre-determined state of one firm. `l` is (skilled) log labor, `lu` the
// unskilled log labor of the two-labor model. When labor is flexible `l` is
// ignored by the input solution.
struct FirmState {
  double l = 0.0;
  double lu = 0.0;
  double k = 0.0;
  Omega omega;
  Prices prices;
};

// Log quantities of the flexible inputs, in the variant's flexible order:
// (m1, m2), (m1, m2, m3) or (l, m1).
struct FlexibleChoice {
  double m[3] = {0.0, 0.0, 0.0};
  int count = 2;
};

double expected_exp_eta(double eta_sigma);

// Log output net of the shock, Psi(state, inputs).
double log_output(const FirmState& state, const CoefficientVector& betas, const FlexibleChoice& choice,
                  ModelVariant variant = ModelVariant::baseline);

// Closed-form expected-profit maximizer. Throws DomainError when the flexible
// elasticities are not positive or sum to 1 or more.
FlexibleChoice solve_flexible_inputs(const FirmState& state, const CoefficientVector& betas, double e_exp_eta,
                                     ModelVariant variant = ModelVariant::baseline);

// (p_y beta_iota exp(Psi) E[exp eta] - p_iota exp(m_iota)) / (p_iota exp(m_iota)),
// iota is 1-based in the variant's flexible order.
double foc_residual(const FirmState& state, const CoefficientVector& betas, const FlexibleChoice& choice,
                    double e_exp_eta, int iota, ModelVariant variant = ModelVariant::baseline);

struct MaximizerSettings {
  double grid_lo = -60.0;
  double grid_hi = 60.0;
  int grid_points = 121;  // per axis; three inputs use min(grid_points, 41)
  int zoom_levels = 12;
  int max_newton_iterations = 200;
};

// Numerical expected-profit maximizer used as a test oracle for the closed
// form: grid search with zoom refinement, then Newton on the profit gradient.
// Throws NumericError on non-convergence.
FlexibleChoice brute_force_profit_maximizer(const FirmState& state, const CoefficientVector& betas,
                                            double e_exp_eta, const MaximizerSettings& settings = {},
                                            ModelVariant variant = ModelVariant::baseline);

struct HiddenTruth {
  Omega omega;
  double eta = 0.0;
  double e_exp_eta = 1.0;
  CoefficientVector betas;
  FlexibleChoice inputs;
  Prices prices;
};

// One firm-period. Observables follow the value-denominated schema: output
// value, flexible input costs, log labor and log capital. Costs or labor
// columns a variant does not use are NaN.
struct FirmRecord {
  std::string firm_id;
  double output_value = 0.0;
  double cost_m1 = 0.0;
  double cost_m2 = 0.0;
  double cost_m3 = 0.0;
  double cost_l = 0.0;
  double l = 0.0;
  double lu = 0.0;
  double k = 0.0;
  std::optional<Prices> observed_prices;
  std::optional<HiddenTruth> truth;
};

struct Dataset {
  ModelVariant variant = ModelVariant::baseline;
  std::vector<FirmRecord> firms;

  std::size_t size() const { return firms.size(); }
  bool has_truth() const;
  bool has_prices() const;
};

// Copy with hidden truth removed.
Dataset observables_only(const Dataset& data);

struct SimulationConfig {
  TechnologySpec technology = benchmark_technology();
  ModelVariant variant = ModelVariant::baseline;
  std::size_t n_firms = 1000;
  double eta_sigma = 0.1;
  std::uint64_t seed = 20240601;
  // Pre-determined log inputs: equicorrelated normal truncated to
  // mean +- box * sd in every coordinate.
  double state_mean = 0.0;
  double state_sd = 1.0;
  double state_corr = 0.3;
  double state_box = 2.0;
  // When nonzero, omega is drawn as a lagged uniform draw that shifts the
  // state means by loading * (lag - support midpoint), followed by a normal
  // innovation reflected into the support.
  double omega_state_loading = 0.0;
  double omega_innovation_sd = 0.1;
  // Zero means all prices are degenerate at one.
  double log_price_sd = 0.0;
  bool observe_prices = false;
  // Optional (a, b, c): log labor is set to a + b*k + c*r, with r the
  // flexible cost ratio, instead of being drawn.
  std::vector<double> dependent_labor;
};

void validate(const SimulationConfig& cfg);

// Deterministic given the config (seed included): each firm draws from its
// own substream, so the output does not depend on scheduling.
Dataset simulate_cross_section(const SimulationConfig& cfg);

SimulationConfig simulation_from_config(const KeyValueConfig& cfg);
void simulation_to_config(const SimulationConfig& sim, KeyValueConfig& cfg);

// Per-index random stream seed derived from a base seed.
std::uint64_t substream_seed(std::uint64_t base, std::uint64_t index);

}  // namespace hetcoef
