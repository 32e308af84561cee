#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "core/kv_config.hpp"
#include "core/model.hpp"
#include "core/simulator.hpp"
#include "core/smoother.hpp"

namespace hetcoef {

// Conditioning set of the share regression. `full` uses every observable in
// the share definition (states, log flexible inputs, cost ratios);
// `states_and_ratios` drops the log flexible inputs, which carry no extra
// information once prices are degenerate.
enum class ShareConditioning { full, states_and_ratios };

std::string_view to_string(ShareConditioning c);
ShareConditioning parse_share_conditioning(std::string_view name);

struct EstimatorConfig {
  ModelVariant variant = ModelVariant::baseline;
  Kernel kernel = Kernel::epanechnikov;
  BandwidthSpec share_bandwidth{BandwidthRule::rule_of_thumb, {}, 3.0, 400};
  BandwidthSpec state_bandwidth{BandwidthRule::rule_of_thumb, {}, 3.0, 400};
  BandwidthSpec productivity_bandwidth{BandwidthRule::rule_of_thumb, {}, 3.0, 400};
  double min_effective_sample = 15.0;
  double share_epsilon = 0.01;
  // Recover log quantities from costs as ln(cost) when no price columns are
  // present. Without it, price columns are required.
  bool prices_are_unit = true;
  // three_flexible with one-dimensional omega: condition on r12 only.
  bool single_ratio = false;
  ShareConditioning share_conditioning = ShareConditioning::full;
  // Upper-tail winsorization of output value in the share regression;
  // 0 disables.
  double winsorize_quantile = 0.0;
  // Locality diagnostic thresholds.
  double density_floor = 0.05;  // relative to the median firm density
  double spread_floor = 0.1;    // conditional residual spread relative to sd
};

void validate(const EstimatorConfig& cfg);
EstimatorConfig estimator_from_config(const KeyValueConfig& cfg);
void estimator_to_config(const EstimatorConfig& est, KeyValueConfig& cfg);

enum class FirmFlag { ok, clamped, trimmed };
std::string_view to_string(FirmFlag f);

struct Ratios {
  double r = 0.0;    // first control ratio: m1/m2 costs, or labor/material cost
  double r23 = 0.0;  // three_flexible only; NaN otherwise
};

// Cost ratio of the variant's first two flexible inputs (and m2/m3 for three
// flexible inputs). Throws DataError on nonpositive costs.
Ratios compute_ratios(const FirmRecord& record, ModelVariant variant);
double compute_ratio(const FirmRecord& record);

// Per-firm quantities derived from observables, shared by all stages.
struct PipelineFrame {
  ModelVariant variant = ModelVariant::baseline;
  int flexible_count = 2;
  std::vector<double> log_output;                 // y = ln(output_value / p_y)
  std::vector<std::array<double, 3>> log_inputs;  // flexible order
  std::vector<std::array<double, 3>> costs;       // flexible order
  std::vector<Ratios> ratios;
  Eigen::MatrixXd share_regressors;  // n x d_share
  Eigen::MatrixXd state_regressors;  // n x d_state, state columns first
  int state_columns = 2;             // leading columns of state_regressors with elasticities
  std::vector<std::string> state_names;
};

PipelineFrame build_frame(const Dataset& data, const EstimatorConfig& cfg);

// Source of the conditional expectations the identification formulas need.
// Each method returns one fit per firm, in firm order; firms whose response is
// NaN are neither data nor queries and come back trimmed.
class ExpectationSource {
 public:
  virtual ~ExpectationSource() = default;
  // E[output value | share conditioning set]
  virtual std::vector<SmootherFit> output_value(const PipelineFrame& frame, const Dataset& data) = 0;
  // E[net output | states, ratios] with gradient in the state coordinates
  virtual std::vector<SmootherFit> net_output(const PipelineFrame& frame, const Dataset& data,
                                              const std::vector<double>& net) = 0;
  // E[net output less state contributions | states, ratios]
  virtual std::vector<SmootherFit> residual_output(const PipelineFrame& frame, const Dataset& data,
                                                   const std::vector<double>& residual) = 0;
};

// Local-linear estimates with per-stage bandwidth selection.
class LocalLinearSource : public ExpectationSource {
 public:
  explicit LocalLinearSource(EstimatorConfig cfg) : cfg_(std::move(cfg)) {}
  std::vector<SmootherFit> output_value(const PipelineFrame& frame, const Dataset& data) override;
  std::vector<SmootherFit> net_output(const PipelineFrame& frame, const Dataset& data,
                                      const std::vector<double>& net) override;
  std::vector<SmootherFit> residual_output(const PipelineFrame& frame, const Dataset& data,
                                           const std::vector<double>& residual) override;

  const std::vector<double>& share_bandwidths() const { return share_h_; }
  const std::vector<double>& state_bandwidths() const { return state_h_; }
  const std::vector<double>& productivity_bandwidths() const { return productivity_h_; }

 private:
  std::vector<SmootherFit> fit_stage(const Eigen::MatrixXd& x, const std::vector<double>& response,
                                     const BandwidthSpec& spec, std::vector<double>& chosen) const;

  EstimatorConfig cfg_;
  std::vector<double> share_h_, state_h_, productivity_h_;
};

// Analytic conditional expectations from hidden truth: the shock is replaced
// by its expectation, and state-coordinate gradients are the true
// elasticities. Requires every record to carry truth.
class OracleSource : public ExpectationSource {
 public:
  std::vector<SmootherFit> output_value(const PipelineFrame& frame, const Dataset& data) override;
  std::vector<SmootherFit> net_output(const PipelineFrame& frame, const Dataset& data,
                                      const std::vector<double>& net) override;
  std::vector<SmootherFit> residual_output(const PipelineFrame& frame, const Dataset& data,
                                           const std::vector<double>& residual) override;
};

struct ShareEstimates {
  std::vector<std::array<double, 3>> shares;  // flexible order; NaN when trimmed
  std::vector<FirmFlag> flags;
  std::vector<SmootherFit> fits;
};

ShareEstimates estimate_shares(const PipelineFrame& frame, const Dataset& data, const EstimatorConfig& cfg,
                               ExpectationSource& source);

// y - sum_i s_i m_i for one firm.
double net_output(const PipelineFrame& frame, std::size_t firm, const std::array<double, 3>& shares);

struct StateElasticities {
  std::vector<std::vector<double>> values;  // per firm, one per state column; NaN when trimmed
  std::vector<SmootherFit> fits;
};

StateElasticities estimate_labor_capital(const PipelineFrame& frame, const Dataset& data,
                                         const std::vector<double>& net_outputs, ExpectationSource& source);

struct ProductivityEstimates {
  std::vector<double> beta_0;
  std::vector<double> residual_outputs;
  std::vector<SmootherFit> fits;
};

ProductivityEstimates estimate_additive_productivity(const PipelineFrame& frame, const Dataset& data,
                                                     const std::vector<double>& net_outputs,
                                                     const StateElasticities& states, ExpectationSource& source);

struct FirmEstimate {
  std::string firm_id;
  Ratios ratios;
  std::array<double, 3> shares{};
  CoefficientVector betas;  // unused slots zero, unestimated NaN
  double net_output = 0.0;
  FirmFlag flag = FirmFlag::ok;
  FitCondition share_fit = FitCondition::ok;
  FitCondition state_fit = FitCondition::ok;
  FitCondition productivity_fit = FitCondition::ok;
};

struct ElasticityEstimates {
  ModelVariant variant = ModelVariant::baseline;
  bool oracle_mode = false;
  std::vector<FirmEstimate> firms;
  std::vector<double> share_bandwidths, state_bandwidths, productivity_bandwidths;

  std::size_t count(FirmFlag f) const;
  // Firms with at least one ridge-stabilized stage.
  std::size_t ridge_count() const;
};

enum class ExpectationMode { local_linear, oracle };

ElasticityEstimates run_pipeline(const Dataset& data, const EstimatorConfig& cfg,
                                 ExpectationMode mode = ExpectationMode::local_linear);

struct LocalityEntry {
  std::string firm_id;
  double density = 0.0;
  double relative_density = 0.0;
  std::vector<double> spreads;  // one per state column
  double min_spread = 0.0;
  bool flagged = false;
};

struct LocalityReport {
  std::vector<std::string> spread_names;
  std::vector<double> bandwidths;
  std::vector<LocalityEntry> entries;
  std::size_t flagged_count() const;
};

// Kernel density of (states, ratios) at each firm, and the local residual
// spread of each state given the other conditioning variables. Firms with low
// relative density or vanishing spread are flagged.
LocalityReport locality_diagnostic(const Dataset& data, const EstimatorConfig& cfg);

}  // namespace hetcoef
