#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "core/kv_config.hpp"
#include "core/model.hpp"

namespace hetcoef {

using CoefficientFn = std::function<double(const Omega&)>;

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  bool contains(double x, double tol = 0.0) const { return x >= lo - tol && x <= hi + tol; }
  double width() const { return hi - lo; }
};

// beta(omega) = intercept + slope * omega.first + slope2 * omega.second
struct AffineLine {
  double intercept = 0.0;
  double slope = 0.0;
  double slope2 = 0.0;

  double operator()(const Omega& w) const { return intercept + slope * w.first + slope2 * w.second; }
};

struct AffineParams {
  AffineLine l, lu, k, m1, m2, m3, b0;
};

// Flexible elasticities move in opposite directions along one logistic index:
//   u          = 1 / (1 + exp(-scale * (omega - center)))
//   beta_m1    = m1_floor + m1_span * u
//   beta_m2    = m2_floor + m2_span * (1 - u)
// The ratio beta_m1 / beta_m2 is strictly increasing in u whenever the spans
// are nonnegative and not both zero, and the sum stays below
// max(m1_floor + m1_span + m2_floor, m1_floor + m2_floor + m2_span).
// The other coefficients are affine in omega.
struct LogisticParams {
  double center = 0.5;
  double scale = 4.0;
  double m1_floor = 0.15;
  double m1_span = 0.2;
  double m2_floor = 0.15;
  double m2_span = 0.2;
  AffineLine l{0.25, 0.0, 0.0}, lu, k{0.30, 0.0, 0.0}, m3, b0{0.0, 1.0, 0.0};

  double index(double omega) const;
};

enum class Family { affine, logistic, affine2d, custom };

std::string_view to_string(Family f);

struct CoefficientFunctions {
  CoefficientFn l, lu, k, m1, m2, m3, b0;
};

// Heterogeneous Cobb-Douglas technology: every coefficient is a function of
// the latent technology omega on a closed (one- or two-dimensional) support.
// Immutable after construction.
class TechnologySpec {
 public:
  static TechnologySpec affine(const AffineParams& p, Interval support);
  static TechnologySpec affine2d(const AffineParams& p, Interval support, Interval support2);
  static TechnologySpec logistic(const LogisticParams& p, Interval support);
  // Missing functions (empty std::function) are treated as identically zero.
  static TechnologySpec custom(CoefficientFunctions fns, Interval support);
  static TechnologySpec custom2d(CoefficientFunctions fns, Interval support, Interval support2);

  int dimension() const { return dimension_; }
  Interval support() const { return support_; }
  Interval support2() const { return support2_; }
  Family family() const { return family_; }
  std::string_view family_tag() const { return to_string(family_); }

  const std::optional<AffineParams>& affine_params() const { return affine_; }
  const std::optional<LogisticParams>& logistic_params() const { return logistic_; }

  bool in_support(const Omega& w, double tol = 0.0) const;
  // No support check.
  CoefficientVector evaluate(const Omega& w) const;

 private:
  TechnologySpec() = default;

  Family family_ = Family::affine;
  int dimension_ = 1;
  Interval support_{};
  Interval support2_{0.0, 0.0};
  CoefficientFunctions fns_;
  std::optional<AffineParams> affine_;
  std::optional<LogisticParams> logistic_;
};

// The canonical affine test technology: beta_l = 0.25, beta_k = 0.30,
// beta_m1 = 0.2 + 0.1 omega, beta_m2 = 0.2, beta_0 = omega on [0, 1].
TechnologySpec benchmark_technology();
// Benchmark extended with beta_lu = 0.1 (two_labor) or beta_m3 = 0.1
// (three_flexible).
TechnologySpec benchmark_technology(ModelVariant variant);

// Throws DomainError when omega is outside the support.
CoefficientVector eval_betas(const TechnologySpec& spec, const Omega& omega);

struct AssumptionCheck {
  std::string name;  // positivity | finite_solution | non_collinearity
  bool passed = true;
  std::optional<Omega> first_violation;
  std::string detail;
};

struct ValidationReport {
  std::vector<AssumptionCheck> checks;
  bool all_passed() const;
  const AssumptionCheck* find(std::string_view name) const;
};

// Grid-sampled check of the structural assumptions on the technology for the
// given model variant. Two-dimensional technologies sample a grid_size x
// grid_size grid and require an injective ratio-pair map.
ValidationReport validate_assumptions(const TechnologySpec& spec, int grid_size,
                                      ModelVariant variant = ModelVariant::baseline);

// Control-variable ratio of the variant's first two flexible elasticities.
double elasticity_ratio(const TechnologySpec& spec, const Omega& omega,
                        ModelVariant variant = ModelVariant::baseline);
// Attainable (min, max) of the ratio over a one-dimensional support.
std::pair<double, double> ratio_range(const TechnologySpec& spec, ModelVariant variant = ModelVariant::baseline);

// Inverts the monotone ratio map. Closed forms for the built-in families,
// bisection otherwise. Throws DomainError if r is outside the attainable range.
double ratio_to_omega(const TechnologySpec& spec, double r, ModelVariant variant = ModelVariant::baseline);

// Inverts omega -> (beta_m1/beta_m2, beta_m2/beta_m3) for two-dimensional
// technologies. Affine: exact 2x2 solve. Otherwise nearest grid point followed
// by damped Newton.
Omega ratio_pair_to_omega(const TechnologySpec& spec, double r12, double r23);

// Serialization under the "technology." key prefix.
// Unset coefficients default to the benchmark technology of the variant.
TechnologySpec technology_from_config(const KeyValueConfig& cfg, ModelVariant variant = ModelVariant::baseline);
void technology_to_config(const TechnologySpec& spec, KeyValueConfig& cfg);

}  // namespace hetcoef
