#pragma once

#include <string>
#include <string_view>

namespace hetcoef {

// Production model variants. The baseline has predetermined (l, k) and two
// flexible inputs; the others add a second labor type, add a third flexible
// input, or treat labor itself as the second flexible input.
enum class ModelVariant { baseline, two_labor, three_flexible, single_m_flexible_labor };

std::string_view to_string(ModelVariant v);
ModelVariant parse_variant(std::string_view name);

// Latent technology. One-dimensional technologies ignore `second`.
struct Omega {
  double first = 0.0;
  double second = 0.0;

  Omega() = default;
  Omega(double v) : first(v) {}  // NOLINT(google-explicit-constructor)
  Omega(double a, double b) : first(a), second(b) {}
};

// Coefficient values at one latent technology. `beta_l` is skilled labor in
// the two-labor model (with `beta_lu` unskilled); `beta_m1` is the single
// material input when labor is flexible. Unused slots are zero.
struct CoefficientVector {
  double beta_l = 0.0;
  double beta_lu = 0.0;
  double beta_k = 0.0;
  double beta_m1 = 0.0;
  double beta_m2 = 0.0;
  double beta_m3 = 0.0;
  double beta_0 = 0.0;
};

int flexible_count(ModelVariant v);

// Flexible elasticities in the order the variant's cost ratios are formed:
// baseline/two_labor (m1, m2); three_flexible (m1, m2, m3);
// single_m_flexible_labor (l, m1).
int flexible_elasticities(const CoefficientVector& b, ModelVariant v, double out[3]);

}  // namespace hetcoef
