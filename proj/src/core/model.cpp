#include "core/model.hpp"

#include "core/error.hpp"

namespace hetcoef {

std::string_view to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::baseline: return "baseline";
    case ModelVariant::two_labor: return "two_labor";
    case ModelVariant::three_flexible: return "three_flexible";
    case ModelVariant::single_m_flexible_labor: return "single_m_flexible_labor";
  }
  return "baseline";
}

ModelVariant parse_variant(std::string_view name) {
  if (name == "baseline") return ModelVariant::baseline;
  if (name == "two_labor") return ModelVariant::two_labor;
  if (name == "three_flexible") return ModelVariant::three_flexible;
  if (name == "single_m_flexible_labor" || name == "single_m") return ModelVariant::single_m_flexible_labor;
  throw ConfigError("unknown model variant '" + std::string(name) +
                    "' (expected baseline, two_labor, three_flexible, single_m_flexible_labor)");
}

int flexible_count(ModelVariant v) { return v == ModelVariant::three_flexible ? 3 : 2; }

int flexible_elasticities(const CoefficientVector& b, ModelVariant v, double out[3]) {
  switch (v) {
    case ModelVariant::three_flexible:
      out[0] = b.beta_m1;
      out[1] = b.beta_m2;
      out[2] = b.beta_m3;
      return 3;
    case ModelVariant::single_m_flexible_labor:
      out[0] = b.beta_l;
      out[1] = b.beta_m1;
      return 2;
    default:
      out[0] = b.beta_m1;
      out[1] = b.beta_m2;
      return 2;
  }
}

}  // namespace hetcoef
