#include "harness/columns.hpp"

namespace hetcoef {

std::vector<CoefficientColumn> coefficient_columns(ModelVariant variant) {
  using C = CoefficientVector;
  switch (variant) {
    case ModelVariant::two_labor:
      return {{"beta_ls", &C::beta_l}, {"beta_lu", &C::beta_lu}, {"beta_k", &C::beta_k},
              {"beta_m1", &C::beta_m1}, {"beta_m2", &C::beta_m2}, {"beta_0", &C::beta_0}};
    case ModelVariant::three_flexible:
      return {{"beta_l", &C::beta_l},   {"beta_k", &C::beta_k},   {"beta_m1", &C::beta_m1},
              {"beta_m2", &C::beta_m2}, {"beta_m3", &C::beta_m3}, {"beta_0", &C::beta_0}};
    case ModelVariant::single_m_flexible_labor:
      return {{"beta_l", &C::beta_l}, {"beta_k", &C::beta_k}, {"beta_m", &C::beta_m1}, {"beta_0", &C::beta_0}};
    case ModelVariant::baseline:
      break;
  }
  return {{"beta_l", &C::beta_l}, {"beta_k", &C::beta_k}, {"beta_m1", &C::beta_m1}, {"beta_m2", &C::beta_m2},
          {"beta_0", &C::beta_0}};
}

std::vector<std::string> share_columns(ModelVariant variant) {
  switch (variant) {
    case ModelVariant::three_flexible: return {"s1", "s2", "s3"};
    case ModelVariant::single_m_flexible_labor: return {"s_l", "s_m"};
    default: return {"s1", "s2"};
  }
}

}  // namespace hetcoef
