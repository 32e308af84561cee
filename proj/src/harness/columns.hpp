#pragma once

#include <string>
#include <vector>

#include "core/model.hpp"

namespace hetcoef {

// Named coefficient of a variant and where it lives in CoefficientVector.
struct CoefficientColumn {
  std::string name;
  double CoefficientVector::*member;
};

// Coefficients the variant estimates, in report order.
std::vector<CoefficientColumn> coefficient_columns(ModelVariant variant);

// Share column names in flexible order: s1, s2 (s3), or s_l, s_m.
std::vector<std::string> share_columns(ModelVariant variant);

}  // namespace hetcoef
