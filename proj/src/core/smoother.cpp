#include "core/smoother.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "core/error.hpp"
#include "core/parallel.hpp"

namespace hetcoef {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr int kMaxIndexDims = 3;
constexpr long long kCellOffset = 1LL << 20;
constexpr double kMaxCellsPerDim = 1e6;

using SmallMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 9, 9>;
using SmallVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 9, 1>;

// Peak-one kernel profile, so that summed weights read as a local count.
double kernel_weight(Kernel k, double u) {
  if (k == Kernel::epanechnikov) {
    const double a = u * u;
    return a < 1.0 ? 1.0 - a : 0.0;
  }
  return std::exp(-0.5 * u * u);
}

// Unit-mass kernel density.
double kernel_density(Kernel k, double u) {
  if (k == Kernel::epanechnikov) return 0.75 * kernel_weight(k, u);
  return kernel_weight(k, u) / std::sqrt(2.0 * M_PI);
}

double column_sd(const Eigen::MatrixXd& x, Eigen::Index j) {
  const double mean = x.col(j).mean();
  const double ss = (x.col(j).array() - mean).square().sum();
  return std::sqrt(ss / static_cast<double>(x.rows() - 1));
}

}  // namespace

std::string_view to_string(Kernel k) { return k == Kernel::epanechnikov ? "epanechnikov" : "gaussian"; }

Kernel parse_kernel(std::string_view name) {
  if (name == "epanechnikov") return Kernel::epanechnikov;
  if (name == "gaussian") return Kernel::gaussian;
  throw ConfigError("unknown kernel '" + std::string(name) + "' (expected epanechnikov or gaussian)");
}

std::string_view to_string(FitCondition c) {
  switch (c) {
    case FitCondition::ok: return "ok";
    case FitCondition::ridge_applied: return "ridge_applied";
    case FitCondition::trimmed: return "trimmed";
  }
  return "ok";
}

std::string_view to_string(BandwidthRule r) {
  switch (r) {
    case BandwidthRule::rule_of_thumb: return "rule_of_thumb";
    case BandwidthRule::fixed: return "fixed";
    case BandwidthRule::loo_cv: return "loo_cv";
  }
  return "rule_of_thumb";
}

BandwidthRule parse_bandwidth_rule(std::string_view name) {
  if (name == "rule_of_thumb") return BandwidthRule::rule_of_thumb;
  if (name == "fixed") return BandwidthRule::fixed;
  if (name == "loo_cv") return BandwidthRule::loo_cv;
  throw ConfigError("unknown bandwidth rule '" + std::string(name) + "' (expected rule_of_thumb, fixed, loo_cv)");
}

LocalLinearSmoother::LocalLinearSmoother(Eigen::MatrixXd x, std::vector<double> bandwidths, SmootherOptions options)
    : x_(std::move(x)), h_(std::move(bandwidths)), options_(options) {
  const auto d = static_cast<std::size_t>(x_.cols());
  if (d == 0 || d > 8) throw ConfigError("local-linear smoother supports 1 to 8 regressors");
  if (h_.size() != d) throw ConfigError("bandwidth vector length must equal the number of regressors");
  for (double h : h_) {
    if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("bandwidths must be positive and finite");
  }
  if (static_cast<std::size_t>(x_.rows()) <= d + 1) {
    throw DataError("insufficient data: local-linear fit with " + std::to_string(d) + " regressors needs more than " +
                    std::to_string(d + 1) + " rows, got " + std::to_string(x_.rows()));
  }
  if (!x_.allFinite()) throw DataError("regressor matrix contains NaN or infinite values");

  if (options_.kernel != Kernel::epanechnikov) return;
  // Index the most selective coordinates (smallest bandwidth relative to range).
  std::vector<std::pair<double, int>> selectivity;
  for (std::size_t j = 0; j < d; ++j) {
    const double range = x_.col(static_cast<Eigen::Index>(j)).maxCoeff() - x_.col(static_cast<Eigen::Index>(j)).minCoeff();
    const double cells = range / h_[j];
    if (cells >= 2.0 && cells < kMaxCellsPerDim) selectivity.emplace_back(h_[j] / range, static_cast<int>(j));
  }
  std::sort(selectivity.begin(), selectivity.end());
  for (std::size_t i = 0; i < selectivity.size() && i < kMaxIndexDims; ++i) index_dims_.push_back(selectivity[i].second);
  if (index_dims_.empty()) return;
  for (int j : index_dims_) index_origin_.push_back(x_.col(j).minCoeff());
  for (Eigen::Index r = 0; r < x_.rows(); ++r) {
    long long cell[kMaxIndexDims] = {0, 0, 0};
    for (std::size_t a = 0; a < index_dims_.size(); ++a) {
      cell[a] = static_cast<long long>(std::floor((x_(r, index_dims_[a]) - index_origin_[a]) / h_[index_dims_[a]]));
    }
    cells_[cell_key(cell)].push_back(static_cast<std::size_t>(r));
  }
}

long long LocalLinearSmoother::cell_key(const long long* cell) const {
  long long key = 0;
  for (std::size_t a = 0; a < index_dims_.size(); ++a) key = (key << 21) | (cell[a] + kCellOffset);
  return key;
}

template <class Visit>
void LocalLinearSmoother::for_each_neighbor(std::span<const double> query, Visit&& visit) const {
  const auto d = x_.cols();
  auto visit_row = [&](std::size_t r) {
    double w = 1.0;
    for (Eigen::Index j = 0; j < d && w > 0.0; ++j) {
      w *= kernel_weight(options_.kernel, (x_(static_cast<Eigen::Index>(r), j) - query[j]) / h_[j]);
    }
    if (w > 0.0) visit(r, w);
  };
  if (index_dims_.empty()) {
    for (std::size_t r = 0; r < rows(); ++r) visit_row(r);
    return;
  }
  const std::size_t k = index_dims_.size();
  long long center[kMaxIndexDims] = {0, 0, 0};
  for (std::size_t a = 0; a < k; ++a) {
    const double c = std::floor((query[index_dims_[a]] - index_origin_[a]) / h_[index_dims_[a]]);
    if (!(std::abs(c) < static_cast<double>(kCellOffset - 2))) return;  // far outside the data
    center[a] = static_cast<long long>(c);
  }
  int total = 1;
  for (std::size_t a = 0; a < k; ++a) total *= 3;
  for (int flat = 0; flat < total; ++flat) {
    long long cell[kMaxIndexDims] = {0, 0, 0};
    int rest = flat;
    for (std::size_t a = 0; a < k; ++a) {
      cell[a] = center[a] + (rest % 3) - 1;
      rest /= 3;
    }
    const auto it = cells_.find(cell_key(cell));
    if (it == cells_.end()) continue;
    for (std::size_t r : it->second) visit_row(r);
  }
}

void LocalLinearSmoother::check_query(std::span<const double> query) const {
  if (query.size() != dims()) throw DataError("query dimension does not match the regressors");
  for (double q : query) {
    if (!std::isfinite(q)) throw DataError("query point contains NaN or infinite values");
  }
}

void LocalLinearSmoother::check_response(const Eigen::VectorXd& y) const {
  if (static_cast<std::size_t>(y.size()) != rows()) throw DataError("response length does not match the regressors");
  if (!y.allFinite()) throw DataError("response contains NaN or infinite values");
}

LocalLinearSmoother::Local LocalLinearSmoother::solve(const Eigen::VectorXd& y, std::span<const double> query,
                                                      std::optional<std::size_t> exclude) const {
  const auto d = x_.cols();
  const auto p = d + 1;
  SmallMatrix gram = SmallMatrix::Zero(p, p);
  SmallVector rhs = SmallVector::Zero(p);
  SmallVector z(p);
  double ess = 0.0;
  for_each_neighbor(query, [&](std::size_t r, double w) {
    if (exclude && *exclude == r) return;
    z(0) = 1.0;
    for (Eigen::Index j = 0; j < d; ++j) z(j + 1) = (x_(static_cast<Eigen::Index>(r), j) - query[j]) / h_[j];
    gram.selfadjointView<Eigen::Upper>().rankUpdate(z, w);
    rhs += (w * y(static_cast<Eigen::Index>(r))) * z;
    ess += w;
  });

  Local out;
  out.ess = ess;
  if (ess < options_.min_effective_sample || ess <= 0.0) {
    out.condition = FitCondition::trimmed;
    return out;
  }
  SmallMatrix full = gram.selfadjointView<Eigen::Upper>();
  Eigen::SelfAdjointEigenSolver<SmallMatrix> eig(full, Eigen::EigenvaluesOnly);
  const double lmax = eig.eigenvalues().maxCoeff();
  const double lmin = eig.eigenvalues().minCoeff();
  const double rcond = lmax > 0.0 ? std::max(lmin, 0.0) / lmax : 0.0;
  if (rcond < options_.rcond_threshold) {
    const double lambda = options_.ridge_factor * full.trace() / static_cast<double>(p);
    for (Eigen::Index j = 1; j < p; ++j) full(j, j) += lambda;
    out.condition = FitCondition::ridge_applied;
  }
  out.coef = full.ldlt().solve(rhs);
  if (!out.coef.allFinite()) out.condition = FitCondition::trimmed;
  return out;
}

SmootherFit LocalLinearSmoother::fit(const Eigen::VectorXd& y, std::span<const double> query,
                                     std::optional<std::size_t> exclude) const {
  check_query(query);
  check_response(y);
  const Local local = solve(y, query, exclude);
  SmootherFit out;
  out.effective_sample_size = local.ess;
  out.condition = local.condition;
  out.gradient.assign(dims(), kNaN);
  if (local.condition == FitCondition::trimmed) {
    out.estimate = kNaN;
    return out;
  }
  out.estimate = local.coef(0);
  for (std::size_t j = 0; j < dims(); ++j) out.gradient[j] = local.coef(static_cast<Eigen::Index>(j) + 1) / h_[j];
  return out;
}

std::vector<SmootherFit> LocalLinearSmoother::fit_rows(const Eigen::VectorXd& y, const Eigen::MatrixXd& queries) const {
  check_response(y);
  if (static_cast<std::size_t>(queries.cols()) != dims()) throw DataError("query dimension does not match the regressors");
  std::vector<SmootherFit> out(static_cast<std::size_t>(queries.rows()));
  parallel_for(out.size(), [&](std::size_t i) {
    std::vector<double> q(dims());
    for (std::size_t j = 0; j < dims(); ++j) q[j] = queries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    out[i] = fit(y, q);
  });
  return out;
}

double LocalLinearSmoother::density(std::span<const double> query) const {
  check_query(query);
  double sum = 0.0;
  for_each_neighbor(query, [&](std::size_t r, double) {
    double w = 1.0;
    for (Eigen::Index j = 0; j < x_.cols(); ++j) {
      w *= kernel_density(options_.kernel, (x_(static_cast<Eigen::Index>(r), j) - query[j]) / h_[j]) / h_[j];
    }
    sum += w;
  });
  return sum / static_cast<double>(rows());
}

double LocalLinearSmoother::residual_rms(const Eigen::VectorXd& y, std::span<const double> query) const {
  check_query(query);
  check_response(y);
  const Local local = solve(y, query, std::nullopt);
  if (local.condition == FitCondition::trimmed) return kNaN;
  double ss = 0.0;
  double wsum = 0.0;
  for_each_neighbor(query, [&](std::size_t r, double w) {
    double fitted = local.coef(0);
    for (Eigen::Index j = 0; j < x_.cols(); ++j) {
      fitted += local.coef(j + 1) * (x_(static_cast<Eigen::Index>(r), j) - query[j]) / h_[j];
    }
    const double e = y(static_cast<Eigen::Index>(r)) - fitted;
    ss += w * e * e;
    wsum += w;
  });
  return std::sqrt(ss / wsum);
}

SmootherFit fit_local_linear(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::span<const double> query,
                             const std::vector<double>& bandwidths, const SmootherOptions& options) {
  return LocalLinearSmoother(x, bandwidths, options).fit(y, query);
}

double estimate_density(const Eigen::MatrixXd& x, std::span<const double> query, const std::vector<double>& bandwidths,
                        Kernel kernel) {
  SmootherOptions options;
  options.kernel = kernel;
  return LocalLinearSmoother(x, bandwidths, options).density(query);
}

std::vector<double> select_bandwidth(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const BandwidthSpec& spec,
                                     const SmootherOptions& options) {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto d = static_cast<std::size_t>(x.cols());
  if (spec.rule == BandwidthRule::fixed) {
    if (spec.fixed.size() != d) throw ConfigError("fixed bandwidth vector length must equal the number of regressors");
    for (double h : spec.fixed) {
      if (!(h > 0.0)) throw ConfigError("fixed bandwidths must be positive");
    }
    return spec.fixed;
  }
  const std::size_t minimum = spec.rule == BandwidthRule::loo_cv ? 50 : 20;
  if (n < minimum) {
    throw DataError("insufficient data: bandwidth rule " + std::string(to_string(spec.rule)) + " needs at least " +
                    std::to_string(minimum) + " rows, got " + std::to_string(n));
  }
  if (!x.allFinite()) throw DataError("regressor matrix contains NaN or infinite values");
  if (!(spec.multiplier > 0.0)) throw ConfigError("bandwidth multiplier must be positive");

  std::vector<double> base(d);
  const double rate = std::pow(static_cast<double>(n), -1.0 / (4.0 + static_cast<double>(d)));
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = column_sd(x, static_cast<Eigen::Index>(j));
    if (!(sd > 0.0)) throw DataError("regressor " + std::to_string(j) + " has zero variance");
    base[j] = spec.multiplier * kRuleOfThumbConstant * sd * rate;
  }
  if (spec.rule == BandwidthRule::rule_of_thumb) return base;

  if (static_cast<std::size_t>(y.size()) != n || !y.allFinite()) {
    throw DataError("cross-validation response must be finite with one value per row");
  }
  if (spec.cv_subsample_size < 1 || spec.cv_subsample_size > n) {
    throw ConfigError("cv_subsample_size must be between 1 and the number of rows");
  }
  const std::size_t m = spec.cv_subsample_size;
  std::vector<std::size_t> subsample(m);
  for (std::size_t i = 0; i < m; ++i) subsample[i] = i * n / m;

  const double mean_y = y.mean();
  const double var_y = (y.array() - mean_y).square().mean();
  std::vector<double> factors;
  for (int k = 0; k <= 8; ++k) factors.push_back(0.25 * std::pow(2.0, 0.5 * k));
  std::vector<double> objective(factors.size(), std::numeric_limits<double>::infinity());
  for (std::size_t f = 0; f < factors.size(); ++f) {
    std::vector<double> h(d);
    for (std::size_t j = 0; j < d; ++j) h[j] = factors[f] * base[j];
    const LocalLinearSmoother smoother(x, h, options);
    std::vector<double> err(m, kNaN);
    parallel_for(m, [&](std::size_t i) {
      const std::size_t r = subsample[i];
      std::vector<double> q(d);
      for (std::size_t j = 0; j < d; ++j) q[j] = x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
      const SmootherFit fit = smoother.fit(y, q, r);
      if (fit.condition != FitCondition::trimmed) {
        const double e = y(static_cast<Eigen::Index>(r)) - fit.estimate;
        err[i] = e * e;
      }
    });
    double sum = 0.0;
    std::size_t valid = 0;
    for (double e : err) {
      if (std::isfinite(e)) {
        sum += e;
        ++valid;
      }
    }
    if (2 * valid >= m && valid > 0) objective[f] = sum / static_cast<double>(valid);
  }
  const double best = *std::min_element(objective.begin(), objective.end());
  if (!std::isfinite(best)) throw NumericError("bandwidth cross-validation: every candidate bandwidth was trimmed");
  const double tie = 1e-10 * var_y + 1e-300;
  std::size_t chosen = 0;
  for (std::size_t f = 0; f < factors.size(); ++f) {
    if (objective[f] <= best + tie) chosen = f;
  }
  std::vector<double> out(d);
  for (std::size_t j = 0; j < d; ++j) out[j] = factors[chosen] * base[j];
  return out;
}

}  // namespace hetcoef
