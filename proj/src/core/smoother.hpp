#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace hetcoef {

enum class Kernel { epanechnikov, gaussian };
enum class FitCondition { ok, ridge_applied, trimmed };

std::string_view to_string(Kernel k);
Kernel parse_kernel(std::string_view name);
std::string_view to_string(FitCondition c);

// Local-linear fit at one query point. Trimmed fits carry NaN estimate and
// gradient.
struct SmootherFit {
  double estimate = 0.0;
  std::vector<double> gradient;
  double effective_sample_size = 0.0;  // sum of kernel weights, peak weight 1
  FitCondition condition = FitCondition::ok;
};

struct SmootherOptions {
  Kernel kernel = Kernel::epanechnikov;
  double min_effective_sample = 15.0;
  double rcond_threshold = 1e-10;
  double ridge_factor = 1e-8;
};

// Weighted least squares of y on (1, (X - query) / h) with product-kernel
// weights, over an immutable regressor matrix (n rows, d columns). With the
// compact Epanechnikov kernel, candidate rows come from a uniform grid index
// on up to three of the most selective coordinates.
class LocalLinearSmoother {
 public:
  LocalLinearSmoother(Eigen::MatrixXd x, std::vector<double> bandwidths, SmootherOptions options = {});

  std::size_t rows() const { return static_cast<std::size_t>(x_.rows()); }
  std::size_t dims() const { return static_cast<std::size_t>(x_.cols()); }
  const Eigen::MatrixXd& regressors() const { return x_; }
  const std::vector<double>& bandwidths() const { return h_; }
  const SmootherOptions& options() const { return options_; }

  // `exclude` drops one row (leave-one-out).
  SmootherFit fit(const Eigen::VectorXd& y, std::span<const double> query,
                  std::optional<std::size_t> exclude = std::nullopt) const;
  // Fits at every row of `queries`, in parallel, collected by row index.
  std::vector<SmootherFit> fit_rows(const Eigen::VectorXd& y, const Eigen::MatrixXd& queries) const;

  // Product-kernel density estimate at the query.
  double density(std::span<const double> query) const;

  // Weighted RMS of the local-linear residuals of y around the query; NaN if
  // the local fit is trimmed.
  double residual_rms(const Eigen::VectorXd& y, std::span<const double> query) const;

 private:
  struct Local {
    Eigen::VectorXd coef;
    double ess = 0.0;
    FitCondition condition = FitCondition::ok;
  };

  template <class Visit>
  void for_each_neighbor(std::span<const double> query, Visit&& visit) const;
  Local solve(const Eigen::VectorXd& y, std::span<const double> query, std::optional<std::size_t> exclude) const;
  void check_query(std::span<const double> query) const;
  void check_response(const Eigen::VectorXd& y) const;
  long long cell_key(const long long* cell) const;

  Eigen::MatrixXd x_;
  std::vector<double> h_;
  SmootherOptions options_;
  std::vector<int> index_dims_;
  std::vector<double> index_origin_;
  std::unordered_map<long long, std::vector<std::size_t>> cells_;
};

SmootherFit fit_local_linear(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::span<const double> query,
                             const std::vector<double>& bandwidths, const SmootherOptions& options = {});

double estimate_density(const Eigen::MatrixXd& x, std::span<const double> query, const std::vector<double>& bandwidths,
                        Kernel kernel = Kernel::epanechnikov);

enum class BandwidthRule { rule_of_thumb, fixed, loo_cv };

std::string_view to_string(BandwidthRule r);
BandwidthRule parse_bandwidth_rule(std::string_view name);

struct BandwidthSpec {
  BandwidthRule rule = BandwidthRule::rule_of_thumb;
  std::vector<double> fixed;             // used by the fixed rule
  double multiplier = 1.0;               // scales the rule-of-thumb base
  std::size_t cv_subsample_size = 400;   // query points for the CV objective
};

inline constexpr double kRuleOfThumbConstant = 1.06;

// rule_of_thumb: multiplier * 1.06 * sd(X_j) * n^(-1 / (4 + d)).
// loo_cv: leave-one-out squared error over the grid
// {0.25, 0.354, ..., 4} x rule_of_thumb, ties broken toward the larger bandwidth.
std::vector<double> select_bandwidth(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const BandwidthSpec& spec,
                                     const SmootherOptions& options = {});

}  // namespace hetcoef
