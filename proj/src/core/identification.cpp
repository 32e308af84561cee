#include "core/identification.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "core/error.hpp"
#include "core/parallel.hpp"

namespace hetcoef {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

SmootherFit trimmed_fit(std::size_t dims) {
  SmootherFit f;
  f.estimate = kNaN;
  f.gradient.assign(dims, kNaN);
  f.effective_sample_size = 0.0;
  f.condition = FitCondition::trimmed;
  return f;
}

void require_positive(double v, const FirmRecord& r, const char* column) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw DataError("firm " + r.firm_id + ": " + column + " must be positive and finite");
  }
}

void require_finite(double v, const FirmRecord& r, const char* column) {
  if (!std::isfinite(v)) throw DataError("firm " + r.firm_id + ": " + column + " must be finite");
}

const HiddenTruth& truth_of(const Dataset& data, std::size_t i) {
  const auto& t = data.firms[i].truth;
  if (!t) throw DataError("oracle expectations need hidden truth for every firm (missing for firm " +
                          data.firms[i].firm_id + ")");
  return *t;
}

// True elasticities of the state columns, in frame order.
std::vector<double> true_state_elasticities(const CoefficientVector& b, ModelVariant v) {
  switch (v) {
    case ModelVariant::two_labor: return {b.beta_l, b.beta_lu, b.beta_k};
    case ModelVariant::single_m_flexible_labor: return {b.beta_k};
    default: return {b.beta_l, b.beta_k};
  }
}

Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& cols) {
  const auto n = static_cast<Eigen::Index>(cols.empty() ? 0 : cols.front().size());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    for (Eigen::Index i = 0; i < n; ++i) x(i, static_cast<Eigen::Index>(j)) = cols[j][static_cast<std::size_t>(i)];
  }
  return x;
}

double median(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }), v.end());
  if (v.empty()) return kNaN;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

}  // namespace

std::string_view to_string(ShareConditioning c) {
  return c == ShareConditioning::full ? "full" : "states_and_ratios";
}

ShareConditioning parse_share_conditioning(std::string_view name) {
  if (name == "full") return ShareConditioning::full;
  if (name == "states_and_ratios") return ShareConditioning::states_and_ratios;
  throw ConfigError("unknown share conditioning '" + std::string(name) + "' (expected full or states_and_ratios)");
}

std::string_view to_string(FirmFlag f) {
  switch (f) {
    case FirmFlag::ok: return "ok";
    case FirmFlag::clamped: return "clamped";
    case FirmFlag::trimmed: return "trimmed";
  }
  return "ok";
}

void validate(const EstimatorConfig& cfg) {
  if (!(cfg.share_epsilon > 0.0 && cfg.share_epsilon < 0.5)) throw ConfigError("estimator.trim.share_epsilon must be in (0, 0.5)");
  if (!(cfg.min_effective_sample >= 0.0)) throw ConfigError("estimator.trim.min_ess must be >= 0");
  if (!(cfg.winsorize_quantile == 0.0 || (cfg.winsorize_quantile > 0.5 && cfg.winsorize_quantile < 1.0))) {
    throw ConfigError("estimator.winsorize_quantile must be 0 (off) or in (0.5, 1)");
  }
  if (!(cfg.density_floor >= 0.0) || !(cfg.spread_floor >= 0.0)) {
    throw ConfigError("diagnostic floors must be nonnegative");
  }
  for (const auto* b : {&cfg.share_bandwidth, &cfg.state_bandwidth, &cfg.productivity_bandwidth}) {
    if (!(b->multiplier > 0.0)) throw ConfigError("bandwidth multipliers must be positive");
    if (b->cv_subsample_size < 1) throw ConfigError("bandwidth cv_subsample must be >= 1");
  }
}

namespace {

BandwidthSpec read_bandwidth(const KeyValueConfig& kv, const std::string& stage, const BandwidthSpec& fallback) {
  BandwidthSpec b = fallback;
  const std::string prefix = "estimator.bandwidth." + stage + ".";
  b.rule = parse_bandwidth_rule(kv.get_string(prefix + "rule", std::string(to_string(fallback.rule))));
  b.multiplier = kv.get_double(prefix + "multiplier", fallback.multiplier);
  b.fixed = kv.get_doubles(prefix + "fixed", fallback.fixed);
  const long long cv = kv.get_int(prefix + "cv_subsample", static_cast<long long>(fallback.cv_subsample_size));
  if (cv < 1) throw ConfigError(prefix + "cv_subsample must be >= 1");
  b.cv_subsample_size = static_cast<std::size_t>(cv);
  return b;
}

void write_bandwidth(KeyValueConfig& kv, const std::string& stage, const BandwidthSpec& b) {
  const std::string prefix = "estimator.bandwidth." + stage + ".";
  kv.set(prefix + "rule", std::string(to_string(b.rule)));
  kv.set(prefix + "multiplier", format_double(b.multiplier));
  kv.set(prefix + "fixed", format_doubles(b.fixed));
  kv.set(prefix + "cv_subsample", std::to_string(b.cv_subsample_size));
}

}  // namespace

EstimatorConfig estimator_from_config(const KeyValueConfig& kv) {
  EstimatorConfig cfg;
  cfg.variant = parse_variant(kv.get_string("estimator.variant", std::string(to_string(cfg.variant))));
  cfg.kernel = parse_kernel(kv.get_string("estimator.kernel", std::string(to_string(cfg.kernel))));
  cfg.share_bandwidth = read_bandwidth(kv, "share", cfg.share_bandwidth);
  cfg.state_bandwidth = read_bandwidth(kv, "state", cfg.state_bandwidth);
  cfg.productivity_bandwidth = read_bandwidth(kv, "productivity", cfg.productivity_bandwidth);
  cfg.min_effective_sample = kv.get_double("estimator.trim.min_ess", cfg.min_effective_sample);
  cfg.share_epsilon = kv.get_double("estimator.trim.share_epsilon", cfg.share_epsilon);
  cfg.prices_are_unit = kv.get_bool("estimator.prices_are_unit", cfg.prices_are_unit);
  cfg.single_ratio = kv.get_bool("estimator.single_ratio", cfg.single_ratio);
  cfg.share_conditioning = parse_share_conditioning(
      kv.get_string("estimator.share_conditioning", std::string(to_string(cfg.share_conditioning))));
  cfg.winsorize_quantile = kv.get_double("estimator.winsorize_quantile", cfg.winsorize_quantile);
  cfg.density_floor = kv.get_double("diagnose.density_floor", cfg.density_floor);
  cfg.spread_floor = kv.get_double("diagnose.spread_floor", cfg.spread_floor);
  validate(cfg);
  return cfg;
}

void estimator_to_config(const EstimatorConfig& cfg, KeyValueConfig& kv) {
  kv.set("estimator.variant", std::string(to_string(cfg.variant)));
  kv.set("estimator.kernel", std::string(to_string(cfg.kernel)));
  write_bandwidth(kv, "share", cfg.share_bandwidth);
  write_bandwidth(kv, "state", cfg.state_bandwidth);
  write_bandwidth(kv, "productivity", cfg.productivity_bandwidth);
  kv.set("estimator.trim.min_ess", format_double(cfg.min_effective_sample));
  kv.set("estimator.trim.share_epsilon", format_double(cfg.share_epsilon));
  kv.set("estimator.prices_are_unit", cfg.prices_are_unit ? "true" : "false");
  kv.set("estimator.single_ratio", cfg.single_ratio ? "true" : "false");
  kv.set("estimator.share_conditioning", std::string(to_string(cfg.share_conditioning)));
  kv.set("estimator.winsorize_quantile", format_double(cfg.winsorize_quantile));
  kv.set("diagnose.density_floor", format_double(cfg.density_floor));
  kv.set("diagnose.spread_floor", format_double(cfg.spread_floor));
}

Ratios compute_ratios(const FirmRecord& record, ModelVariant variant) {
  Ratios out{0.0, kNaN};
  if (variant == ModelVariant::single_m_flexible_labor) {
    require_positive(record.cost_l, record, "cost_l");
    require_positive(record.cost_m1, record, "cost_m1");
    out.r = record.cost_l / record.cost_m1;
    return out;
  }
  require_positive(record.cost_m1, record, "cost_m1");
  require_positive(record.cost_m2, record, "cost_m2");
  out.r = record.cost_m1 / record.cost_m2;
  if (variant == ModelVariant::three_flexible) {
    require_positive(record.cost_m3, record, "cost_m3");
    out.r23 = record.cost_m2 / record.cost_m3;
  }
  return out;
}

double compute_ratio(const FirmRecord& record) { return compute_ratios(record, ModelVariant::baseline).r; }

PipelineFrame build_frame(const Dataset& data, const EstimatorConfig& cfg) {
  if (data.variant != cfg.variant) {
    throw ConfigError("dataset variant " + std::string(to_string(data.variant)) + " does not match estimator variant " +
                      std::string(to_string(cfg.variant)));
  }
  const ModelVariant v = cfg.variant;
  const std::size_t n = data.size();
  const bool priced = data.has_prices();
  if (!priced && !cfg.prices_are_unit) {
    throw DataError("price columns are required when estimator.prices_are_unit is false");
  }

  PipelineFrame f;
  f.variant = v;
  f.flexible_count = flexible_count(v);
  f.log_output.resize(n);
  f.log_inputs.resize(n);
  f.costs.resize(n);
  f.ratios.resize(n);

  std::vector<std::vector<double>> states;
  switch (v) {
    case ModelVariant::two_labor:
      f.state_names = {"log_labor_s", "log_labor_u", "log_capital"};
      break;
    case ModelVariant::single_m_flexible_labor:
      f.state_names = {"log_capital"};
      break;
    default:
      f.state_names = {"log_labor", "log_capital"};
  }
  f.state_columns = static_cast<int>(f.state_names.size());
  states.assign(f.state_names.size(), std::vector<double>(n));
  std::vector<double> r(n), r23(n), labor(n);

  for (std::size_t i = 0; i < n; ++i) {
    const FirmRecord& rec = data.firms[i];
    const Prices p = priced ? *rec.observed_prices : Prices{};
    require_positive(rec.output_value, rec, "output_value");
    require_finite(rec.k, rec, "log_capital");
    f.ratios[i] = compute_ratios(rec, v);
    f.log_output[i] = std::log(rec.output_value / p.y);
    auto& m = f.log_inputs[i];
    auto& c = f.costs[i];
    m = {kNaN, kNaN, kNaN};
    c = {kNaN, kNaN, kNaN};
    if (v == ModelVariant::single_m_flexible_labor) {
      c[0] = rec.cost_l;
      c[1] = rec.cost_m1;
      m[0] = std::log(rec.cost_l / p.l);
      m[1] = std::log(rec.cost_m1 / p.m1);
      states[0][i] = rec.k;
      labor[i] = m[0];
    } else {
      c[0] = rec.cost_m1;
      c[1] = rec.cost_m2;
      m[0] = std::log(rec.cost_m1 / p.m1);
      m[1] = std::log(rec.cost_m2 / p.m2);
      if (v == ModelVariant::three_flexible) {
        c[2] = rec.cost_m3;
        m[2] = std::log(rec.cost_m3 / p.m3);
      }
      require_finite(rec.l, rec, v == ModelVariant::two_labor ? "log_labor_s" : "log_labor");
      states[0][i] = rec.l;
      if (v == ModelVariant::two_labor) {
        require_finite(rec.lu, rec, "log_labor_u");
        states[1][i] = rec.lu;
        states[2][i] = rec.k;
      } else {
        states[1][i] = rec.k;
      }
    }
    r[i] = f.ratios[i].r;
    r23[i] = f.ratios[i].r23;
  }

  const bool two_ratios = v == ModelVariant::three_flexible && !cfg.single_ratio;
  std::vector<std::vector<double>> state_cols = states;
  state_cols.push_back(r);
  if (two_ratios) state_cols.push_back(r23);
  f.state_regressors = to_matrix(state_cols);

  std::vector<std::vector<double>> share_cols;
  if (cfg.share_conditioning == ShareConditioning::full) {
    if (v == ModelVariant::single_m_flexible_labor) share_cols.push_back(labor);
    for (const auto& s : states) share_cols.push_back(s);
    for (int j = 0; j < f.flexible_count; ++j) {
      if (v == ModelVariant::single_m_flexible_labor && j == 0) continue;  // labor already present
      std::vector<double> col(n);
      for (std::size_t i = 0; i < n; ++i) col[i] = f.log_inputs[i][static_cast<std::size_t>(j)];
      share_cols.push_back(std::move(col));
    }
    share_cols.push_back(r);
    if (two_ratios) share_cols.push_back(r23);
  } else {
    share_cols = state_cols;
  }
  f.share_regressors = to_matrix(share_cols);
  return f;
}

std::vector<SmootherFit> LocalLinearSource::fit_stage(const Eigen::MatrixXd& x, const std::vector<double>& response,
                                                      const BandwidthSpec& spec, std::vector<double>& chosen) const {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto d = static_cast<std::size_t>(x.cols());
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isfinite(response[i])) valid.push_back(i);
  }
  std::vector<SmootherFit> out(n, trimmed_fit(d));
  if (valid.size() <= d + 1) {
    chosen.assign(d, kNaN);
    return out;  // too few usable firms: everything trimmed
  }
  Eigen::MatrixXd xv(static_cast<Eigen::Index>(valid.size()), x.cols());
  Eigen::VectorXd yv(static_cast<Eigen::Index>(valid.size()));
  for (std::size_t a = 0; a < valid.size(); ++a) {
    xv.row(static_cast<Eigen::Index>(a)) = x.row(static_cast<Eigen::Index>(valid[a]));
    yv(static_cast<Eigen::Index>(a)) = response[valid[a]];
  }
  SmootherOptions opts;
  opts.kernel = cfg_.kernel;
  opts.min_effective_sample = cfg_.min_effective_sample;
  chosen = select_bandwidth(xv, yv, spec, opts);
  const LocalLinearSmoother smoother(xv, chosen, opts);
  const auto fits = smoother.fit_rows(yv, xv);
  for (std::size_t a = 0; a < valid.size(); ++a) out[valid[a]] = fits[a];
  return out;
}

std::vector<SmootherFit> LocalLinearSource::output_value(const PipelineFrame& frame, const Dataset& data) {
  std::vector<double> response(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) response[i] = data.firms[i].output_value;
  if (cfg_.winsorize_quantile > 0.0) {
    std::vector<double> sorted = response;
    const auto pos = static_cast<std::size_t>(std::floor(cfg_.winsorize_quantile * static_cast<double>(sorted.size() - 1)));
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(pos), sorted.end());
    const double cap = sorted[pos];
    for (double& v : response) v = std::min(v, cap);
  }
  return fit_stage(frame.share_regressors, response, cfg_.share_bandwidth, share_h_);
}

std::vector<SmootherFit> LocalLinearSource::net_output(const PipelineFrame& frame, const Dataset&,
                                                       const std::vector<double>& net) {
  return fit_stage(frame.state_regressors, net, cfg_.state_bandwidth, state_h_);
}

std::vector<SmootherFit> LocalLinearSource::residual_output(const PipelineFrame& frame, const Dataset&,
                                                            const std::vector<double>& residual) {
  return fit_stage(frame.state_regressors, residual, cfg_.productivity_bandwidth, productivity_h_);
}

std::vector<SmootherFit> OracleSource::output_value(const PipelineFrame& frame, const Dataset& data) {
  const auto d = static_cast<std::size_t>(frame.share_regressors.cols());
  std::vector<SmootherFit> out(data.size(), trimmed_fit(d));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const HiddenTruth& t = truth_of(data, i);
    out[i].estimate = data.firms[i].output_value * std::exp(-t.eta) * t.e_exp_eta;
    out[i].effective_sample_size = std::numeric_limits<double>::infinity();
    out[i].condition = FitCondition::ok;
  }
  return out;
}

std::vector<SmootherFit> OracleSource::net_output(const PipelineFrame& frame, const Dataset& data,
                                                  const std::vector<double>& net) {
  const auto d = static_cast<std::size_t>(frame.state_regressors.cols());
  std::vector<SmootherFit> out(data.size(), trimmed_fit(d));
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(net[i])) continue;
    const HiddenTruth& t = truth_of(data, i);
    out[i].estimate = net[i] - t.eta;
    const auto grad = true_state_elasticities(t.betas, frame.variant);
    std::copy(grad.begin(), grad.end(), out[i].gradient.begin());
    out[i].effective_sample_size = std::numeric_limits<double>::infinity();
    out[i].condition = FitCondition::ok;
  }
  return out;
}

std::vector<SmootherFit> OracleSource::residual_output(const PipelineFrame& frame, const Dataset& data,
                                                       const std::vector<double>& residual) {
  const auto d = static_cast<std::size_t>(frame.state_regressors.cols());
  std::vector<SmootherFit> out(data.size(), trimmed_fit(d));
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(residual[i])) continue;
    out[i].estimate = residual[i] - truth_of(data, i).eta;
    out[i].effective_sample_size = std::numeric_limits<double>::infinity();
    out[i].condition = FitCondition::ok;
  }
  return out;
}

ShareEstimates estimate_shares(const PipelineFrame& frame, const Dataset& data, const EstimatorConfig& cfg,
                               ExpectationSource& source) {
  ShareEstimates out;
  out.fits = source.output_value(frame, data);
  const std::size_t n = data.size();
  out.shares.assign(n, {kNaN, kNaN, kNaN});
  out.flags.assign(n, FirmFlag::ok);
  const double eps = cfg.share_epsilon;
  for (std::size_t i = 0; i < n; ++i) {
    const SmootherFit& fit = out.fits[i];
    if (fit.condition == FitCondition::trimmed || !(fit.estimate > 0.0) || !std::isfinite(fit.estimate)) {
      out.flags[i] = FirmFlag::trimmed;
      continue;
    }
    auto& s = out.shares[i];
    double sum = 0.0;
    for (int j = 0; j < frame.flexible_count; ++j) {
      double v = frame.costs[i][static_cast<std::size_t>(j)] / fit.estimate;
      if (v < eps || v > 1.0 - eps) {
        v = std::clamp(v, eps, 1.0 - eps);
        out.flags[i] = FirmFlag::clamped;
      }
      s[static_cast<std::size_t>(j)] = v;
      sum += v;
    }
    if (sum >= 1.0 - eps) {
      const double scale = (1.0 - eps) / sum;
      for (int j = 0; j < frame.flexible_count; ++j) s[static_cast<std::size_t>(j)] *= scale;
      out.flags[i] = FirmFlag::clamped;
    }
  }
  return out;
}

double net_output(const PipelineFrame& frame, std::size_t firm, const std::array<double, 3>& shares) {
  double y = frame.log_output[firm];
  for (int j = 0; j < frame.flexible_count; ++j) {
    y -= shares[static_cast<std::size_t>(j)] * frame.log_inputs[firm][static_cast<std::size_t>(j)];
  }
  return y;
}

StateElasticities estimate_labor_capital(const PipelineFrame& frame, const Dataset& data,
                                         const std::vector<double>& net_outputs, ExpectationSource& source) {
  StateElasticities out;
  out.fits = source.net_output(frame, data, net_outputs);
  out.values.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    out.values[i].assign(static_cast<std::size_t>(frame.state_columns), kNaN);
    const SmootherFit& fit = out.fits[i];
    if (fit.condition == FitCondition::trimmed) continue;
    for (int j = 0; j < frame.state_columns; ++j) out.values[i][static_cast<std::size_t>(j)] = fit.gradient[static_cast<std::size_t>(j)];
  }
  return out;
}

ProductivityEstimates estimate_additive_productivity(const PipelineFrame& frame, const Dataset& data,
                                                     const std::vector<double>& net_outputs,
                                                     const StateElasticities& states, ExpectationSource& source) {
  ProductivityEstimates out;
  const std::size_t n = data.size();
  out.residual_outputs.assign(n, kNaN);
  for (std::size_t i = 0; i < n; ++i) {
    double v = net_outputs[i];
    for (int j = 0; j < frame.state_columns; ++j) {
      v -= states.values[i][static_cast<std::size_t>(j)] * frame.state_regressors(static_cast<Eigen::Index>(i), j);
    }
    out.residual_outputs[i] = v;
  }
  out.fits = source.residual_output(frame, data, out.residual_outputs);
  out.beta_0.assign(n, kNaN);
  for (std::size_t i = 0; i < n; ++i) {
    if (out.fits[i].condition != FitCondition::trimmed) out.beta_0[i] = out.fits[i].estimate;
  }
  return out;
}

std::size_t ElasticityEstimates::count(FirmFlag f) const {
  return static_cast<std::size_t>(std::count_if(firms.begin(), firms.end(), [f](const FirmEstimate& e) { return e.flag == f; }));
}

std::size_t ElasticityEstimates::ridge_count() const {
  return static_cast<std::size_t>(std::count_if(firms.begin(), firms.end(), [](const FirmEstimate& e) {
    return e.share_fit == FitCondition::ridge_applied || e.state_fit == FitCondition::ridge_applied ||
           e.productivity_fit == FitCondition::ridge_applied;
  }));
}

ElasticityEstimates run_pipeline(const Dataset& data, const EstimatorConfig& cfg, ExpectationMode mode) {
  validate(cfg);
  if (data.size() == 0) throw DataError("dataset is empty");
  const PipelineFrame frame = build_frame(data, cfg);

  std::unique_ptr<ExpectationSource> source;
  LocalLinearSource* local = nullptr;
  if (mode == ExpectationMode::oracle) {
    source = std::make_unique<OracleSource>();
  } else {
    auto ll = std::make_unique<LocalLinearSource>(cfg);
    local = ll.get();
    source = std::move(ll);
  }

  const ShareEstimates shares = estimate_shares(frame, data, cfg, *source);
  const std::size_t n = data.size();
  std::vector<double> net(n, kNaN);
  for (std::size_t i = 0; i < n; ++i) {
    if (shares.flags[i] != FirmFlag::trimmed) net[i] = net_output(frame, i, shares.shares[i]);
  }
  const StateElasticities states = estimate_labor_capital(frame, data, net, *source);
  const ProductivityEstimates productivity = estimate_additive_productivity(frame, data, net, states, *source);

  ElasticityEstimates out;
  out.variant = cfg.variant;
  out.oracle_mode = mode == ExpectationMode::oracle;
  if (local) {
    out.share_bandwidths = local->share_bandwidths();
    out.state_bandwidths = local->state_bandwidths();
    out.productivity_bandwidths = local->productivity_bandwidths();
  }
  out.firms.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    FirmEstimate& e = out.firms[i];
    e.firm_id = data.firms[i].firm_id;
    e.ratios = frame.ratios[i];
    e.shares = shares.shares[i];
    e.net_output = net[i];
    e.share_fit = shares.fits[i].condition;
    e.state_fit = states.fits[i].condition;
    e.productivity_fit = productivity.fits[i].condition;

    const auto& s = e.shares;
    const auto& st = states.values[i];
    CoefficientVector& b = e.betas;
    switch (cfg.variant) {
      case ModelVariant::baseline:
        b.beta_l = st[0];
        b.beta_k = st[1];
        b.beta_m1 = s[0];
        b.beta_m2 = s[1];
        break;
      case ModelVariant::two_labor:
        b.beta_l = st[0];
        b.beta_lu = st[1];
        b.beta_k = st[2];
        b.beta_m1 = s[0];
        b.beta_m2 = s[1];
        break;
      case ModelVariant::three_flexible:
        b.beta_l = st[0];
        b.beta_k = st[1];
        b.beta_m1 = s[0];
        b.beta_m2 = s[1];
        b.beta_m3 = s[2];
        break;
      case ModelVariant::single_m_flexible_labor:
        b.beta_l = s[0];
        b.beta_m1 = s[1];
        b.beta_k = st[0];
        break;
    }
    b.beta_0 = productivity.beta_0[i];

    if (shares.flags[i] == FirmFlag::trimmed || e.state_fit == FitCondition::trimmed ||
        e.productivity_fit == FitCondition::trimmed) {
      e.flag = FirmFlag::trimmed;
    } else {
      e.flag = shares.flags[i];
    }
  }
  return out;
}

std::size_t LocalityReport::flagged_count() const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const LocalityEntry& e) { return e.flagged; }));
}

LocalityReport locality_diagnostic(const Dataset& data, const EstimatorConfig& cfg) {
  validate(cfg);
  const PipelineFrame frame = build_frame(data, cfg);
  const Eigen::MatrixXd& x = frame.state_regressors;
  const auto n = static_cast<std::size_t>(x.rows());
  const auto d = static_cast<std::size_t>(x.cols());

  BandwidthSpec spec = cfg.state_bandwidth;
  if (spec.rule == BandwidthRule::loo_cv) spec.rule = BandwidthRule::rule_of_thumb;  // no response to validate against
  SmootherOptions opts;
  opts.kernel = cfg.kernel;
  opts.min_effective_sample = cfg.min_effective_sample;
  const std::vector<double> h = select_bandwidth(x, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)), spec, opts);
  const LocalLinearSmoother joint(x, h, opts);

  LocalityReport report;
  report.bandwidths = h;
  report.spread_names = frame.state_names;
  report.entries.resize(n);

  // Residual spread of each state column given the remaining columns.
  std::vector<std::unique_ptr<LocalLinearSmoother>> partial;
  std::vector<Eigen::VectorXd> targets;
  std::vector<double> sds;
  for (int j = 0; j < frame.state_columns; ++j) {
    Eigen::MatrixXd others(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d - 1));
    std::vector<double> h_others;
    for (std::size_t c = 0, o = 0; c < d; ++c) {
      if (static_cast<int>(c) == j) continue;
      others.col(static_cast<Eigen::Index>(o++)) = x.col(static_cast<Eigen::Index>(c));
      h_others.push_back(h[c]);
    }
    partial.push_back(std::make_unique<LocalLinearSmoother>(std::move(others), h_others, opts));
    targets.push_back(x.col(j));
    const double mean = targets.back().mean();
    sds.push_back(std::sqrt((targets.back().array() - mean).square().sum() / static_cast<double>(n - 1)));
  }

  std::vector<double> densities(n);
  parallel_for(n, [&](std::size_t i) {
    LocalityEntry& e = report.entries[i];
    e.firm_id = data.firms[i].firm_id;
    std::vector<double> q(d);
    for (std::size_t c = 0; c < d; ++c) q[c] = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
    e.density = joint.density(q);
    densities[i] = e.density;
    e.min_spread = std::numeric_limits<double>::infinity();
    for (int j = 0; j < frame.state_columns; ++j) {
      std::vector<double> qo;
      for (std::size_t c = 0; c < d; ++c) {
        if (static_cast<int>(c) != j) qo.push_back(q[c]);
      }
      const double rms = partial[static_cast<std::size_t>(j)]->residual_rms(targets[static_cast<std::size_t>(j)], qo);
      const double spread = std::isfinite(rms) && sds[static_cast<std::size_t>(j)] > 0.0 ? rms / sds[static_cast<std::size_t>(j)] : 0.0;
      e.spreads.push_back(spread);
      e.min_spread = std::min(e.min_spread, spread);
    }
  });
  const double med = median(densities);
  for (auto& e : report.entries) {
    e.relative_density = med > 0.0 ? e.density / med : 0.0;
    e.flagged = !(e.relative_density >= cfg.density_floor) || !(e.min_spread >= cfg.spread_floor);
  }
  return report;
}

}  // namespace hetcoef
