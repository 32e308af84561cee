#include "core/technology.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

#include "core/error.hpp"

namespace hetcoef {

namespace {

std::string fmt(double v) { return format_double(v); }

CoefficientFn line_fn(const AffineLine& a) {
  return [a](const Omega& w) { return a(w); };
}

double call_or_zero(const CoefficientFn& f, const Omega& w) { return f ? f(w) : 0.0; }

double ratio_tolerance(double r) { return 1e-12 * std::max(1.0, std::abs(r)); }

Omega grid_point(const TechnologySpec& spec, int i, int j, int n) {
  const double t = n > 1 ? static_cast<double>(i) / (n - 1) : 0.0;
  const double u = n > 1 ? static_cast<double>(j) / (n - 1) : 0.0;
  const auto s1 = spec.support();
  const auto s2 = spec.support2();
  return {s1.lo + t * s1.width(), s2.lo + u * s2.width()};
}

// Affine pieces (intercept, slope) of the two ratio elasticities when the
// family makes them affine in a one-dimensional omega.
std::optional<std::pair<AffineLine, AffineLine>> affine_ratio_lines(const TechnologySpec& spec,
                                                                    ModelVariant variant) {
  if (!spec.affine_params() || spec.dimension() != 1) return std::nullopt;
  const auto& p = *spec.affine_params();
  if (variant == ModelVariant::single_m_flexible_labor) return std::make_pair(p.l, p.m1);
  return std::make_pair(p.m1, p.m2);
}

double bisect_ratio(const TechnologySpec& spec, double r, ModelVariant variant) {
  double lo = spec.support().lo;
  double hi = spec.support().hi;
  const bool increasing = elasticity_ratio(spec, hi, variant) > elasticity_ratio(spec, lo, variant);
  for (int it = 0; it < 200 && hi > lo; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double v = elasticity_ratio(spec, mid, variant);
    if ((v < r) == increasing) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double rl = std::abs(elasticity_ratio(spec, lo, variant) - r);
  const double rh = std::abs(elasticity_ratio(spec, hi, variant) - r);
  return rl <= rh ? lo : hi;
}

std::pair<double, double> pair_ratio(const TechnologySpec& spec, const Omega& w) {
  const auto b = spec.evaluate(w);
  return {b.beta_m1 / b.beta_m2, b.beta_m2 / b.beta_m3};
}

}  // namespace

std::string_view to_string(Family f) {
  switch (f) {
    case Family::affine: return "affine";
    case Family::logistic: return "logistic";
    case Family::affine2d: return "affine2d";
    case Family::custom: return "custom";
  }
  return "custom";
}

double LogisticParams::index(double omega) const { return 1.0 / (1.0 + std::exp(-scale * (omega - center))); }

TechnologySpec TechnologySpec::affine(const AffineParams& p, Interval support) {
  if (!(support.hi > support.lo)) throw ConfigError("technology support must satisfy omega_min < omega_max");
  TechnologySpec t;
  t.family_ = Family::affine;
  t.dimension_ = 1;
  t.support_ = support;
  t.fns_ = {line_fn(p.l), line_fn(p.lu), line_fn(p.k), line_fn(p.m1), line_fn(p.m2), line_fn(p.m3), line_fn(p.b0)};
  t.affine_ = p;
  return t;
}

TechnologySpec TechnologySpec::affine2d(const AffineParams& p, Interval support, Interval support2) {
  if (!(support.hi > support.lo) || !(support2.hi > support2.lo)) {
    throw ConfigError("technology supports must satisfy min < max on both axes");
  }
  TechnologySpec t = affine(p, support);
  t.family_ = Family::affine2d;
  t.dimension_ = 2;
  t.support2_ = support2;
  return t;
}

TechnologySpec TechnologySpec::logistic(const LogisticParams& p, Interval support) {
  if (!(support.hi > support.lo)) throw ConfigError("technology support must satisfy omega_min < omega_max");
  if (!(p.scale > 0.0)) throw ConfigError("logistic technology requires scale > 0");
  TechnologySpec t;
  t.family_ = Family::logistic;
  t.dimension_ = 1;
  t.support_ = support;
  t.fns_.l = line_fn(p.l);
  t.fns_.lu = line_fn(p.lu);
  t.fns_.k = line_fn(p.k);
  t.fns_.m3 = line_fn(p.m3);
  t.fns_.b0 = line_fn(p.b0);
  t.fns_.m1 = [p](const Omega& w) { return p.m1_floor + p.m1_span * p.index(w.first); };
  t.fns_.m2 = [p](const Omega& w) { return p.m2_floor + p.m2_span * (1.0 - p.index(w.first)); };
  t.logistic_ = p;
  return t;
}

TechnologySpec TechnologySpec::custom(CoefficientFunctions fns, Interval support) {
  if (!(support.hi > support.lo)) throw ConfigError("technology support must satisfy omega_min < omega_max");
  TechnologySpec t;
  t.family_ = Family::custom;
  t.dimension_ = 1;
  t.support_ = support;
  t.fns_ = std::move(fns);
  return t;
}

TechnologySpec TechnologySpec::custom2d(CoefficientFunctions fns, Interval support, Interval support2) {
  TechnologySpec t = custom(std::move(fns), support);
  if (!(support2.hi > support2.lo)) throw ConfigError("technology support must satisfy min < max on both axes");
  t.dimension_ = 2;
  t.support2_ = support2;
  return t;
}

bool TechnologySpec::in_support(const Omega& w, double tol) const {
  if (!support_.contains(w.first, tol)) return false;
  return dimension_ == 1 || support2_.contains(w.second, tol);
}

CoefficientVector TechnologySpec::evaluate(const Omega& w) const {
  CoefficientVector b;
  b.beta_l = call_or_zero(fns_.l, w);
  b.beta_lu = call_or_zero(fns_.lu, w);
  b.beta_k = call_or_zero(fns_.k, w);
  b.beta_m1 = call_or_zero(fns_.m1, w);
  b.beta_m2 = call_or_zero(fns_.m2, w);
  b.beta_m3 = call_or_zero(fns_.m3, w);
  b.beta_0 = call_or_zero(fns_.b0, w);
  return b;
}

TechnologySpec benchmark_technology() {
  AffineParams p;
  p.l = {0.25, 0.0, 0.0};
  p.k = {0.30, 0.0, 0.0};
  p.m1 = {0.2, 0.1, 0.0};
  p.m2 = {0.2, 0.0, 0.0};
  p.b0 = {0.0, 1.0, 0.0};
  return TechnologySpec::affine(p, {0.0, 1.0});
}

CoefficientVector eval_betas(const TechnologySpec& spec, const Omega& omega) {
  if (!spec.in_support(omega)) {
    std::ostringstream msg;
    msg << "omega " << fmt(omega.first);
    if (spec.dimension() == 2) msg << ", " << fmt(omega.second);
    msg << " outside technology support [" << fmt(spec.support().lo) << ", " << fmt(spec.support().hi) << "]";
    if (spec.dimension() == 2) {
      msg << " x [" << fmt(spec.support2().lo) << ", " << fmt(spec.support2().hi) << "]";
    }
    throw DomainError(msg.str());
  }
  return spec.evaluate(omega);
}

bool ValidationReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const AssumptionCheck& c) { return c.passed; });
}

const AssumptionCheck* ValidationReport::find(std::string_view name) const {
  for (const auto& c : checks) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

ValidationReport validate_assumptions(const TechnologySpec& spec, int grid_size, ModelVariant variant) {
  if (grid_size < 2) throw ConfigError("validate_assumptions requires grid_size >= 2");
  AssumptionCheck positivity{"positivity", true, std::nullopt, "flexible elasticities > 0"};
  AssumptionCheck finite{"finite_solution", true, std::nullopt, "sum of flexible elasticities < 1"};
  AssumptionCheck collinear{"non_collinearity", true, std::nullopt, ""};

  const int n2 = spec.dimension() == 2 ? grid_size : 1;
  for (int i = 0; i < grid_size; ++i) {
    for (int j = 0; j < n2; ++j) {
      const Omega w = grid_point(spec, i, j, grid_size);
      double flex[3];
      const int count = flexible_elasticities(spec.evaluate(w), variant, flex);
      double sum = 0.0;
      bool positive = true;
      for (int f = 0; f < count; ++f) {
        positive = positive && flex[f] > 0.0 && std::isfinite(flex[f]);
        sum += flex[f];
      }
      if (!positive && positivity.passed) {
        positivity.passed = false;
        positivity.first_violation = w;
      }
      if (!(sum < 1.0) && finite.passed) {
        finite.passed = false;
        finite.first_violation = w;
      }
    }
  }

  if (spec.dimension() == 1) {
    collinear.detail = "ratio of flexible elasticities strictly monotone on the support";
    int direction = 0;
    double prev = elasticity_ratio(spec, grid_point(spec, 0, 0, grid_size), variant);
    for (int i = 1; i < grid_size && collinear.passed; ++i) {
      const Omega w = grid_point(spec, i, 0, grid_size);
      const double cur = elasticity_ratio(spec, w, variant);
      const int step = cur > prev ? 1 : (cur < prev ? -1 : 0);
      if (step == 0 || !std::isfinite(cur) || (direction != 0 && step != direction)) {
        collinear.passed = false;
        collinear.first_violation = w;
      }
      direction = step;
      prev = cur;
    }
  } else if (variant != ModelVariant::three_flexible) {
    collinear.passed = false;
    collinear.first_violation = grid_point(spec, 0, 0, grid_size);
    collinear.detail = "two-dimensional technology needs the three_flexible ratio pair";
  } else {
    // Injectivity of the ratio-pair map on the grid: images of distinct grid
    // points must not coincide, and the Jacobian sign must not change.
    collinear.detail = "ratio pair map injective on the grid";
    struct Image {
      double a, b;
      int i, j;
    };
    std::vector<Image> images;
    images.reserve(static_cast<std::size_t>(grid_size) * grid_size);
    double scale = 0.0;
    for (int i = 0; i < grid_size; ++i) {
      for (int j = 0; j < grid_size; ++j) {
        const auto [a, b] = pair_ratio(spec, grid_point(spec, i, j, grid_size));
        images.push_back({a, b, i, j});
        scale = std::max({scale, std::abs(a), std::abs(b)});
      }
    }
    const double tol = 1e-12 * std::max(1.0, scale);
    std::sort(images.begin(), images.end(), [](const Image& x, const Image& y) {
      return x.a < y.a || (x.a == y.a && x.b < y.b);
    });
    for (std::size_t p = 0; p < images.size() && collinear.passed; ++p) {
      for (std::size_t q = p + 1; q < images.size() && images[q].a - images[p].a <= tol; ++q) {
        if (std::abs(images[q].b - images[p].b) <= tol) {
          collinear.passed = false;
          collinear.first_violation = grid_point(spec, images[p].i, images[p].j, grid_size);
          break;
        }
      }
    }
    int sign = 0;
    for (int i = 0; i + 1 < grid_size && collinear.passed; ++i) {
      for (int j = 0; j + 1 < grid_size && collinear.passed; ++j) {
        const Omega w = grid_point(spec, i, j, grid_size);
        const auto f0 = pair_ratio(spec, w);
        const auto fi = pair_ratio(spec, grid_point(spec, i + 1, j, grid_size));
        const auto fj = pair_ratio(spec, grid_point(spec, i, j + 1, grid_size));
        const double det = (fi.first - f0.first) * (fj.second - f0.second) -
                           (fj.first - f0.first) * (fi.second - f0.second);
        const int s = det > 0 ? 1 : (det < 0 ? -1 : 0);
        if (s == 0 || (sign != 0 && s != sign)) {
          collinear.passed = false;
          collinear.first_violation = w;
        }
        sign = s;
      }
    }
  }
  return {{positivity, finite, collinear}};
}

double elasticity_ratio(const TechnologySpec& spec, const Omega& omega, ModelVariant variant) {
  double flex[3];
  flexible_elasticities(spec.evaluate(omega), variant, flex);
  return flex[0] / flex[1];
}

std::pair<double, double> ratio_range(const TechnologySpec& spec, ModelVariant variant) {
  const double a = elasticity_ratio(spec, spec.support().lo, variant);
  const double b = elasticity_ratio(spec, spec.support().hi, variant);
  return {std::min(a, b), std::max(a, b)};
}

double ratio_to_omega(const TechnologySpec& spec, double r, ModelVariant variant) {
  if (spec.dimension() != 1) throw DomainError("ratio_to_omega needs a one-dimensional technology");
  if (!(r > 0.0) || !std::isfinite(r)) throw DomainError("ratio must be a positive finite number, got " + fmt(r));
  const auto [rmin, rmax] = ratio_range(spec, variant);
  if (r < rmin - ratio_tolerance(rmin) || r > rmax + ratio_tolerance(rmax)) {
    throw DomainError("ratio " + fmt(r) + " outside attainable range [" + fmt(rmin) + ", " + fmt(rmax) + "]");
  }
  if (rmax == rmin) throw DomainError("ratio map is constant on the support; omega is not identified");

  const Interval s = spec.support();
  std::optional<double> closed;
  if (const auto lines = affine_ratio_lines(spec, variant)) {
    // (a0 + b0 w) / (a1 + b1 w) = r
    const auto& [num, den] = *lines;
    const double denom = r * den.slope - num.slope;
    if (denom != 0.0) closed = (num.intercept - r * den.intercept) / denom;
  } else if (spec.logistic_params() && variant != ModelVariant::single_m_flexible_labor) {
    const auto& p = *spec.logistic_params();
    const double u = (r * (p.m2_floor + p.m2_span) - p.m1_floor) / (p.m1_span + r * p.m2_span);
    if (u > 0.0 && u < 1.0) closed = p.center + std::log(u / (1.0 - u)) / p.scale;
  }

  double omega = closed ? std::clamp(*closed, s.lo, s.hi) : bisect_ratio(spec, r, variant);
  if (std::abs(elasticity_ratio(spec, omega, variant) - r) > ratio_tolerance(r)) {
    omega = bisect_ratio(spec, r, variant);
  }
  return omega;
}

Omega ratio_pair_to_omega(const TechnologySpec& spec, double r12, double r23) {
  if (spec.dimension() != 2) throw DomainError("ratio_pair_to_omega needs a two-dimensional technology");
  if (!(r12 > 0.0) || !(r23 > 0.0)) throw DomainError("ratios must be positive");
  const Interval s1 = spec.support();
  const Interval s2 = spec.support2();
  const double tol = 1e-9;
  auto check_support = [&](const Omega& w) {
    if (!spec.in_support(w, tol * std::max(s1.width(), s2.width()))) {
      throw DomainError("ratio pair (" + fmt(r12) + ", " + fmt(r23) +
                        ") is not attained on the technology support");
    }
    return Omega{std::clamp(w.first, s1.lo, s1.hi), std::clamp(w.second, s2.lo, s2.hi)};
  };

  if (spec.affine_params()) {
    // beta_m1 - r12 beta_m2 = 0 and beta_m2 - r23 beta_m3 = 0, both linear in omega.
    const auto& p = *spec.affine_params();
    Eigen::Matrix2d a;
    Eigen::Vector2d b;
    a << p.m1.slope - r12 * p.m2.slope, p.m1.slope2 - r12 * p.m2.slope2,
        p.m2.slope - r23 * p.m3.slope, p.m2.slope2 - r23 * p.m3.slope2;
    b << -(p.m1.intercept - r12 * p.m2.intercept), -(p.m2.intercept - r23 * p.m3.intercept);
    const double det = a.determinant();
    if (std::abs(det) < 1e-300) throw DomainError("ratio pair map is singular; omega is not identified");
    const Eigen::Vector2d w = a.inverse() * b;
    return check_support({w(0), w(1)});
  }

  // Nearest grid point in log-ratio space, then damped Newton.
  constexpr int n = 201;
  Omega best;
  double best_dist = std::numeric_limits<double>::infinity();
  const double t12 = std::log(r12);
  const double t23 = std::log(r23);
  auto residual = [&](const Omega& w) {
    const auto [a, b] = pair_ratio(spec, w);
    return Eigen::Vector2d(std::log(a) - t12, std::log(b) - t23);
  };
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const Omega w = grid_point(spec, i, j, n);
      const double d = residual(w).squaredNorm();
      if (d < best_dist) {
        best_dist = d;
        best = w;
      }
    }
  }
  Omega w = best;
  for (int it = 0; it < 100; ++it) {
    const Eigen::Vector2d f = residual(w);
    if (f.cwiseAbs().maxCoeff() < 1e-14) break;
    const double h1 = 1e-7 * std::max(1.0, s1.width());
    const double h2 = 1e-7 * std::max(1.0, s2.width());
    Eigen::Matrix2d jac;
    jac.col(0) = (residual({w.first + h1, w.second}) - residual({w.first - h1, w.second})) / (2 * h1);
    jac.col(1) = (residual({w.first, w.second + h2}) - residual({w.first, w.second - h2})) / (2 * h2);
    const Eigen::Vector2d step = jac.fullPivLu().solve(-f);
    double t = 1.0;
    Omega next = w;
    for (int ls = 0; ls < 30; ++ls) {
      next = {w.first + t * step(0), w.second + t * step(1)};
      if (residual(next).norm() < f.norm()) break;
      t *= 0.5;
    }
    if (next.first == w.first && next.second == w.second) break;
    w = next;
  }
  const Eigen::Vector2d f = residual(w);
  if (!(f.cwiseAbs().maxCoeff() < 1e-10)) {
    throw DomainError("ratio pair (" + fmt(r12) + ", " + fmt(r23) + ") could not be inverted on the support");
  }
  return check_support(w);
}

namespace {

AffineLine read_line(const KeyValueConfig& cfg, const std::string& key, const AffineLine& fallback) {
  const auto v = cfg.get_doubles(key, {fallback.intercept, fallback.slope, fallback.slope2});
  if (v.empty() || v.size() > 3) {
    throw ConfigError("config key '" + key + "': expected 'intercept [slope [slope2]]'");
  }
  return {v[0], v.size() > 1 ? v[1] : 0.0, v.size() > 2 ? v[2] : 0.0};
}

std::string write_line(const AffineLine& a, bool two_d) {
  std::vector<double> v{a.intercept, a.slope};
  if (two_d) v.push_back(a.slope2);
  return format_doubles(v);
}

}  // namespace

TechnologySpec benchmark_technology(ModelVariant variant) {
  AffineParams p = *benchmark_technology().affine_params();
  if (variant == ModelVariant::two_labor) p.lu = {0.1, 0.0, 0.0};
  if (variant == ModelVariant::three_flexible) p.m3 = {0.1, 0.0, 0.0};
  return TechnologySpec::affine(p, {0.0, 1.0});
}

TechnologySpec technology_from_config(const KeyValueConfig& cfg, ModelVariant variant) {
  const std::string family = cfg.get_string("technology.family", "affine");
  const Interval support{cfg.get_double("technology.omega_min", 0.0), cfg.get_double("technology.omega_max", 1.0)};
  const auto bench = *benchmark_technology(variant).affine_params();
  if (family == "affine" || family == "affine2d") {
    AffineParams p;
    p.l = read_line(cfg, "technology.beta_l", bench.l);
    p.lu = read_line(cfg, "technology.beta_lu", bench.lu);
    p.k = read_line(cfg, "technology.beta_k", bench.k);
    p.m1 = read_line(cfg, "technology.beta_m1", bench.m1);
    p.m2 = read_line(cfg, "technology.beta_m2", bench.m2);
    p.m3 = read_line(cfg, "technology.beta_m3", bench.m3);
    p.b0 = read_line(cfg, "technology.beta_0", bench.b0);
    if (family == "affine") return TechnologySpec::affine(p, support);
    const Interval support2{cfg.get_double("technology.omega2_min", 0.0),
                            cfg.get_double("technology.omega2_max", 1.0)};
    return TechnologySpec::affine2d(p, support, support2);
  }
  if (family == "logistic") {
    LogisticParams p;
    p.center = cfg.get_double("technology.logistic.center", p.center);
    p.scale = cfg.get_double("technology.logistic.scale", p.scale);
    const auto m1 = cfg.get_doubles("technology.beta_m1", {p.m1_floor, p.m1_span});
    const auto m2 = cfg.get_doubles("technology.beta_m2", {p.m2_floor, p.m2_span});
    if (m1.size() != 2 || m2.size() != 2) {
      throw ConfigError("logistic technology: beta_m1 and beta_m2 take 'floor span'");
    }
    p.m1_floor = m1[0];
    p.m1_span = m1[1];
    p.m2_floor = m2[0];
    p.m2_span = m2[1];
    p.l = read_line(cfg, "technology.beta_l", p.l);
    p.lu = read_line(cfg, "technology.beta_lu", bench.lu);
    p.k = read_line(cfg, "technology.beta_k", p.k);
    p.m3 = read_line(cfg, "technology.beta_m3", bench.m3);
    p.b0 = read_line(cfg, "technology.beta_0", p.b0);
    return TechnologySpec::logistic(p, support);
  }
  throw ConfigError("unknown technology.family '" + family + "' (expected affine, affine2d, logistic)");
}

void technology_to_config(const TechnologySpec& spec, KeyValueConfig& cfg) {
  if (spec.family() == Family::custom) {
    throw ConfigError("custom technologies built from user functions cannot be serialized");
  }
  cfg.set("technology.family", std::string(spec.family_tag()));
  cfg.set("technology.omega_min", format_double(spec.support().lo));
  cfg.set("technology.omega_max", format_double(spec.support().hi));
  if (spec.affine_params()) {
    const bool two_d = spec.dimension() == 2;
    if (two_d) {
      cfg.set("technology.omega2_min", format_double(spec.support2().lo));
      cfg.set("technology.omega2_max", format_double(spec.support2().hi));
    }
    const auto& p = *spec.affine_params();
    cfg.set("technology.beta_l", write_line(p.l, two_d));
    cfg.set("technology.beta_lu", write_line(p.lu, two_d));
    cfg.set("technology.beta_k", write_line(p.k, two_d));
    cfg.set("technology.beta_m1", write_line(p.m1, two_d));
    cfg.set("technology.beta_m2", write_line(p.m2, two_d));
    cfg.set("technology.beta_m3", write_line(p.m3, two_d));
    cfg.set("technology.beta_0", write_line(p.b0, two_d));
    return;
  }
  const auto& p = *spec.logistic_params();
  cfg.set("technology.logistic.center", format_double(p.center));
  cfg.set("technology.logistic.scale", format_double(p.scale));
  cfg.set("technology.beta_m1", format_doubles({p.m1_floor, p.m1_span}));
  cfg.set("technology.beta_m2", format_doubles({p.m2_floor, p.m2_span}));
  cfg.set("technology.beta_l", write_line(p.l, false));
  cfg.set("technology.beta_lu", write_line(p.lu, false));
  cfg.set("technology.beta_k", write_line(p.k, false));
  cfg.set("technology.beta_m3", write_line(p.m3, false));
  cfg.set("technology.beta_0", write_line(p.b0, false));
}

}  // namespace hetcoef
