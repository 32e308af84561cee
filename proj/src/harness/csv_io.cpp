#include "harness/csv_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "core/error.hpp"
#include "harness/columns.hpp"

namespace hetcoef {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(cur);
  for (auto& c : cells) {
    const auto b = c.find_first_not_of(" \t");
    const auto e = c.find_last_not_of(" \t");
    c = b == std::string::npos ? std::string() : c.substr(b, e - b + 1);
  }
  return cells;
}

bool parse_cell(const std::string& cell, double& out) {
  if (cell.empty()) return false;
  const char* first = cell.data();
  const char* last = first + cell.size();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::string num(double v) { return format_double(v); }

std::string state_column(ModelVariant v, int which) {
  // which: 0 labor, 1 unskilled labor
  if (which == 1) return "log_labor_u";
  return v == ModelVariant::two_labor ? "log_labor_s" : "log_labor";
}

}  // namespace

std::vector<std::string> required_columns(ModelVariant variant) {
  switch (variant) {
    case ModelVariant::two_labor:
      return {"firm_id", "output_value", "cost_m1", "cost_m2", "log_labor_s", "log_labor_u", "log_capital"};
    case ModelVariant::three_flexible:
      return {"firm_id", "output_value", "cost_m1", "cost_m2", "cost_m3", "log_labor", "log_capital"};
    case ModelVariant::single_m_flexible_labor:
      return {"firm_id", "output_value", "cost_l", "cost_m1", "log_capital"};
    case ModelVariant::baseline:
      break;
  }
  return {"firm_id", "output_value", "cost_m1", "cost_m2", "log_labor", "log_capital"};
}

std::vector<std::string> price_columns(ModelVariant variant) {
  switch (variant) {
    case ModelVariant::three_flexible: return {"p_y", "p_m1", "p_m2", "p_m3"};
    case ModelVariant::single_m_flexible_labor: return {"p_y", "p_l", "p_m1"};
    default: return {"p_y", "p_m1", "p_m2"};
  }
}

std::vector<std::string> truth_columns() {
  return {"true_omega",   "true_omega2",  "true_eta",     "true_e_exp_eta", "true_beta_l",  "true_beta_lu",
          "true_beta_k",  "true_beta_m1", "true_beta_m2", "true_beta_m3",   "true_beta_0",  "true_flex1",
          "true_flex2",   "true_flex3",   "true_p_y",     "true_p_m1",      "true_p_m2",    "true_p_m3",
          "true_p_l"};
}

IngestResult parse_csv(std::istream& in, ModelVariant variant, const std::string& source, bool keep_truth) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") != std::string::npos) break;
  }
  if (line_no == 0 || line.find_first_not_of(" \t\r") == std::string::npos) {
    throw DataError(source + ": empty file, expected a header row");
  }
  const std::vector<std::string> header = split_line(line);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!index.emplace(header[i], i).second) throw DataError(source + ": duplicate column '" + header[i] + "'");
  }

  const auto required = required_columns(variant);
  for (const auto& c : required) {
    if (!index.count(c)) {
      throw DataError(source + ": missing required column '" + c + "' for variant " + std::string(to_string(variant)));
    }
  }
  const auto prices = price_columns(variant);
  const auto truth = truth_columns();
  std::set<std::string> allowed(required.begin(), required.end());
  allowed.insert(prices.begin(), prices.end());
  allowed.insert(truth.begin(), truth.end());
  for (const auto& h : header) {
    if (!allowed.count(h)) {
      throw DataError(source + ": unexpected column '" + h + "' for variant " + std::string(to_string(variant)));
    }
  }
  std::size_t price_present = 0, truth_present = 0;
  for (const auto& c : prices) price_present += index.count(c);
  for (const auto& c : truth) truth_present += index.count(c);
  if (price_present != 0 && price_present != prices.size()) {
    for (const auto& c : prices) {
      if (!index.count(c)) throw DataError(source + ": price columns are incomplete, missing '" + c + "'");
    }
  }
  if (truth_present != 0 && truth_present != truth.size()) {
    for (const auto& c : truth) {
      if (!index.count(c)) throw DataError(source + ": truth columns are incomplete, missing '" + c + "'");
    }
  }
  const bool has_prices = price_present == prices.size();
  const bool has_truth = truth_present == truth.size();

  IngestResult result;
  result.data.variant = variant;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw DataError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " cells, found " + std::to_string(cells.size()));
    }
    auto value = [&](const std::string& column) {
      const std::string& cell = cells[index.at(column)];
      double v = 0.0;
      if (!parse_cell(cell, v)) {
        throw DataError(source + ":" + std::to_string(line_no) + ": column '" + column + "' is not numeric ('" + cell +
                        "')");
      }
      return v;
    };

    FirmRecord rec;
    rec.firm_id = cells[index.at("firm_id")];
    if (rec.firm_id.empty()) throw DataError(source + ":" + std::to_string(line_no) + ": empty firm_id");
    rec.output_value = value("output_value");
    rec.cost_m1 = rec.cost_m2 = rec.cost_m3 = rec.cost_l = kNaN;
    rec.l = rec.lu = kNaN;
    std::vector<double> costs;
    switch (variant) {
      case ModelVariant::single_m_flexible_labor:
        rec.cost_l = value("cost_l");
        rec.cost_m1 = value("cost_m1");
        costs = {rec.cost_l, rec.cost_m1};
        break;
      case ModelVariant::three_flexible:
        rec.cost_m3 = value("cost_m3");
        [[fallthrough]];
      default:
        rec.cost_m1 = value("cost_m1");
        rec.cost_m2 = value("cost_m2");
        costs = {rec.cost_m1, rec.cost_m2};
        if (variant == ModelVariant::three_flexible) costs.push_back(rec.cost_m3);
        rec.l = value(state_column(variant, 0));
        if (variant == ModelVariant::two_labor) rec.lu = value(state_column(variant, 1));
    }
    rec.k = value("log_capital");

    std::string reason;
    if (!(rec.output_value > 0.0) || !std::isfinite(rec.output_value)) {
      reason = "nonpositive output value";
    } else {
      for (double c : costs) {
        if (!(c > 0.0) || !std::isfinite(c)) reason = "nonpositive cost";
      }
    }
    if (reason.empty() && (!std::isfinite(rec.k) || (variant != ModelVariant::single_m_flexible_labor && !std::isfinite(rec.l)) ||
                           (variant == ModelVariant::two_labor && !std::isfinite(rec.lu)))) {
      reason = "non-finite log input";
    }
    if (has_prices) {
      Prices p;
      p.y = value("p_y");
      p.m1 = value("p_m1");
      double check[3] = {p.y, p.m1, 1.0};
      if (variant == ModelVariant::single_m_flexible_labor) {
        p.l = value("p_l");
        check[2] = p.l;
      } else {
        p.m2 = value("p_m2");
        check[2] = p.m2;
        if (variant == ModelVariant::three_flexible) {
          p.m3 = value("p_m3");
          if (reason.empty() && !(p.m3 > 0.0)) reason = "nonpositive price";
        }
      }
      for (double c : check) {
        if (reason.empty() && (!(c > 0.0) || !std::isfinite(c))) reason = "nonpositive price";
      }
      rec.observed_prices = p;
    }
    if (has_truth && keep_truth) {
      HiddenTruth t;
      t.omega = Omega{value("true_omega"), value("true_omega2")};
      t.eta = value("true_eta");
      t.e_exp_eta = value("true_e_exp_eta");
      t.betas.beta_l = value("true_beta_l");
      t.betas.beta_lu = value("true_beta_lu");
      t.betas.beta_k = value("true_beta_k");
      t.betas.beta_m1 = value("true_beta_m1");
      t.betas.beta_m2 = value("true_beta_m2");
      t.betas.beta_m3 = value("true_beta_m3");
      t.betas.beta_0 = value("true_beta_0");
      t.inputs.count = flexible_count(variant);
      t.inputs.m[0] = value("true_flex1");
      t.inputs.m[1] = value("true_flex2");
      t.inputs.m[2] = value("true_flex3");
      t.prices = Prices{value("true_p_y"), value("true_p_m1"), value("true_p_m2"), value("true_p_m3"), value("true_p_l")};
      rec.truth = t;
    }
    if (!reason.empty()) {
      result.dropped.push_back({line_no, rec.firm_id, reason});
      continue;
    }
    result.data.firms.push_back(std::move(rec));
  }
  return result;
}

IngestResult ingest_csv(const std::string& path, ModelVariant variant, bool keep_truth) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return parse_csv(in, variant, path, keep_truth);
}

void write_dataset_csv(const Dataset& data, std::ostream& out, bool with_truth) {
  const ModelVariant v = data.variant;
  if (with_truth && !data.has_truth()) throw DataError("dataset carries no hidden truth to write");
  std::vector<std::string> header = required_columns(v);
  const bool priced = data.has_prices();
  if (priced) {
    const auto p = price_columns(v);
    header.insert(header.end(), p.begin(), p.end());
  }
  if (with_truth) {
    const auto t = truth_columns();
    header.insert(header.end(), t.begin(), t.end());
  }
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const FirmRecord& r : data.firms) {
    out << r.firm_id << ',' << num(r.output_value);
    switch (v) {
      case ModelVariant::single_m_flexible_labor:
        out << ',' << num(r.cost_l) << ',' << num(r.cost_m1);
        break;
      case ModelVariant::three_flexible:
        out << ',' << num(r.cost_m1) << ',' << num(r.cost_m2) << ',' << num(r.cost_m3) << ',' << num(r.l);
        break;
      case ModelVariant::two_labor:
        out << ',' << num(r.cost_m1) << ',' << num(r.cost_m2) << ',' << num(r.l) << ',' << num(r.lu);
        break;
      case ModelVariant::baseline:
        out << ',' << num(r.cost_m1) << ',' << num(r.cost_m2) << ',' << num(r.l);
        break;
    }
    out << ',' << num(r.k);
    if (priced) {
      const Prices& p = *r.observed_prices;
      out << ',' << num(p.y);
      if (v == ModelVariant::single_m_flexible_labor) {
        out << ',' << num(p.l) << ',' << num(p.m1);
      } else {
        out << ',' << num(p.m1) << ',' << num(p.m2);
        if (v == ModelVariant::three_flexible) out << ',' << num(p.m3);
      }
    }
    if (with_truth) {
      const HiddenTruth& t = *r.truth;
      const CoefficientVector& b = t.betas;
      for (double x : {t.omega.first, t.omega.second, t.eta, t.e_exp_eta, b.beta_l, b.beta_lu, b.beta_k, b.beta_m1,
                       b.beta_m2, b.beta_m3, b.beta_0, t.inputs.m[0], t.inputs.m[1], t.inputs.m[2], t.prices.y,
                       t.prices.m1, t.prices.m2, t.prices.m3, t.prices.l}) {
        out << ',' << num(x);
      }
    }
    out << '\n';
  }
}

namespace {

const HiddenTruth* truth_for(const Dataset* truth, std::size_t i) {
  if (!truth || i >= truth->firms.size() || !truth->firms[i].truth) return nullptr;
  return &*truth->firms[i].truth;
}

}  // namespace

void write_estimates_csv(const ElasticityEstimates& est, std::ostream& out, const Dataset* truth) {
  const ModelVariant v = est.variant;
  const auto coefs = coefficient_columns(v);
  const auto shares = share_columns(v);
  const bool with_truth = truth && truth->has_truth();
  if (with_truth && truth->size() != est.firms.size()) throw DataError("truth and estimates differ in firm count");

  out << "firm_id,r";
  if (v == ModelVariant::three_flexible) out << ",r23";
  for (const auto& s : shares) out << ',' << s;
  for (const auto& c : coefs) out << ',' << c.name;
  out << ",flag,share_fit,state_fit,productivity_fit";
  if (with_truth) {
    for (const auto& c : coefs) out << ",true_" << c.name;
  }
  out << '\n';
  for (std::size_t i = 0; i < est.firms.size(); ++i) {
    const FirmEstimate& e = est.firms[i];
    out << e.firm_id << ',' << num(e.ratios.r);
    if (v == ModelVariant::three_flexible) out << ',' << num(e.ratios.r23);
    for (std::size_t j = 0; j < shares.size(); ++j) out << ',' << num(e.shares[j]);
    for (const auto& c : coefs) out << ',' << num(e.betas.*c.member);
    out << ',' << to_string(e.flag) << ',' << to_string(e.share_fit) << ',' << to_string(e.state_fit) << ','
        << to_string(e.productivity_fit);
    if (with_truth) {
      const HiddenTruth* t = truth_for(truth, i);
      for (const auto& c : coefs) out << ',' << num(t->betas.*c.member);
    }
    out << '\n';
  }
}

namespace {

nlohmann::json number(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

nlohmann::json numbers(const std::vector<double>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

}  // namespace

void write_estimates_json(const ElasticityEstimates& est, std::ostream& out, const Dataset* truth) {
  const ModelVariant v = est.variant;
  const auto coefs = coefficient_columns(v);
  const auto shares = share_columns(v);
  const bool with_truth = truth && truth->has_truth();
  nlohmann::ordered_json doc;
  doc["variant"] = std::string(to_string(v));
  doc["oracle_mode"] = est.oracle_mode;
  doc["bandwidths"] = {{"share", numbers(est.share_bandwidths)},
                       {"state", numbers(est.state_bandwidths)},
                       {"productivity", numbers(est.productivity_bandwidths)}};
  doc["flag_counts"] = {{"ok", est.count(FirmFlag::ok)},
                        {"clamped", est.count(FirmFlag::clamped)},
                        {"trimmed", est.count(FirmFlag::trimmed)},
                        {"ridge", est.ridge_count()}};
  nlohmann::ordered_json firms = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < est.firms.size(); ++i) {
    const FirmEstimate& e = est.firms[i];
    nlohmann::ordered_json f;
    f["firm_id"] = e.firm_id;
    f["r"] = number(e.ratios.r);
    if (v == ModelVariant::three_flexible) f["r23"] = number(e.ratios.r23);
    for (std::size_t j = 0; j < shares.size(); ++j) f[shares[j]] = number(e.shares[j]);
    for (const auto& c : coefs) f[c.name] = number(e.betas.*c.member);
    f["flag"] = std::string(to_string(e.flag));
    f["share_fit"] = std::string(to_string(e.share_fit));
    f["state_fit"] = std::string(to_string(e.state_fit));
    f["productivity_fit"] = std::string(to_string(e.productivity_fit));
    if (with_truth) {
      const HiddenTruth* t = truth_for(truth, i);
      if (!t) throw DataError("truth and estimates differ in firm count");
      for (const auto& c : coefs) f["true_" + c.name] = number(t->betas.*c.member);
    }
    firms.push_back(std::move(f));
  }
  doc["firms"] = std::move(firms);
  out << doc.dump(2) << '\n';
}

void write_locality_csv(const LocalityReport& report, std::ostream& out) {
  out << "firm_id,density,relative_density";
  for (const auto& n : report.spread_names) out << ",spread_" << n;
  out << ",min_spread,flagged\n";
  for (const auto& e : report.entries) {
    out << e.firm_id << ',' << num(e.density) << ',' << num(e.relative_density);
    for (double s : e.spreads) out << ',' << num(s);
    out << ',' << num(e.min_spread) << ',' << (e.flagged ? "true" : "false") << '\n';
  }
}

}  // namespace hetcoef
