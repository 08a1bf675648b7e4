#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qcd/audit.hpp"
#include "qcd/calibration.hpp"
#include "qcd/detectors.hpp"
#include "qcd/errors.hpp"
#include "qcd/model.hpp"
#include "qcd/risk.hpp"
#include "qcd/zoo.hpp"

namespace qcd {

enum class ExperimentKind { kCalibrate, kRisk, kSweep, kAudit, kDemoLai };

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::kCalibrate: return "calibrate";
    case ExperimentKind::kRisk: return "risk";
    case ExperimentKind::kSweep: return "sweep";
    case ExperimentKind::kAudit: return "audit";
    case ExperimentKind::kDemoLai: return "demo-lai";
  }
  return "?";
}

inline std::optional<ExperimentKind> parse_experiment_kind(const std::string& s) {
  for (auto k : {ExperimentKind::kCalibrate, ExperimentKind::kRisk, ExperimentKind::kSweep, ExperimentKind::kAudit,
                 ExperimentKind::kDemoLai})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

inline std::optional<DetectorKind> parse_detector_kind(const std::string& s) {
  for (auto k : {DetectorKind::kShiryaevRoberts, DetectorKind::kCusum, DetectorKind::kShiryaev})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

struct DetectorSpec {
  DetectorKind kind = DetectorKind::kShiryaevRoberts;
  std::optional<double> threshold;
  std::optional<double> beta;
  std::optional<double> alpha;
  std::optional<double> rho;
  std::uint64_t m_star = 0;  // filled from calibration defaults when beta is set
  std::uint64_t k_star = 0;
  std::vector<LocalClass> classes = {LocalClass::kLocal, LocalClass::kConditional};
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kRisk;
  std::optional<ModelSpec> model;
  DetectorSpec detector;
  std::optional<CalibrationSheet> sheet;
  McBudget mc;
  std::filesystem::path out = "out";

  bool calibrate_check = false;

  std::vector<std::string> risk_functionals = {"pfa", "lpfa", "lcpfa", "delay"};
  std::vector<std::uint64_t> risk_nu = {0};
  int risk_moment = 1;
  std::optional<double> pfa_rho;

  std::vector<double> sweep_h = {100.0, 1000.0, 10000.0};
  std::vector<std::uint64_t> sweep_nu = {0};
  std::vector<DetectorKind> sweep_kinds = {DetectorKind::kShiryaevRoberts, DetectorKind::kCusum};

  AuditConfig audit;
  bool audit_drift = true;
  DriftSpec drift;
  double minorization_c = 1.0;
  std::size_t minorization_resolution = 201;

  LaiDemoConfig demo;
  bool demo_audit = true;

  std::optional<double> kl;
  ErgodicMcOptions kl_mc;

  /// Every accepted key = value pair in key order, for the run manifest.
  std::map<std::string, std::string> entries;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

/// Typed access to the parsed key/value table; every key read is marked used.
class ConfigTable {
 public:
  struct Entry {
    std::string value;
    int line = 0;
  };

  explicit ConfigTable(std::map<std::string, Entry> entries) : entries_(std::move(entries)) {}

  bool has(const std::string& key) const { return entries_.contains(key); }

  std::optional<std::string> text(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    used_.insert(key);
    return it->second.value;
  }

  std::optional<double> number(const std::string& key, double lo = -INFINITY, double hi = INFINITY,
                               bool open = false) {
    auto t = text(key);
    if (!t) return std::nullopt;
    const double v = to_number(key, *t);
    check_range(key, v, lo, hi, open);
    return v;
  }

  std::optional<std::uint64_t> integer(const std::string& key, std::uint64_t lo = 0,
                                       std::uint64_t hi = UINT64_MAX) {
    auto t = text(key);
    if (!t) return std::nullopt;
    return to_integer(key, *t, lo, hi);
  }

  std::optional<bool> boolean(const std::string& key) {
    auto t = text(key);
    if (!t) return std::nullopt;
    if (*t == "true") return true;
    if (*t == "false") return false;
    throw OutOfRange(where(key) + "expected true or false, got '" + *t + "'");
  }

  std::optional<std::vector<double>> numbers(const std::string& key, double lo = -INFINITY, double hi = INFINITY,
                                             bool open = false) {
    auto t = text(key);
    if (!t) return std::nullopt;
    std::vector<double> out;
    for (const auto& item : split(*t, ',')) {
      out.push_back(to_number(key, item));
      check_range(key, out.back(), lo, hi, open);
    }
    if (out.empty()) throw OutOfRange(where(key) + "empty list");
    return out;
  }

  std::optional<std::vector<std::uint64_t>> integers(const std::string& key, std::uint64_t lo = 0,
                                                     std::uint64_t hi = UINT64_MAX) {
    auto t = text(key);
    if (!t) return std::nullopt;
    std::vector<std::uint64_t> out;
    for (const auto& item : split(*t, ',')) out.push_back(to_integer(key, item, lo, hi));
    if (out.empty()) throw OutOfRange(where(key) + "empty list");
    return out;
  }

  /// Unread keys under `prefix` with the prefix stripped, marked used.
  std::map<std::string, std::string> take_prefix(const std::string& prefix) {
    std::map<std::string, std::string> out;
    for (const auto& [key, e] : entries_)
      if (key.starts_with(prefix) && !used_.contains(key)) {
        out[key.substr(prefix.size())] = e.value;
        used_.insert(key);
      }
    return out;
  }

  void finish() const {
    for (const auto& [key, e] : entries_)
      if (!used_.contains(key)) throw UnknownKey("line " + std::to_string(e.line) + ": unknown key '" + key + "'");
  }

  std::string where(const std::string& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? key + ": " : "line " + std::to_string(it->second.line) + ": " + key + ": ";
  }

 private:
  double to_number(const std::string& key, const std::string& s) const {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || std::isnan(v))
      throw OutOfRange(where(key) + "not a number: '" + s + "'");
    return v;
  }

  std::uint64_t to_integer(const std::string& key, const std::string& s, std::uint64_t lo, std::uint64_t hi) const {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
      throw OutOfRange(where(key) + "not a non-negative integer: '" + s + "'");
    if (v < lo || v > hi)
      throw OutOfRange(where(key) + std::to_string(v) + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) +
                       "]");
    return v;
  }

  void check_range(const std::string& key, double v, double lo, double hi, bool open) const {
    const bool ok = open ? (v > lo && v < hi) : (v >= lo && v <= hi);
    if (!ok) {
      std::ostringstream msg;
      msg << where(key) << v << " outside " << (open ? "(" : "[") << lo << ", " << hi << (open ? ")" : "]");
      throw OutOfRange(msg.str());
    }
  }

  std::map<std::string, Entry> entries_;
  std::set<std::string> used_;
};

/// Splits the text into key/value entries; syntax errors carry line numbers.
inline std::map<std::string, ConfigTable::Entry> tokenize_config(const std::string& text) {
  std::map<std::string, ConfigTable::Entry> entries;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ParseError(line, "expected 'section.key = value'");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    const auto dot = key.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == key.size())
      throw ParseError(line, "key '" + key + "' is not of the form section.key");
    if (key.find_first_of(" \t") != std::string::npos) throw ParseError(line, "key '" + key + "' contains whitespace");
    if (value.empty()) throw ParseError(line, "empty value for '" + key + "'");
    if (entries.contains(key))
      throw ParseError(line, "duplicate key '" + key + "' (first set on line " + std::to_string(entries[key].line) + ")");
    entries[key] = {value, line};
  }
  return entries;
}

}  // namespace detail

/// Parses a line-oriented `section.key = value` configuration ('#' starts a
/// comment). Unknown keys are rejected and every value is range-checked.
/// When detector.beta is set, m* and k* default to the calibration defaults.
/// `expected` (the CLI subcommand) supplies the kind when experiment.kind is
/// absent and must match it when present.
inline ExperimentConfig parse_config(const std::string& text, std::optional<ExperimentKind> expected = std::nullopt) {
  auto tokens = detail::tokenize_config(text);
  ExperimentConfig cfg;
  for (const auto& [key, e] : tokens) cfg.entries[key] = e.value;
  detail::ConfigTable t(std::move(tokens));

  cfg.kind = expected.value_or(ExperimentKind::kRisk);
  if (auto k = t.text("experiment.kind")) {
    auto kind = parse_experiment_kind(*k);
    if (!kind) throw OutOfRange(t.where("experiment.kind") + "unknown experiment kind '" + *k + "'");
    if (expected && *kind != *expected)
      throw OutOfRange(t.where("experiment.kind") + "config is a '" + *k + "' experiment, not '" +
                       to_string(*expected) + "'");
    cfg.kind = *kind;
  }

  if (auto name = t.text("model.name")) cfg.model = ModelSpec{*name, t.take_prefix("model.")};

  auto& d = cfg.detector;
  if (auto k = t.text("detector.kind")) {
    auto kind = parse_detector_kind(*k);
    if (!kind) throw OutOfRange(t.where("detector.kind") + "unknown detector '" + *k + "'");
    d.kind = *kind;
  }
  d.threshold = t.number("detector.threshold", 0.0, INFINITY, true);
  d.beta = t.number("detector.beta", 0.0, 1.0, true);
  d.alpha = t.number("detector.alpha", 0.0, 1.0, true);
  d.rho = t.number("detector.rho", 0.0, 1.0, true);
  const auto m_star = t.integer("detector.m_star", 1);
  const auto k_star = t.integer("detector.k_star", 2);
  if (auto c = t.text("detector.class")) {
    if (*c == "local")
      d.classes = {LocalClass::kLocal};
    else if (*c == "conditional")
      d.classes = {LocalClass::kConditional};
    else if (*c == "both")
      d.classes = {LocalClass::kLocal, LocalClass::kConditional};
    else
      throw OutOfRange(t.where("detector.class") + "expected local, conditional or both");
  }
  if (d.beta) {
    cfg.sheet = calibrate_for_beta(*d.beta, m_star, k_star);
    d.m_star = cfg.sheet->m_star;
    d.k_star = cfg.sheet->k_star;
  } else {
    d.m_star = m_star.value_or(0);
    d.k_star = k_star.value_or(0);
    if (d.m_star && d.k_star && d.k_star <= d.m_star)
      throw OutOfRange(t.where("detector.k_star") + "k* must exceed m*");
  }

  if (auto v = t.integer("mc.reps", 2)) cfg.mc.reps = *v;
  if (auto v = t.integer("mc.n_max", 1)) cfg.mc.horizon = *v;
  if (auto v = t.number("mc.censor_cap", 0.0, 1.0)) cfg.mc.censor_cap = *v;

  if (auto v = t.integer("run.seed")) cfg.mc.seed = *v;
  if (auto v = t.integer("run.threads", 0, 4096)) cfg.mc.threads = static_cast<unsigned>(*v);
  if (auto v = t.text("run.out")) cfg.out = *v;

  if (auto v = t.boolean("calibrate.check")) cfg.calibrate_check = *v;

  if (auto v = t.text("risk.functionals")) {
    cfg.risk_functionals = detail::split(*v, ',');
    for (const auto& f : cfg.risk_functionals)
      if (f != "pfa" && f != "lpfa" && f != "lcpfa" && f != "delay")
        throw OutOfRange(t.where("risk.functionals") + "unknown functional '" + f + "'");
  }
  if (auto v = t.integers("risk.nu")) cfg.risk_nu = *v;
  if (auto v = t.integer("risk.moment", 1, 8)) cfg.risk_moment = static_cast<int>(*v);
  cfg.pfa_rho = t.number("risk.pfa_rho", 0.0, 1.0, true);

  if (auto v = t.numbers("sweep.h", 1.0, INFINITY, true)) cfg.sweep_h = *v;
  if (auto v = t.integers("sweep.nu")) cfg.sweep_nu = *v;
  if (auto v = t.text("sweep.kinds")) {
    cfg.sweep_kinds.clear();
    for (const auto& s : detail::split(*v, ',')) {
      auto k = parse_detector_kind(s);
      if (!k) throw OutOfRange(t.where("sweep.kinds") + "unknown detector '" + s + "'");
      cfg.sweep_kinds.push_back(*k);
    }
  }

  auto& a = cfg.audit;
  if (auto v = t.numbers("audit.eps", 0.0, INFINITY, true)) a.eps = *v;
  if (auto v = t.integers("audit.k")) a.k_grid = *v;
  if (auto v = t.integer("audit.n_max", 10)) a.n_max = *v;
  if (auto v = t.integer("audit.reps", 1)) a.reps = *v;
  if (auto v = t.integer("audit.slope_lo", 1)) a.slope_lo = *v;
  if (auto v = t.integer("audit.slope_hi", 2)) a.slope_hi = *v;
  if (auto v = t.boolean("audit.drift")) cfg.audit_drift = *v;
  if (auto v = t.number("audit.drift_c", 0.0, INFINITY)) cfg.drift.c_half_width = *v;
  if (auto v = t.number("audit.minorization_c", 0.0, INFINITY)) cfg.minorization_c = *v;
  if (auto v = t.number("audit.k_star", 0.0, INFINITY, true)) cfg.drift.k_star = *v;
  if (auto v = t.number("audit.iota", 0.0, 16.0, true)) cfg.drift.iota = *v;
  cfg.drift.q_star = t.number("audit.q_star", 1.0, INFINITY);
  if (auto v = t.number("audit.large_x", 0.0, INFINITY, true)) cfg.drift.large_x = *v;
  if (auto v = t.integer("audit.minorization_resolution", 2, 100000)) cfg.minorization_resolution = *v;

  auto& m = cfg.demo;
  if (auto v = t.number("demo.eps", 0.0, INFINITY)) m.eps = *v;
  if (auto v = t.integer("demo.n", 1)) m.n = *v;
  if (auto v = t.numbers("demo.x2")) m.x2_grid = *v;
  if (auto v = t.integer("demo.reps", 1)) m.reps = *v;
  if (auto v = t.number("demo.floor", 0.0, 1.0)) m.floor = *v;
  if (auto v = t.boolean("demo.audit")) cfg.demo_audit = *v;

  cfg.kl = t.number("kl.value", 0.0, INFINITY, true);
  if (auto v = t.integer("kl.horizon", 10000)) cfg.kl_mc.horizon = *v;
  if (auto v = t.integer("kl.burn_in", 1000)) cfg.kl_mc.burn_in = *v;
  if (auto v = t.integer("kl.reps", 1)) cfg.kl_mc.reps = *v;

  t.finish();

  // Fail early on model parameter errors.
  if (cfg.model) build_model(*cfg.model);
  const bool needs_model = cfg.kind != ExperimentKind::kCalibrate || cfg.calibrate_check;
  if (needs_model && !cfg.model) throw OutOfRange("model.name is required for " + to_string(cfg.kind));
  if (cfg.kind == ExperimentKind::kCalibrate && !cfg.sheet) throw OutOfRange("calibrate needs detector.beta");
  return cfg;
}

}  // namespace qcd
