#pragma once

// Model files: INI-style sections [model], [nonlinear], [noise], [run].
// Values may be quoted and lists are written [a, b, c], so the files also
// read as TOML. Unknown sections and keys are rejected.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "nlar/error.hpp"
#include "nlar/model.hpp"

namespace nlar {

struct RunConfig {
  std::size_t n = 1000;
  std::size_t burn_in = 500;
  std::uint64_t seed = 1;
  std::size_t reps = 10000;
  std::vector<std::size_t> horizons = {1, 2, 5, 10, 20, 50, 100, 200, 500};
  std::optional<std::vector<double>> x0;
  std::size_t max_lag = 20;
};

struct ModelFile {
  ModelSpec model;
  RunConfig run;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  s = s.substr(b, e - b + 1);
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) s = s.substr(1, s.size() - 2);
  return s;
}

class Section {
 public:
  Section(std::string name, const boost::property_tree::ptree* tree) : name_(std::move(name)), tree_(tree) {}

  bool has(const std::string& key) const { return tree_ && tree_->find(key) != tree_->not_found(); }

  std::string text(const std::string& key) const {
    used_.insert(key);
    if (!has(key)) throw Error(ErrorCode::ConfigError, "[" + name_ + "] missing key '" + key + "'");
    return trim(tree_->get<std::string>(key));
  }
  std::string text_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? text(key) : (used_.insert(key), fallback);
  }

  double number(const std::string& key) const { return to_number(key, text(key)); }
  double number_or(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

  std::uint64_t integer(const std::string& key) const {
    const double v = number(key);
    if (v < 0 || v != std::floor(v))
      throw Error(ErrorCode::ConfigError, "[" + name_ + "] " + key + " must be a non-negative integer");
    return static_cast<std::uint64_t>(v);
  }

  std::vector<double> list(const std::string& key) const {
    std::string s = text(key);
    if (s.size() >= 2 && s.front() == '[' && s.back() == ']') s = s.substr(1, s.size() - 2);
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(to_number(key, item));
    }
    return out;
  }

  /// Rejects keys that were never read.
  void finish() const {
    if (!tree_) return;
    for (const auto& kv : *tree_)
      if (!used_.count(kv.first))
        throw Error(ErrorCode::ConfigError, "[" + name_ + "] unknown or inapplicable key '" + kv.first + "'");
  }

 private:
  double to_number(const std::string& key, const std::string& s) const {
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw Error(ErrorCode::ConfigError, "[" + name_ + "] " + key + ": '" + s + "' is not a number");
    }
  }

  std::string name_;
  const boost::property_tree::ptree* tree_;
  mutable std::set<std::string> used_;
};

inline const std::map<std::string, HSpec::Family>& h_families() {
  static const std::map<std::string, HSpec::Family> m = {
      {"abs_power", HSpec::Family::AbsPower},         {"shifted_power", HSpec::Family::ShiftedPower},
      {"smooth_power", HSpec::Family::SmoothPower},   {"two_abs_power", HSpec::Family::TwoAbsPower},
      {"two_shifted_power", HSpec::Family::TwoShiftedPower}, {"two_smooth_power", HSpec::Family::TwoSmoothPower}};
  return m;
}

inline std::string h_family_name(HSpec::Family f) {
  for (const auto& [name, fam] : h_families())
    if (fam == f) return name;
  throw Error(ErrorCode::ConfigError, "custom h cannot be written to a model file");
}

inline HSpec read_h(const Section& s) {
  const std::string name = s.text("h");
  const auto it = h_families().find(name);
  if (it == h_families().end()) throw Error(ErrorCode::ConfigError, "[nonlinear] unknown h family '" + name + "'");
  switch (it->second) {
    case HSpec::Family::AbsPower: return HSpec::abs_power(s.number("h_rho"), s.number_or("h_a", 0.0));
    case HSpec::Family::ShiftedPower: return HSpec::shifted_power(s.number("h_rho"), s.number_or("h_a", 0.0));
    case HSpec::Family::SmoothPower: return HSpec::smooth_power(s.number("h_rho"), s.number_or("h_a", 0.0));
    case HSpec::Family::TwoAbsPower:
      return HSpec::two_abs_power(s.number("h_rho1"), s.number("h_rho2"), s.number_or("h_a1", 0.0),
                                  s.number_or("h_a2", 0.0));
    case HSpec::Family::TwoShiftedPower:
      return HSpec::two_shifted_power(s.number("h_rho1"), s.number("h_rho2"), s.number_or("h_a1", 0.0),
                                      s.number_or("h_a2", 0.0));
    default:
      return HSpec::two_smooth_power(s.number("h_rho1"), s.number("h_rho2"), s.number_or("h_a1", 0.0),
                                     s.number_or("h_a2", 0.0));
  }
}

inline SlopeKind read_slope(const Section& s) {
  const std::string k = s.text_or("slope", "S1");
  if (k == "S1") return SlopeKind::S1;
  if (k == "S2") return SlopeKind::S2;
  throw Error(ErrorCode::ConfigError, "[nonlinear] slope must be S1 or S2");
}

inline std::string list_text(const std::vector<double>& v) {
  std::ostringstream os;
  os.precision(17);
  os << '[';
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << ']';
  return os.str();
}

}  // namespace detail

inline ModelFile parse_model(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  for (const auto& kv : tree) {
    if (kv.first != "model" && kv.first != "nonlinear" && kv.first != "noise" && kv.first != "run")
      throw Error(ErrorCode::ConfigError, "unknown section or top-level key '" + kv.first + "'");
  }
  auto section = [&tree](const std::string& name) {
    const auto it = tree.find(name);
    return detail::Section(name, it == tree.not_found() ? nullptr : &it->second);
  };

  const detail::Section m = section("model");
  std::vector<double> pi;
  if (m.has("pi") && m.has("phi")) throw Error(ErrorCode::ConfigError, "[model] give either pi or phi, not both");
  if (m.has("phi")) pi = decompose_unit_root(m.list("phi"));
  else if (m.has("pi")) pi = m.list("pi");
  if (m.has("p") && m.integer("p") != pi.size() + 1)
    throw Error(ErrorCode::ConfigError, "[model] p disagrees with the number of coefficients");
  m.finish();

  const detail::Section nl = section("nonlinear");
  const std::string family = nl.text_or("family", "zero");
  NonlinearTerm term;
  if (family == "zero") {
    term = ZeroTerm{};
  } else if (family == "lstar") {
    term = LstarIntercept{nl.number("nu1"), nl.number("nu2"), nl.number("b"), nl.number_or("a1", 0.0),
                          nl.number_or("a2", 0.0)};
  } else if (family == "estar") {
    EstarSlope e{detail::read_slope(nl), nl.number("r0"), nl.number_or("nu", 0.0), detail::read_h(nl)};
    term = e;
  } else if (family == "general_estar") {
    GeneralEstar g{detail::read_slope(nl), nl.number("r0"), detail::read_h(nl), nl.number("gamma"),
                   nl.list("theta")};
    term = g;
  } else {
    throw Error(ErrorCode::ConfigError, "[nonlinear] unknown family '" + family + "'");
  }
  nl.finish();

  const detail::Section nz = section("noise");
  const std::string kind = nz.text_or("kind", "gaussian");
  std::optional<NoiseSpec> noise;
  if (kind == "gaussian") {
    const double var = nz.number_or("variance", 1.0);
    const std::string mc = nz.text_or("moments", "subexponential");
    if (mc == "subexponential")
      noise = NoiseSpec::gaussian(var, SubexponentialMoments{nz.number_or("beta0", 1.0), nz.number_or("kappa0", 1.0)});
    else if (mc == "polynomial")
      noise = NoiseSpec::gaussian(var, PolynomialMoments{nz.number("s0")});
    else
      throw Error(ErrorCode::ConfigError, "[noise] moments must be subexponential or polynomial");
  } else if (kind == "student_t") {
    const double df = nz.number("df");
    const double var = nz.number_or("variance", 1.0);
    std::optional<double> s0;
    if (nz.has("s0")) s0 = nz.number("s0");
    if (nz.has("moments") && nz.text("moments") != "polynomial")
      throw Error(ErrorCode::ConfigError, "[noise] Student t errors only have polynomial moments");
    noise = NoiseSpec::student_t(df, var, s0);
  } else {
    throw Error(ErrorCode::ConfigError, "[noise] unknown kind '" + kind + "'");
  }
  nz.finish();

  const detail::Section r = section("run");
  RunConfig run;
  if (r.has("n")) run.n = r.integer("n");
  if (r.has("burn_in")) run.burn_in = r.integer("burn_in");
  if (r.has("seed")) run.seed = r.integer("seed");
  if (r.has("reps")) run.reps = r.integer("reps");
  if (r.has("max_lag")) run.max_lag = r.integer("max_lag");
  if (r.has("horizons")) {
    run.horizons.clear();
    for (double h : r.list("horizons")) {
      if (h < 1 || h != std::floor(h)) throw Error(ErrorCode::ConfigError, "[run] horizons must be positive integers");
      run.horizons.push_back(static_cast<std::size_t>(h));
    }
  }
  if (r.has("x0")) run.x0 = r.list("x0");
  r.finish();

  return ModelFile{ModelSpec(std::move(pi), std::move(term), std::move(*noise)), run};
}

inline ModelFile load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open model file '" + path + "'");
  return parse_model(in);
}

/// Writes a model file that parse_model reads back to an identical model.
inline void write_model(std::ostream& os, const ModelSpec& model, const RunConfig& run = {}) {
  os.precision(17);
  os << "[model]\n";
  os << "p = " << model.p() << '\n';
  os << "pi = " << detail::list_text(model.pi()) << "\n\n";

  auto h_lines = [&os](const HSpec& h) {
    os << "h = \"" << detail::h_family_name(h.family()) << "\"\n";
    if (h.is_pair()) {
      os << "h_rho1 = " << h.rho1() << "\nh_rho2 = " << h.rho2() << "\nh_a1 = " << h.a1() << "\nh_a2 = " << h.a2()
         << '\n';
    } else {
      os << "h_rho = " << h.rho1() << "\nh_a = " << h.a1() << '\n';
    }
  };
  os << "[nonlinear]\n";
  std::visit(
      [&](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, ZeroTerm>) {
          os << "family = \"zero\"\n";
        } else if constexpr (std::is_same_v<T, LstarIntercept>) {
          os << "family = \"lstar\"\nnu1 = " << t.nu1 << "\nnu2 = " << t.nu2 << "\nb = " << t.b << "\na1 = " << t.a1
             << "\na2 = " << t.a2 << '\n';
        } else if constexpr (std::is_same_v<T, EstarSlope>) {
          os << "family = \"estar\"\nslope = \"" << (t.kind == SlopeKind::S1 ? "S1" : "S2") << "\"\nr0 = " << t.r0
             << "\nnu = " << t.nu << '\n';
          h_lines(t.h);
        } else if constexpr (std::is_same_v<T, GeneralEstar>) {
          os << "family = \"general_estar\"\nslope = \"" << (t.kind == SlopeKind::S1 ? "S1" : "S2")
             << "\"\nr0 = " << t.r0 << "\ngamma = " << t.gamma << "\ntheta = " << detail::list_text(t.theta) << '\n';
          h_lines(t.h);
        } else {
          throw Error(ErrorCode::ConfigError, "custom terms cannot be written to a model file");
        }
      },
      model.nonlinear());
  os << '\n';

  os << "[noise]\n";
  std::visit(
      [&](const auto& k) {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, Gaussian>) {
          os << "kind = \"gaussian\"\nvariance = " << k.variance << '\n';
          if (const auto* sub = std::get_if<SubexponentialMoments>(&model.noise().moments()))
            os << "moments = \"subexponential\"\nbeta0 = " << sub->beta0 << "\nkappa0 = " << sub->kappa0 << '\n';
          else
            os << "moments = \"polynomial\"\ns0 = " << std::get<PolynomialMoments>(model.noise().moments()).s0 << '\n';
        } else if constexpr (std::is_same_v<T, ScaledStudentT>) {
          os << "kind = \"student_t\"\ndf = " << k.df << "\nvariance = " << k.variance
             << "\ns0 = " << std::get<PolynomialMoments>(model.noise().moments()).s0 << '\n';
        } else {
          throw Error(ErrorCode::ConfigError, "custom noise cannot be written to a model file");
        }
      },
      model.noise().kind());
  os << '\n';

  os << "[run]\n";
  os << "n = " << run.n << "\nburn_in = " << run.burn_in << "\nseed = " << run.seed << "\nreps = " << run.reps
     << "\nmax_lag = " << run.max_lag << '\n';
  std::vector<double> hz(run.horizons.begin(), run.horizons.end());
  os << "horizons = " << detail::list_text(hz) << '\n';
  if (run.x0) os << "x0 = " << detail::list_text(*run.x0) << '\n';
}

inline std::string model_text(const ModelSpec& model, const RunConfig& run = {}) {
  std::ostringstream os;
  write_model(os, model, run);
  return os.str();
}

}  // namespace nlar
