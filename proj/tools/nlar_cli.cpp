// nlar: simulate, classify, verify drift, check envelopes and estimate mixing
// for nonlinear autoregressions with a unit root in the linear part.
//
// Exit codes: 0 success/pass, 2 certified failure (drift fails, NotCovered, ...),
// 1 usage or configuration error.

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nlar/nlar.hpp"

namespace {

struct Options {
  std::string model_path;
  std::string out;
  std::string companion_csv;
  std::optional<std::size_t> n, burn_in, reps, max_lag;
  std::optional<std::uint64_t> seed;
  std::vector<std::size_t> horizons;
  std::vector<double> x0;
  std::string v_kind;
  std::optional<double> s0, rho;
  double tolerance = 0.0;
  bool no_shrink = false;
};

class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw nlar::Error(nlar::ErrorCode::ConfigError, "cannot write '" + path + "'");
    }
  }
  std::ostream& csv() { return file_ ? *file_ : std::cout; }
  // Run header goes to stdout unless stdout carries the CSV.
  std::ostream& header() { return file_ ? std::cout : std::cerr; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

void print_header(std::ostream& os, const std::string& cmd, const Options& o,
                  const std::vector<std::pair<std::string, std::string>>& settings) {
  os << "# nlar " << cmd << '\n';
  os << "# model = " << o.model_path << '\n';
  for (const auto& [k, v] : settings) os << "# " << k << " = " << v << '\n';
}

template <class T>
std::string str(const T& v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::string list_str(const std::vector<std::size_t>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s + "]";
}

void dump_companion(const nlar::ModelSpec& model, const std::string& path) {
  const nlar::CompanionForm c = nlar::build_companion(model);
  std::ofstream os(path);
  if (!os) throw nlar::Error(nlar::ErrorCode::ConfigError, "cannot write '" + path + "'");
  os.precision(17);
  os << "matrix,row,col,value\n";
  auto dump = [&os](const char* name, const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) os << name << ',' << i << ',' << j << ',' << m(i, j) << '\n';
  };
  dump("Phi", c.Phi);
  dump("A", c.A);
  dump("Pi", c.Pi);
  dump("P", c.P);
  os << "eta,0,0," << c.eta << '\n';
}

int run_simulate(const Options& o, const nlar::ModelFile& mf) {
  const std::size_t n = o.n.value_or(mf.run.n);
  const std::size_t burn = o.burn_in.value_or(mf.run.burn_in);
  const std::uint64_t seed = o.seed.value_or(mf.run.seed);
  Output out(o.out);
  print_header(out.header(), "simulate", o, {{"n", str(n)}, {"burn_in", str(burn)}, {"seed", str(seed)}, {"init", "zeros"}});
  const nlar::Trajectory traj = nlar::simulate(mf.model, n, burn, seed);
  nlar::write_trajectory_csv(out.csv(), traj);
  return 0;
}

int run_acf(const Options& o, const nlar::ModelFile& mf) {
  const std::size_t n = o.n.value_or(mf.run.n);
  const std::size_t burn = o.burn_in.value_or(mf.run.burn_in);
  const std::uint64_t seed = o.seed.value_or(mf.run.seed);
  const std::size_t lag = o.max_lag.value_or(mf.run.max_lag);
  Output out(o.out);
  print_header(out.header(), "acf", o,
               {{"n", str(n)}, {"burn_in", str(burn)}, {"seed", str(seed)}, {"max_lag", str(lag)}});
  const nlar::Trajectory traj = nlar::simulate(mf.model, n, burn, seed);
  nlar::write_acf_csv(out.csv(), nlar::acf(traj.y, lag));
  return 0;
}

int run_classify(const Options& o, const nlar::ModelFile& mf) {
  nlar::ClassifyExtra extra;
  extra.tolerance = o.tolerance;
  print_header(std::cout, "classify", o, {{"tolerance", str(o.tolerance)}});
  const nlar::RateCertificate cert = nlar::classify_model(mf.model, extra);
  nlar::write_text(std::cout, cert);
  std::cout << '\n';
  nlar::write_key_values(std::cout, cert);
  if (!o.out.empty()) {
    std::ofstream f(o.out);
    nlar::write_key_values(f, cert);
  }
  return 0;
}

int run_envelope(const Options& o, const nlar::ModelFile& mf) {
  const auto declared = nlar::declared_rho(mf.model);
  const double rho = o.rho ? *o.rho : declared.value_or(1.0);
  print_header(std::cout, "envelope", o, {{"rho", str(rho)}});
  const nlar::EnvelopeCertificate env = nlar::check_g_envelope(nlar::envelope_map(mf.model), rho);
  std::cout << "pass = " << (env.pass ? "true" : "false") << "\nrho = " << env.rho << "\nr = " << env.r
            << "\nM0 = " << env.M0 << "\nK0 = " << env.K0 << "\nworst_margin = " << env.worst_margin
            << "\nworst_u = " << env.worst_u << '\n';
  return env.pass ? 0 : 2;
}

int run_verify_drift(const Options& o, const nlar::ModelFile& mf) {
  nlar::MonteCarloConfig mc;
  mc.reps = o.reps.value_or(200000);
  mc.seed = o.seed.value_or(mf.run.seed);

  std::optional<nlar::DriftSpec> spec;
  std::string v_desc;
  if (o.v_kind.empty()) {
    const nlar::RateCertificate cert = nlar::classify_model(mf.model);
    spec = nlar::implied_drift_spec(mf.model, cert);
    v_desc = "implied by " + nlar::to_string(cert.rate_class) + " certificate";
  } else if (o.v_kind == "poly") {
    const double rho = o.rho ? *o.rho : nlar::declared_rho(mf.model).value_or(1.0);
    const double s0 = o.s0.value_or(4.0);
    const nlar::PolynomialV v{s0, 0.01, rho};
    spec.emplace(v, nlar::PolyPhi{0.01, v.alpha()}, nlar::build_companion(mf.model));
    v_desc = "poly s0=" + str(s0) + " s1=0.01 rho=" + str(rho) + ", phi=poly c=0.01 alpha=" + str(v.alpha());
  } else if (o.v_kind == "subexp") {
    const nlar::RateCertificate cert = nlar::classify_model(mf.model);
    if (cert.rate_class == nlar::RateClass::Polynomial)
      throw nlar::Error(nlar::ErrorCode::NotCovered, "exponential V needs exponential-moment errors");
    spec = nlar::implied_drift_spec(mf.model, cert);
    v_desc = "subexp b3=" + str(cert.b3);
  } else {
    throw CLI::ValidationError("--V", "must be poly or subexp");
  }

  Output out(o.out);
  print_header(out.header(), "verify-drift", o,
               {{"V", v_desc},
                {"reps", str(mc.reps)},
                {"seed", str(mc.seed)},
                {"ci", "99% (z = 2.5758)"},
                {"antithetic", "on for symmetric errors"},
                {"auto_shrink", o.no_shrink ? "off" : "on (floor 1e-6)"}});
  nlar::DriftReport report;
  if (o.no_shrink) {
    report = nlar::verify_drift(mf.model, *spec, {}, mc);
  } else {
    nlar::ShrinkResult res = nlar::verify_drift_autoshrink(mf.model, *spec, {}, mc);
    out.header() << "# halvings = " << res.halvings << '\n';
    report = std::move(res.report);
  }
  auto& h = out.header();
  h << "# pass = " << (report.pass ? "true" : "false") << '\n';
  h << "# suggested_C_radius = " << report.suggested_C_radius << '\n';
  h << "# suggested_b = " << report.suggested_b << '\n';
  if (report.heavy_tail_guard) h << "# warning: error moments too low for a CLT interval; median-of-means used\n";
  if (report.proof_alpha) h << "# proof_alpha = " << *report.proof_alpha << '\n';
  nlar::write_drift_csv(out.csv(), report);
  return report.pass ? 0 : 2;
}

int run_mixing(const Options& o, const nlar::ModelFile& mf) {
  nlar::EnsembleConfig cfg;
  cfg.reps = o.reps.value_or(mf.run.reps);
  cfg.seed = o.seed.value_or(mf.run.seed);
  const std::vector<std::size_t> horizons = o.horizons.empty() ? mf.run.horizons : o.horizons;
  std::vector<double> x0 = !o.x0.empty() ? o.x0 : mf.run.x0.value_or(std::vector<double>(mf.model.p(), 0.0));
  Output out(o.out);
  std::string x0s = "[";
  for (std::size_t i = 0; i < x0.size(); ++i) x0s += (i ? ", " : "") + str(x0[i]);
  x0s += "]";
  print_header(out.header(), "mixing", o,
               {{"reps", str(cfg.reps)},
                {"seed", str(cfg.seed)},
                {"horizons", list_str(horizons)},
                {"x0", x0s},
                {"reference", "1000000 states, thinned by 10"}});
  const nlar::MixingReport report = nlar::ensemble_tv(mf.model, x0, horizons, cfg);
  out.header() << "# noise_floor = " << report.noise_floor << '\n';
  nlar::write_mixing_csv(out.csv(), report);
  try {
    const nlar::MixingFit fit = nlar::fit_mixing_rate(report);
    out.header() << "# fit = " << nlar::to_string(fit.class_guess) << " exponent = " << fit.exponent
                 << " poly_exponent = " << fit.poly_exponent << " geometric_rate = " << fit.geometric_rate
                 << " goodness = " << fit.goodness << '\n';
  } catch (const nlar::Error& e) {
    out.header() << "# fit: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonlinear autoregressions with unit-root tails: simulation, drift checks and rate certificates"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&o](CLI::App* sub) {
    sub->add_option("--model", o.model_path, "Model file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "Output file (CSV or key/value)");
    sub->add_option("--seed", o.seed, "Random seed");
    sub->add_option("--companion-csv", o.companion_csv, "Write the companion matrices to this CSV");
  };

  auto* sim = app.add_subcommand("simulate", "Simulate a trajectory");
  add_common(sim);
  sim->add_option("--n", o.n, "Observations after burn-in");
  sim->add_option("--burn-in", o.burn_in, "Discarded initial steps");

  auto* acf = app.add_subcommand("acf", "Sample autocorrelations of a simulated trajectory");
  add_common(acf);
  acf->add_option("--n", o.n, "Observations after burn-in");
  acf->add_option("--burn-in", o.burn_in, "Discarded initial steps");
  acf->add_option("--max-lag", o.max_lag, "Largest lag");

  auto* cls = app.add_subcommand("classify", "Ergodicity-rate certificate");
  add_common(cls);
  cls->add_option("--tolerance", o.tolerance, "Tolerance for the rho = kappa0 borderline");

  auto* env = app.add_subcommand("envelope", "Check the tail envelope of the scalar map g");
  add_common(env);
  env->add_option("--rho", o.rho, "Tail exponent (default: implied by the model)");

  auto* drift = app.add_subcommand("verify-drift", "Monte Carlo check of the drift condition");
  add_common(drift);
  drift->add_option("--V", o.v_kind, "Lyapunov function: poly or subexp (default: implied by the certificate)")
      ->check(CLI::IsMember({"poly", "subexp"}));
  drift->add_option("--s0", o.s0, "Polynomial V exponent");
  drift->add_option("--rho", o.rho, "Tail exponent for polynomial V");
  drift->add_option("--reps", o.reps, "Monte Carlo draws per grid point (default 200000)");
  drift->add_flag("--no-shrink", o.no_shrink, "Do not shrink the small constants on failure");

  auto* mix = app.add_subcommand("mixing", "Ensemble total-variation decay");
  add_common(mix);
  mix->add_option("--reps", o.reps, "Chains per horizon");
  mix->add_option("--horizons", o.horizons, "Horizons (strictly increasing)")->delimiter(',');
  mix->add_option("--x0", o.x0, "Initial state (p values)")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const nlar::ModelFile mf = nlar::load_model(o.model_path);
    if (!o.companion_csv.empty()) dump_companion(mf.model, o.companion_csv);
    if (sim->parsed()) return run_simulate(o, mf);
    if (acf->parsed()) return run_acf(o, mf);
    if (cls->parsed()) return run_classify(o, mf);
    if (env->parsed()) return run_envelope(o, mf);
    if (drift->parsed()) return run_verify_drift(o, mf);
    if (mix->parsed()) return run_mixing(o, mf);
  } catch (const nlar::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    switch (e.code()) {
      case nlar::ErrorCode::NotCovered:
      case nlar::ErrorCode::EnvelopeMissing:
      case nlar::ErrorCode::BorderlineAmbiguous:
      case nlar::ErrorCode::InsufficientDecay:
      case nlar::ErrorCode::BudgetExceeded:
        return 2;
      default:
        return 1;
    }
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
