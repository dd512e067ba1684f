// Command-line driver: homogenize | correct | validate.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "twoscale/report.hpp"

namespace fs = std::filesystem;
using namespace twoscale;

namespace {

enum Exit { kOk = 0, kPipeline = 1, kConfig = 2, kDegenerate = 3, kAcceptance = 4 };

struct Options {
  std::string config;
  std::string out;
  int order = -1;
  std::string eps;
  bool print_defaults = false;
  bool allow_high_order = false;
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::InvalidArgument, "cannot write " + path.string());
  f << text;
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

FullConfig resolve_config(const Options& o) {
  FullConfig fc = o.config.empty() ? FullConfig{defaults_for("well-1d"), {}} : load_config(o.config);
  if (o.allow_high_order) fc.run.allow_high_order = true;
  if (o.order >= 0) fc.run.order = o.order;
  if (!o.eps.empty() && !detail::parse_real_list(o.eps, fc.run.eps))
    throw ConfigError(0, "--eps", "expected a comma-separated list of numbers");
  check_config(fc, [](const std::string&) { return 0; });
  return fc;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_homogenize(const FullConfig& fc, const fs::path& out) {
  Pipeline p(fc.run);
  const auto& hom = p.homogenized();
  {
    std::ofstream f(out / "homogenized.csv", std::ios::binary);
    write_homogenized_csv(f, hom, p.spatial());
  }
  const ordered_json j = homogenize_json(p);
  write_file(out / "homogenize.json", dump(j));
  std::cout << "identity residuals: " << csv_real(p.identities().first) << ", " << csv_real(p.identities().second)
            << "\n";
  if (!j["identities_hold"].get<bool>()) {
    std::cerr << "error: IdentityViolation: corrector identities exceed " << csv_real(fc.run.identity_tol) << "\n";
    return kPipeline;
  }
  return kOk;
}

void print_ledger(const CorrectionLedger& L) {
  std::cout << "lambda0 = " << csv_real(L.lambda0);
  if (L.lambda0_extrapolated) std::cout << " (extrapolated " << csv_real(*L.lambda0_extrapolated) << ")";
  std::cout << "\n";
  for (int j = 1; j <= L.order; ++j) {
    std::cout << "lambda" << j << " =";
    for (double v : L.lambda[j]) std::cout << ' ' << csv_real(v);
    std::cout << "\n";
  }
}

int cmd_correct(const FullConfig& fc, const fs::path& out) {
  Pipeline p(fc.run);
  const auto& L = p.ledger();
  write_file(out / "ledger.json", dump(ledger_json(L, p.spec().name)));
  print_ledger(L);
  return kOk;
}

int cmd_validate(const FullConfig& fc, const fs::path& out) {
  Pipeline p(fc.run);
  const auto& L = p.ledger();
  write_file(out / "ledger.json", dump(ledger_json(L, p.spec().name)));
  print_ledger(L);
  const SweepReport rep = p.sweep();
  {
    std::ofstream f(out / "sweep.csv", std::ios::binary);
    write_sweep_csv(f, rep);
  }
  const ValidateVerdict verdict = judge_sweep(rep, fc.thresholds);
  write_file(out / "sweep.json", dump(sweep_json(rep, verdict)));
  for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
  for (int i = 0; i < rep.N; ++i) {
    std::cout << "branch " << i + 1 << " slopes:";
    for (int k = 0; k <= rep.K; ++k) {
      const SlopeFit& s = rep.err_slopes[i][k];
      std::cout << " err_k" << k << '=' << (s.exact ? "exact" : s.slope ? csv_real(*s.slope) : "n/a");
    }
    for (int k = 1; k <= rep.K; ++k) {
      const SlopeFit& s = rep.res_slopes[i][k - 1];
      std::cout << " res_k" << k << '=' << (s.slope ? csv_real(*s.slope) : "n/a");
    }
    std::cout << "\n";
  }
  if (!verdict.pass) {
    for (const auto& r : verdict.reasons) std::cerr << "acceptance: " << r << "\n";
    return kAcceptance;
  }
  return kOk;
}

void print_defaults(const Options& o) {
  std::string problem = "well-1d";
  if (!o.config.empty()) problem = load_config(o.config).run.problem;
  std::cout << "# Default configuration for problem '" << problem << "'.\n";
  std::cout << "# Available problems:\n";
  for (const auto& e : catalog()) std::cout << "#   " << e.name << ": " << e.description << "\n";
  std::cout << "#   gaussian-well: alias of well-1d\n";
  std::cout << "# Selecting another problem in [problem] switches every default below to its tuned values.\n\n";
  std::cout << render_config(FullConfig{defaults_for(problem), {}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-scale homogenization and eigenvalue asymptotics"};
  Options o;
  app.add_option("--config", o.config, "configuration file");
  app.add_option("--out", o.out, "output directory");
  app.add_option("--order", o.order, "maximal correction order k");
  app.add_option("--eps", o.eps, "comma-separated eps list, e.g. 1/8,1/16");
  app.add_flag("--print-defaults", o.print_defaults, "print the default configuration and exit");
  app.add_flag("--allow-high-order", o.allow_high_order, "permit correction orders above 4");
  app.fallthrough();
  app.require_subcommand(0, 1);
  auto* homog = app.add_subcommand("homogenize", "effective coefficients and identity report");
  auto* correct = app.add_subcommand("correct", "eigenvalue correction ledger");
  auto* validate = app.add_subcommand("validate", "ledger plus direct-solve sweep");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }
  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (o.print_defaults) {
      print_defaults(o);
      return kOk;
    }
    if (app.get_subcommands().empty()) {
      std::cerr << "error: choose one of homogenize, correct, validate\n";
      return kConfig;
    }
    if (o.config.empty()) throw ConfigError(0, "--config", "a configuration file is required");
    if (o.out.empty()) throw ConfigError(0, "--out", "an output directory is required");
    const FullConfig fc = resolve_config(o);
    const fs::path out(o.out);
    fs::create_directories(out);
    int rc = kOk;
    if (homog->parsed()) rc = cmd_homogenize(fc, out);
    if (correct->parsed()) rc = cmd_correct(fc, out);
    if (validate->parsed()) rc = cmd_validate(fc, out);
    std::cout << "elapsed " << seconds_since(t0) << " s\n";
    return rc;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::DegenerateT) {
      std::cerr << "error: " << e.what()
                << "\nThe asymptotic expansion assumes that the eigenvalues of T are pairwise distinct; this "
                   "cluster violates that hypothesis, so no correction ledger is produced.\n";
      return kDegenerate;
    }
    if (e.code() == ErrorCode::OrderLimit) {
      std::cerr << "error: " << e.what() << "\n";
      return kConfig;
    }
    std::cerr << "error: " << e.what() << "\n";
    return kPipeline;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kPipeline;
  }
}
