// Command-line front end. Talks to the library only through rfuse.h.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "rfuse/rfuse.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNotConverged = 2;

int report_failure(const char* what, rfuse_status status) {
  std::cerr << "error: " << what << ": " << rfuse_status_string(status);
  const char* detail = rfuse_last_error();
  if (detail && *detail) std::cerr << ": " << detail;
  std::cerr << "\n";
  return kExitError;
}

bool emit(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return static_cast<bool>(std::cout);
  }
  std::ofstream out(path, std::ios::binary);
  out << text;
  return static_cast<bool>(out);
}

const std::map<std::string, rfuse_format> kFormats{
    {"auto", RFUSE_FORMAT_AUTO}, {"csv", RFUSE_FORMAT_CSV}, {"json", RFUSE_FORMAT_JSON}};
const std::map<std::string, rfuse_weighting> kWeightings{{"identity", RFUSE_VK_IDENTITY},
                                                         {"invcov", RFUSE_VK_INVCOV}};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust fusion of summary statistics from possibly biased sources"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(rfuse_version()));

  // fuse
  auto* fuse = app.add_subcommand("fuse", "Fuse the sources in a summary file");
  std::string fuse_path;
  rfuse_format fuse_format = RFUSE_FORMAT_AUTO;
  rfuse_weighting fuse_vk = RFUSE_VK_IDENTITY;
  rfuse_fuse_options fopts;
  rfuse_fuse_options_default(&fopts);
  bool fuse_json = false;
  std::string fuse_out;
  fuse->add_option("file", fuse_path, "Summary file (CSV or JSON)")->required()->check(CLI::ExistingFile);
  fuse->add_option("--format", fuse_format, "Input format")
      ->transform(CLI::CheckedTransformer(kFormats, CLI::ignore_case));
  fuse->add_option("--vk", fuse_vk, "Weighting matrices")
      ->transform(CLI::CheckedTransformer(kWeightings, CLI::ignore_case));
  fuse->add_option("--lambda-c", fopts.lambda_c, "Penalty constant c in lambda = c / n")
      ->check(CLI::PositiveNumber)->capture_default_str();
  fuse->add_option("--alpha", fopts.alpha, "Adaptive weight exponent")
      ->check(CLI::PositiveNumber)->capture_default_str();
  fuse->add_option("--tol", fopts.tol, "Solver tolerance")->check(CLI::PositiveNumber)->capture_default_str();
  fuse->add_option("--max-iter", fopts.max_iter, "Penalized solver sweep cap")
      ->check(CLI::PositiveNumber)->capture_default_str();
  fuse->add_option("--level", fopts.level, "Interval level")
      ->check(CLI::Range(0.0, 1.0))->capture_default_str();
  fuse->add_flag("--json", fuse_json, "Write the report as JSON");
  fuse->add_option("-o,--out", fuse_out, "Write the report here instead of stdout");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Run a simulation design and print its metrics");
  rfuse_sim_options sopts;
  rfuse_sim_options_default(&sopts);
  std::string design;
  std::string sim_out;
  bool pretty = false;
  bool sweep = false;
  sim->add_option("design", design, "table1, table2, table3, table4, table5 or counterexample")
      ->required()
      ->check(CLI::IsMember({"table1", "table2", "table3", "table4", "table5", "counterexample"}));
  sim->add_option("--d", sopts.d, "Parameter dimension (multiple of 3)")->check(CLI::PositiveNumber);
  sim->add_option("--K", sopts.K, "Number of sources")->check(CLI::PositiveNumber);
  sim->add_option("--nstar", sopts.n_star, "Sample size per source")->check(CLI::PositiveNumber);
  sim->add_option("--reps", sopts.replicates, "Replicates")->check(CLI::PositiveNumber);
  sim->add_option("--seed", sopts.seed, "Random seed")->capture_default_str();
  sim->add_option("--threads", sopts.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  sim->add_option("--lambda-c", sopts.lambda_c, "Penalty constant")->check(CLI::PositiveNumber)->capture_default_str();
  sim->add_option("--alpha", sopts.alpha, "Adaptive weight exponent")->check(CLI::PositiveNumber)->capture_default_str();
  sim->add_option("--vk", sopts.weighting, "Weighting matrices")
      ->transform(CLI::CheckedTransformer(kWeightings, CLI::ignore_case));
  sim->add_option("--n", sopts.total_n, "Total sample size (counterexample)")->check(CLI::PositiveNumber);
  sim->add_option("--tau", sopts.tau, "Excess unbiased share (counterexample)")->check(CLI::Range(0.0, 0.5));
  sim->add_option("--level", sopts.level, "Interval level for coverage")
      ->check(CLI::Range(0.0, 1.0))->capture_default_str();
  sim->add_flag("--pretty", pretty, "Print tables instead of CSV");
  sim->add_flag("--lambda-sweep", sweep, "Repeat for lambda constants 0.5, 1, 2, 5");
  sim->add_option("-o,--out", sim_out, "Write output here instead of stdout");

  // convert
  auto* conv = app.add_subcommand("convert", "Rewrite a summary file, optionally changing format");
  std::string conv_in, conv_out;
  rfuse_format conv_from = RFUSE_FORMAT_AUTO, conv_to = RFUSE_FORMAT_AUTO;
  conv->add_option("input", conv_in)->required()->check(CLI::ExistingFile);
  conv->add_option("output", conv_out)->required();
  conv->add_option("--from", conv_from)->transform(CLI::CheckedTransformer(kFormats, CLI::ignore_case));
  conv->add_option("--to", conv_to)->transform(CLI::CheckedTransformer(kFormats, CLI::ignore_case));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  if (*fuse) {
    rfuse_problem* problem = nullptr;
    rfuse_status st = rfuse_problem_load(fuse_path.c_str(), fuse_format, fuse_vk, &problem);
    if (st != RFUSE_OK) return report_failure("reading summary file", st);
    rfuse_fit* fit = nullptr;
    st = rfuse_fuse(problem, &fopts, &fit);
    rfuse_problem_free(problem);
    if (st != RFUSE_OK && st != RFUSE_NOT_CONVERGED) return report_failure("fusion", st);
    const bool converged = st == RFUSE_OK;
    char* text = nullptr;
    const rfuse_status rst = rfuse_fit_report(fit, fuse_json ? 1 : 0, &text);
    rfuse_fit_free(fit);
    if (rst != RFUSE_OK) return report_failure("report", rst);
    const bool ok = emit(text, fuse_out);
    rfuse_string_free(text);
    if (!ok) {
      std::cerr << "error: cannot write '" << fuse_out << "'\n";
      return kExitError;
    }
    if (!converged) std::cerr << "warning: solver did not converge; the last iterate is reported\n";
    return converged ? kExitOk : kExitNotConverged;
  }

  if (*sim) {
    sopts.design = design.c_str();
    sopts.pretty = pretty ? 1 : 0;
    sopts.lambda_sweep = sweep ? 1 : 0;
    char* text = nullptr;
    const rfuse_status st = rfuse_simulate(&sopts, &text);
    if (st != RFUSE_OK) return report_failure("simulation", st);
    const bool ok = emit(text, sim_out);
    rfuse_string_free(text);
    if (!ok) {
      std::cerr << "error: cannot write '" << sim_out << "'\n";
      return kExitError;
    }
    return kExitOk;
  }

  if (*conv) {
    rfuse_problem* problem = nullptr;
    rfuse_status st = rfuse_problem_load(conv_in.c_str(), conv_from, RFUSE_VK_IDENTITY, &problem);
    if (st != RFUSE_OK) return report_failure("reading summary file", st);
    st = rfuse_problem_write(problem, conv_out.c_str(), conv_to);
    rfuse_problem_free(problem);
    if (st != RFUSE_OK) return report_failure("writing summary file", st);
    return kExitOk;
  }
  return kExitError;
}
