#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "stiefel/problems.hpp"
#include "stiefel/solve_report.hpp"

namespace stiefel {

// Exit codes shared by the CLI and batch runner.
enum ExitCode : int { kExitConverged = 0, kExitInputError = 1, kExitMaxIter = 2, kExitAuditFailure = 3 };

ProblemSpec parse_problem(const nlohmann::json &doc);
ProblemSpec load_problem_file(const std::filesystem::path &path);
Mat parse_matrix(const nlohmann::json &value, const std::string &field);

// CSV traces. NPDo columns: iter,f,eps_kkt,eps_sym,gap_or_sigmamin,eta,step_angle,m_asymmetry.
// NEPv columns: iter,f,eps_nepv,gap_or_sigmamin,eta,step_angle,m_asymmetry.
std::string trace_header(Framework fw);
std::string trace_csv(const std::vector<IterationRecord> &trace, Framework fw);

struct TraceFile {
  Framework framework = Framework::NPDo;
  std::vector<IterationRecord> records;
};

TraceFile parse_trace_csv(std::istream &in);
TraceFile read_trace_csv(const std::filesystem::path &path);

void write_file_atomic(const std::filesystem::path &path, const std::string &content);

enum class Solver { NPDo, NPDoLOCG, NEPv, NEPvLOCG };

Solver parse_solver(const std::string &name);
const char *solver_name(Solver s);

struct RunOptions {
  Solver solver = Solver::NPDo;
  double tol = 1e-8;
  int max_iter = 5000;
  std::uint64_t seed = 0;
  int oracle_budget = 0; // 0 = no oracle
  std::set<std::string> audits; // grad, series, theta, certs
};

struct RunOutcome {
  int exit_code = kExitConverged;
  nlohmann::json report;
  std::vector<IterationRecord> trace;
  Framework framework = Framework::NPDo;
  Mat p; // final iterate in the problem's own coordinates
};

RunOutcome run_problem(const ProblemSpec &spec, const std::string &problem_name,
                       const RunOptions &opts);

// STIEFEL_SCF_LOG = off | info | debug (default: warnings only), logged to stderr.
void configure_logging();

int cli_main(int argc, char **argv);

} // namespace stiefel
