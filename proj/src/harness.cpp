#include "stiefel/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "stiefel/diagnostics.hpp"
#include "stiefel/nepv.hpp"
#include "stiefel/npdo.hpp"

namespace stiefel {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Error invalid(const std::string &msg) { return Error(ErrorCode::InvalidProblem, msg); }

Index require_index(const json &doc, const std::string &field, bool required) {
  if (!doc.contains(field)) {
    if (required)
      throw invalid("field '" + field + "' is required");
    return 0;
  }
  const json &v = doc.at(field);
  if (!v.is_number_integer() || v.get<long long>() <= 0)
    throw invalid("field '" + field + "' must be a positive integer");
  return static_cast<Index>(v.get<long long>());
}

std::vector<Index> parse_index_list(const json &v, const std::string &field) {
  if (!v.is_array())
    throw invalid("field '" + field + "' must be a list of column indices");
  std::vector<Index> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number_integer() || v[i].get<long long>() < 0)
      throw invalid("field '" + field + "[" + std::to_string(i) +
                    "]' must be a non-negative integer");
    out.push_back(static_cast<Index>(v[i].get<long long>()));
  }
  return out;
}

std::string require_string(const json &doc, const std::string &field) {
  if (!doc.at(field).is_string())
    throw invalid("field '" + field + "' must be a string");
  return doc.at(field).get<std::string>();
}

double require_number(const json &doc, const std::string &field) {
  if (!doc.at(field).is_number())
    throw invalid("field '" + field + "' must be a number");
  return doc.at(field).get<double>();
}

std::vector<Mat> parse_matrix_list(const json &v, const std::string &field) {
  if (!v.is_array() || v.empty())
    throw invalid("field '" + field + "' must be a non-empty list of matrices");
  std::vector<Mat> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back(parse_matrix(v[i], field + "[" + std::to_string(i) + "]"));
  return out;
}

CustomTermSpec parse_term(const json &t, const std::string &field) {
  if (!t.is_object())
    throw invalid("field '" + field + "' must be an object");
  static const std::set<std::string> allowed = {"kind", "matrix", "m", "s", "c", "columns"};
  for (const auto &[key, _] : t.items())
    if (!allowed.count(key))
      throw invalid("unknown field '" + field + "." + key + "'");
  CustomTermSpec spec;
  if (!t.contains("kind") || !t.contains("matrix"))
    throw invalid("field '" + field + "' needs 'kind' and 'matrix'");
  const std::string kind = require_string(t, "kind");
  if (kind == "linear")
    spec.kind = AtomKind::LinearTrace;
  else if (kind == "quadratic")
    spec.kind = AtomKind::QuadraticTrace;
  else
    throw invalid("field '" + field + ".kind' must be 'linear' or 'quadratic'");
  spec.matrix = require_string(t, "matrix");
  if (t.contains("m")) {
    if (!t["m"].is_number_integer() || t["m"].get<int>() < 1)
      throw invalid("field '" + field + ".m' must be a positive integer");
    spec.m = t["m"].get<int>();
  }
  if (t.contains("s"))
    spec.s = require_number(t, "s");
  if (t.contains("c"))
    spec.c = require_number(t, "c");
  if (t.contains("columns"))
    spec.columns = parse_index_list(t["columns"], field + ".columns");
  return spec;
}

std::string format_double(double x) {
  if (std::isnan(x))
    return "nan";
  if (std::isinf(x))
    return x > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

double parse_double(const std::string &s) {
  if (s == "nan")
    return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf")
    return std::numeric_limits<double>::infinity();
  if (s == "-inf")
    return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size())
    throw std::invalid_argument(s);
  return v;
}

// JSON cannot carry inf/nan; report those as null-free strings.
json finite_or_string(double x) { return std::isfinite(x) ? json(x) : json(format_double(x)); }

json certificates_json(const Certificates &c, Framework fw) {
  json out;
  out["lambda_min"] = finite_or_string(c.lambda_min);
  out["lambda_norm"] = finite_or_string(c.lambda_norm);
  out["eps_kkt"] = finite_or_string(c.eps_kkt);
  out["eps_sym"] = finite_or_string(c.eps_sym);
  if (c.has_field) {
    out["eps_nepv"] = finite_or_string(c.eps_nepv);
    out["omega_topk_deviation"] = finite_or_string(c.omega_topk_deviation);
    out["h_norm2"] = finite_or_string(c.h_norm2);
    out["m_asymmetry"] = finite_or_string(c.m_asymmetry);
  }
  if (c.scriptd.applicable) {
    out["scriptd_min_eig"] = finite_or_string(c.scriptd.min_eig);
    out["scriptd_scale"] = finite_or_string(c.scriptd.scale);
    out["scriptd_feasible"] = c.scriptd.feasible(1e-8);
  }
  // pass flags for the stationarity certificates of the chosen framework
  if (fw == Framework::NPDo) {
    out["pass"] = c.lambda_min >= -1e-8 * std::max(c.lambda_norm, 1e-300) && c.eps_sym <= 1e-8;
  } else {
    out["pass"] = c.has_field && c.omega_topk_deviation <= 1e-6 * std::max(c.h_norm2, 1e-300) &&
                  c.m_asymmetry <= 1e-6;
  }
  return out;
}

const ComposedObjective *theta_source(const ComposedObjective &obj) {
  return obj.recipe == FieldRecipe::ThetaTR && obj.theta ? &obj : nullptr;
}

} // namespace

Mat parse_matrix(const json &value, const std::string &field) {
  if (!value.is_array() || value.empty())
    throw invalid("field '" + field + "' must be a non-empty array of rows");
  const std::size_t rows = value.size();
  std::size_t cols = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    const json &row = value[i];
    if (!row.is_array() || row.empty())
      throw invalid("field '" + field + "' row " + std::to_string(i) + " must be a non-empty array");
    if (i == 0)
      cols = row.size();
    else if (row.size() != cols)
      throw invalid("field '" + field + "' row " + std::to_string(i) + " has " +
                    std::to_string(row.size()) + " entries, expected " + std::to_string(cols));
  }
  Mat m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      const json &e = value[i][j];
      if (!e.is_number())
        throw invalid("field '" + field + "' entry (" + std::to_string(i) + "," +
                      std::to_string(j) + ") is not a number");
      m(i, j) = e.get<double>();
      if (!std::isfinite(m(i, j)))
        throw invalid("field '" + field + "' entry (" + std::to_string(i) + "," +
                      std::to_string(j) + ") is not finite");
    }
  return m;
}

ProblemSpec parse_problem(const json &doc) {
  if (!doc.is_object())
    throw invalid("problem file must be a JSON object");
  static const std::set<std::string> allowed = {
      "name",  "family",  "n",     "k",     "theta",     "matrices",        "blocks",
      "phi",   "squared", "terms", "outer", "recipe",    "alignment", "alignment_matrix"};
  for (const auto &[key, _] : doc.items())
    if (!allowed.count(key))
      throw invalid("unknown field '" + key + "'");
  ProblemSpec spec;
  if (!doc.contains("family"))
    throw invalid("field 'family' is required");
  spec.family = parse_family(require_string(doc, "family"));
  spec.n = require_index(doc, "n", true);
  spec.k = require_index(doc, "k", true);
  if (spec.k > spec.n)
    throw invalid("field 'k' must not exceed field 'n'");
  if (doc.contains("name"))
    spec.name = require_string(doc, "name");
  if (doc.contains("theta"))
    spec.theta = require_number(doc, "theta");
  if (doc.contains("phi"))
    spec.phi = require_string(doc, "phi");
  if (doc.contains("squared")) {
    if (!doc["squared"].is_boolean())
      throw invalid("field 'squared' must be a boolean");
    spec.squared = doc["squared"].get<bool>();
  }
  for (const char *key : {"outer", "recipe", "alignment", "alignment_matrix"})
    if (doc.contains(key)) {
      const std::string v = require_string(doc, key);
      if (std::string(key) == "outer")
        spec.outer = v;
      else if (std::string(key) == "recipe")
        spec.recipe = v;
      else if (std::string(key) == "alignment")
        spec.alignment = v;
      else
        spec.alignment_matrix = v;
    }
  if (doc.contains("matrices")) {
    const json &mats = doc["matrices"];
    if (!mats.is_object())
      throw invalid("field 'matrices' must be an object");
    for (const auto &[key, value] : mats.items()) {
      if (key == "A_list")
        spec.a_list = parse_matrix_list(value, "matrices.A_list");
      else if (key == "D_list")
        spec.d_list = parse_matrix_list(value, "matrices.D_list");
      else
        spec.matrices[key] = parse_matrix(value, "matrices." + key);
    }
  }
  if (doc.contains("blocks")) {
    const json &b = doc["blocks"];
    if (!b.is_array())
      throw invalid("field 'blocks' must be a list of column-index lists");
    for (std::size_t i = 0; i < b.size(); ++i)
      spec.blocks.push_back(parse_index_list(b[i], "blocks[" + std::to_string(i) + "]"));
  }
  if (doc.contains("terms")) {
    const json &t = doc["terms"];
    if (!t.is_array())
      throw invalid("field 'terms' must be a list");
    for (std::size_t i = 0; i < t.size(); ++i)
      spec.terms.push_back(parse_term(t[i], "terms[" + std::to_string(i) + "]"));
  }
  if (spec.matrices.count("M")) {
    const Mat &m = spec.matrices.at("M");
    if (m.rows() != spec.n || m.cols() != spec.n)
      throw invalid("field 'matrices.M' must be n x n");
  }
  return spec;
}

ProblemSpec load_problem_file(const fs::path &path) {
  std::ifstream in(path);
  if (!in)
    throw invalid("cannot open problem file '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error &e) {
    throw invalid("problem file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  ProblemSpec spec = parse_problem(doc);
  if (spec.name.empty())
    spec.name = path.stem().string();
  return spec;
}

std::string trace_header(Framework fw) {
  return fw == Framework::NPDo
             ? "iter,f,eps_kkt,eps_sym,gap_or_sigmamin,eta,step_angle,m_asymmetry"
             : "iter,f,eps_nepv,gap_or_sigmamin,eta,step_angle,m_asymmetry";
}

std::string trace_csv(const std::vector<IterationRecord> &trace, Framework fw) {
  std::ostringstream os;
  os << trace_header(fw) << '\n';
  for (const auto &r : trace) {
    os << r.iter << ',' << format_double(r.f) << ',';
    if (fw == Framework::NPDo)
      os << format_double(r.eps_kkt) << ',' << format_double(r.eps_sym) << ','
         << format_double(r.sigma_min);
    else
      os << format_double(r.eps_nepv) << ',' << format_double(r.gap);
    os << ',' << format_double(r.eta) << ',' << format_double(r.step_angle) << ','
       << format_double(r.m_asymmetry) << '\n';
  }
  return os.str();
}

TraceFile parse_trace_csv(std::istream &in) {
  TraceFile out;
  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::InvalidArgument, "trace is empty");
  if (!line.empty() && line.back() == '\r')
    line.pop_back();
  if (line == trace_header(Framework::NPDo))
    out.framework = Framework::NPDo;
  else if (line == trace_header(Framework::NEPv))
    out.framework = Framework::NEPv;
  else
    throw Error(ErrorCode::InvalidArgument, "unrecognized trace header '" + line + "'");
  const std::size_t ncol = out.framework == Framework::NPDo ? 8 : 7;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ','))
      cells.push_back(cell);
    if (cells.size() != ncol)
      throw Error(ErrorCode::InvalidArgument,
                  "trace line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                      " columns, expected " + std::to_string(ncol));
    IterationRecord r;
    try {
      std::size_t c = 0;
      r.iter = std::stoi(cells[c++]);
      r.f = parse_double(cells[c++]);
      if (out.framework == Framework::NPDo) {
        r.eps_kkt = parse_double(cells[c++]);
        r.eps_sym = parse_double(cells[c++]);
        r.sigma_min = parse_double(cells[c++]);
      } else {
        r.eps_nepv = parse_double(cells[c++]);
        r.gap = parse_double(cells[c++]);
      }
      r.eta = parse_double(cells[c++]);
      r.step_angle = parse_double(cells[c++]);
      r.m_asymmetry = parse_double(cells[c++]);
    } catch (const std::exception &) {
      throw Error(ErrorCode::InvalidArgument,
                  "trace line " + std::to_string(lineno) + " has a malformed number");
    }
    out.records.push_back(r);
  }
  if (out.records.empty())
    throw Error(ErrorCode::InvalidArgument, "trace has no rows");
  return out;
}

TraceFile read_trace_csv(const fs::path &path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::InvalidArgument, "cannot open trace '" + path.string() + "'");
  return parse_trace_csv(in);
}

void write_file_atomic(const fs::path &path, const std::string &content) {
  if (path.has_parent_path())
    fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out)
      throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

Solver parse_solver(const std::string &name) {
  if (name == "npdo")
    return Solver::NPDo;
  if (name == "npdo-locg")
    return Solver::NPDoLOCG;
  if (name == "nepv")
    return Solver::NEPv;
  if (name == "nepv-locg")
    return Solver::NEPvLOCG;
  throw Error(ErrorCode::InvalidArgument, "unknown solver '" + name + "'");
}

const char *solver_name(Solver s) {
  switch (s) {
  case Solver::NPDo:
    return "npdo";
  case Solver::NPDoLOCG:
    return "npdo-locg";
  case Solver::NEPv:
    return "nepv";
  case Solver::NEPvLOCG:
    return "nepv-locg";
  }
  return "?";
}

RunOutcome run_problem(const ProblemSpec &spec, const std::string &problem_name,
                       const RunOptions &opts) {
  RunOutcome out;
  const ComposedObjective obj = build(spec);
  std::optional<LiftedObjective> lifted;
  if (spec.matrices.count("M"))
    lifted = lift_m_orthogonal(obj, spec.matrices.at("M"));
  const ComposedObjective &solve_obj = lifted ? lifted->objective : obj;

  for (const auto &a : opts.audits)
    if (a == "theta" && !(theta_source(obj) && opts.solver == Solver::NEPv && !lifted))
      throw Error(ErrorCode::InvalidArgument,
                  "theta audit needs a ThetaTR problem solved with --solver nepv");

  NepvConfig cfg;
  cfg.tol = opts.tol;
  cfg.max_iter = opts.max_iter;
  const Mat z0 = random_stiefel(solve_obj.n, solve_obj.k, opts.seed).basis();
  SolveReport rep;
  switch (opts.solver) {
  case Solver::NPDo:
    rep = npdo_scf(solve_obj, z0, cfg);
    break;
  case Solver::NPDoLOCG:
    rep = npdo_locg(solve_obj, z0, cfg);
    break;
  case Solver::NEPv:
    rep = nepv_scf(solve_obj, z0, cfg);
    break;
  case Solver::NEPvLOCG:
    rep = nepv_locg(solve_obj, z0, cfg);
    break;
  }
  out.framework = rep.framework;
  out.trace = rep.iterations;
  out.p = lifted ? lifted->lifting.backward(rep.p) : rep.p;

  json report;
  report["problem"] = problem_name;
  report["solver"] = solver_name(opts.solver);
  report["converged"] = rep.converged;
  report["iters"] = rep.iters;
  report["f_final"] = finite_or_string(eval(obj, out.p));
  report["certificates"] = certificates_json(rep.certificates, rep.framework);
  json diag = json::object();
  bool audit_failed = false;

  const bool all = opts.audits.count("all") > 0;
  auto wants = [&](const char *name) { return all || opts.audits.count(name) > 0; };

  {
    const MonotoneAudit mono = monotone_audit(out.trace);
    diag["monotone"] = {{"pass", mono.pass},
                        {"worst_violation", finite_or_string(mono.worst_violation)},
                        {"worst_step", mono.worst_step}};
    if (wants("series") && !mono.pass)
      audit_failed = true;
  }
  {
    const SeriesAudit series = series_audit(out.trace, rep.framework);
    diag["series_bound"] = {{"pass", series.pass},
                            {"step_sum", finite_or_string(series.step_sums.back())},
                            {"residual_sum", finite_or_string(series.residual_sums.back())},
                            {"bound", finite_or_string(series.bound)}};
    if (wants("series") && !series.pass)
      audit_failed = true;
  }
  if (wants("grad")) {
    const double err = gradient_check(solve_obj, 20, 1e-6, opts.seed);
    diag["gradient_check"] = finite_or_string(err);
    if (!(err <= 1e-6))
      audit_failed = true;
  }
  if (wants("theta") && theta_source(obj) && opts.solver == Solver::NEPv && !lifted) {
    const ThetaTRData &td = *obj.theta;
    const ThetaAudit ta = theta_step_audit(out.trace, td.b, td.d, td.theta);
    diag["theta_step"] = {{"pass", ta.pass},
                          {"worst_slack", finite_or_string(ta.worst_slack)},
                          {"worst_step", ta.worst_step}};
    if (!ta.pass)
      audit_failed = true;
  }
  if (wants("certs") && !report["certificates"]["pass"].get<bool>())
    audit_failed = true;
  if (opts.oracle_budget > 0) {
    const OracleResult orc =
        brute_force_oracle(solve_obj, opts.oracle_budget, rep.framework, opts.seed);
    diag["oracle_gap"] = finite_or_string(orc.best_f - rep.f);
    diag["oracle_best_f"] = finite_or_string(orc.best_f);
  }
  if (lifted) {
    const Mat &m = spec.matrices.at("M");
    diag["generalized_kkt_residual"] = finite_or_string(generalized_kkt_residual(obj, out.p, m));
    diag["m_orthonormality_error"] = finite_or_string(
        (out.p.transpose() * m * out.p - Mat::Identity(spec.k, spec.k)).norm());
  }
  if (spec.family == Family::ProcrustesLS)
    diag["procrustes_residual"] = finite_or_string(
        procrustes_residual(spec.matrices.at("C"), spec.matrices.at("B"), out.p));
  if (!rep.warnings.empty())
    diag["warnings"] = rep.warnings;
  report["diagnostics"] = diag;
  out.report = report;

  if (audit_failed)
    out.exit_code = kExitAuditFailure;
  else
    out.exit_code = rep.converged ? kExitConverged : kExitMaxIter;
  return out;
}

void configure_logging() {
  auto logger = spdlog::get("stiefel_scf");
  if (!logger)
    logger = spdlog::stderr_color_mt("stiefel_scf");
  spdlog::set_default_logger(logger);
  const char *env = std::getenv("STIEFEL_SCF_LOG");
  const std::string level = env ? env : "";
  if (level == "off")
    spdlog::set_level(spdlog::level::off);
  else if (level == "info")
    spdlog::set_level(spdlog::level::info);
  else if (level == "debug")
    spdlog::set_level(spdlog::level::debug);
  else {
    spdlog::set_level(spdlog::level::warn);
    if (!level.empty())
      spdlog::warn("ignoring STIEFEL_SCF_LOG='{}' (expected off, info or debug)", level);
  }
}

namespace {

struct JobResult {
  int exit_code = kExitConverged;
  std::string message;
};

JobResult run_one(const fs::path &problem, const RunOptions &opts,
                  const std::optional<fs::path> &trace_path,
                  const std::optional<fs::path> &report_path) {
  JobResult res;
  try {
    const ProblemSpec spec = load_problem_file(problem);
    const RunOutcome out = run_problem(spec, spec.name, opts);
    if (trace_path)
      write_file_atomic(*trace_path, trace_csv(out.trace, out.framework));
    if (report_path)
      write_file_atomic(*report_path, out.report.dump(2) + "\n");
    res.exit_code = out.exit_code;
    res.message = problem.string() + ": " + (out.exit_code == kExitConverged ? "converged" :
                                             out.exit_code == kExitMaxIter   ? "max-iter reached" :
                                                                               "audit failed") +
                  " after " + std::to_string(out.report["iters"].get<int>()) + " iterations, f = " +
                  out.report["f_final"].dump();
  } catch (const std::exception &e) {
    res.exit_code = kExitInputError;
    res.message = problem.string() + ": " + e.what();
  }
  return res;
}

int run_batch(const fs::path &dir, const RunOptions &opts) {
  if (!fs::is_directory(dir)) {
    std::cerr << "batch directory '" << dir.string() << "' does not exist\n";
    return kExitInputError;
  }
  std::vector<fs::path> files;
  for (const auto &entry : fs::directory_iterator(dir)) {
    const fs::path &p = entry.path();
    const std::string name = p.filename().string();
    if (entry.is_regular_file() && p.extension() == ".json" &&
        name.find(".report.json") == std::string::npos)
      files.push_back(p);
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    std::cerr << "no problem files in '" << dir.string() << "'\n";
    return kExitInputError;
  }
  const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  std::vector<JobResult> results(files.size());
  for (std::size_t start = 0; start < files.size(); start += workers) {
    std::vector<std::future<JobResult>> jobs;
    for (std::size_t i = start; i < std::min(files.size(), start + workers); ++i) {
      const fs::path stem = dir / files[i].stem();
      jobs.push_back(std::async(std::launch::async, run_one, files[i], opts,
                                fs::path(stem.string() + ".trace.csv"),
                                fs::path(stem.string() + ".report.json")));
    }
    for (std::size_t j = 0; j < jobs.size(); ++j)
      results[start + j] = jobs[j].get();
  }
  int code = kExitConverged;
  for (const auto &r : results) {
    std::cout << r.message << '\n';
    code = std::max(code, r.exit_code);
  }
  return code;
}

} // namespace

int cli_main(int argc, char **argv) {
  CLI::App app{"Self-consistent-field solvers for optimization on the Stiefel manifold"};
  app.require_subcommand(1);

  std::string problem, solver = "npdo", trace_out, report_out, batch_dir;
  std::vector<std::string> audits;
  RunOptions opts;
  auto *run = app.add_subcommand("run", "solve a problem file");
  run->add_option("--problem", problem, "problem JSON file");
  run->add_option("--solver", solver, "npdo | npdo-locg | nepv | nepv-locg")
      ->check(CLI::IsMember({"npdo", "npdo-locg", "nepv", "nepv-locg"}));
  run->add_option("--tol", opts.tol, "stopping tolerance")->check(CLI::PositiveNumber);
  run->add_option("--max-iter", opts.max_iter, "outer iteration cap")->check(CLI::PositiveNumber);
  run->add_option("--seed", opts.seed, "seed for the starting point");
  run->add_option("--trace", trace_out, "write the iteration trace (CSV)");
  run->add_option("--report", report_out, "write the report (JSON)");
  run->add_option("--oracle", opts.oracle_budget, "brute-force oracle budget")
      ->check(CLI::PositiveNumber);
  run->add_option("--audit", audits, "grad | series | theta | certs | all")
      ->check(CLI::IsMember({"grad", "series", "theta", "certs", "all"}))
      ->delimiter(',');
  run->add_option("--batch", batch_dir, "solve every *.json in DIR");

  std::string audit_trace;
  auto *audit = app.add_subcommand("audit", "audit a stored trace (monotonicity and series bound)");
  audit->add_option("--trace", audit_trace, "trace CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitInputError;
  }
  configure_logging();

  if (*audit) {
    try {
      const TraceFile tf = read_trace_csv(audit_trace);
      const MonotoneAudit mono = monotone_audit(tf.records);
      const SeriesAudit series = series_audit(tf.records, tf.framework);
      json out = {{"trace", audit_trace},
                  {"framework", framework_name(tf.framework)},
                  {"monotone", {{"pass", mono.pass},
                                {"worst_violation", finite_or_string(mono.worst_violation)},
                                {"worst_step", mono.worst_step}}},
                  {"series_bound", {{"pass", series.pass},
                                    {"monotone", series.monotone},
                                    {"step_sum", finite_or_string(series.step_sums.back())},
                                    {"residual_sum", finite_or_string(series.residual_sums.back())},
                                    {"bound", finite_or_string(series.bound)}}}};
      std::cout << out.dump(2) << '\n';
      return mono.pass && series.pass ? kExitConverged : kExitAuditFailure;
    } catch (const std::exception &e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitInputError;
    }
  }

  opts.solver = parse_solver(solver);
  opts.audits.insert(audits.begin(), audits.end());
  if (!batch_dir.empty())
    return run_batch(batch_dir, opts);
  if (problem.empty()) {
    std::cerr << "error: run needs --problem FILE or --batch DIR\n";
    return kExitInputError;
  }
  std::optional<fs::path> tp, rp;
  if (!trace_out.empty())
    tp = trace_out;
  if (!report_out.empty())
    rp = report_out;
  const JobResult res = run_one(problem, opts, tp, rp);
  (res.exit_code == kExitInputError ? std::cerr : std::cout) << res.message << '\n';
  return res.exit_code;
}

} // namespace stiefel
