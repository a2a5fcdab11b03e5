#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "stiefel/diagnostics.hpp"
#include "stiefel/harness.hpp"
#include "stiefel/nepv.hpp"

using namespace stiefel;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch_dir(const std::string &name) {
  const fs::path dir = fs::temp_directory_path() / ("stiefel_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const char *kSep = R"({"family": "SEP", "n": 3, "k": 1,
  "matrices": {"A": [[5, 0, 0], [0, 3, 0], [0, 0, 1]]}})";

const char *kMbsub = R"({"family": "MBSub", "n": 4, "k": 2,
  "matrices": {"A": [[4, 1, 0, 0], [1, 3, 1, 0], [0, 1, 2, 1], [0, 0, 1, 1]],
               "D": [[1, 0], [0, 2], [1, 1], [0, -1]]}})";

std::string expect_invalid(const std::string &text) {
  try {
    parse_problem(json::parse(text));
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidProblem);
    return e.what();
  }
  ADD_FAILURE() << "no error for " << text;
  return "";
}

} // namespace

TEST(ProblemFile, ParsesMatricesAndLists) {
  const ProblemSpec s = parse_problem(json::parse(kMbsub));
  EXPECT_EQ(s.family, Family::MBSub);
  EXPECT_EQ(s.n, 4);
  EXPECT_EQ(s.k, 2);
  EXPECT_EQ(s.matrices.at("D")(1, 1), 2.0);
  const ProblemSpec u = parse_problem(json::parse(R"({"family": "SumCT", "n": 2, "k": 2,
      "matrices": {"A_list": [[[1,0],[0,1]], [[2,0],[0,1]]], "D_list": [[[1],[0]], [[0],[1]]]},
      "blocks": [[0], [1]]})"));
  EXPECT_EQ(u.a_list.size(), 2u);
  EXPECT_EQ(u.blocks[1][0], 1);
  build(u);
}

TEST(ProblemFile, ErrorsNameTheField) {
  EXPECT_NE(expect_invalid(R"({"n": 2, "k": 1})").find("family"), std::string::npos);
  EXPECT_NE(expect_invalid(R"({"family": "SEP", "k": 1})").find("'n'"), std::string::npos);
  EXPECT_NE(expect_invalid(R"({"family": "SEP", "n": 2, "k": 1, "matrices": {"A": [[1, 0], [0]]}})")
                .find("matrices.A"),
            std::string::npos);
  EXPECT_NE(expect_invalid(R"({"family": "SEP", "n": 2, "k": 1, "matrix": {}})").find("matrix"),
            std::string::npos);
  EXPECT_NE(expect_invalid(R"({"family": "Nope", "n": 2, "k": 1})").find("Nope"), std::string::npos);
  EXPECT_NE(expect_invalid(R"({"family": "SEP", "n": 2, "k": 3})").find("'k'"), std::string::npos);
  try {
    build(parse_problem(json::parse(R"({"family": "MBSub", "n": 2, "k": 1,
        "matrices": {"A": [[1, 0], [0, 1]]}})")));
    FAIL();
  } catch (const Error &e) {
    EXPECT_NE(std::string(e.what()).find("matrices.D"), std::string::npos);
  }
}

TEST(Trace, CsvRoundTrip) {
  const auto obj = build(parse_problem(json::parse(kMbsub)));
  const auto r = nepv_scf(obj, random_stiefel(4, 2, 0).basis());
  const std::string csv = trace_csv(r.iterations, Framework::NEPv);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), trace_header(Framework::NEPv));
  std::istringstream in(csv);
  const TraceFile tf = parse_trace_csv(in);
  EXPECT_EQ(tf.framework, Framework::NEPv);
  ASSERT_EQ(tf.records.size(), r.iterations.size());
  for (std::size_t i = 0; i < tf.records.size(); ++i) {
    EXPECT_EQ(tf.records[i].f, r.iterations[i].f);
    EXPECT_EQ(tf.records[i].gap, r.iterations[i].gap);
    EXPECT_EQ(tf.records[i].step_angle, r.iterations[i].step_angle);
  }
  std::istringstream bad("iter,f\n1,2\n");
  EXPECT_THROW(parse_trace_csv(bad), Error);
}

TEST(Run, SepOneIteration) {
  RunOptions opts;
  opts.solver = Solver::NEPv;
  const RunOutcome out = run_problem(parse_problem(json::parse(kSep)), "sep", opts);
  EXPECT_EQ(out.exit_code, kExitConverged);
  EXPECT_EQ(out.report["iters"], 1);
  EXPECT_NEAR(out.report["f_final"].get<double>(), 5.0, 1e-12);
  for (const char *key : {"problem", "solver", "converged", "iters", "f_final", "certificates",
                          "diagnostics"})
    EXPECT_TRUE(out.report.contains(key)) << key;
}

TEST(Run, ReproducibleAndAudited) {
  RunOptions opts;
  opts.solver = Solver::NPDoLOCG;
  opts.seed = 3;
  opts.audits = {"all"};
  const ProblemSpec spec = parse_problem(json::parse(kMbsub));
  const RunOutcome a = run_problem(spec, "mbsub", opts);
  const RunOutcome b = run_problem(spec, "mbsub", opts);
  EXPECT_EQ(a.exit_code, kExitConverged);
  EXPECT_EQ(a.report.dump(), b.report.dump());
  EXPECT_EQ(trace_csv(a.trace, a.framework), trace_csv(b.trace, b.framework));
  EXPECT_TRUE(a.report["diagnostics"]["monotone"]["pass"].get<bool>());
  EXPECT_TRUE(a.report["certificates"]["pass"].get<bool>());
  EXPECT_LE(a.report["diagnostics"]["gradient_check"].get<double>(), 1e-6);
}

TEST(Run, MaxIterExitCode) {
  RunOptions opts;
  opts.max_iter = 2;
  const RunOutcome out = run_problem(parse_problem(json::parse(kMbsub)), "mbsub", opts);
  EXPECT_EQ(out.exit_code, kExitMaxIter);
}

TEST(Run, LiftedProblemReportsGeneralizedResidual) {
  RunOptions opts;
  opts.solver = Solver::NEPv;
  const RunOutcome out = run_problem(parse_problem(json::parse(R"({"family": "SEP", "n": 2, "k": 1,
      "matrices": {"A": [[1, 0], [0, 1]], "M": [[4, 0], [0, 1]]}})")),
                                     "lifted", opts);
  EXPECT_EQ(out.exit_code, kExitConverged);
  EXPECT_NEAR(out.report["f_final"].get<double>(), 1.0, 1e-10);
  EXPECT_LE(out.report["diagnostics"]["generalized_kkt_residual"].get<double>(), 1e-7);
}

TEST(Files, AtomicWriteAndBatch) {
  const fs::path dir = scratch_dir("batch");
  write_file_atomic(dir / "sep.json", kSep);
  write_file_atomic(dir / "mbsub.json", kMbsub);
  EXPECT_EQ(std::distance(fs::directory_iterator(dir), fs::directory_iterator()), 2);
  const std::string d = dir.string();
  const char *argv[] = {"stiefel_scf", "run", "--batch", d.c_str(), "--solver", "nepv"};
  EXPECT_EQ(cli_main(6, const_cast<char **>(argv)), kExitConverged);
  for (const char *stem : {"sep", "mbsub"}) {
    EXPECT_TRUE(fs::exists(dir / (std::string(stem) + ".trace.csv")));
    std::ifstream in(dir / (std::string(stem) + ".report.json"));
    const json rep = json::parse(in);
    EXPECT_EQ(rep["problem"], stem);
    EXPECT_TRUE(rep["converged"].get<bool>());
  }
  for (const auto &e : fs::directory_iterator(dir))
    EXPECT_EQ(e.path().string().find(".tmp."), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, BadProblemExitsOne) {
  const fs::path dir = scratch_dir("bad");
  write_file_atomic(dir / "bad.json", R"({"family": "MBSub", "n": 4, "k": 2,
      "matrices": {"A": [[1, 0], [0, 1, 2]]}})");
  const std::string p = (dir / "bad.json").string();
  const char *argv[] = {"stiefel_scf", "run", "--problem", p.c_str()};
  EXPECT_EQ(cli_main(4, const_cast<char **>(argv)), kExitInputError);
  const char *argv2[] = {"stiefel_scf", "run", "--problem", p.c_str(), "--solver", "newton"};
  EXPECT_EQ(cli_main(6, const_cast<char **>(argv2)), kExitInputError);
  fs::remove_all(dir);
}

TEST(Cli, AuditRejectsOscillatingTrace) {
  const fs::path dir = scratch_dir("audit");
  std::vector<IterationRecord> osc;
  for (int i = 0; i < 10; ++i) {
    IterationRecord r;
    r.iter = i;
    r.f = i % 2 ? 3.0 : 1.0;
    r.sigma_min = 1.0;
    r.eps_kkt = 0.3;
    r.step_angle = 0.9;
    osc.push_back(r);
  }
  write_file_atomic(dir / "osc.csv", trace_csv(osc, Framework::NPDo));
  const std::string p = (dir / "osc.csv").string();
  const char *argv[] = {"stiefel_scf", "audit", "--trace", p.c_str()};
  EXPECT_EQ(cli_main(4, const_cast<char **>(argv)), kExitAuditFailure);
  fs::remove_all(dir);
}
