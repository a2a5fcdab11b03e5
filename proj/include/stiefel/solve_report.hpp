#pragma once

#include <limits>
#include <string>
#include <vector>

#include "stiefel/objective.hpp"

namespace stiefel {

enum class Framework { NPDo, NEPv };

const char *framework_name(Framework fw);

// State at iterate P^(i) together with the step that leaves it. The final
// record of a run has step_angle = 0.
struct IterationRecord {
  int iter = 0;
  double f = 0.0;
  double eps_kkt = 0.0;  // NPDo
  double eps_sym = 0.0;  // NPDo
  double eps_nepv = 0.0; // NEPv
  double sigma_min = 0.0; // NPDo: smallest singular value of the gradient
  double gap = 0.0;       // NEPv: lambda_k - lambda_{k+1} of H(P)
  double eta = 0.0;       // trace gain of the subproblem solution over P
  double step_angle = 0.0; // ||sin Theta(P^(i), P^(i+1))||_F
  double m_asymmetry = 0.0;
  bool gap_warning = false;
  // ThetaTR step audit inputs (NaN when not recorded)
  double pd_trace_norm = std::numeric_limits<double>::quiet_NaN(); // ||Phat^T D||_tr
  double pd_cross = std::numeric_limits<double>::quiet_NaN();      // tr(Phat^T D P^T Phat)
};

struct Certificates {
  double lambda_min = 0.0;   // smallest eigenvalue of sym(P^T grad)
  double lambda_norm = 0.0;  // ||P^T grad||_2
  double lambda_asymmetry = 0.0;
  double eps_kkt = 0.0;
  double eps_sym = 0.0;
  double eps_nepv = 0.0;
  double omega_topk_deviation = 0.0; // max |eig(P^T H P) - topk(H)|
  double h_norm2 = 0.0;
  double m_asymmetry = 0.0;
  bool has_field = false;
  FeasibilityMargin scriptd;
};

struct SolveReport {
  Framework framework = Framework::NPDo;
  bool locg = false;
  Mat p;
  double f = 0.0;
  double f0 = 0.0;
  bool converged = false;
  bool stagnated = false;
  bool zero_gradient = false;
  bool stationary_subspace = false;
  int iters = 0;
  std::vector<IterationRecord> iterations;
  std::vector<int> inner_iterations; // LOCG only
  Certificates certificates;
  int gap_warnings = 0;
  std::vector<std::string> warnings;
};

Certificates compute_certificates(const ComposedObjective &obj, const Mat &p);

} // namespace stiefel
