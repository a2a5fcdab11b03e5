#pragma once

#include <cstdint>
#include <vector>

#include "stiefel/solve_report.hpp"

namespace stiefel {

// Worst relative error of euclidean_grad against central differences over all
// n*k entries at `trials` random Stiefel points. Denominator max(1, ||grad||_F).
double gradient_check(const ComposedObjective &obj, int trials, double fd_step,
                      std::uint64_t seed = 0);

struct OracleResult {
  double best_f = -std::numeric_limits<double>::infinity();
  Mat best_p;
  int evaluations = 0;
};

// Desk-scale global search (n <= 6, k <= 2). k = 1: golden-angle sphere
// sampling plus SCF polish of the 20 best samples; k = 2: random starts with
// SCF polish.
OracleResult brute_force_oracle(const ComposedObjective &obj, int budget, Framework polish,
                                std::uint64_t seed = 0);

struct MonotoneAudit {
  double worst_violation = 0.0; // max (f_i - f_{i+1}) / max(1, |f_i|)
  int worst_step = -1;
  bool pass = true;
};

MonotoneAudit monotone_audit(const std::vector<IterationRecord> &trace, double slack = 1e-12);

struct SeriesAudit {
  std::vector<double> step_sums;     // partial sums of w_i * sin^2
  std::vector<double> residual_sums; // partial sums of w_i * eps_i^2
  double bound = 0.0;
  bool monotone = true;
  bool bounded = true;
  bool pass = true;
};

// NPDo weights w_i = sigma_min, NEPv weights w_i = eigengap. The bound is
// bound_factor * (f_final - f_0) + 1e-8.
SeriesAudit series_audit(const std::vector<IterationRecord> &trace, Framework fw,
                         double bound_factor = 2.0);

struct ThetaAudit {
  double worst_slack = std::numeric_limits<double>::infinity();
  int worst_step = -1;
  bool pass = true;
};

// min over steps of f_{i+1} - f_i - [ 1/2 (s_k/S_k)^theta eta_i
//   + S_k^-theta (||Phat^T D||_tr - tr(Phat^T D P^T Phat)) ]
ThetaAudit theta_step_audit(const std::vector<IterationRecord> &trace, const Mat &b, const Mat &d,
                            double theta);

} // namespace stiefel
