#pragma once

#include "stiefel/solve_report.hpp"

namespace stiefel {

enum class Normalization { FrobeniusOfGrad, Constant };

struct NpdoConfig {
  double tol = 1e-8;
  int max_iter = 5000;
  Normalization normalization = Normalization::FrobeniusOfGrad;
  double xi_constant = 1.0;
  double inner_fraction = 0.25; // LOCG inner tolerance relative to the outer residual
  int inner_max_iter = 200;
  int stagnation_window = 50;
  bool check_outer = true; // spot-check outer convexity/sign declarations at start

  void validate() const;
};

struct KktResiduals {
  double eps_kkt = 0.0;
  double eps_sym = 0.0;
};

KktResiduals kkt_residuals(const ComposedObjective &obj, const Mat &p,
                           const NpdoConfig &cfg = {});

struct Alignment {
  Mat q;
  Mat p_next;
};

Alignment align_rotation(const AlignmentRule &rule, const Mat &p_hat,
                         const ComposedObjective &obj, const Mat &p_prev);

struct NpdoStep {
  Mat p_next;
  IterationRecord record;
  bool zero_gradient = false;
};

NpdoStep npdo_scf_step(const ComposedObjective &obj, const Mat &p,
                       const NpdoConfig &cfg = {});

SolveReport npdo_scf(const ComposedObjective &obj, const Mat &p0, const NpdoConfig &cfg = {});

ComposedObjective reduced_objective(const ComposedObjective &obj, const Mat &w);

SolveReport npdo_locg(const ComposedObjective &obj, const Mat &p0, const NpdoConfig &cfg = {});

// W = [P | orthonormal complement of (extra) against P].
Mat locg_basis(const Mat &p, const Mat &extra);

// Shared solver plumbing.
Mat prepare_start(const ComposedObjective &obj, const Mat &p0, std::vector<std::string> &warnings);
void check_outer_declarations(const ComposedObjective &obj, std::vector<std::string> &warnings);

} // namespace stiefel
