#pragma once

#include "stiefel/npdo.hpp"

namespace stiefel {

struct NepvConfig : NpdoConfig {
  double gap_warn_threshold = 1e-10;
};

double nepv_residual(const ComposedObjective &obj, const Mat &p, const NepvConfig &cfg = {});

struct NepvStep {
  Mat p_next;
  IterationRecord record;
  bool zero_field = false;
  bool theta_sign_violation = false; // ThetaTR with 0 < theta < 1 and tr(P^T A P + P^T D) < 0
};

NepvStep nepv_scf_step(const ComposedObjective &obj, const Mat &p, const NepvConfig &cfg = {});

SolveReport nepv_scf(const ComposedObjective &obj, const Mat &p0, const NepvConfig &cfg = {});

// H~(Z) = W^T H(W Z) W with mismatch M(W Z).
ComposedObjective reduced_field(const ComposedObjective &obj, const Mat &w);

SolveReport nepv_locg(const ComposedObjective &obj, const Mat &p0, const NepvConfig &cfg = {});

} // namespace stiefel
