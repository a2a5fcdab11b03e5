#include "stiefel/solve_report.hpp"

#include <algorithm>
#include <cmath>

namespace stiefel {

const char *framework_name(Framework fw) { return fw == Framework::NPDo ? "npdo" : "nepv"; }

Certificates compute_certificates(const ComposedObjective &obj, const Mat &p) {
  Certificates c;
  const ValueAndGrad vg = value_and_grad(obj, p);
  const Mat lam = p.transpose() * vg.grad;
  c.lambda_min = symmetric_eigenvalues(lam)(0);
  c.lambda_norm = spectral_norm(lam);
  c.lambda_asymmetry = (lam - lam.transpose()).norm() / std::max(1.0, lam.norm());
  const double gnorm = vg.grad.norm();
  if (gnorm >= 1e-300) {
    c.eps_kkt = (vg.grad - p * lam).norm() / gnorm;
    c.eps_sym = (lam - lam.transpose()).norm() / gnorm;
  }
  try {
    const FieldEvaluation fe = nepv_field(obj, p);
    const Mat &h = fe.h.matrix();
    const Mat hp = h * p;
    const Mat omega = p.transpose() * hp;
    const double hn = h.norm();
    if (hn >= 1e-300)
      c.eps_nepv = (hp - p * omega).norm() / hn;
    Vec om = symmetric_eigenvalues(omega);
    std::sort(om.data(), om.data() + om.size(), std::greater<double>());
    const Vec top = top_k_eigenpairs(fe.h, obj.k).eigenvalues;
    c.omega_topk_deviation = (om - top).cwiseAbs().maxCoeff();
    c.h_norm2 = spectral_norm(h);
    c.m_asymmetry = fe.asymmetry;
    c.has_field = true;
  } catch (const Error &) {
    c.has_field = false;
  }
  c.scriptd = feasibility_margin(obj, p);
  return c;
}

} // namespace stiefel
