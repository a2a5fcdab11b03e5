#include "stiefel/nepv.hpp"

#include <spdlog/spdlog.h>

#include <cmath>

namespace stiefel {

double nepv_residual(const ComposedObjective &obj, const Mat &p, const NepvConfig &cfg) {
  const Mat h = nepv_field(obj, p).h.matrix();
  const double xi = cfg.normalization == Normalization::Constant ? cfg.xi_constant : h.norm();
  if (xi < 1e-300)
    return 0.0;
  const Mat hp = h * p;
  return (hp - p * (p.transpose() * hp)).norm() / xi;
}

NepvStep nepv_scf_step(const ComposedObjective &obj, const Mat &p, const NepvConfig &cfg) {
  NepvStep out;
  IterationRecord &rec = out.record;
  const FieldEvaluation fe = nepv_field(obj, p);
  const Mat &h = fe.h.matrix();
  rec.f = eval(obj, p);
  rec.m_asymmetry = fe.asymmetry;
  const double hnorm = h.norm();
  if (hnorm < 1e-300) {
    out.zero_field = true;
    out.p_next = p;
    return out;
  }
  const double xi = cfg.normalization == Normalization::Constant ? cfg.xi_constant : hnorm;
  const Mat hp = h * p;
  const Mat omega = p.transpose() * hp;
  rec.eps_nepv = (hp - p * omega).norm() / xi;
  const SpectralTopK top = top_k_eigenpairs(fe.h, obj.k);
  rec.gap = top.gap;
  rec.gap_warning = top.gap < cfg.gap_warn_threshold;
  rec.eta = top.eigenvalues.sum() - omega.trace();
  Mat p_hat = top.eigenbasis.basis();
  if (obj.recipe == FieldRecipe::Generic) {
    // the generic field needs the gradient-polar rotation before the rule
    const Mat x = p_hat.transpose() * euclidean_grad(obj, p);
    if (x.norm() > 0.0)
      p_hat = p_hat * polar_factor(x).orthogonal_factor.basis();
  }
  if (obj.theta) {
    const Mat &d = obj.theta->d;
    const Mat phd = p_hat.transpose() * d;
    rec.pd_trace_norm = trace_norm(phd);
    rec.pd_cross = (phd * p.transpose() * p_hat).trace();
    const double th = obj.theta->theta;
    if (th > 0.0 && th < 1.0) {
      const double num = (p.transpose() * obj.theta->a * p).trace() + (p.transpose() * d).trace();
      out.theta_sign_violation = num < 0.0;
    }
  }
  const Alignment al = align_rotation(obj.alignment, p_hat, obj, p);
  out.p_next = al.p_next;
  rec.step_angle = canonical_sin_theta(p, out.p_next).distF;
  return out;
}

namespace {

void note_step(SolveReport &report, const NepvStep &step, bool &sign_warned) {
  if (step.record.gap_warning) {
    ++report.gap_warnings;
    spdlog::warn("near-degenerate eigengap {:.3e} at iteration {}", step.record.gap,
                 step.record.iter);
  }
  if (step.theta_sign_violation && !sign_warned) {
    sign_warned = true;
    report.warnings.push_back("tr(P^T A P + P^T D) < 0 with 0 < theta < 1; ascent not guaranteed");
    spdlog::warn("{}", report.warnings.back());
  }
}

Mat clean_orthonormal(const Mat &p) {
  if (orthonormality_error(p) > 1e-13)
    return StiefelPoint::orthonormalized(p).basis();
  return p;
}

} // namespace

SolveReport nepv_scf(const ComposedObjective &obj, const Mat &p0, const NepvConfig &cfg) {
  obj.validate();
  cfg.validate();
  SolveReport report;
  report.framework = Framework::NEPv;
  if (cfg.check_outer)
    check_outer_declarations(obj, report.warnings);
  Mat p = prepare_start(obj, p0, report.warnings);
  int stall = 0;
  bool sign_warned = false;
  for (int i = 0;; ++i) {
    NepvStep step = nepv_scf_step(obj, p, cfg);
    step.record.iter = i;
    IterationRecord rec = step.record;
    if (i == 0)
      report.f0 = rec.f;
    const bool conv = step.zero_field || rec.eps_nepv <= cfg.tol;
    if (conv || i >= cfg.max_iter || report.stagnated) {
      rec.step_angle = 0.0;
      report.iterations.push_back(rec);
      report.converged = conv;
      report.zero_gradient = step.zero_field;
      break;
    }
    note_step(report, step, sign_warned);
    report.iterations.push_back(rec);
    const double f_next = eval(obj, step.p_next);
    stall = (f_next - rec.f < 1e-16 * std::abs(rec.f)) ? stall + 1 : 0;
    if (stall >= cfg.stagnation_window)
      report.stagnated = true;
    spdlog::debug("nepv it {} f {:.16e} eps {:.3e} gap {:.3e}", i, rec.f, rec.eps_nepv, rec.gap);
    p = step.p_next;
  }
  report.p = p;
  report.f = report.iterations.back().f;
  report.iters = static_cast<int>(report.iterations.size()) - 1;
  report.certificates = compute_certificates(obj, p);
  return report;
}

ComposedObjective reduced_field(const ComposedObjective &obj, const Mat &w) {
  ComposedObjective r = substitute(obj, w);
  r.name = obj.name + "/reduced";
  return r;
}

SolveReport nepv_locg(const ComposedObjective &obj, const Mat &p0, const NepvConfig &cfg) {
  obj.validate();
  cfg.validate();
  SolveReport report;
  report.framework = Framework::NEPv;
  report.locg = true;
  if (cfg.check_outer)
    check_outer_declarations(obj, report.warnings);
  Mat p = prepare_start(obj, p0, report.warnings);
  Mat p_prev(obj.n, 0);
  int stall = 0;
  bool sign_warned = false;
  for (int i = 0;; ++i) {
    NepvStep step = nepv_scf_step(obj, p, cfg);
    step.record.iter = i;
    IterationRecord rec = step.record;
    if (i == 0)
      report.f0 = rec.f;
    const bool conv = step.zero_field || rec.eps_nepv <= cfg.tol || report.stationary_subspace;
    if (conv || i >= cfg.max_iter || report.stagnated) {
      rec.step_angle = 0.0;
      report.iterations.push_back(rec);
      report.converged = conv;
      report.zero_gradient = step.zero_field;
      break;
    }
    note_step(report, step, sign_warned);
    const Mat r = riemannian_grad(obj, p);
    Mat extra(obj.n, r.cols() + p_prev.cols());
    if (p_prev.cols() > 0)
      extra << r, p_prev;
    else
      extra = r;
    const Mat w = locg_basis(p, extra);
    const ComposedObjective sub = reduced_field(obj, w);
    NepvConfig inner = cfg;
    inner.tol = cfg.inner_fraction * rec.eps_nepv;
    inner.max_iter = cfg.inner_max_iter;
    inner.check_outer = false;
    const SolveReport in = nepv_scf(sub, Mat::Identity(w.cols(), obj.k), inner);
    const Mat p_next = clean_orthonormal(w * in.p);
    const double f_next = eval(obj, p_next);
    rec.step_angle = canonical_sin_theta(p, p_next).distF;
    report.iterations.push_back(rec);
    report.inner_iterations.push_back(in.iters);
    report.gap_warnings += in.gap_warnings;
    if (in.iters == 0 || (f_next <= rec.f && rec.step_angle < 1e-14))
      report.stationary_subspace = true;
    stall = (f_next - rec.f < 1e-16 * std::abs(rec.f)) ? stall + 1 : 0;
    if (stall >= cfg.stagnation_window)
      report.stagnated = true;
    spdlog::debug("nepv-locg it {} f {:.16e} eps {:.3e} inner {}", i, rec.f, rec.eps_nepv,
                  in.iters);
    p_prev = p;
    p = p_next;
  }
  report.p = p;
  report.f = report.iterations.back().f;
  report.iters = static_cast<int>(report.iterations.size()) - 1;
  report.certificates = compute_certificates(obj, p);
  return report;
}

} // namespace stiefel
