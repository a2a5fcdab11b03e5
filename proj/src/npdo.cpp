#include "stiefel/npdo.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <set>

namespace stiefel {

void NpdoConfig::validate() const {
  if (!(tol > 0.0))
    throw Error(ErrorCode::InvalidArgument, "tol must be > 0");
  if (max_iter < 0)
    throw Error(ErrorCode::InvalidArgument, "max_iter must be >= 0");
  if (!(inner_fraction > 0.0 && inner_fraction < 1.0))
    throw Error(ErrorCode::InvalidArgument, "inner tolerance fraction must lie in (0,1)");
  if (normalization == Normalization::Constant && !(xi_constant > 0.0))
    throw Error(ErrorCode::InvalidArgument, "constant normalization must be > 0");
}

KktResiduals kkt_residuals(const ComposedObjective &obj, const Mat &p, const NpdoConfig &cfg) {
  const Mat g = euclidean_grad(obj, p);
  const double xi = cfg.normalization == Normalization::Constant ? cfg.xi_constant : g.norm();
  KktResiduals r;
  if (xi < 1e-300)
    return r;
  const Mat lam = p.transpose() * g;
  r.eps_kkt = (g - p * lam).norm() / xi;
  r.eps_sym = (lam - lam.transpose()).norm() / xi;
  return r;
}

Alignment align_rotation(const AlignmentRule &rule, const Mat &p_hat,
                         const ComposedObjective &obj, const Mat &p_prev) {
  const Index k = p_hat.cols();
  Alignment out;
  out.q = Mat::Identity(k, k);
  auto polar_of = [](const Mat &x) -> Mat {
    if (x.norm() == 0.0)
      return Mat::Identity(x.rows(), x.cols());
    return polar_factor(x).orthogonal_factor.basis();
  };
  switch (rule.variant) {
  case AlignmentRule::Variant::Identity:
    break;
  case AlignmentRule::Variant::PolarOfScriptD:
    out.q = polar_of(p_hat.transpose() * script_d(obj, p_prev));
    break;
  case AlignmentRule::Variant::PolarOfD:
    out.q = polar_of(p_hat.transpose() * rule.d);
    break;
  case AlignmentRule::Variant::PerBlockPolar: {
    Vec phi = Vec::Ones(static_cast<Index>(obj.terms.size()));
    if (rule.weight_blocks)
      phi = value_and_grad(obj, p_prev).phi;
    std::set<Index> used;
    for (std::size_t ti : rule.block_terms) {
      const AtomicTerm &t = obj.terms.at(ti);
      const auto &sel = t.selector.indices;
      for (Index c : sel)
        if (!used.insert(c).second)
          throw Error(ErrorCode::BlockOverlap, "alignment blocks share column " + std::to_string(c));
      const Mat s = polar_of(phi(static_cast<Index>(ti)) *
                             (select_columns(p_hat, sel).transpose() * t.matrix));
      for (std::size_t a = 0; a < sel.size(); ++a)
        for (std::size_t b = 0; b < sel.size(); ++b)
          out.q(sel[a], sel[b]) = s(static_cast<Index>(a), static_cast<Index>(b));
    }
    break;
  }
  }
  out.p_next = p_hat * out.q;
  return out;
}

NpdoStep npdo_scf_step(const ComposedObjective &obj, const Mat &p, const NpdoConfig &cfg) {
  NpdoStep out;
  const ValueAndGrad vg = value_and_grad(obj, p);
  IterationRecord &rec = out.record;
  rec.f = vg.f;
  const double gnorm = vg.grad.norm();
  if (gnorm < 1e-300) {
    out.zero_gradient = true;
    out.p_next = p;
    return out;
  }
  const double xi = cfg.normalization == Normalization::Constant ? cfg.xi_constant : gnorm;
  const Mat lam = p.transpose() * vg.grad;
  rec.eps_kkt = (vg.grad - p * lam).norm() / xi;
  rec.eps_sym = (lam - lam.transpose()).norm() / xi;
  const PolarDecomposition pd = polar_factor(vg.grad);
  rec.sigma_min = pd.singular_values(pd.singular_values.size() - 1);
  rec.eta = pd.trace_norm - lam.trace();
  try {
    rec.m_asymmetry = kkt_mismatch_asymmetry(obj, p);
  } catch (const Error &) {
    rec.m_asymmetry = std::numeric_limits<double>::quiet_NaN();
  }
  const Alignment al = align_rotation(obj.alignment, pd.orthogonal_factor.basis(), obj, p);
  out.p_next = al.p_next;
  rec.step_angle = canonical_sin_theta(p, out.p_next).distF;
  return out;
}

void check_outer_declarations(const ComposedObjective &obj, std::vector<std::string> &warnings) {
  std::vector<Vec> pts;
  for (std::uint64_t s = 0; s < 8; ++s) {
    try {
      pts.push_back(term_values(obj, random_stiefel(obj.n, obj.k, 9001 + s).basis()));
    } catch (const Error &) {
    }
  }
  const OuterSpotCheck sc = spot_check_outer(obj.outer, pts);
  if (sc.convexity_violations > 0) {
    warnings.push_back("outer function declared convex failed " +
                       std::to_string(sc.convexity_violations) + " midpoint samples");
    spdlog::warn("{}", warnings.back());
  }
  if (sc.sign_violations > 0) {
    warnings.push_back("outer partials violated declared sign constraints at " +
                       std::to_string(sc.sign_violations) + " samples");
    spdlog::warn("{}", warnings.back());
  }
}

Mat prepare_start(const ComposedObjective &obj, const Mat &p0, std::vector<std::string> &warnings) {
  if (p0.rows() != obj.n || p0.cols() != obj.k)
    throw Error(ErrorCode::DimensionMismatch, "initial point has wrong shape");
  require_finite(p0, "initial point");
  Mat p = p0;
  const double drift = orthonormality_error(p0);
  if (drift > 1e-6)
    throw Error(ErrorCode::NotOrthonormal, "initial point is not orthonormal");
  if (drift > 1e-10)
    p = StiefelPoint::orthonormalized(p0).basis();
  const FeasibilityMargin fm = feasibility_margin(obj, p);
  if (!fm.feasible(1e-10)) {
    p = align_rotation(obj.alignment, p, obj, p).p_next;
    warnings.push_back("initial point outside the feasible subset; aligned once");
    spdlog::info("{}", warnings.back());
  }
  return p;
}

namespace {

void warn_non_psd(const ComposedObjective &obj, SolveReport &report) {
  for (const auto &t : obj.terms)
    if (t.kind == AtomKind::QuadraticTrace && !t.psd_verified) {
      report.warnings.push_back("quadratic term is not PSD; NPDo ascent is not guaranteed");
      spdlog::warn("{}", report.warnings.back());
      return;
    }
}

double rel_gain_floor(double f) { return 1e-16 * std::abs(f); }

} // namespace

SolveReport npdo_scf(const ComposedObjective &obj, const Mat &p0, const NpdoConfig &cfg) {
  obj.validate();
  cfg.validate();
  SolveReport report;
  report.framework = Framework::NPDo;
  if (cfg.check_outer) {
    check_outer_declarations(obj, report.warnings);
    warn_non_psd(obj, report);
  }
  Mat p = prepare_start(obj, p0, report.warnings);
  int stall = 0;
  for (int i = 0;; ++i) {
    NpdoStep step = npdo_scf_step(obj, p, cfg);
    IterationRecord rec = step.record;
    rec.iter = i;
    if (i == 0)
      report.f0 = rec.f;
    const bool conv = step.zero_gradient || rec.eps_kkt + rec.eps_sym <= cfg.tol;
    if (conv || i >= cfg.max_iter || report.stagnated) {
      rec.step_angle = 0.0;
      report.iterations.push_back(rec);
      report.converged = conv;
      report.zero_gradient = step.zero_gradient;
      break;
    }
    report.iterations.push_back(rec);
    const double f_next = eval(obj, step.p_next);
    stall = (f_next - rec.f < rel_gain_floor(rec.f)) ? stall + 1 : 0;
    if (stall >= cfg.stagnation_window)
      report.stagnated = true;
    spdlog::debug("npdo it {} f {:.16e} eps {:.3e}", i, rec.f, rec.eps_kkt + rec.eps_sym);
    p = step.p_next;
  }
  report.p = p;
  report.f = report.iterations.back().f;
  report.iters = static_cast<int>(report.iterations.size()) - 1;
  report.certificates = compute_certificates(obj, p);
  return report;
}

ComposedObjective reduced_objective(const ComposedObjective &obj, const Mat &w) {
  ComposedObjective r = substitute(obj, w);
  r.name = obj.name + "/reduced";
  return r;
}

Mat locg_basis(const Mat &p, const Mat &extra) {
  const Mat y = orthonormalize_against(p, extra);
  Mat w(p.rows(), p.cols() + y.cols());
  w << p, y;
  return w;
}

namespace {

Mat locg_extra(const Mat &r, const Mat &p_prev) {
  Mat extra(r.rows(), r.cols() + p_prev.cols());
  if (p_prev.cols() > 0)
    extra << r, p_prev;
  else
    extra = r;
  return extra;
}

Mat clean_orthonormal(const Mat &p) {
  if (orthonormality_error(p) > 1e-13)
    return StiefelPoint::orthonormalized(p).basis();
  return p;
}

} // namespace

SolveReport npdo_locg(const ComposedObjective &obj, const Mat &p0, const NpdoConfig &cfg) {
  obj.validate();
  cfg.validate();
  SolveReport report;
  report.framework = Framework::NPDo;
  report.locg = true;
  if (cfg.check_outer) {
    check_outer_declarations(obj, report.warnings);
    warn_non_psd(obj, report);
  }
  Mat p = prepare_start(obj, p0, report.warnings);
  Mat p_prev(obj.n, 0);
  int stall = 0;
  for (int i = 0;; ++i) {
    NpdoStep step = npdo_scf_step(obj, p, cfg);
    IterationRecord rec = step.record;
    rec.iter = i;
    if (i == 0)
      report.f0 = rec.f;
    const double res = rec.eps_kkt + rec.eps_sym;
    const bool conv = step.zero_gradient || res <= cfg.tol || report.stationary_subspace;
    if (conv || i >= cfg.max_iter || report.stagnated) {
      rec.step_angle = 0.0;
      report.iterations.push_back(rec);
      report.converged = conv;
      report.zero_gradient = step.zero_gradient;
      break;
    }
    const Mat w = locg_basis(p, locg_extra(riemannian_grad(obj, p), p_prev));
    const ComposedObjective sub = reduced_objective(obj, w);
    NpdoConfig inner = cfg;
    inner.tol = cfg.inner_fraction * res;
    inner.max_iter = cfg.inner_max_iter;
    inner.check_outer = false;
    const SolveReport in = npdo_scf(sub, Mat::Identity(w.cols(), obj.k), inner);
    const Mat p_next = clean_orthonormal(w * in.p);
    const double f_next = eval(obj, p_next);
    rec.step_angle = canonical_sin_theta(p, p_next).distF;
    report.iterations.push_back(rec);
    report.inner_iterations.push_back(in.iters);
    if (in.iters == 0 || (f_next <= rec.f && rec.step_angle < 1e-14))
      report.stationary_subspace = true;
    stall = (f_next - rec.f < rel_gain_floor(rec.f)) ? stall + 1 : 0;
    if (stall >= cfg.stagnation_window)
      report.stagnated = true;
    spdlog::debug("npdo-locg it {} f {:.16e} eps {:.3e} inner {}", i, rec.f, res, in.iters);
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
