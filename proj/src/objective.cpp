#include "stiefel/objective.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace stiefel {

namespace {

Mat mat_pow(const Mat &x, int e) {
  Mat out = Mat::Identity(x.rows(), x.cols());
  for (int i = 0; i < e; ++i)
    out = out * x;
  return out;
}

struct AtomEval {
  double base = 0.0;
  double value = 0.0;
  double dscale = 1.0; // c * s * base^(s-1)
  Mat block_grad;      // gradient of the base w.r.t. P_i (n x k_i)
};

AtomEval evaluate_atom(const AtomicTerm &term, const Mat &p, bool need_grad) {
  const Mat pi = select_columns(p, term.selector.indices);
  AtomEval out;
  Mat x;
  if (term.kind == AtomKind::LinearTrace) {
    x = pi.transpose() * term.matrix;
  } else {
    x = pi.transpose() * term.matrix * pi;
  }
  const Mat xm1 = mat_pow(x, term.m - 1);
  out.base = (xm1 * x).trace();
  if (term.s != 1.0 && out.base < 0.0)
    throw Error(ErrorCode::NegativeBaseForFractionalPower,
                "base " + std::to_string(out.base) + " with power " + std::to_string(term.s));
  if (term.s == 1.0) {
    out.value = term.c * out.base;
    out.dscale = term.c;
  } else {
    out.value = term.c * std::pow(out.base, term.s);
    out.dscale = term.c * term.s * std::pow(out.base, term.s - 1.0);
  }
  if (need_grad) {
    if (term.kind == AtomKind::LinearTrace)
      out.block_grad = static_cast<double>(term.m) * term.matrix * xm1;
    else
      out.block_grad = 2.0 * term.m * term.matrix * pi * xm1;
  }
  return out;
}

void scatter_add(Mat &full, const Mat &block, const ColumnSelector &sel, double w) {
  for (Index j = 0; j < sel.size(); ++j)
    full.col(sel.indices[static_cast<std::size_t>(j)]) += w * block.col(j);
}

} // namespace

ColumnSelector ColumnSelector::all(Index k) {
  ColumnSelector s;
  for (Index j = 0; j < k; ++j)
    s.indices.push_back(j);
  return s;
}

ColumnSelector ColumnSelector::of(std::vector<Index> idx) {
  ColumnSelector s;
  s.indices = std::move(idx);
  return s;
}

bool ColumnSelector::is_full(Index k) const {
  if (size() != k)
    return false;
  for (Index j = 0; j < k; ++j)
    if (indices[static_cast<std::size_t>(j)] != j)
      return false;
  return true;
}

void ColumnSelector::validate(Index k) const {
  if (indices.empty())
    throw Error(ErrorCode::InvalidArgument, "column selector is empty");
  for (std::size_t j = 0; j < indices.size(); ++j) {
    if (indices[j] < 0 || indices[j] >= k)
      throw Error(ErrorCode::DimensionMismatch, "column index out of range");
    if (j > 0 && indices[j] <= indices[j - 1])
      throw Error(ErrorCode::InvalidArgument, "column indices must be strictly increasing");
  }
}

AtomicTerm AtomicTerm::linear(const Mat &d, int m, ColumnSelector sel, double s, double c) {
  require_finite(d, "linear term matrix");
  AtomicTerm t;
  t.kind = AtomKind::LinearTrace;
  t.matrix = d;
  t.m = m;
  t.s = s;
  t.c = c;
  t.selector = std::move(sel);
  return t;
}

AtomicTerm AtomicTerm::quadratic(const Mat &a, int m, ColumnSelector sel, double s, double c) {
  AtomicTerm t;
  t.kind = AtomKind::QuadraticTrace;
  t.matrix = SymmetricMatrix(a).matrix();
  t.m = m;
  t.s = s;
  t.c = c;
  t.selector = std::move(sel);
  const Vec ev = symmetric_eigenvalues(t.matrix);
  const double nrm = ev.size() ? std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1))) : 0.0;
  t.psd_verified = ev.size() == 0 || ev(0) >= -1e-10 * nrm;
  return t;
}

void AtomicTerm::validate(Index n, Index k) const {
  selector.validate(k);
  if (matrix.rows() != n)
    throw Error(ErrorCode::DimensionMismatch, "term matrix has wrong row count");
  if (kind == AtomKind::LinearTrace && matrix.cols() != selector.size())
    throw Error(ErrorCode::DimensionMismatch, "linear term D must have one column per selected column");
  if (kind == AtomKind::QuadraticTrace && matrix.cols() != n)
    throw Error(ErrorCode::DimensionMismatch, "quadratic term A must be n x n");
  if (m < 1)
    throw Error(ErrorCode::InvalidArgument, "atom exponent m must be >= 1");
  if (!(s >= 1.0))
    throw Error(ErrorCode::InvalidArgument, "atom power s must be >= 1");
  if (!(c > 0.0))
    throw Error(ErrorCode::InvalidArgument, "atom scale c must be > 0");
}

double atom_base(const AtomicTerm &term, const Mat &p) {
  const Mat pi = select_columns(p, term.selector.indices);
  Mat x = term.kind == AtomKind::LinearTrace ? Mat(pi.transpose() * term.matrix)
                                             : Mat(pi.transpose() * term.matrix * pi);
  return mat_pow(x, term.m).trace();
}

double eval_atomic(const AtomicTerm &term, const Mat &p) {
  return evaluate_atom(term, p, false).value;
}

Mat grad_atomic(const AtomicTerm &term, const Mat &p) {
  const AtomEval ae = evaluate_atom(term, p, true);
  Mat g = Mat::Zero(p.rows(), p.cols());
  scatter_add(g, ae.block_grad, term.selector, ae.dscale);
  return g;
}

// ---------------------------------------------------------------- outer

OuterFunction OuterFunction::sum(std::size_t n) {
  OuterFunction o;
  o.name = "sum";
  o.dimension = n;
  o.value = [](const Vec &x) { return x.sum(); };
  o.partials = [](const Vec &x) { return Vec(Vec::Ones(x.size())); };
  o.convexity_declared = true;
  o.sign_constraints.assign(n, SignConstraint::NonNegative);
  return o;
}

OuterFunction OuterFunction::weighted_sum(const Vec &w) {
  OuterFunction o;
  o.name = "weighted_sum";
  o.dimension = static_cast<std::size_t>(w.size());
  o.value = [w](const Vec &x) { return w.dot(x); };
  o.partials = [w](const Vec &) { return w; };
  o.convexity_declared = true;
  for (Index i = 0; i < w.size(); ++i)
    o.sign_constraints.push_back(w(i) >= 0 ? SignConstraint::NonNegative
                                           : SignConstraint::Unconstrained);
  return o;
}

OuterFunction OuterFunction::sum_of_squares(std::size_t n) {
  OuterFunction o;
  o.name = "sum_squares";
  o.dimension = n;
  o.value = [](const Vec &x) { return x.squaredNorm(); };
  o.partials = [](const Vec &x) { return Vec(2.0 * x); };
  o.convexity_declared = true;
  o.sign_constraints.assign(n, SignConstraint::NonNegative);
  return o;
}

OuterFunction OuterFunction::log_sum_exp(std::size_t n) {
  OuterFunction o;
  o.name = "log_sum_exp";
  o.dimension = n;
  o.value = [](const Vec &x) {
    const double mx = x.maxCoeff();
    return mx + std::log((x.array() - mx).exp().sum());
  };
  o.partials = [](const Vec &x) {
    const double mx = x.maxCoeff();
    Vec e = (x.array() - mx).exp();
    return Vec(e / e.sum());
  };
  o.convexity_declared = true;
  o.sign_constraints.assign(n, SignConstraint::NonNegative);
  return o;
}

namespace {

void check_denominator(double x1) {
  if (!(x1 >= 1e-14))
    throw Error(ErrorCode::DegenerateDenominator,
                "tr(P^T B P) = " + std::to_string(x1) + " below 1e-14");
}

} // namespace

OuterFunction OuterFunction::theta_ratio(double theta) {
  OuterFunction o;
  o.name = "theta_ratio";
  o.dimension = 3;
  o.value = [theta](const Vec &x) {
    check_denominator(x(0));
    return (x(1) + x(2)) / std::pow(x(0), theta);
  };
  o.partials = [theta](const Vec &x) {
    check_denominator(x(0));
    const double inv = std::pow(x(0), -theta);
    Vec g(3);
    g << -theta * (x(1) + x(2)) * inv / x(0), inv, inv;
    return g;
  };
  o.convexity_declared = false;
  o.sign_constraints = {SignConstraint::Unconstrained, SignConstraint::Unconstrained,
                        SignConstraint::NonNegative};
  return o;
}

OuterFunction OuterFunction::ratio_squared(double theta) {
  OuterFunction o;
  o.name = "ratio_squared";
  o.dimension = 3;
  o.value = [theta](const Vec &x) {
    check_denominator(x(0));
    const double y = x(1) + x(2);
    return y * y / std::pow(x(0), 2.0 * theta);
  };
  o.partials = [theta](const Vec &x) {
    check_denominator(x(0));
    const double y = x(1) + x(2);
    const double inv = std::pow(x(0), -2.0 * theta);
    Vec g(3);
    g << -2.0 * theta * y * y * inv / x(0), 2.0 * y * inv, 2.0 * y * inv;
    return g;
  };
  o.convexity_declared = theta <= 0.5;
  o.sign_constraints = {SignConstraint::Unconstrained, SignConstraint::Unconstrained,
                        SignConstraint::NonNegative};
  return o;
}

OuterFunction OuterFunction::concat(const OuterFunction &a, const OuterFunction &b) {
  OuterFunction o;
  o.name = a.name + "+" + b.name;
  o.dimension = a.dimension + b.dimension;
  const Index na = static_cast<Index>(a.dimension);
  const Index nb = static_cast<Index>(b.dimension);
  auto av = a.value, bv = b.value;
  auto ap = a.partials, bp = b.partials;
  o.value = [=](const Vec &x) { return av(x.head(na)) + bv(x.tail(nb)); };
  o.partials = [=](const Vec &x) {
    Vec g(na + nb);
    g.head(na) = ap(x.head(na));
    g.tail(nb) = bp(x.tail(nb));
    return g;
  };
  o.convexity_declared = a.convexity_declared && b.convexity_declared;
  o.sign_constraints = a.sign_constraints;
  o.sign_constraints.insert(o.sign_constraints.end(), b.sign_constraints.begin(),
                            b.sign_constraints.end());
  return o;
}

OuterSpotCheck spot_check_outer(const OuterFunction &outer, const std::vector<Vec> &points) {
  OuterSpotCheck out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    try {
      const Vec &x = points[i];
      const Vec &y = points[(i + 1) % points.size()];
      ++out.samples;
      if (outer.convexity_declared && points.size() > 1) {
        const double mid = outer.value(0.5 * (x + y));
        const double avg = 0.5 * (outer.value(x) + outer.value(y));
        if (mid > avg + 1e-10 * (1.0 + std::abs(avg)))
          ++out.convexity_violations;
      }
      const Vec g = outer.partials(x);
      for (std::size_t j = 0; j < outer.sign_constraints.size(); ++j)
        if (outer.sign_constraints[j] == SignConstraint::NonNegative &&
            g(static_cast<Index>(j)) < -1e-12 * (1.0 + g.cwiseAbs().maxCoeff()))
          ++out.sign_violations;
    } catch (const Error &) {
      // point outside the outer function's domain
    }
  }
  return out;
}

// ---------------------------------------------------------------- alignment

AlignmentRule AlignmentRule::identity() { return AlignmentRule{}; }

AlignmentRule AlignmentRule::polar_of_script_d() {
  AlignmentRule r;
  r.variant = Variant::PolarOfScriptD;
  return r;
}

AlignmentRule AlignmentRule::polar_of_d(const Mat &d) {
  AlignmentRule r;
  r.variant = Variant::PolarOfD;
  r.d = d;
  return r;
}

AlignmentRule AlignmentRule::per_block_polar(std::vector<std::size_t> terms, bool weighted) {
  AlignmentRule r;
  r.variant = Variant::PerBlockPolar;
  r.block_terms = std::move(terms);
  r.weight_blocks = weighted;
  return r;
}

// ---------------------------------------------------------------- objective

void ComposedObjective::validate() const {
  if (k < 1 || k > n)
    throw Error(ErrorCode::DimensionMismatch, "objective needs 1 <= k <= n");
  if (outer.dimension != terms.size() || !outer.value || !outer.partials)
    throw Error(ErrorCode::InvalidArgument, "outer function dimension must match the term count");
  for (const auto &t : terms)
    t.validate(n, k);
  if (recipe == FieldRecipe::ThetaTR) {
    if (!theta)
      throw Error(ErrorCode::InvalidArgument, "ThetaTR recipe needs theta data");
    if (theta->a.rows() != n || theta->b.rows() != n || theta->d.rows() != n ||
        theta->d.cols() != k)
      throw Error(ErrorCode::DimensionMismatch, "ThetaTR data has wrong shape");
  }
  if (recipe == FieldRecipe::ProblemCustom && !custom_field)
    throw Error(ErrorCode::InvalidArgument, "custom recipe needs a field callback");
  if (recipe == FieldRecipe::CompositionWeighted)
    for (const auto &t : terms)
      if (!t.selector.is_full(k))
        throw Error(ErrorCode::RecipeRequiresFullSelectors,
                    "composition-weighted field needs every term to use all columns");
  switch (alignment.variant) {
  case AlignmentRule::Variant::PolarOfD:
    if (alignment.d.rows() != n || alignment.d.cols() != k)
      throw Error(ErrorCode::DimensionMismatch, "alignment D must be n x k");
    break;
  case AlignmentRule::Variant::PerBlockPolar: {
    std::set<Index> used;
    for (std::size_t ti : alignment.block_terms) {
      if (ti >= terms.size() || terms[ti].kind != AtomKind::LinearTrace)
        throw Error(ErrorCode::InvalidArgument, "per-block alignment must reference linear terms");
      for (Index c : terms[ti].selector.indices)
        if (!used.insert(c).second)
          throw Error(ErrorCode::BlockOverlap, "alignment blocks share column " + std::to_string(c));
    }
    break;
  }
  default:
    break;
  }
}

Vec term_values(const ComposedObjective &obj, const Mat &p) {
  Vec t(static_cast<Index>(obj.terms.size()));
  for (std::size_t i = 0; i < obj.terms.size(); ++i)
    t(static_cast<Index>(i)) = eval_atomic(obj.terms[i], p);
  return t;
}

double eval(const ComposedObjective &obj, const Mat &p) {
  return obj.outer.value(term_values(obj, p));
}

ValueAndGrad value_and_grad(const ComposedObjective &obj, const Mat &p) {
  if (p.rows() != obj.n || p.cols() != obj.k)
    throw Error(ErrorCode::DimensionMismatch, "point has wrong shape for objective");
  ValueAndGrad out;
  std::vector<AtomEval> evals;
  evals.reserve(obj.terms.size());
  out.t.resize(static_cast<Index>(obj.terms.size()));
  for (std::size_t i = 0; i < obj.terms.size(); ++i) {
    evals.push_back(evaluate_atom(obj.terms[i], p, true));
    out.t(static_cast<Index>(i)) = evals.back().value;
  }
  out.f = obj.outer.value(out.t);
  out.phi = obj.outer.partials(out.t);
  out.grad = Mat::Zero(p.rows(), p.cols());
  for (std::size_t i = 0; i < obj.terms.size(); ++i)
    scatter_add(out.grad, evals[i].block_grad, obj.terms[i].selector,
                out.phi(static_cast<Index>(i)) * evals[i].dscale);
  return out;
}

Mat euclidean_grad(const ComposedObjective &obj, const Mat &p) {
  return value_and_grad(obj, p).grad;
}

Mat riemannian_grad(const ComposedObjective &obj, const Mat &p) {
  const Mat g = euclidean_grad(obj, p);
  const Mat ptg = p.transpose() * g;
  return g - p * (0.5 * (ptg + ptg.transpose()));
}

namespace {

FieldEvaluation finish_field(const Mat &h, const Mat &mm) {
  FieldEvaluation fe;
  fe.h = sym_part(h);
  fe.mismatch = mm;
  fe.asymmetry = (mm - mm.transpose()).norm() / std::max(1.0, mm.norm());
  return fe;
}

} // namespace

FieldEvaluation nepv_field(const ComposedObjective &obj, const Mat &p) {
  const Index n = obj.n, k = obj.k;
  FieldEvaluation fe;
  switch (obj.recipe) {
  case FieldRecipe::Generic: {
    const Mat g = euclidean_grad(obj, p);
    fe = finish_field(g * p.transpose() + p * g.transpose(), g.transpose() * p);
    break;
  }
  case FieldRecipe::CompositionWeighted: {
    std::vector<AtomEval> evals;
    Vec t(static_cast<Index>(obj.terms.size()));
    for (std::size_t i = 0; i < obj.terms.size(); ++i) {
      if (!obj.terms[i].selector.is_full(k))
        throw Error(ErrorCode::RecipeRequiresFullSelectors,
                    "term " + std::to_string(i) + " uses a column subset");
      evals.push_back(evaluate_atom(obj.terms[i], p, false));
      t(static_cast<Index>(i)) = evals.back().value;
    }
    const Vec phi = obj.outer.partials(t);
    Mat h = Mat::Zero(n, n);
    Mat mm = Mat::Zero(k, k);
    for (std::size_t i = 0; i < obj.terms.size(); ++i) {
      const AtomicTerm &term = obj.terms[i];
      const double w = phi(static_cast<Index>(i)) * evals[i].dscale;
      if (w == 0.0)
        continue;
      const double m = term.m;
      if (term.kind == AtomKind::LinearTrace) {
        const Mat x = p.transpose() * term.matrix;
        const Mat g0 = term.matrix * mat_pow(x, term.m - 1);
        h += w * m * (g0 * p.transpose() + p * g0.transpose());
        mm += w * m * mat_pow(x, term.m).transpose();
      } else if (term.m == 1) {
        h += w * 2.0 * term.matrix;
      } else {
        const Mat y = term.matrix * p;
        const Mat x = p.transpose() * y;
        h += w * 2.0 * m * (y * mat_pow(x, term.m - 2) * y.transpose());
      }
    }
    fe = finish_field(h, mm);
    break;
  }
  case FieldRecipe::ThetaTR: {
    const ThetaTRData &td = *obj.theta;
    const double tb = (p.transpose() * td.b * p).trace();
    check_denominator(tb);
    const double num = (p.transpose() * td.a * p).trace() + (p.transpose() * td.d).trace();
    const double scale = std::pow(tb, -td.theta);
    const Mat h = 2.0 * scale *
                  (td.a + 0.5 * (td.d * p.transpose() + p * td.d.transpose()) -
                   td.theta * num / tb * td.b);
    fe = finish_field(h, scale * td.d.transpose() * p);
    break;
  }
  case FieldRecipe::ProblemCustom: {
    const auto hm = obj.custom_field(p);
    fe = finish_field(hm.first, hm.second);
    break;
  }
  }
#ifndef NDEBUG
  if (orthonormality_error(p) < 1e-10) {
    const Mat g = euclidean_grad(obj, p);
    const double lhs = (fe.h.matrix() * p - g - p * fe.mismatch).norm();
    const double scale = std::max({1.0, g.norm(), fe.h.matrix().norm()});
    if (lhs > 1e-10 * scale)
      spdlog::warn("field identity H P - grad = P M violated by {:.3e} (scale {:.3e})", lhs, scale);
  }
#endif
  return fe;
}

double kkt_mismatch_asymmetry(const ComposedObjective &obj, const Mat &p) {
  return nepv_field(obj, p).asymmetry;
}

Mat script_d(const ComposedObjective &obj, const Mat &p) {
  const ValueAndGrad vg = value_and_grad(obj, p);
  Mat d = Mat::Zero(p.rows(), p.cols());
  for (std::size_t i = 0; i < obj.terms.size(); ++i)
    if (obj.terms[i].kind == AtomKind::LinearTrace)
      d += vg.phi(static_cast<Index>(i)) * grad_atomic(obj.terms[i], p);
  return d;
}

FeasibilityMargin feasibility_margin(const ComposedObjective &obj, const Mat &p) {
  FeasibilityMargin out;
  if (obj.feasible_region == FeasibleRegion::FullStiefel)
    return out;
  auto consider = [&out](const Mat &pi, const Mat &target) {
    const Mat x = pi.transpose() * target;
    const Vec ev = symmetric_eigenvalues(x);
    out.min_eig = std::min(out.min_eig, ev(0));
    out.scale = std::max(out.scale, spectral_norm(target));
    out.applicable = true;
  };
  switch (obj.alignment.variant) {
  case AlignmentRule::Variant::Identity:
    break;
  case AlignmentRule::Variant::PolarOfScriptD:
    consider(p, script_d(obj, p));
    break;
  case AlignmentRule::Variant::PolarOfD:
    consider(p, obj.alignment.d);
    break;
  case AlignmentRule::Variant::PerBlockPolar: {
    Vec phi = Vec::Ones(static_cast<Index>(obj.terms.size()));
    if (obj.alignment.weight_blocks)
      phi = value_and_grad(obj, p).phi;
    for (std::size_t ti : obj.alignment.block_terms) {
      const AtomicTerm &t = obj.terms[ti];
      consider(select_columns(p, t.selector.indices), phi(static_cast<Index>(ti)) * t.matrix);
    }
    break;
  }
  }
  return out;
}

ComposedObjective substitute(const ComposedObjective &obj, const Mat &w) {
  if (w.rows() != obj.n)
    throw Error(ErrorCode::DimensionMismatch, "substitution basis has wrong row count");
  ComposedObjective out = obj;
  out.n = w.cols();
  for (auto &t : out.terms) {
    if (t.kind == AtomKind::LinearTrace) {
      t.matrix = w.transpose() * t.matrix;
    } else {
      const Mat a = w.transpose() * t.matrix * w;
      t.matrix = 0.5 * (a + a.transpose());
    }
  }
  if (out.theta) {
    const Mat a = w.transpose() * out.theta->a * w;
    const Mat b = w.transpose() * out.theta->b * w;
    out.theta->a = 0.5 * (a + a.transpose());
    out.theta->b = 0.5 * (b + b.transpose());
    out.theta->d = w.transpose() * out.theta->d;
  }
  if (out.alignment.d.size() > 0)
    out.alignment.d = w.transpose() * out.alignment.d;
  if (obj.custom_field) {
    CustomField inner = obj.custom_field;
    const Mat wc = w;
    out.custom_field = [inner, wc](const Mat &z) {
      const auto hm = inner(wc * z);
      return std::make_pair(Mat(wc.transpose() * hm.first * wc), hm.second);
    };
  }
  return out;
}

} // namespace stiefel
