#include "stiefel/problems.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace stiefel {

namespace {

Error invalid(const std::string &msg) { return Error(ErrorCode::InvalidProblem, msg); }

void finish(ComposedObjective &obj) {
  obj.validate();
}

void require_square(const Mat &a, Index n, const std::string &what) {
  if (a.rows() != n || a.cols() != n)
    throw invalid(what + " must be " + std::to_string(n) + "x" + std::to_string(n));
}

void check_denominator_matrix(const Mat &b, Index k) {
  const Vec ev = symmetric_eigenvalues(b);
  const double nrm = std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
  if (ev(0) < -1e-10 * nrm)
    throw invalid("B must be positive semidefinite");
  if (!(ev.head(k).sum() > 0.0))
    throw invalid("B needs s_k(B) > 0 (rank(B) > n - k)");
}

} // namespace

const char *family_name(Family f) {
  switch (f) {
  case Family::SEP: return "SEP";
  case Family::MBSub: return "MBSub";
  case Family::SumCT: return "SumCT";
  case Family::ThetaTR: return "ThetaTR";
  case Family::OLDA: return "OLDA";
  case Family::OCCA: return "OCCA";
  case Family::UMDS: return "UMDS";
  case Family::TrCP: return "TrCP";
  case Family::DFTLike: return "DFTLike";
  case Family::ProcrustesLS: return "ProcrustesLS";
  case Family::Custom: return "Custom";
  }
  return "?";
}

Family parse_family(const std::string &name) {
  static const std::pair<const char *, Family> table[] = {
      {"SEP", Family::SEP},           {"MBSub", Family::MBSub},
      {"SumCT", Family::SumCT},       {"ThetaTR", Family::ThetaTR},
      {"OLDA", Family::OLDA},         {"OCCA", Family::OCCA},
      {"UMDS", Family::UMDS},         {"TrCP", Family::TrCP},
      {"DFTLike", Family::DFTLike},   {"ProcrustesLS", Family::ProcrustesLS},
      {"Custom", Family::Custom}};
  for (const auto &[key, fam] : table)
    if (name == key)
      return fam;
  throw invalid("unknown family '" + name + "'");
}

OuterFunction outer_preset(const std::string &name, std::size_t n) {
  if (name == "sum")
    return OuterFunction::sum(n);
  if (name == "sum_squares")
    return OuterFunction::sum_of_squares(n);
  if (name == "log_sum_exp")
    return OuterFunction::log_sum_exp(n);
  throw invalid("unknown outer function '" + name + "'");
}

ComposedObjective build_sep(const Mat &a, Index k) {
  ComposedObjective obj;
  obj.name = "SEP";
  obj.n = a.rows();
  obj.k = k;
  require_square(a, obj.n, "A");
  obj.terms.push_back(AtomicTerm::quadratic(a, 1, ColumnSelector::all(k)));
  obj.outer = OuterFunction::sum(1);
  obj.recipe = FieldRecipe::CompositionWeighted;
  finish(obj);
  return obj;
}

ComposedObjective build_mbsub(const Mat &a, const Mat &d) {
  ComposedObjective obj;
  obj.name = "MBSub";
  obj.n = a.rows();
  obj.k = d.cols();
  require_square(a, obj.n, "A");
  if (d.rows() != obj.n)
    throw invalid("D must have n rows");
  obj.terms.push_back(AtomicTerm::quadratic(a, 1, ColumnSelector::all(obj.k)));
  obj.terms.push_back(AtomicTerm::linear(d, 1, ColumnSelector::all(obj.k)));
  obj.outer = OuterFunction::sum(2);
  obj.recipe = FieldRecipe::CompositionWeighted;
  obj.alignment = AlignmentRule::polar_of_script_d();
  obj.feasible_region = FeasibleRegion::PositivePolarAgainst;
  finish(obj);
  return obj;
}

ComposedObjective build_sum_ct(const std::vector<Mat> &a_list, const std::vector<Mat> &d_list,
                               const std::vector<std::vector<Index>> &blocks, Index k) {
  if (a_list.size() != blocks.size() || d_list.size() != blocks.size() || blocks.empty())
    throw invalid("SumCT needs one A_i and one D_i per block");
  std::set<Index> seen;
  for (const auto &b : blocks)
    for (Index c : b)
      if (c < 0 || c >= k || !seen.insert(c).second)
        throw invalid("SumCT blocks must partition the columns 0..k-1");
  if (static_cast<Index>(seen.size()) != k)
    throw invalid("SumCT blocks must cover every column");
  ComposedObjective obj;
  obj.name = "SumCT";
  obj.n = a_list.front().rows();
  obj.k = k;
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    require_square(a_list[j], obj.n, "A_list[" + std::to_string(j) + "]");
    obj.terms.push_back(AtomicTerm::quadratic(a_list[j], 1, ColumnSelector::of(blocks[j])));
  }
  std::vector<std::size_t> lin;
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    if (d_list[j].rows() != obj.n || d_list[j].cols() != static_cast<Index>(blocks[j].size()))
      throw invalid("D_list[" + std::to_string(j) + "] must be n x |block|");
    lin.push_back(obj.terms.size());
    obj.terms.push_back(AtomicTerm::linear(d_list[j], 1, ColumnSelector::of(blocks[j])));
  }
  obj.outer = OuterFunction::sum(obj.terms.size());
  obj.recipe = FieldRecipe::Generic;
  obj.alignment = AlignmentRule::per_block_polar(lin, true);
  obj.feasible_region = FeasibleRegion::PositivePolarAgainst;
  finish(obj);
  return obj;
}

namespace {

ComposedObjective theta_terms(const Mat &a, const Mat &b, const Mat &d, double theta,
                              const char *name) {
  ComposedObjective obj;
  obj.name = name;
  obj.n = b.rows();
  obj.k = d.cols();
  require_square(a, obj.n, "A");
  require_square(b, obj.n, "B");
  if (d.rows() != obj.n)
    throw invalid("D must have n rows");
  if (!(theta >= 0.0 && theta <= 1.0))
    throw invalid("theta must lie in [0, 1]");
  check_denominator_matrix(b, obj.k);
  const ColumnSelector all = ColumnSelector::all(obj.k);
  obj.terms.push_back(AtomicTerm::quadratic(b, 1, all));
  obj.terms.push_back(AtomicTerm::quadratic(a, 1, all));
  obj.terms.push_back(AtomicTerm::linear(d, 1, all));
  ThetaTRData td;
  td.theta = theta;
  td.a = obj.terms[1].matrix;
  td.b = obj.terms[0].matrix;
  td.d = d;
  obj.theta = td;
  if (d.norm() > 0.0) {
    obj.alignment = AlignmentRule::polar_of_d(d);
    obj.feasible_region = FeasibleRegion::PositivePolarAgainst;
  }
  return obj;
}

} // namespace

ComposedObjective build_theta_tr(const Mat &a, const Mat &b, const Mat &d, double theta) {
  ComposedObjective obj = theta_terms(a, b, d, theta, "ThetaTR");
  obj.outer = OuterFunction::theta_ratio(theta);
  obj.recipe = FieldRecipe::ThetaTR;
  finish(obj);
  return obj;
}

ComposedObjective build_theta_tr_squared(const Mat &a, const Mat &b, const Mat &d, double theta) {
  ComposedObjective obj = theta_terms(a, b, d, theta, "ThetaTRSquared");
  obj.outer = OuterFunction::ratio_squared(theta);
  obj.recipe = FieldRecipe::CompositionWeighted;
  finish(obj);
  return obj;
}

ComposedObjective build_olda(const Mat &a, const Mat &b, Index k) {
  ComposedObjective obj = build_theta_tr(a, b, Mat::Zero(b.rows(), k), 1.0);
  obj.name = "OLDA";
  return obj;
}

ComposedObjective build_occa(const Mat &b, const Mat &d) {
  ComposedObjective obj = build_theta_tr(Mat::Zero(b.rows(), b.rows()), b, d, 0.5);
  obj.name = "OCCA";
  return obj;
}

ComposedObjective build_umds(const std::vector<Mat> &a_list, Index k) {
  if (a_list.empty())
    throw invalid("UMDS needs A_list");
  ComposedObjective obj;
  obj.name = "UMDS";
  obj.n = a_list.front().rows();
  obj.k = k;
  for (std::size_t i = 0; i < a_list.size(); ++i) {
    require_square(a_list[i], obj.n, "A_list[" + std::to_string(i) + "]");
    obj.terms.push_back(AtomicTerm::quadratic(a_list[i], 2, ColumnSelector::all(k)));
  }
  obj.outer = OuterFunction::sum(obj.terms.size());
  obj.recipe = FieldRecipe::CompositionWeighted;
  finish(obj);
  return obj;
}

ComposedObjective build_trcp(const std::vector<Mat> &a_list, Index k, const std::string &phi) {
  if (a_list.empty())
    throw invalid("TrCP needs A_list");
  ComposedObjective obj;
  obj.name = "TrCP";
  obj.n = a_list.front().rows();
  obj.k = k;
  for (std::size_t i = 0; i < a_list.size(); ++i) {
    require_square(a_list[i], obj.n, "A_list[" + std::to_string(i) + "]");
    obj.terms.push_back(AtomicTerm::quadratic(a_list[i], 1, ColumnSelector::all(k)));
  }
  obj.outer = outer_preset(phi, obj.terms.size());
  obj.recipe = FieldRecipe::CompositionWeighted;
  finish(obj);
  return obj;
}

ComposedObjective build_dft_like(const Mat &a, Index k, const std::string &phi) {
  if (phi != "sum_squares" && phi != "log_sum_exp")
    throw invalid("DFT-like phi must be sum_squares or log_sum_exp");
  ComposedObjective obj;
  obj.name = "DFTLike";
  obj.n = a.rows();
  obj.k = k;
  require_square(a, obj.n, "A");
  const ColumnSelector all = ColumnSelector::all(k);
  obj.terms.push_back(AtomicTerm::quadratic(a, 1, all));
  for (Index i = 0; i < obj.n; ++i) {
    Mat e = Mat::Zero(obj.n, obj.n);
    e(i, i) = 1.0;
    obj.terms.push_back(AtomicTerm::quadratic(e, 1, all));
  }
  obj.outer = OuterFunction::concat(OuterFunction::sum(1),
                                    outer_preset(phi, static_cast<std::size_t>(obj.n)));
  obj.recipe = FieldRecipe::CompositionWeighted;
  finish(obj);
  return obj;
}

ComposedObjective build_quadratic_plus_linear_power(const Mat &a, const Mat &d, int m) {
  ComposedObjective obj;
  obj.name = "QuadPlusLinearPower";
  obj.n = a.rows();
  obj.k = d.cols();
  require_square(a, obj.n, "A");
  if (d.rows() != obj.n)
    throw invalid("D must have n rows");
  obj.terms.push_back(AtomicTerm::quadratic(a, 1, ColumnSelector::all(obj.k)));
  obj.terms.push_back(AtomicTerm::linear(d, m, ColumnSelector::all(obj.k)));
  obj.outer = OuterFunction::sum(2);
  obj.recipe = FieldRecipe::CompositionWeighted;
  obj.alignment = AlignmentRule::polar_of_d(d);
  obj.feasible_region = FeasibleRegion::PositivePolarAgainst;
  finish(obj);
  return obj;
}

ComposedObjective build_procrustes_ls(const Mat &c, const Mat &b) {
  if (c.rows() != b.rows())
    throw Error(ErrorCode::DimensionMismatch, "C and B must have the same row count");
  if (b.cols() > c.cols())
    throw Error(ErrorCode::DimensionMismatch, "B has more columns than C");
  const Mat ctc = c.transpose() * c;
  ComposedObjective obj = build_mbsub(-0.5 * (ctc + ctc.transpose()), 2.0 * c.transpose() * b);
  obj.name = "ProcrustesLS";
  return obj;
}

double procrustes_residual(const Mat &c, const Mat &b, const Mat &p) { return (c * p - b).norm(); }

LiftedObjective lift_m_orthogonal(const ComposedObjective &obj, const Mat &m) {
  if (m.rows() != obj.n || m.cols() != obj.n)
    throw Error(ErrorCode::DimensionMismatch, "M must be n x n");
  const SymmetricMatrix ms(m, 1e-10);
  Eigen::LLT<Mat> llt(ms.matrix());
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::NotPositiveDefinite, "Cholesky factorization of M failed");
  LiftedObjective out;
  out.lifting.m = ms.matrix();
  out.lifting.r = llt.matrixU();
  out.lifting.r_inv = out.lifting.r.triangularView<Eigen::Upper>().solve(
      Mat::Identity(obj.n, obj.n));
  out.objective = substitute(obj, out.lifting.r_inv);
  out.objective.name = obj.name + "/lifted";
  return out;
}

double generalized_kkt_residual(const ComposedObjective &obj, const Mat &p, const Mat &m) {
  const Mat g = euclidean_grad(obj, p);
  const double gn = g.norm();
  if (gn < 1e-300)
    return 0.0;
  return (g - m * p * (p.transpose() * g)).norm() / gn;
}

ComposedObjective build(const ProblemSpec &spec) {
  auto mat = [&spec](const std::string &key) -> const Mat & {
    auto it = spec.matrices.find(key);
    if (it == spec.matrices.end())
      throw invalid("matrices." + key + " is required for family " + family_name(spec.family));
    return it->second;
  };
  auto check_dims = [&spec](const ComposedObjective &obj) {
    if (spec.n > 0 && obj.n != spec.n)
      throw invalid("field n = " + std::to_string(spec.n) + " disagrees with matrix size " +
                    std::to_string(obj.n));
    if (spec.k > 0 && obj.k != spec.k)
      throw invalid("field k = " + std::to_string(spec.k) + " disagrees with matrix size " +
                    std::to_string(obj.k));
  };
  ComposedObjective obj;
  switch (spec.family) {
  case Family::SEP:
    obj = build_sep(mat("A"), spec.k);
    break;
  case Family::MBSub:
    obj = build_mbsub(mat("A"), mat("D"));
    break;
  case Family::SumCT:
    obj = build_sum_ct(spec.a_list, spec.d_list, spec.blocks, spec.k);
    break;
  case Family::ThetaTR: {
    const Mat &b = mat("B");
    const Mat a = spec.matrices.count("A") ? mat("A") : Mat(Mat::Zero(b.rows(), b.rows()));
    const Mat d = spec.matrices.count("D") ? mat("D") : Mat(Mat::Zero(b.rows(), spec.k));
    obj = spec.squared ? build_theta_tr_squared(a, b, d, spec.theta)
                       : build_theta_tr(a, b, d, spec.theta);
    break;
  }
  case Family::OLDA:
    obj = build_olda(mat("A"), mat("B"), spec.k);
    break;
  case Family::OCCA:
    obj = build_occa(mat("B"), mat("D"));
    break;
  case Family::UMDS:
    obj = build_umds(spec.a_list, spec.k);
    break;
  case Family::TrCP:
    obj = build_trcp(spec.a_list, spec.k, spec.phi);
    break;
  case Family::DFTLike:
    obj = build_dft_like(mat("A"), spec.k, spec.phi);
    break;
  case Family::ProcrustesLS:
    obj = build_procrustes_ls(mat("C"), mat("B"));
    break;
  case Family::Custom: {
    if (spec.terms.empty())
      throw invalid("Custom family needs a non-empty terms list");
    obj.name = "Custom";
    obj.n = spec.n;
    obj.k = spec.k;
    std::vector<std::size_t> lin;
    for (const auto &t : spec.terms) {
      ColumnSelector sel = t.columns.empty() ? ColumnSelector::all(spec.k)
                                             : ColumnSelector::of(t.columns);
      if (t.kind == AtomKind::LinearTrace) {
        lin.push_back(obj.terms.size());
        obj.terms.push_back(AtomicTerm::linear(mat(t.matrix), t.m, sel, t.s, t.c));
      } else {
        obj.terms.push_back(AtomicTerm::quadratic(mat(t.matrix), t.m, sel, t.s, t.c));
      }
    }
    obj.outer = outer_preset(spec.outer, obj.terms.size());
    if (spec.recipe == "generic")
      obj.recipe = FieldRecipe::Generic;
    else if (spec.recipe == "composition")
      obj.recipe = FieldRecipe::CompositionWeighted;
    else
      throw invalid("recipe must be 'generic' or 'composition'");
    if (spec.alignment == "identity") {
      obj.alignment = AlignmentRule::identity();
    } else if (spec.alignment == "polar_of_d") {
      obj.alignment = AlignmentRule::polar_of_d(mat(spec.alignment_matrix));
    } else if (spec.alignment == "polar_of_script_d") {
      obj.alignment = AlignmentRule::polar_of_script_d();
    } else if (spec.alignment == "per_block_polar") {
      obj.alignment = AlignmentRule::per_block_polar(lin, true);
    } else {
      throw invalid("unknown alignment '" + spec.alignment + "'");
    }
    if (obj.alignment.variant != AlignmentRule::Variant::Identity)
      obj.feasible_region = FeasibleRegion::PositivePolarAgainst;
    finish(obj);
    break;
  }
  }
  check_dims(obj);
  if (!spec.name.empty())
    obj.name = spec.name;
  return obj;
}

} // namespace stiefel
