#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stiefel/linalg.hpp"

namespace stiefel {

// Columns of P that form the block P_i = P(:, indices). Zero-based.
struct ColumnSelector {
  std::vector<Index> indices;

  static ColumnSelector all(Index k);
  static ColumnSelector of(std::vector<Index> idx);
  Index size() const { return static_cast<Index>(indices.size()); }
  bool is_full(Index k) const;
  void validate(Index k) const;
};

enum class AtomKind { LinearTrace, QuadraticTrace };

// c * [tr((P_i^T D)^m)]^s  or  c * [tr((P_i^T A P_i)^m)]^s
struct AtomicTerm {
  AtomKind kind = AtomKind::QuadraticTrace;
  Mat matrix; // D (n x k_i) or A (n x n)
  int m = 1;
  double s = 1.0;
  double c = 1.0;
  ColumnSelector selector;
  bool psd_verified = false; // quadratic only: lambda_min(A) >= -1e-10 ||A||_2

  static AtomicTerm linear(const Mat &d, int m, ColumnSelector sel, double s = 1.0,
                           double c = 1.0);
  static AtomicTerm quadratic(const Mat &a, int m, ColumnSelector sel, double s = 1.0,
                              double c = 1.0);

  Index n() const { return matrix.rows(); }
  void validate(Index n, Index k) const;
};

// Base value tr((P_i^T D)^m) or tr((P_i^T A P_i)^m), before power and scale.
double atom_base(const AtomicTerm &term, const Mat &p);
double eval_atomic(const AtomicTerm &term, const Mat &p);
Mat grad_atomic(const AtomicTerm &term, const Mat &p);

enum class SignConstraint { Unconstrained, NonNegative };

// Outer function phi with its partial derivatives. Sign constraints refer to
// the partials phi_i.
struct OuterFunction {
  std::string name;
  std::size_t dimension = 0;
  std::function<double(const Vec &)> value;
  std::function<Vec(const Vec &)> partials;
  bool convexity_declared = false;
  std::vector<SignConstraint> sign_constraints;

  static OuterFunction sum(std::size_t n);
  static OuterFunction weighted_sum(const Vec &w);
  static OuterFunction sum_of_squares(std::size_t n);
  static OuterFunction log_sum_exp(std::size_t n);
  // (x2 + x3) / x1^theta over (tr(P^T B P), tr(P^T A P), tr(P^T D))
  static OuterFunction theta_ratio(double theta);
  // (x2 + x3)^2 / x1^(2 theta)
  static OuterFunction ratio_squared(double theta);
  // a(x_head) + b(x_tail)
  static OuterFunction concat(const OuterFunction &a, const OuterFunction &b);
};

struct OuterSpotCheck {
  int samples = 0;
  int convexity_violations = 0;
  int sign_violations = 0;
};

// Midpoint-convexity and partial-sign samples over the given points.
OuterSpotCheck spot_check_outer(const OuterFunction &outer, const std::vector<Vec> &points);

enum class FieldRecipe { Generic, CompositionWeighted, ThetaTR, ProblemCustom };

struct ThetaTRData {
  double theta = 0.0;
  Mat a; // n x n
  Mat b; // n x n
  Mat d; // n x k
};

struct AlignmentRule {
  enum class Variant { Identity, PolarOfScriptD, PerBlockPolar, PolarOfD };
  Variant variant = Variant::Identity;
  Mat d;                                // PolarOfD target
  std::vector<std::size_t> block_terms; // PerBlockPolar: linear terms, one per block
  bool weight_blocks = true;            // scale block j by its outer partial

  static AlignmentRule identity();
  static AlignmentRule polar_of_script_d();
  static AlignmentRule polar_of_d(const Mat &d);
  static AlignmentRule per_block_polar(std::vector<std::size_t> terms, bool weighted = true);
};

enum class FeasibleRegion { FullStiefel, PositivePolarAgainst };

// Returns (H, mismatch) at P.
using CustomField = std::function<std::pair<Mat, Mat>(const Mat &)>;

struct ComposedObjective {
  std::string name;
  Index n = 0;
  Index k = 0;
  std::vector<AtomicTerm> terms;
  OuterFunction outer;
  FieldRecipe recipe = FieldRecipe::Generic;
  std::optional<ThetaTRData> theta;
  CustomField custom_field;
  FeasibleRegion feasible_region = FeasibleRegion::FullStiefel;
  AlignmentRule alignment;

  void validate() const;
};

struct ValueAndGrad {
  double f = 0.0;
  Vec t;   // term values T(P)
  Vec phi; // outer partials at T(P)
  Mat grad;
};

Vec term_values(const ComposedObjective &obj, const Mat &p);
double eval(const ComposedObjective &obj, const Mat &p);
Mat euclidean_grad(const ComposedObjective &obj, const Mat &p);
ValueAndGrad value_and_grad(const ComposedObjective &obj, const Mat &p);
Mat riemannian_grad(const ComposedObjective &obj, const Mat &p);

struct FieldEvaluation {
  SymmetricMatrix h;
  Mat mismatch;
  double asymmetry = 0.0; // ||M - M^T||_F / max(1, ||M||_F)
};

FieldEvaluation nepv_field(const ComposedObjective &obj, const Mat &p);
double kkt_mismatch_asymmetry(const ComposedObjective &obj, const Mat &p);

// Sum over linear atoms of phi_i times the atom gradient (n x k).
Mat script_d(const ComposedObjective &obj, const Mat &p);

struct FeasibilityMargin {
  double min_eig = std::numeric_limits<double>::infinity();
  double scale = 0.0; // spectral norm of the alignment target
  bool applicable = false;
  bool feasible(double rel_tol) const {
    return !applicable || min_eig >= -rel_tol * std::max(1.0, scale);
  }
};

// Smallest eigenvalue of sym(P^T target) for the objective's alignment target.
FeasibilityMargin feasibility_margin(const ComposedObjective &obj, const Mat &p);

// Objective in Z with P = W Z: D -> W^T D, A -> W^T A W.
ComposedObjective substitute(const ComposedObjective &obj, const Mat &w);

} // namespace stiefel
