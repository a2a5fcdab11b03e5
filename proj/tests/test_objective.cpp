#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "instances.hpp"
#include "oracles.hpp"
#include "stiefel/objective.hpp"
#include "stiefel/problems.hpp"

using namespace stiefel;

namespace {

Mat col(std::initializer_list<double> v) {
  Mat m(static_cast<Index>(v.size()), 1);
  Index i = 0;
  for (double x : v)
    m(i++, 0) = x;
  return m;
}

Mat diag(std::initializer_list<double> v) { return col(v).col(0).asDiagonal(); }

ComposedObjective single_atom(const AtomicTerm &t, Index n, Index k) {
  ComposedObjective obj;
  obj.name = "atom";
  obj.n = n;
  obj.k = k;
  obj.terms = {t};
  obj.outer = OuterFunction::sum(1);
  obj.recipe = FieldRecipe::CompositionWeighted;
  obj.validate();
  return obj;
}

double fd_error(const ComposedObjective &obj, const Mat &p) {
  const Mat g = euclidean_grad(obj, p);
  const Mat fd = oracle::finite_difference_gradient([&](const Mat &x) { return eval(obj, x); }, p);
  return (fd - g).norm() / std::max(1.0, g.norm());
}

// points where P^T D has positive trace so fractional powers stay defined
Mat positive_point(const Mat &d, Index k, std::mt19937_64 &rng) {
  Mat p = oracle::random_orthonormal(d.rows(), k, rng);
  const Mat q = oracle::polar(p.transpose() * d);
  return p * q;
}

} // namespace

TEST(AtomicTerm, EvalExamples) {
  const Mat e1 = col({1, 0});
  EXPECT_NEAR(eval_atomic(AtomicTerm::linear(col({2, 0}), 2, ColumnSelector::all(1)), e1), 4.0,
              1e-15);
  EXPECT_NEAR(eval_atomic(AtomicTerm::quadratic(diag({3, 2}), 1, ColumnSelector::all(1), 2.0), e1),
              9.0, 1e-15);
  EXPECT_NEAR(eval_atomic(AtomicTerm::quadratic(diag({3, 2}), 2, ColumnSelector::all(2)),
                          Mat::Identity(2, 2)),
              13.0, 1e-15);
}

TEST(AtomicTerm, GradExamples) {
  std::mt19937_64 rng(1);
  const Mat d = oracle::gaussian(4, 2, rng);
  const Mat p = oracle::random_orthonormal(4, 2, rng);
  EXPECT_LT((grad_atomic(AtomicTerm::linear(d, 1, ColumnSelector::all(2)), p) - d).norm(), 1e-15);
  EXPECT_LT((grad_atomic(AtomicTerm::quadratic(diag({3, 2}), 1, ColumnSelector::all(1)),
                         col({1, 0})) -
             col({6, 0}))
                .norm(),
            1e-15);
}

TEST(AtomicTerm, NegativeBaseWithFractionalPower) {
  const AtomicTerm t = AtomicTerm::linear(col({1, 0}), 1, ColumnSelector::all(1), 1.5);
  try {
    eval_atomic(t, col({-1, 0}));
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::NegativeBaseForFractionalPower);
  }
}

TEST(AtomicTerm, FiniteDifferenceAllKinds) {
  std::mt19937_64 rng(21);
  const Index n = 6, k = 3;
  for (int m : {1, 2, 3})
    for (double s : {1.0, 2.0, 1.5}) {
      const Mat d = oracle::gaussian(n, k, rng);
      const auto obj = single_atom(AtomicTerm::linear(d, m, ColumnSelector::all(k), s, 0.7), n, k);
      for (int t = 0; t < 20; ++t) {
        const Mat p = positive_point(d, k, rng);
        if (m == 3 && s == 1.5 && atom_base(obj.terms[0], p) <= 0.0)
          continue;
        EXPECT_LT(fd_error(obj, p), 1e-6) << "linear m=" << m << " s=" << s;
      }
    }
  for (int m : {1, 2})
    for (double s : {1.0, 2.0, 1.5}) {
      const Mat a = oracle::random_psd(n, rng);
      const auto obj =
          single_atom(AtomicTerm::quadratic(a, m, ColumnSelector::all(k), s, 1.3), n, k);
      for (int t = 0; t < 20; ++t)
        EXPECT_LT(fd_error(obj, oracle::random_orthonormal(n, k, rng)), 1e-6)
            << "quadratic m=" << m << " s=" << s;
    }
}

TEST(AtomicTerm, SelectorScatter) {
  std::mt19937_64 rng(22);
  const Mat a = oracle::random_psd(5, rng);
  const Mat d = oracle::gaussian(5, 2, rng);
  ComposedObjective obj;
  obj.name = "blocks";
  obj.n = 5;
  obj.k = 3;
  obj.terms = {AtomicTerm::quadratic(a, 2, ColumnSelector::of({0, 2})),
               AtomicTerm::linear(d, 2, ColumnSelector::of({1, 2}))};
  obj.outer = OuterFunction::sum_of_squares(2);
  obj.recipe = FieldRecipe::Generic;
  obj.validate();
  for (int t = 0; t < 20; ++t)
    EXPECT_LT(fd_error(obj, oracle::random_orthonormal(5, 3, rng)), 1e-6);
}

TEST(AtomicTerm, EulerIdentity) {
  std::mt19937_64 rng(23);
  const Index n = 5, k = 2;
  for (int t = 0; t < 100; ++t) {
    const int m = 1 + t % 3;
    const double s = t % 2 ? 2.0 : 1.0;
    const Mat d = oracle::gaussian(n, k, rng);
    // a power other than 1 needs a nonnegative base, so only the PSD quadratic gets it
    const AtomicTerm lin = AtomicTerm::linear(d, m, ColumnSelector::all(k));
    const Mat p = oracle::random_orthonormal(n, k, rng);
    const double lv = eval_atomic(lin, p);
    EXPECT_NEAR((p.transpose() * grad_atomic(lin, p)).trace(), m * lv,
                1e-10 * std::max(1.0, std::abs(lv)));
    const AtomicTerm quad =
        AtomicTerm::quadratic(oracle::random_psd(n, rng), 1 + t % 2, ColumnSelector::all(k), s);
    const double qv = eval_atomic(quad, p);
    EXPECT_NEAR((p.transpose() * grad_atomic(quad, p)).trace(), 2.0 * s * quad.m * qv,
                1e-10 * std::max(1.0, std::abs(qv)));
  }
}

TEST(Objective, EvalExamples) {
  EXPECT_NEAR(eval(build_mbsub(diag({1, 1}), col({1, 0})), col({1, 0})), 2.0, 1e-15);
  const auto sq = build_theta_tr_squared(Mat::Zero(2, 2), Mat::Identity(2, 2), col({1, 0}), 0.5);
  EXPECT_NEAR(eval(sq, col({1, 0})), 1.0, 1e-15);
  const auto sep = build_sep(diag({5, 3, 1}), 2);
  EXPECT_NEAR(eval(sep, Mat::Identity(3, 2)), 8.0, 1e-15);
}

TEST(Objective, ClosedFormGradients) {
  std::mt19937_64 rng(24);
  const Mat a = oracle::random_psd(6, rng);
  const Mat d = oracle::gaussian(6, 2, rng);
  const Mat p = oracle::random_orthonormal(6, 2, rng);
  EXPECT_LT((euclidean_grad(build_mbsub(a, d), p) - (2 * a * p + d)).norm(), 1e-12);
  EXPECT_LT((euclidean_grad(build_quadratic_plus_linear_power(a, d, 2), p) -
             (2 * a * p + 2 * d * p.transpose() * d))
                .norm(),
            1e-12);
}

TEST(Objective, RiemannianGradient) {
  const auto sep = build_sep(diag({5, 3, 1}), 2);
  EXPECT_LT(riemannian_grad(sep, Mat::Identity(3, 2)).norm(), 1e-12 * 5);
  std::mt19937_64 rng(25);
  const Mat d = oracle::gaussian(5, 2, rng);
  ComposedObjective lin;
  lin.name = "linear";
  lin.n = 5;
  lin.k = 2;
  lin.terms = {AtomicTerm::linear(d, 1, ColumnSelector::all(2))};
  lin.outer = OuterFunction::sum(1);
  lin.validate();
  EXPECT_LT(riemannian_grad(lin, oracle::polar(d)).norm(), 1e-12);
  const auto mb = instances::mbsub_indefinite(1, 7, 3);
  for (int t = 0; t < 10; ++t) {
    const Mat p = oracle::random_orthonormal(7, 3, rng);
    const Mat r = riemannian_grad(mb, p);
    const Mat s = p.transpose() * r;
    EXPECT_LT((s + s.transpose()).norm(), 1e-12 * std::max(1.0, r.norm()));
  }
}

TEST(Objective, RightRotationInvariance) {
  std::mt19937_64 rng(26);
  const auto obj = instances::umds(2, 6, 3);
  for (int t = 0; t < 20; ++t) {
    const Mat p = oracle::random_orthonormal(6, 3, rng);
    const Mat q = oracle::random_orthonormal(3, 3, rng);
    EXPECT_NEAR(eval(obj, p * q), eval(obj, p), 1e-10 * std::abs(eval(obj, p)));
  }
}

TEST(Field, SepIsConstant) {
  std::mt19937_64 rng(27);
  const Mat a = oracle::random_symmetric(5, rng);
  const auto sep = build_sep(a, 2);
  for (int t = 0; t < 5; ++t) {
    const Mat p = oracle::random_orthonormal(5, 2, rng);
    const auto fe = nepv_field(sep, p);
    EXPECT_LT((fe.h.matrix() - 2 * a).norm(), 1e-14);
    EXPECT_LT(fe.mismatch.norm(), 1e-14);
    EXPECT_EQ(kkt_mismatch_asymmetry(sep, p), 0.0);
  }
}

TEST(Field, GenericMbsubMatchesFormula) {
  std::mt19937_64 rng(28);
  const Mat a = oracle::random_symmetric(6, rng);
  const Mat d = oracle::gaussian(6, 2, rng);
  ComposedObjective obj = build_mbsub(a, d);
  obj.recipe = FieldRecipe::Generic;
  const Mat p = oracle::random_orthonormal(6, 2, rng);
  const Mat g = 2 * a * p + d;
  const auto fe = nepv_field(obj, p);
  EXPECT_LT((fe.h.matrix() - (g * p.transpose() + p * g.transpose())).norm(), 1e-12);
  EXPECT_LT((fe.h.matrix() * p - g - p * fe.mismatch).norm(), 1e-12);
}

TEST(Field, ThetaZeroMatchesFormula) {
  std::mt19937_64 rng(29);
  const Mat a = oracle::random_symmetric(6, rng);
  const Mat b = oracle::random_psd(6, rng, 0.5);
  const Mat d = oracle::gaussian(6, 2, rng);
  const auto obj = build_theta_tr(a, b, d, 0.0);
  const Mat p = oracle::random_orthonormal(6, 2, rng);
  EXPECT_LT((nepv_field(obj, p).h.matrix() - (2 * a + d * p.transpose() + p * d.transpose())).norm(),
            1e-12);
}

TEST(Field, MbsubMismatchAsymmetryAtRandomPoint) {
  const auto obj = instances::mbsub_psd(3, 6, 2);
  std::mt19937_64 rng(30);
  EXPECT_GT(kkt_mismatch_asymmetry(obj, oracle::random_orthonormal(6, 2, rng)), 1e-6);
}

// H P - grad = P M at 100 random points for every family in the suite.
TEST(Field, IdentityHoldsForEveryFamily) {
  std::mt19937_64 rng(31);
  for (const auto &inst : instances::monotone_suite(4)) {
    const auto &obj = inst.obj;
    for (int t = 0; t < 100; ++t) {
      Mat p = oracle::random_orthonormal(obj.n, obj.k, rng);
      const auto fe = nepv_field(obj, p);
      const Mat g = euclidean_grad(obj, p);
      const double scale = std::max({1.0, g.norm(), fe.h.matrix().norm()});
      ASSERT_LT((fe.h.matrix() * p - g - p * fe.mismatch).norm(), 1e-10 * scale) << inst.label;
    }
  }
}

TEST(Field, TraceIdentity) {
  std::mt19937_64 rng(32);
  // composition-weighted: tr(P^T H P) = sum_i 2 s_i m_i phi_i value_i
  const auto obj = instances::quad_linear_square_indefinite(5, 6, 2);
  for (int t = 0; t < 20; ++t) {
    const Mat p = oracle::random_orthonormal(6, 2, rng);
    const auto vg = value_and_grad(obj, p);
    double expect = 0.0;
    for (std::size_t i = 0; i < obj.terms.size(); ++i)
      expect += 2.0 * obj.terms[i].s * obj.terms[i].m * vg.phi(static_cast<Index>(i)) *
                vg.t(static_cast<Index>(i));
    const Mat h = nepv_field(obj, p).h.matrix();
    EXPECT_NEAR((p.transpose() * h * p).trace(), expect, 1e-10 * std::max(1.0, std::abs(expect)));
  }
  // generic: tr(P^T H P) = 2 tr(P^T grad)
  const auto sct = instances::sum_ct(6, 6);
  for (int t = 0; t < 20; ++t) {
    const Mat p = oracle::random_orthonormal(6, 3, rng);
    const Mat h = nepv_field(sct, p).h.matrix();
    const double expect = 2.0 * (p.transpose() * euclidean_grad(sct, p)).trace();
    EXPECT_NEAR((p.transpose() * h * p).trace(), expect, 1e-10 * std::max(1.0, std::abs(expect)));
  }
}

TEST(Field, CompositionNeedsFullSelectors) {
  std::mt19937_64 rng(33);
  ComposedObjective obj;
  obj.name = "partial";
  obj.n = 4;
  obj.k = 2;
  obj.terms = {AtomicTerm::quadratic(oracle::random_psd(4, rng), 1, ColumnSelector::of({0}))};
  obj.outer = OuterFunction::sum(1);
  obj.recipe = FieldRecipe::CompositionWeighted;
  try {
    obj.validate();
    nepv_field(obj, oracle::random_orthonormal(4, 2, rng));
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::RecipeRequiresFullSelectors);
  }
}

TEST(Outer, SpotChecks) {
  std::mt19937_64 rng(34);
  std::vector<Vec> pts;
  for (int i = 0; i < 20; ++i) {
    Vec v = oracle::gaussian(3, 1, rng).col(0).cwiseAbs() + Vec::Constant(3, 0.5);
    pts.push_back(v);
  }
  EXPECT_EQ(spot_check_outer(OuterFunction::log_sum_exp(3), pts).convexity_violations, 0);
  EXPECT_EQ(spot_check_outer(OuterFunction::sum_of_squares(3), pts).convexity_violations, 0);
  EXPECT_TRUE(OuterFunction::ratio_squared(0.5).convexity_declared);
  EXPECT_FALSE(OuterFunction::ratio_squared(0.8).convexity_declared);
  // partials of log-sum-exp are positive and sum to one
  const Vec g = OuterFunction::log_sum_exp(3).partials(pts[0]);
  EXPECT_NEAR(g.sum(), 1.0, 1e-14);
  EXPECT_GT(g.minCoeff(), 0.0);
}

TEST(Substitute, ReducedObjectiveAgreesWithComposition) {
  std::mt19937_64 rng(35);
  for (const auto &obj : {instances::mbsub_indefinite(7, 8, 2), instances::theta_tr(7, 0.5, 8, 2),
                          instances::sum_ct(7, 8)}) {
    const Mat w = oracle::random_orthonormal(obj.n, 5, rng);
    const auto red = substitute(obj, w);
    EXPECT_EQ(red.n, 5);
    for (int t = 0; t < 20; ++t) {
      const Mat z = oracle::random_orthonormal(5, obj.k, rng);
      EXPECT_NEAR(eval(red, z), eval(obj, w * z), 1e-10 * std::max(1.0, std::abs(eval(obj, w * z))));
      EXPECT_LT((euclidean_grad(red, z) - w.transpose() * euclidean_grad(obj, w * z)).norm(), 1e-10);
    }
    EXPECT_LT(fd_error(red, oracle::random_orthonormal(5, obj.k, rng)), 1e-6);
    const auto same = substitute(obj, Mat::Identity(obj.n, obj.n));
    const Mat p = oracle::random_orthonormal(obj.n, obj.k, rng);
    EXPECT_NEAR(eval(same, p), eval(obj, p), 1e-12 * std::max(1.0, std::abs(eval(obj, p))));
  }
}

TEST(Substitute, SepRayleighRitz) {
  std::mt19937_64 rng(36);
  const Mat a = oracle::random_symmetric(8, rng);
  const Mat w = oracle::random_orthonormal(8, 4, rng);
  const auto red = substitute(build_sep(a, 2), w);
  const Mat h = nepv_field(red, Mat::Identity(4, 2)).h.matrix();
  EXPECT_LT((h - 2.0 * w.transpose() * a * w).norm(), 1e-12);
  const Vec ritz = oracle::eigenvalues_descending(w.transpose() * a * w);
  const Vec top = top_k_eigenpairs(SymmetricMatrix(h), 2).eigenvalues;
  EXPECT_NEAR(top(0), 2 * ritz(0), 1e-10);
  EXPECT_NEAR(top(1), 2 * ritz(1), 1e-10);
}

TEST(Feasibility, MarginTracksScriptD) {
  const auto obj = build_mbsub(diag({1, 1}), col({1, 0}));
  EXPECT_TRUE(feasibility_margin(obj, col({1, 0})).feasible(1e-10));
  EXPECT_FALSE(feasibility_margin(obj, col({-1, 0})).feasible(1e-10));
  EXPECT_FALSE(feasibility_margin(build_sep(diag({1, 1}), 1), col({1, 0})).applicable);
}
