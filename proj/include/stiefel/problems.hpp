#pragma once

#include <map>
#include <string>
#include <vector>

#include "stiefel/objective.hpp"

namespace stiefel {

enum class Family { SEP, MBSub, SumCT, ThetaTR, OLDA, OCCA, UMDS, TrCP, DFTLike, ProcrustesLS, Custom };

const char *family_name(Family f);
Family parse_family(const std::string &name);

struct CustomTermSpec {
  AtomKind kind = AtomKind::QuadraticTrace;
  std::string matrix; // key into ProblemSpec::matrices
  int m = 1;
  double s = 1.0;
  double c = 1.0;
  std::vector<Index> columns; // empty = all
};

struct ProblemSpec {
  std::string name;
  Family family = Family::SEP;
  Index n = 0;
  Index k = 0;
  double theta = 0.0;
  std::map<std::string, Mat> matrices; // A, B, D, C, M, ...
  std::vector<Mat> a_list;
  std::vector<Mat> d_list;
  std::vector<std::vector<Index>> blocks; // SumCT column blocks
  std::string phi = "sum_squares";        // TrCP / DFTLike outer preset
  bool squared = false;                   // ThetaTR: optimize the squared ratio
  // Custom family
  std::vector<CustomTermSpec> terms;
  std::string outer = "sum";
  std::string recipe = "generic";
  std::string alignment = "identity";
  std::string alignment_matrix = "D";
};

ComposedObjective build(const ProblemSpec &spec);

ComposedObjective build_sep(const Mat &a, Index k);
ComposedObjective build_mbsub(const Mat &a, const Mat &d);
ComposedObjective build_sum_ct(const std::vector<Mat> &a_list, const std::vector<Mat> &d_list,
                               const std::vector<std::vector<Index>> &blocks, Index k);
ComposedObjective build_theta_tr(const Mat &a, const Mat &b, const Mat &d, double theta);
ComposedObjective build_theta_tr_squared(const Mat &a, const Mat &b, const Mat &d, double theta);
ComposedObjective build_olda(const Mat &a, const Mat &b, Index k);
ComposedObjective build_occa(const Mat &b, const Mat &d);
ComposedObjective build_umds(const std::vector<Mat> &a_list, Index k);
ComposedObjective build_trcp(const std::vector<Mat> &a_list, Index k, const std::string &phi);
ComposedObjective build_dft_like(const Mat &a, Index k, const std::string &phi);
// tr(P^T A P) + tr((P^T D)^m), aligned by the polar factor of P^T D
ComposedObjective build_quadratic_plus_linear_power(const Mat &a, const Mat &d, int m);

OuterFunction outer_preset(const std::string &name, std::size_t n);

// min ||C P - B||_F^2 recast as max tr(P^T (-C^T C) P) + tr(P^T (2 C^T B)).
ComposedObjective build_procrustes_ls(const Mat &c, const Mat &b);
double procrustes_residual(const Mat &c, const Mat &b, const Mat &p);

struct MLifting {
  Mat m;
  Mat r;     // upper triangular, M = R^T R
  Mat r_inv;
  Mat forward(const Mat &p) const { return r * p; }
  Mat backward(const Mat &z) const { return r_inv * z; }
};

struct LiftedObjective {
  ComposedObjective objective; // over Z with Z^T Z = I
  MLifting lifting;
};

LiftedObjective lift_m_orthogonal(const ComposedObjective &obj, const Mat &m);

// ||grad(P) - M P Lambda||_F / ||grad(P)||_F with Lambda = P^T grad(P).
double generalized_kkt_residual(const ComposedObjective &obj, const Mat &p, const Mat &m);

} // namespace stiefel
