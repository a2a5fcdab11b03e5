#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <vector>

#include "stiefel/error.hpp"

namespace stiefel {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

// Real symmetric matrix. Construction rejects inputs whose relative asymmetry
// exceeds 1e-12 and stores the exact symmetric part.
class SymmetricMatrix {
public:
  SymmetricMatrix() = default;
  explicit SymmetricMatrix(const Mat &m, double rel_tol = 1e-12);

  // (M + M^T)/2 without any tolerance check.
  static SymmetricMatrix symmetrize(const Mat &m);

  const Mat &matrix() const { return m_; }
  operator const Mat &() const { return m_; }
  Index order() const { return m_.rows(); }

private:
  Mat m_;
};

// n x k matrix with orthonormal columns, ||P^T P - I||_F <= tol.
class StiefelPoint {
public:
  StiefelPoint() = default;
  explicit StiefelPoint(const Mat &basis, double tol = 1e-10);

  // Re-orthonormalize an arbitrary full-column-rank matrix (polar factor).
  static StiefelPoint orthonormalized(const Mat &m);

  const Mat &basis() const { return p_; }
  operator const Mat &() const { return p_; }
  Index n() const { return p_.rows(); }
  Index k() const { return p_.cols(); }

private:
  Mat p_;
};

struct PolarDecomposition {
  StiefelPoint orthogonal_factor; // U V^T
  Mat psd_factor;                 // V Sigma V^T
  double trace_norm = 0.0;
  Vec singular_values;            // descending
};

struct SpectralTopK {
  Vec eigenvalues;                // k largest, descending
  StiefelPoint eigenbasis;
  double gap = 0.0;               // lambda_k - lambda_{k+1}; +inf when k == n
};

struct SinTheta {
  double dist2 = 0.0;
  double distF = 0.0;
};

PolarDecomposition polar_factor(const Mat &b);
SpectralTopK top_k_eigenpairs(const SymmetricMatrix &h, Index k);
double trace_norm(const Mat &b);
SymmetricMatrix sym_part(const Mat &m);
SinTheta canonical_sin_theta(const Mat &x, const Mat &y);
Mat orthonormalize_against(const Mat &p, const Mat &v);
StiefelPoint random_stiefel(Index n, Index k, std::uint64_t seed);

// Helpers shared by the solvers and diagnostics.
void require_finite(const Mat &m, const char *what);
void fix_column_signs(Mat &columns);
void fix_column_signs(Mat &columns, Mat &partner);
Vec symmetric_eigenvalues(const Mat &m); // ascending
double spectral_norm(const Mat &m);
double orthonormality_error(const Mat &p);
double sum_largest_eigenvalues(const Mat &m, Index k);
double sum_smallest_eigenvalues(const Mat &m, Index k);
Mat select_columns(const Mat &m, const std::vector<Index> &cols);

} // namespace stiefel
