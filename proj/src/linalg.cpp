#include "stiefel/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace stiefel {

const char *error_code_name(ErrorCode code) {
  switch (code) {
  case ErrorCode::DimensionMismatch: return "DimensionMismatch";
  case ErrorCode::NonFinite: return "NonFinite";
  case ErrorCode::NotSymmetric: return "NotSymmetric";
  case ErrorCode::NotOrthonormal: return "NotOrthonormal";
  case ErrorCode::NegativeBaseForFractionalPower: return "NegativeBaseForFractionalPower";
  case ErrorCode::RecipeRequiresFullSelectors: return "RecipeRequiresFullSelectors";
  case ErrorCode::BlockOverlap: return "BlockOverlap";
  case ErrorCode::SizeTooLargeForOracle: return "SizeTooLargeForOracle";
  case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
  case ErrorCode::DegenerateDenominator: return "DegenerateDenominator";
  case ErrorCode::InvalidProblem: return "InvalidProblem";
  case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

void require_finite(const Mat &m, const char *what) {
  if (!m.allFinite())
    throw Error(ErrorCode::NonFinite, std::string(what) + " has non-finite entries");
}

SymmetricMatrix::SymmetricMatrix(const Mat &m, double rel_tol) {
  if (m.rows() != m.cols())
    throw Error(ErrorCode::DimensionMismatch, "symmetric matrix must be square");
  require_finite(m, "symmetric matrix");
  const double nrm = m.norm();
  const double asym = (m - m.transpose()).norm();
  if (asym > rel_tol * nrm)
    throw Error(ErrorCode::NotSymmetric,
                "relative asymmetry " + std::to_string(nrm > 0 ? asym / nrm : asym));
  m_ = 0.5 * (m + m.transpose());
}

SymmetricMatrix SymmetricMatrix::symmetrize(const Mat &m) {
  if (m.rows() != m.cols())
    throw Error(ErrorCode::DimensionMismatch, "sym_part needs a square matrix");
  SymmetricMatrix s;
  s.m_ = 0.5 * (m + m.transpose());
  return s;
}

double orthonormality_error(const Mat &p) {
  return (p.transpose() * p - Mat::Identity(p.cols(), p.cols())).norm();
}

StiefelPoint::StiefelPoint(const Mat &basis, double tol) : p_(basis) {
  if (basis.cols() < 1 || basis.cols() > basis.rows())
    throw Error(ErrorCode::DimensionMismatch, "Stiefel point needs 1 <= k <= n");
  require_finite(basis, "Stiefel point");
  if (orthonormality_error(basis) > tol)
    throw Error(ErrorCode::NotOrthonormal,
                "||P^T P - I||_F = " + std::to_string(orthonormality_error(basis)));
}

StiefelPoint StiefelPoint::orthonormalized(const Mat &m) {
  return polar_factor(m).orthogonal_factor;
}

void fix_column_signs(Mat &columns) {
  for (Index j = 0; j < columns.cols(); ++j) {
    Index arg = 0;
    double best = -1.0;
    for (Index i = 0; i < columns.rows(); ++i) {
      if (std::abs(columns(i, j)) > best) {
        best = std::abs(columns(i, j));
        arg = i;
      }
    }
    if (columns.rows() > 0 && columns(arg, j) < 0)
      columns.col(j) = -columns.col(j);
  }
}

void fix_column_signs(Mat &columns, Mat &partner) {
  for (Index j = 0; j < columns.cols(); ++j) {
    Index arg = 0;
    double best = -1.0;
    for (Index i = 0; i < columns.rows(); ++i) {
      if (std::abs(columns(i, j)) > best) {
        best = std::abs(columns(i, j));
        arg = i;
      }
    }
    if (columns.rows() > 0 && columns(arg, j) < 0) {
      columns.col(j) = -columns.col(j);
      partner.col(j) = -partner.col(j);
    }
  }
}

PolarDecomposition polar_factor(const Mat &b) {
  if (b.cols() < 1 || b.cols() > b.rows())
    throw Error(ErrorCode::DimensionMismatch, "polar factor needs 1 <= k <= n");
  require_finite(b, "polar input");
  Eigen::JacobiSVD<Mat> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Mat u = svd.matrixU();
  Mat v = svd.matrixV();
  fix_column_signs(u, v);
  const Vec &s = svd.singularValues();
  PolarDecomposition out;
  Mat q = u * v.transpose();
  out.orthogonal_factor = StiefelPoint(q, 1e-8);
  out.psd_factor = v * s.asDiagonal() * v.transpose();
  out.psd_factor = 0.5 * (out.psd_factor + out.psd_factor.transpose()).eval();
  out.trace_norm = s.sum();
  out.singular_values = s;
  return out;
}

double trace_norm(const Mat &b) {
  require_finite(b, "trace norm input");
  if (b.size() == 0)
    return 0.0;
  Eigen::JacobiSVD<Mat> svd(b);
  return svd.singularValues().sum();
}

SymmetricMatrix sym_part(const Mat &m) { return SymmetricMatrix::symmetrize(m); }

SpectralTopK top_k_eigenpairs(const SymmetricMatrix &h, Index k) {
  const Index n = h.order();
  if (k < 1 || k > n)
    throw Error(ErrorCode::DimensionMismatch, "top-k needs 1 <= k <= n");
  require_finite(h.matrix(), "eigen input");
  Eigen::SelfAdjointEigenSolver<Mat> es(h.matrix());
  const Vec &vals = es.eigenvalues();
  const Mat &vecs = es.eigenvectors();
  SpectralTopK out;
  out.eigenvalues.resize(k);
  Mat basis(n, k);
  for (Index j = 0; j < k; ++j) {
    out.eigenvalues(j) = vals(n - 1 - j);
    basis.col(j) = vecs.col(n - 1 - j);
  }
  fix_column_signs(basis);
  out.eigenbasis = StiefelPoint(basis, 1e-8);
  out.gap = (k < n) ? vals(n - k) - vals(n - k - 1)
                    : std::numeric_limits<double>::infinity();
  return out;
}

SinTheta canonical_sin_theta(const Mat &x, const Mat &y) {
  if (x.rows() != y.rows() || x.cols() != y.cols())
    throw Error(ErrorCode::DimensionMismatch, "canonical angles need equal shapes");
  Eigen::JacobiSVD<Mat> svd(x.transpose() * y);
  SinTheta out;
  double sum = 0.0;
  for (Index i = 0; i < svd.singularValues().size(); ++i) {
    const double c = std::clamp(svd.singularValues()(i), 0.0, 1.0);
    const double s = std::sin(std::acos(c));
    out.dist2 = std::max(out.dist2, s);
    sum += s * s;
  }
  out.distF = std::sqrt(sum);
  return out;
}

namespace {

void project_out(const Mat &p, Mat &v) {
  // classical Gram-Schmidt, applied twice
  for (int pass = 0; pass < 2; ++pass)
    v -= p * (p.transpose() * v);
}

} // namespace

Mat orthonormalize_against(const Mat &p, const Mat &v) {
  const Index n = p.rows();
  if (v.rows() != n)
    throw Error(ErrorCode::DimensionMismatch, "orthonormalize_against row mismatch");
  if (v.cols() == 0)
    return Mat(n, 0);
  const double scale = spectral_norm(v);
  if (!(scale > 0.0))
    return Mat(n, 0);
  Mat w = v;
  project_out(p, w);
  Eigen::JacobiSVD<Mat> svd(w, Eigen::ComputeThinU);
  Index r = 0;
  while (r < svd.singularValues().size() && svd.singularValues()(r) > 1e-12 * scale)
    ++r;
  r = std::min(r, n - p.cols());
  if (r == 0)
    return Mat(n, 0);
  Mat u = svd.matrixU().leftCols(r);
  project_out(p, u);
  Eigen::HouseholderQR<Mat> qr(u);
  Mat q = qr.householderQ() * Mat::Identity(n, r);
  const Mat rr = qr.matrixQR().topLeftCorner(r, r);
  for (Index j = 0; j < r; ++j)
    if (rr(j, j) < 0)
      q.col(j) = -q.col(j);
  project_out(p, q);
  fix_column_signs(q);
  return q;
}

StiefelPoint random_stiefel(Index n, Index k, std::uint64_t seed) {
  if (k < 1 || k > n)
    throw Error(ErrorCode::DimensionMismatch, "random_stiefel needs 1 <= k <= n");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat g(n, k);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < k; ++j)
      g(i, j) = gauss(rng);
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ() * Mat::Identity(n, k);
  const Mat r = qr.matrixQR().topLeftCorner(k, k);
  for (Index j = 0; j < k; ++j)
    if (r(j, j) < 0)
      q.col(j) = -q.col(j);
  return StiefelPoint(q, 1e-10);
}

Vec symmetric_eigenvalues(const Mat &m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

double spectral_norm(const Mat &m) {
  if (m.size() == 0)
    return 0.0;
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()(0);
}

double sum_largest_eigenvalues(const Mat &m, Index k) {
  const Vec ev = symmetric_eigenvalues(m);
  return ev.tail(k).sum();
}

double sum_smallest_eigenvalues(const Mat &m, Index k) {
  const Vec ev = symmetric_eigenvalues(m);
  return ev.head(k).sum();
}

Mat select_columns(const Mat &m, const std::vector<Index> &cols) {
  Mat out(m.rows(), static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j)
    out.col(static_cast<Index>(j)) = m.col(cols[j]);
  return out;
}

} // namespace stiefel
