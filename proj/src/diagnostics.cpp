#include "stiefel/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "stiefel/nepv.hpp"
#include "stiefel/npdo.hpp"

namespace stiefel {

double gradient_check(const ComposedObjective &obj, int trials, double fd_step,
                      std::uint64_t seed) {
  if (!(fd_step > 0.0))
    throw Error(ErrorCode::InvalidArgument, "fd_step must be > 0");
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const Mat p = random_stiefel(obj.n, obj.k, seed + static_cast<std::uint64_t>(t)).basis();
    const Mat g = euclidean_grad(obj, p);
    Mat fd(p.rows(), p.cols());
    for (Index j = 0; j < p.cols(); ++j) {
      for (Index i = 0; i < p.rows(); ++i) {
        Mat pp = p, pm = p;
        pp(i, j) += fd_step;
        pm(i, j) -= fd_step;
        fd(i, j) = (eval(obj, pp) - eval(obj, pm)) / (2.0 * fd_step);
      }
    }
    worst = std::max(worst, (fd - g).norm() / std::max(1.0, g.norm()));
  }
  return worst;
}

namespace {

std::vector<Vec> sphere_samples(Index n, int budget, std::uint64_t seed) {
  std::vector<Vec> pts;
  pts.reserve(static_cast<std::size_t>(budget));
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  if (n == 1) {
    pts.push_back(Vec::Ones(1));
    pts.push_back(-Vec::Ones(1));
  } else if (n == 2) {
    for (int i = 0; i < budget; ++i) {
      const double a = 2.0 * M_PI * i / budget;
      Vec v(2);
      v << std::cos(a), std::sin(a);
      pts.push_back(v);
    }
  } else if (n == 3) {
    for (int i = 0; i < budget; ++i) {
      const double z = 1.0 - 2.0 * (i + 0.5) / budget;
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      Vec v(3);
      v << r * std::cos(golden * i), r * std::sin(golden * i), z;
      pts.push_back(v);
    }
  } else {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    for (int i = 0; i < budget; ++i) {
      Vec v(n);
      for (Index j = 0; j < n; ++j)
        v(j) = gauss(rng);
      pts.push_back(v / v.norm());
    }
  }
  return pts;
}

bool polish(const ComposedObjective &obj, const Mat &p0, Framework fw, OracleResult &best) {
  try {
    NepvConfig cfg;
    cfg.tol = 1e-12;
    cfg.max_iter = 2000;
    cfg.check_outer = false;
    const SolveReport r = fw == Framework::NPDo ? npdo_scf(obj, p0, cfg) : nepv_scf(obj, p0, cfg);
    ++best.evaluations;
    const double f = eval(obj, r.p);
    if (f > best.best_f) {
      best.best_f = f;
      best.best_p = r.p;
    }
    return true;
  } catch (const Error &) {
    return false;
  }
}

} // namespace

OracleResult brute_force_oracle(const ComposedObjective &obj, int budget, Framework polish_fw,
                                std::uint64_t seed) {
  if (obj.n > 6 || obj.k > 2)
    throw Error(ErrorCode::SizeTooLargeForOracle, "oracle is limited to n <= 6, k <= 2");
  if (budget < 1)
    throw Error(ErrorCode::InvalidArgument, "oracle budget must be >= 1");
  OracleResult best;
  if (obj.k == 1) {
    std::vector<std::pair<double, Vec>> scored;
    for (const Vec &v : sphere_samples(obj.n, budget, seed)) {
      try {
        const double f = eval(obj, v);
        ++best.evaluations;
        scored.emplace_back(f, v);
      } catch (const Error &) {
      }
    }
    std::sort(scored.begin(), scored.end(),
              [](const auto &a, const auto &b) { return a.first > b.first; });
    for (std::size_t i = 0; i < scored.size(); ++i) {
      if (scored[i].first > best.best_f) {
        best.best_f = scored[i].first;
        best.best_p = scored[i].second;
      }
      if (i < 20)
        polish(obj, scored[i].second, polish_fw, best);
    }
  } else {
    for (int i = 0; i < budget; ++i) {
      const Mat p0 = random_stiefel(obj.n, obj.k, seed + static_cast<std::uint64_t>(i)).basis();
      try {
        const double f = eval(obj, p0);
        if (f > best.best_f) {
          best.best_f = f;
          best.best_p = p0;
        }
      } catch (const Error &) {
      }
      polish(obj, p0, polish_fw, best);
    }
  }
  return best;
}

MonotoneAudit monotone_audit(const std::vector<IterationRecord> &trace, double slack) {
  MonotoneAudit out;
  for (std::size_t i = 0; i + 1 < trace.size(); ++i) {
    const double drop = (trace[i].f - trace[i + 1].f) / std::max(1.0, std::abs(trace[i].f));
    if (drop > out.worst_violation) {
      out.worst_violation = drop;
      out.worst_step = static_cast<int>(i);
    }
  }
  out.pass = out.worst_violation <= slack;
  return out;
}

SeriesAudit series_audit(const std::vector<IterationRecord> &trace, Framework fw,
                         double bound_factor) {
  if (trace.empty())
    throw Error(ErrorCode::InvalidArgument, "series audit needs a non-empty trace");
  SeriesAudit out;
  double s1 = 0.0, s2 = 0.0;
  for (const auto &r : trace) {
    double w = fw == Framework::NPDo ? r.sigma_min : r.gap;
    if (!std::isfinite(w))
      w = 0.0;
    const double eps = fw == Framework::NPDo ? r.eps_kkt : r.eps_nepv;
    const double n1 = s1 + w * r.step_angle * r.step_angle;
    const double n2 = s2 + w * eps * eps;
    if (!(n1 >= s1) || !(n2 >= s2))
      out.monotone = false;
    s1 = n1;
    s2 = n2;
    out.step_sums.push_back(s1);
    out.residual_sums.push_back(s2);
  }
  out.bound = bound_factor * (trace.back().f - trace.front().f) + 1e-8;
  for (std::size_t i = 0; i < out.step_sums.size(); ++i)
    if (!(out.step_sums[i] <= out.bound) || !(out.residual_sums[i] <= out.bound))
      out.bounded = false;
  out.pass = out.monotone && out.bounded;
  return out;
}

ThetaAudit theta_step_audit(const std::vector<IterationRecord> &trace, const Mat &b, const Mat &d,
                            double theta) {
  const Index k = d.cols();
  const double sk = sum_smallest_eigenvalues(b, k);
  const double bigk = sum_largest_eigenvalues(b, k);
  if (!(sk > 0.0))
    throw Error(ErrorCode::InvalidArgument, "theta audit needs s_k(B) > 0");
  ThetaAudit out;
  const double c1 = 0.5 * std::pow(sk / bigk, theta);
  const double c2 = std::pow(bigk, -theta);
  for (std::size_t i = 0; i + 1 < trace.size(); ++i) {
    const auto &r = trace[i];
    if (!std::isfinite(r.pd_trace_norm) || !std::isfinite(r.pd_cross))
      throw Error(ErrorCode::InvalidArgument, "trace does not carry ThetaTR step data");
    const double rhs = c1 * r.eta + c2 * (r.pd_trace_norm - r.pd_cross);
    const double slack = trace[i + 1].f - r.f - rhs;
    if (slack < out.worst_slack) {
      out.worst_slack = slack;
      out.worst_step = static_cast<int>(i);
    }
  }
  if (out.worst_step < 0)
    out.worst_slack = 0.0;
  out.pass = out.worst_slack >= -1e-8;
  return out;
}

} // namespace stiefel
