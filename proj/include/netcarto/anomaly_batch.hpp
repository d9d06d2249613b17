#pragma once

// Centralized anomalography: sparsity-plus-low-rank estimation of cleansed
// link traffic and flow anomalies, PCA and spatial-anomography baselines,
// global-optimality certificate and ROC evaluation.

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "netcarto/common.hpp"
#include "netcarto/netmodel.hpp"
#include "netcarto/solvers.hpp"

namespace netcarto {

struct BatchProblem {
  Matrix y;  // L x T
  SamplingMask mask;
  Matrix routing;  // L x F
  double lambda_star = 1.0;
  double lambda_one = 1.0;
};

struct AnomalyMap {
  Matrix x_hat;  // L x T cleansed link traffic
  Matrix a_hat;  // F x T anomalies
  double objective = 0.0;
  SolverReport report;
  std::vector<double> objective_trace;
};

inline double batch_objective(const BatchProblem& p, const Matrix& x,
                              const Matrix& a) {
  return p.mask.apply(p.y - x - p.routing * a).squaredNorm() +
         p.lambda_star * nuclear_norm(x) + p.lambda_one * a.lpNorm<1>();
}

// Alternating prox-linear steps on the X and A blocks: SVT on X, entrywise
// soft-thresholding on A, each with a block step size 1/L_block. Monotone by
// the standard majorization argument; stops on relative objective change.
inline AnomalyMap solve_batch(const BatchProblem& p, double tol = 1e-7,
                              int max_iters = 2000) {
  require(p.y.rows() == p.routing.rows(), "solve_batch: dimension mismatch");
  require(p.lambda_star > 0.0 && p.lambda_one > 0.0,
          "solve_batch: lambdas must be positive");
  const auto L = p.y.rows();
  const auto T = p.y.cols();
  const auto F = p.routing.cols();

  // gradient wrt X is 2-Lipschitz; wrt A it is 2 sigma_max(R)^2-Lipschitz
  const double lip_a = std::max(
      1e-12, 2.0 * power_iteration_sym(p.routing.transpose() * p.routing));

  AnomalyMap out;
  out.x_hat = Matrix::Zero(L, T);
  out.a_hat = Matrix::Zero(F, T);
  double obj = batch_objective(p, out.x_hat, out.a_hat);
  out.objective_trace.push_back(obj);

  for (int k = 0; k < max_iters; ++k) {
    Matrix resid = p.mask.apply(p.y - out.x_hat - p.routing * out.a_hat);
    out.x_hat = svt(out.x_hat + resid, 0.5 * p.lambda_star);

    resid = p.mask.apply(p.y - out.x_hat - p.routing * out.a_hat);
    out.a_hat = soft_threshold(
        Matrix(out.a_hat + (2.0 / lip_a) * p.routing.transpose() * resid),
        p.lambda_one / lip_a);

    const double next = batch_objective(p, out.x_hat, out.a_hat);
    out.objective_trace.push_back(next);
    out.report.iterations = k + 1;
    const double change = std::abs(obj - next) / std::max(1.0, std::abs(obj));
    obj = next;
    if (change < tol) {
      out.report.converged = true;
      break;
    }
  }

  // prox fixed-point residual across both blocks
  Matrix resid = p.mask.apply(p.y - out.x_hat - p.routing * out.a_hat);
  const Matrix x_fp = svt(out.x_hat + resid, 0.5 * p.lambda_star) - out.x_hat;
  const Matrix a_fp =
      soft_threshold(
          Matrix(out.a_hat + (2.0 / lip_a) * p.routing.transpose() * resid),
          p.lambda_one / lip_a) -
      out.a_hat;
  out.report.kkt_residual = std::sqrt(x_fp.squaredNorm() + a_fp.squaredNorm());
  out.objective = obj;
  out.report.final_objective = obj;
  return out;
}

// Default regularizers: universal-threshold scalings with a robust noise
// estimate from the masked residual of a rank-1 pre-fit.
struct LambdaDefaults {
  double lambda_star = 0.0;
  double lambda_one = 0.0;
  double sigma_hat = 0.0;
};

inline LambdaDefaults default_lambdas(const Matrix& y, const SamplingMask& mask,
                                      const Matrix& routing) {
  const auto L = y.rows();
  const auto T = y.cols();
  const auto F = routing.cols();
  Eigen::BDCSVD<Matrix> svd(mask.apply(y),
                            Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Matrix rank1 = svd.singularValues()(0) * svd.matrixU().col(0) *
                       svd.matrixV().col(0).transpose();
  const Matrix resid = mask.apply(y - rank1);
  std::vector<double> mags;
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index l = 0; l < L; ++l)
      if (mask.keep(l, t)) mags.push_back(std::abs(resid(l, t)));
  LambdaDefaults d;
  if (!mags.empty()) {
    std::nth_element(mags.begin(), mags.begin() + mags.size() / 2, mags.end());
    d.sigma_hat = mags[mags.size() / 2] / 0.6745;  // MAD -> std
  }
  d.lambda_star = d.sigma_hat * (std::sqrt(static_cast<double>(L)) +
                                 std::sqrt(static_cast<double>(T)));
  d.lambda_one =
      2.0 * d.sigma_hat *
      std::sqrt(2.0 * std::log(static_cast<double>(F) * static_cast<double>(T)));
  return d;
}

// --- PCA baseline ---------------------------------------------------------

struct PcaDetection {
  Matrix anomalous_projector;  // P_{S_a} = I - U_r U_r'
  Vector scores;               // per-t residual energy
  std::vector<bool> flags;
  double threshold = 0.0;
};

// Nominal subspace from the r dominant singular directions of the full data;
// score(t) is the residual-subspace energy of column t.
inline PcaDetection pca_baseline(const Matrix& y, int rank, double threshold) {
  require(rank >= 1 && rank < std::min(y.rows(), y.cols()),
          "pca_baseline: rank out of range");
  Eigen::BDCSVD<Matrix> svd(y, Eigen::ComputeThinU);
  const Matrix u_r = svd.matrixU().leftCols(rank);
  PcaDetection det;
  det.anomalous_projector =
      Matrix::Identity(y.rows(), y.rows()) - u_r * u_r.transpose();
  det.scores.resize(y.cols());
  for (Eigen::Index t = 0; t < y.cols(); ++t)
    det.scores(t) = (det.anomalous_projector * y.col(t)).squaredNorm();
  det.threshold = threshold;
  det.flags.resize(y.cols());
  for (Eigen::Index t = 0; t < y.cols(); ++t)
    det.flags[t] = det.scores(t) > threshold;
  return det;
}

inline double score_percentile(const Vector& scores, double pct = 0.99) {
  std::vector<double> v(scores.data(), scores.data() + scores.size());
  std::sort(v.begin(), v.end());
  const auto idx = std::min<std::size_t>(
      v.size() - 1, static_cast<std::size_t>(pct * (v.size() - 1)));
  return v[idx];
}

inline PcaDetection pca_baseline(const Matrix& y, int rank) {
  auto det = pca_baseline(y, rank, 0.0);
  det.threshold = score_percentile(det.scores);
  for (Eigen::Index t = 0; t < y.cols(); ++t)
    det.flags[t] = det.scores(t) > det.threshold;
  return det;
}

// --- spatial anomography baseline -----------------------------------------

struct SpatialAnomography {
  Matrix a_hat;  // F x T
  std::vector<bool> infeasible;  // per column: residual floor not reached
  std::vector<std::vector<double>> residual_traces;
};

// Per-column equality-constrained l1 problem, relaxed as a quadratic penalty
// with mu-continuation: min ||P_{S_a} y_t - R a||^2 + mu ||a||_1, mu halved
// until the constraint residual drops below 1e-6 relative.
inline SpatialAnomography spatial_anomography(const Matrix& y, const Matrix& r,
                                              int rank, int max_stages = 40,
                                              double rel_tol = 1e-6) {
  const auto F = r.cols();
  const auto T = y.cols();
  const Matrix proj = pca_baseline(y, rank, 0.0).anomalous_projector;
  const double lip = std::max(1e-12, 2.0 * power_iteration_sym(r.transpose() * r));

  SpatialAnomography out;
  out.a_hat = Matrix::Zero(F, T);
  out.infeasible.assign(T, false);
  out.residual_traces.resize(T);

  for (Eigen::Index t = 0; t < T; ++t) {
    const Vector target = proj * y.col(t);
    const double tnorm = target.norm();
    if (tnorm < 1e-12) continue;
    Vector a = Vector::Zero(F);
    double mu = 0.1 * (r.transpose() * target).cwiseAbs().maxCoeff();
    bool feasible = false;
    for (int stage = 0; stage < max_stages; ++stage) {
      auto grad = [&](const Matrix& v) -> Matrix {
        return 2.0 * r.transpose() * (r * Matrix(v) - target);
      };
      auto prox = [mu](const Matrix& v, double step) {
        return soft_threshold(v, mu * step);
      };
      auto value = [&](const Matrix& v) {
        return (target - r * Matrix(v)).squaredNorm() + mu * v.lpNorm<1>();
      };
      auto [sol, rep] = accelerated_prox_gradient(grad, prox, value, lip,
                                                  Matrix(a), 1e-10, 2000);
      a = sol;
      const double resid = (target - r * a).norm();
      out.residual_traces[t].push_back(resid);
      if (resid < rel_tol * tnorm) {
        feasible = true;
        break;
      }
      mu *= 0.5;
    }
    out.infeasible[t] = !feasible;
    out.a_hat.col(t) = a;
  }
  return out;
}

// --- certificate and ROC --------------------------------------------------

// Global-optimality certificate for the factored problem: spectral norm of
// the masked residual P_Omega(Y - P Q' - R A) strictly below lambda_star.
inline bool certificate_check(const Matrix& p, const Matrix& q, const Matrix& a,
                              const Matrix& y, const SamplingMask& mask,
                              const Matrix& routing, double lambda_star) {
  const Matrix resid = mask.apply(y - p * q.transpose() - routing * a);
  return spectral_norm(resid) < lambda_star;
}

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

// Entry-wise ROC: predicted anomalous iff |a_hat| >= theta, theta swept from
// 0 to max |a_hat| (so theta=0 yields the (1,1) corner).
inline std::vector<RocPoint> roc_curve(const Matrix& a_hat,
                                       const Matrix& a_true,
                                       int n_thresholds = 200) {
  require(a_hat.rows() == a_true.rows() && a_hat.cols() == a_true.cols(),
          "roc_curve: shape mismatch");
  require(n_thresholds >= 2, "roc_curve: need at least 2 thresholds");
  long positives = 0, negatives = 0;
  for (Eigen::Index j = 0; j < a_true.cols(); ++j)
    for (Eigen::Index i = 0; i < a_true.rows(); ++i)
      (a_true(i, j) != 0.0 ? positives : negatives)++;
  require(positives > 0, "roc_curve: all-zero truth");

  const double max_mag = a_hat.cwiseAbs().maxCoeff();
  std::vector<RocPoint> points;
  for (int k = 0; k < n_thresholds; ++k) {
    const double theta = max_mag * k / (n_thresholds - 1);
    long tp = 0, fp = 0;
    for (Eigen::Index j = 0; j < a_true.cols(); ++j)
      for (Eigen::Index i = 0; i < a_true.rows(); ++i)
        if (std::abs(a_hat(i, j)) >= theta)
          (a_true(i, j) != 0.0 ? tp : fp)++;
    points.push_back({negatives > 0 ? double(fp) / negatives : 0.0,
                      double(tp) / positives});
  }
  points.push_back({0.0, 0.0});  // beyond the largest magnitude
  std::sort(points.begin(), points.end(), [](const RocPoint& a, const RocPoint& b) {
    return a.fpr < b.fpr || (a.fpr == b.fpr && a.tpr < b.tpr);
  });
  return points;
}

inline double auc(const std::vector<RocPoint>& points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i)
    area += 0.5 * (points[i].fpr - points[i - 1].fpr) *
            (points[i].tpr + points[i - 1].tpr);
  return area;
}

}  // namespace netcarto
