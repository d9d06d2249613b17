#pragma once

// Dynamic delay cartography: random-walk + path-overlap delay model, Kalman
// tracking of the queuing-delay trend, kriging of unobserved path delays and
// greedy D-optimal measurement-path selection.

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "netcarto/common.hpp"
#include "netcarto/netmodel.hpp"

namespace netcarto {

struct KkfModel {
  Matrix path_link;  // U, P x L
  double alpha = 0.0;
  Matrix c_nu;   // alpha * U U'
  Matrix c_eta;  // PSD
  double sigma2 = 0.0;

  static KkfModel make(Matrix path_link, double alpha, Matrix c_eta,
                       double sigma2) {
    require(alpha >= 0.0, "KkfModel: alpha must be >= 0");
    require(sigma2 >= 0.0, "KkfModel: sigma2 must be >= 0");
    KkfModel m;
    m.c_nu = alpha * path_link * path_link.transpose();
    m.path_link = std::move(path_link);
    m.alpha = alpha;
    m.c_eta = std::move(c_eta);
    m.sigma2 = sigma2;
    return m;
  }

  Eigen::Index paths() const { return path_link.rows(); }
};

struct KkfState {
  Vector chi_hat;
  Matrix m;       // error covariance M_t
  Matrix m_prev;  // M_{t-1}, kept for the kriging error covariance
  int t = 0;
};

struct PathSelection {
  std::vector<int> chosen;
  Matrix sel;   // S x P
  Matrix comp;  // (P-S) x P

  static PathSelection from_indices(std::vector<int> chosen, int paths) {
    PathSelection s;
    s.sel = selection_matrix(chosen, paths);
    std::vector<int> rest;
    std::vector<bool> in(paths, false);
    for (int p : chosen) in[p] = true;
    for (int p = 0; p < paths; ++p)
      if (!in[p]) rest.push_back(p);
    s.comp = selection_matrix(rest, paths);
    s.chosen = std::move(chosen);
    return s;
  }
};

namespace detail {

// Symmetric PSD square root; throws on significantly negative eigenvalues.
inline Matrix psd_sqrt(const Matrix& c) {
  if (c.size() == 0) return c;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (c + c.transpose()));
  Vector ev = eig.eigenvalues();
  const double floor = -1e-8 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < floor)
      throw std::invalid_argument("psd_sqrt: matrix not positive semidefinite");
    ev(i) = std::sqrt(std::max(ev(i), 0.0));
  }
  return eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
}

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace detail

struct DelayTrajectory {
  Matrix chi;  // P x T
  Matrix d;    // P x T
};

// chi_t = chi_{t-1} + eta_t, d_t = chi_t + nu_t + eps_t.
inline DelayTrajectory simulate_delays(const KkfModel& model,
                                       const Vector& chi0, int horizon,
                                       std::uint64_t seed) {
  require(horizon >= 1, "simulate_delays: horizon must be >= 1");
  const auto P = model.paths();
  const Matrix eta_sqrt = detail::psd_sqrt(model.c_eta);
  const Matrix nu_sqrt = detail::psd_sqrt(model.c_nu);
  const double eps_std = std::sqrt(model.sigma2);

  Rng rng(seed);
  DelayTrajectory traj;
  traj.chi.resize(P, horizon);
  traj.d.resize(P, horizon);
  Vector chi = chi0;
  for (int t = 0; t < horizon; ++t) {
    chi += eta_sqrt * gaussian_matrix(P, 1, rng);
    traj.chi.col(t) = chi;
    traj.d.col(t) = chi + nu_sqrt * gaussian_matrix(P, 1, rng) +
                    eps_std * gaussian_matrix(P, 1, rng);
  }
  return traj;
}

// One Kalman step on the queuing-delay trend:
//   K = (M + C_eta) S' [S (C_nu + C_eta + M) S' + sigma^2 I]^-1
//   chi <- chi + K (d^s - S chi),  M <- (I - K S)(M + C_eta), re-symmetrized.
inline KkfState kalman_update(const KkfState& state, const KkfModel& model,
                              const PathSelection& sel, const Vector& d_obs) {
  const auto P = model.paths();
  KkfState next;
  next.t = state.t + 1;
  next.m_prev = state.m;
  if (sel.sel.rows() == 0) {  // pure prediction
    next.chi_hat = state.chi_hat;
    next.m = detail::symmetrize(state.m + model.c_eta);
    return next;
  }
  require(d_obs.size() == sel.sel.rows(), "kalman_update: d_obs length mismatch");
  const Matrix& s = sel.sel;
  const Matrix m_pred = state.m + model.c_eta;
  const Matrix innov_cov =
      s * (model.c_nu + m_pred) * s.transpose() +
      model.sigma2 * Matrix::Identity(s.rows(), s.rows());
  Eigen::LDLT<Matrix> ldlt(detail::symmetrize(innov_cov));
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw std::runtime_error("kalman_update: singular innovation covariance");
  const Matrix gain = m_pred * s.transpose() *
                      ldlt.solve(Matrix::Identity(s.rows(), s.rows()));
  next.chi_hat = state.chi_hat + gain * (d_obs - s * state.chi_hat);
  next.m = detail::symmetrize((Matrix::Identity(P, P) - gain * s) * m_pred);
  return next;
}

struct KrigPrediction {
  Vector d_hat;    // unobserved path delays
  Matrix m_unobs;  // prediction error covariance
};

// Kriging of the unobserved path delays around the filtered trend. Uses the
// pre-update covariance stored in the state.
inline KrigPrediction krig_predict(const KkfState& state, const KkfModel& model,
                                   const PathSelection& sel,
                                   const Vector& d_obs) {
  KrigPrediction out;
  if (sel.comp.rows() == 0) {  // nothing to predict
    out.d_hat = Vector::Zero(0);
    out.m_unobs = Matrix::Zero(0, 0);
    return out;
  }
  const Matrix& s = sel.sel;
  const Matrix& sbar = sel.comp;

  out.d_hat = sbar * state.chi_hat;
  if (s.rows() > 0) {
    const Matrix nu_obs_cov =
        s * model.c_nu * s.transpose() +
        model.sigma2 * Matrix::Identity(s.rows(), s.rows());
    Eigen::LDLT<Matrix> ldlt(detail::symmetrize(nu_obs_cov));
    out.d_hat += sbar * model.c_nu * s.transpose() *
                 ldlt.solve(d_obs - s * state.chi_hat);
  }

  // M_bar = sigma^2 I + Sbar [(M_{t-1} + C_nu + C_eta)^-1 + S'S / sigma^2]^-1 Sbar'
  const Matrix c = detail::symmetrize(state.m_prev + model.c_nu + model.c_eta);
  Matrix w;
  if (s.rows() == 0) {
    w = c;
  } else {
    // Woodbury form, avoids inverting C directly
    const Matrix cs = c * s.transpose();
    const Matrix inner = s * cs + model.sigma2 * Matrix::Identity(s.rows(), s.rows());
    w = c - cs * Eigen::LDLT<Matrix>(detail::symmetrize(inner)).solve(cs.transpose());
  }
  out.m_unobs = detail::symmetrize(
      model.sigma2 * Matrix::Identity(sbar.rows(), sbar.rows()) +
      sbar * w * sbar.transpose());
  return out;
}

// Random-walk trend: the tau-step-ahead prediction is the current trend.
inline Vector tau_step_predict(const KkfState& state, int tau) {
  require(tau >= 1, "tau_step_predict: tau must be >= 1");
  return state.chi_hat;
}

// log det of the prediction-error covariance over the complement of `chosen`,
// for a filter whose previous error covariance is m_prev. Empty complement
// (all paths measured) contributes 0.
inline double log_det_pred_cov(const KkfModel& model, const Matrix& m_prev,
                               const std::vector<int>& chosen) {
  const auto P = static_cast<int>(model.paths());
  if (static_cast<int>(chosen.size()) == P) return 0.0;
  const Matrix c = detail::symmetrize(m_prev + model.c_nu + model.c_eta);
  Matrix w = c;
  if (!chosen.empty()) {
    const Matrix s = selection_matrix(chosen, P);
    const Matrix cs = c * s.transpose();
    const Matrix inner =
        s * cs + model.sigma2 * Matrix::Identity(s.rows(), s.rows());
    w = c - cs * Eigen::LDLT<Matrix>(detail::symmetrize(inner)).solve(cs.transpose());
  }
  std::vector<int> rest;
  std::vector<bool> in(P, false);
  for (int p : chosen) in[p] = true;
  for (int p = 0; p < P; ++p)
    if (!in[p]) rest.push_back(p);
  const Matrix sbar = selection_matrix(rest, P);
  const Matrix m_bar = detail::symmetrize(
      model.sigma2 * Matrix::Identity(sbar.rows(), sbar.rows()) +
      sbar * w * sbar.transpose());
  Eigen::LLT<Matrix> llt(m_bar);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("log_det_pred_cov: covariance not PD");
  return 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
}

// Greedy D-optimal selection: repeatedly add the path that minimizes the
// log det of the prediction-error covariance, ties broken by smallest index.
inline PathSelection greedy_select_paths(const KkfModel& model,
                                         const Matrix& m_prev, int budget) {
  const auto P = static_cast<int>(model.paths());
  require(budget >= 1 && budget <= P, "greedy_select_paths: budget out of range");
  std::vector<int> chosen;
  std::vector<bool> in(P, false);
  for (int k = 0; k < budget; ++k) {
    int best = -1;
    double best_val = std::numeric_limits<double>::infinity();
    for (int p = 0; p < P; ++p) {
      if (in[p]) continue;
      std::vector<int> trial = chosen;
      trial.push_back(p);
      std::sort(trial.begin(), trial.end());
      const double val = log_det_pred_cov(model, m_prev, trial);
      if (val < best_val) {  // strict: earliest index wins ties
        best_val = val;
        best = p;
      }
    }
    chosen.push_back(best);
    in[best] = true;
  }
  std::sort(chosen.begin(), chosen.end());
  return PathSelection::from_indices(std::move(chosen), P);
}

struct ModelParams {
  double alpha = 0.0;
  Matrix c_eta;
  double sigma2 = 0.0;
};

// Method-of-moments fit from the temporally differenced series:
// lag-1 covariance gives -(C_nu + sigma^2 I); lag-0 adds C_eta on top.
inline ModelParams estimate_model_params(const Matrix& delays,
                                         const Matrix& path_link) {
  const auto P = delays.rows();
  const auto T = delays.cols();
  require(T >= 10, "estimate_model_params: need at least 10 slots");

  Matrix diffs = delays.rightCols(T - 1) - delays.leftCols(T - 1);
  if (diffs.cwiseAbs().maxCoeff() < 1e-12)
    throw std::invalid_argument("estimate_model_params: constant training data");

  const auto n = diffs.cols();
  const Matrix lag0 = diffs * diffs.transpose() / static_cast<double>(n);
  const Matrix lag1 = diffs.rightCols(n - 1) * diffs.leftCols(n - 1).transpose() /
                      static_cast<double>(n - 1);
  const Matrix b = -0.5 * (lag1 + lag1.transpose());  // ~ C_nu + sigma^2 I

  const Matrix g = path_link * path_link.transpose();
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < P; ++i)
    for (Eigen::Index j = 0; j < P; ++j)
      if (i != j && g(i, j) > 0.0) {
        num += b(i, j) * g(i, j);
        den += g(i, j) * g(i, j);
      }
  ModelParams params;
  params.alpha = den > 0.0 ? std::max(0.0, num / den) : 0.0;
  params.sigma2 = std::max(
      1e-12, (b.diagonal() - params.alpha * g.diagonal()).mean());
  Vector eta_diag = lag0.diagonal() - 2.0 * params.alpha * g.diagonal() -
                    2.0 * params.sigma2 * Vector::Ones(P);
  params.c_eta = eta_diag.cwiseMax(0.0).asDiagonal();
  return params;
}

// Static network-kriging baseline: (s1) generalized LS for the trend under a
// link-space mean model chi = U g, then (s2) the LMMSE kriging correction.
// Rank-deficient designs get the minimum-norm GLS solution; only a
// numerically zero design raises.
inline Vector static_network_kriging(const KkfModel& model, const Vector& d_obs,
                                     const PathSelection& sel) {
  if (sel.comp.rows() == 0) return Vector::Zero(0);
  const Matrix& s = sel.sel;
  require(d_obs.size() == s.rows(), "static_network_kriging: length mismatch");

  const Matrix noise_cov =
      s * model.c_nu * s.transpose() +
      model.sigma2 * Matrix::Identity(s.rows(), s.rows());
  const Eigen::LLT<Matrix> llt(detail::symmetrize(noise_cov));
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("static_network_kriging: noise covariance not PD");
  const Matrix lower = llt.matrixL();

  const Matrix design = lower.triangularView<Eigen::Lower>().solve(
      Matrix(s * model.path_link));
  const Vector rhs = lower.triangularView<Eigen::Lower>().solve(d_obs);
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(design);
  if (cod.rank() == 0)
    throw std::runtime_error("static_network_kriging: degenerate GLS design");
  const Vector chi = model.path_link * cod.solve(rhs);

  Eigen::LDLT<Matrix> ldlt(detail::symmetrize(noise_cov));
  return sel.comp * chi + sel.comp * model.c_nu * s.transpose() *
                              ldlt.solve(d_obs - s * chi);
}

}  // namespace netcarto
