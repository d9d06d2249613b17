#pragma once

// Real-time anomalography: per-slot alternating ridge/Lasso estimation of
// (q_t, a_t) against the current subspace, followed by a beta-discounted
// recursive-LS refinement of the subspace rows. Supports missing entries and
// slowly time-varying routing.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <utility>
#include <vector>

#include "netcarto/common.hpp"
#include "netcarto/netmodel.hpp"
#include "netcarto/solvers.hpp"

namespace netcarto {

struct OnlineConfig {
  int rho = 5;
  double beta = 1.0;
  double lambda_star = 1.0;
  double lambda_one = 1.0;
  int inner_iters = 50;
  double inner_tol = 1e-6;
  double rls_floor = 1e-10;
};

struct OnlineState {
  Matrix subspace;  // P, L x rho
  std::vector<Matrix> row_phi;  // per-row discounted q q' accumulators
  std::vector<Vector> row_s;    // per-row discounted cross-moments
  Vector last_q;
  int t = 0;
  OnlineConfig cfg;

  static OnlineState init_with(Matrix subspace0, OnlineConfig cfg) {
    require(cfg.beta > 0.0 && cfg.beta <= 1.0,
            "OnlineState: beta outside (0,1]");
    OnlineState st;
    const auto L = subspace0.rows();
    st.row_phi.assign(L, Matrix::Zero(cfg.rho, cfg.rho));
    st.row_s.assign(L, Vector::Zero(cfg.rho));
    st.last_q = Vector::Zero(cfg.rho);
    st.subspace = std::move(subspace0);
    st.cfg = cfg;
    return st;
  }

  // Subspace from the SVD of the first slots, zero-filled on missing entries.
  static OnlineState init_from_svd(const Matrix& first_slots, OnlineConfig cfg) {
    require(first_slots.cols() >= cfg.rho,
            "OnlineState: need at least rho warmup slots");
    Eigen::BDCSVD<Matrix> svd(first_slots, Eigen::ComputeThinU);
    return init_with(svd.matrixU().leftCols(cfg.rho), cfg);
  }
};

struct SlotEstimate {
  Vector q;      // rho
  Vector a;      // F
  Vector x_hat;  // L, = P q
  bool prediction_only = false;
  int inner_iterations = 0;
};

namespace detail_online {

// Composite per-slot objective at fixed subspace, over the observed entries.
inline double slot_objective(const Matrix& p_obs, const Matrix& r_obs,
                             const Vector& y_obs, const Vector& q,
                             const Vector& a, double lambda_star,
                             double lambda_one) {
  return (y_obs - p_obs * q - r_obs * a).squaredNorm() +
         0.5 * lambda_star * q.squaredNorm() + lambda_one * a.lpNorm<1>();
}

}  // namespace detail_online

// One streaming step: alternate closed-form ridge in q and prox-gradient
// soft-thresholding in a until the per-slot objective stalls, then update the
// RLS accumulators and re-solve each subspace row.
inline SlotEstimate online_step(OnlineState& state, const Vector& y_t,
                                const std::vector<int>& mask_t,
                                const Matrix& routing_t) {
  const auto L = state.subspace.rows();
  const auto F = routing_t.cols();
  const auto rho = state.cfg.rho;
  require(routing_t.rows() == L, "online_step: routing dimension drift");

  SlotEstimate est;
  est.a = Vector::Zero(F);

  if (mask_t.empty()) {
    // no measurement: decay statistics, predict from previous activity
    est.q = state.last_q;
    est.x_hat = state.subspace * est.q;
    est.prediction_only = true;
    for (Eigen::Index l = 0; l < L; ++l) {
      state.row_phi[l] *= state.cfg.beta;
      state.row_s[l] *= state.cfg.beta;
    }
    state.t += 1;
    return est;
  }
  require(y_t.size() == static_cast<Eigen::Index>(mask_t.size()),
          "online_step: observation length mismatch");

  Matrix p_obs(static_cast<Eigen::Index>(mask_t.size()), rho);
  Matrix r_obs(static_cast<Eigen::Index>(mask_t.size()), F);
  for (std::size_t i = 0; i < mask_t.size(); ++i) {
    p_obs.row(static_cast<Eigen::Index>(i)) = state.subspace.row(mask_t[i]);
    r_obs.row(static_cast<Eigen::Index>(i)) = routing_t.row(mask_t[i]);
  }

  const Matrix q_gram =
      2.0 * p_obs.transpose() * p_obs +
      state.cfg.lambda_star * Matrix::Identity(rho, rho);
  const Eigen::LDLT<Matrix> q_solver(q_gram);
  const double lip_a =
      std::max(1e-12, 2.0 * power_iteration_sym(r_obs.transpose() * r_obs));

  Vector q = Vector::Zero(rho);
  Vector a = Vector::Zero(F);
  double obj = detail_online::slot_objective(p_obs, r_obs, y_t, q, a,
                                             state.cfg.lambda_star,
                                             state.cfg.lambda_one);
  for (int k = 0; k < state.cfg.inner_iters; ++k) {
    q = q_solver.solve(2.0 * p_obs.transpose() * (y_t - r_obs * a));
    const Vector grad =
        -2.0 * r_obs.transpose() * (y_t - p_obs * q - r_obs * a);
    a = soft_threshold(Matrix(a - grad / lip_a),
                       state.cfg.lambda_one / lip_a);
    const double next = detail_online::slot_objective(
        p_obs, r_obs, y_t, q, a, state.cfg.lambda_star, state.cfg.lambda_one);
    est.inner_iterations = k + 1;
    const double change = std::abs(obj - next) / std::max(1.0, std::abs(obj));
    obj = next;
    if (change < state.cfg.inner_tol) break;
  }

  // RLS subspace refinement against the anomaly-cleansed targets
  const Vector ra = routing_t * a;
  std::vector<bool> observed(L, false);
  for (std::size_t i = 0; i < mask_t.size(); ++i) observed[mask_t[i]] = true;
  std::size_t obs_i = 0;
  for (Eigen::Index l = 0; l < L; ++l) {
    state.row_phi[l] *= state.cfg.beta;
    state.row_s[l] *= state.cfg.beta;
    if (observed[l]) {
      const double target = y_t(static_cast<Eigen::Index>(obs_i)) - ra(l);
      state.row_phi[l] += q * q.transpose();
      state.row_s[l] += target * q;
      ++obs_i;
    }
    Matrix lhs = 2.0 * state.row_phi[l] +
                 state.cfg.lambda_star * Matrix::Identity(rho, rho);
    lhs.diagonal().array() += state.cfg.rls_floor;
    state.subspace.row(l) = lhs.ldlt().solve(2.0 * state.row_s[l]).transpose();
  }

  est.q = std::move(q);
  est.a = std::move(a);
  est.x_hat = state.subspace * est.q;
  state.last_q = est.q;
  state.t += 1;
  return est;
}

// Accumulated exponentially-weighted cost of a run, evaluated at the final
// subspace and the stored per-slot estimates. With beta = 1 and static
// routing this equals the batch factorized objective at the same point.
inline double accumulated_cost(const Matrix& subspace,
                               const std::vector<SlotEstimate>& slots,
                               const std::vector<Vector>& y_history,
                               const std::vector<std::vector<int>>& mask_history,
                               const std::vector<Matrix>& routing_history,
                               double beta, double lambda_star,
                               double lambda_one) {
  const int t_final = static_cast<int>(slots.size());
  double sum_beta = 0.0;
  for (int tau = 0; tau < t_final; ++tau)
    sum_beta += std::pow(beta, t_final - 1 - tau);
  double cost = 0.0;
  for (int tau = 0; tau < t_final; ++tau) {
    const double w = std::pow(beta, t_final - 1 - tau);
    double fit = 0.0;
    const auto& mask = mask_history[tau];
    const Vector ra = routing_history[tau] * slots[tau].a;
    const Vector px = subspace * slots[tau].q;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      const double r = y_history[tau](static_cast<Eigen::Index>(i)) -
                       px(mask[i]) - ra(mask[i]);
      fit += r * r;
    }
    cost += w * (fit + 0.5 * lambda_star / sum_beta * subspace.squaredNorm() +
                 0.5 * lambda_star * slots[tau].q.squaredNorm() +
                 lambda_one * slots[tau].a.lpNorm<1>());
  }
  return cost;
}

struct StreamRecord {
  int t = 0;
  int support_size = 0;
  double precision = -1.0;  // -1 when no truth supplied
  double recall = -1.0;
  double micros = 0.0;
  int routing_rows_changed = 0;
  bool routing_churn_warning = false;  // more than 10% of rows changed
};

struct StreamResult {
  Matrix x_hat;  // L x T
  Matrix a_hat;  // F x T
  std::vector<StreamRecord> records;
  std::vector<SlotEstimate> slots;
};

// Sequential application of online_step over a masked observation stream.
// Routing may vary per slot; a warning threshold flags slots where more than
// 10% of routing rows changed.
inline StreamResult run_stream(const Matrix& y, const SamplingMask& mask,
                               const std::vector<Matrix>& routing_seq,
                               OnlineState& state,
                               const Matrix* truth_anomalies = nullptr,
                               double support_eps = 1e-6) {
  const auto L = y.rows();
  const auto T = y.cols();
  const auto F = routing_seq.empty() ? 0 : routing_seq.front().cols();
  StreamResult res;
  res.x_hat = Matrix::Zero(L, T);
  res.a_hat = Matrix::Zero(F, T);
  if (T == 0) return res;
  require(static_cast<Eigen::Index>(routing_seq.size()) == T ||
              routing_seq.size() == 1,
          "run_stream: routing sequence length mismatch");

  for (Eigen::Index t = 0; t < T; ++t) {
    const Matrix& r_t =
        routing_seq.size() == 1 ? routing_seq.front() : routing_seq[t];
    const auto observed = mask.observed_rows(static_cast<int>(t));
    Vector y_obs(static_cast<Eigen::Index>(observed.size()));
    for (std::size_t i = 0; i < observed.size(); ++i)
      y_obs(static_cast<Eigen::Index>(i)) = y(observed[i], t);

    const auto start = std::chrono::steady_clock::now();
    SlotEstimate est = online_step(state, y_obs, observed, r_t);
    const auto stop = std::chrono::steady_clock::now();

    res.x_hat.col(t) = est.x_hat;
    res.a_hat.col(t) = est.a;

    StreamRecord rec;
    rec.t = static_cast<int>(t);
    rec.micros = std::chrono::duration<double, std::micro>(stop - start).count();
    if (t > 0 && routing_seq.size() > 1) {
      const Matrix& r_prev = routing_seq[t - 1];
      for (Eigen::Index l = 0; l < L; ++l)
        if ((r_t.row(l) - r_prev.row(l)).cwiseAbs().maxCoeff() > 0.0)
          ++rec.routing_rows_changed;
      rec.routing_churn_warning = rec.routing_rows_changed * 10 > L;
    }
    long support = 0;
    for (Eigen::Index f = 0; f < F; ++f)
      if (std::abs(est.a(f)) > support_eps) ++support;
    rec.support_size = static_cast<int>(support);
    if (truth_anomalies != nullptr) {
      long tp = 0, fp = 0, fn = 0;
      for (Eigen::Index f = 0; f < F; ++f) {
        const bool pred = std::abs(est.a(f)) > support_eps;
        const bool truth = (*truth_anomalies)(f, t) != 0.0;
        if (pred && truth) ++tp;
        if (pred && !truth) ++fp;
        if (!pred && truth) ++fn;
      }
      rec.precision = (tp + fp) > 0 ? double(tp) / (tp + fp) : 1.0;
      rec.recall = (tp + fn) > 0 ? double(tp) / (tp + fn) : 1.0;
    }
    res.records.push_back(rec);
    res.slots.push_back(std::move(est));
  }
  return res;
}

}  // namespace netcarto
