#include <catch2/catch_amalgamated.hpp>

#include "netcarto/anomaly_distributed.hpp"
#include "netcarto/anomaly_online.hpp"
#include "support/oracles.hpp"

using namespace netcarto;

namespace {

std::vector<int> all_rows(int l) {
  std::vector<int> v(l);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

SamplingMask full_mask(Eigen::Index l, Eigen::Index t) {
  SamplingMask m;
  m.keep = MaskArray::Constant(l, t, true);
  return m;
}

}  // namespace

TEST_CASE("online_step with data inside the subspace finds a zero anomaly") {
  const int L = 8, rho = 2;
  Rng rng(3);
  Matrix p0 = gaussian_matrix(L, rho, rng);
  OnlineConfig cfg;
  cfg.rho = rho;
  cfg.lambda_star = 1e-6;
  cfg.lambda_one = 1.0;
  auto state = OnlineState::init_with(p0, cfg);
  const Vector q_true = gaussian_matrix(rho, 1, rng);
  const Vector y = p0 * q_true;
  const Matrix routing = Matrix::Identity(L, L);
  auto est = online_step(state, y, all_rows(L), routing);
  REQUIRE(est.a.cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((est.x_hat - y).norm() < 1e-3 * y.norm());
  REQUIRE_FALSE(est.prediction_only);
}

TEST_CASE("first slot estimate satisfies the block first-order conditions") {
  const int L = 10, F = 6, rho = 3;
  Rng rng(7);
  const Matrix p0 = gaussian_matrix(L, rho, rng);
  const Matrix routing =
      (gaussian_matrix(L, F, rng).array().abs() > 0.7).cast<double>().matrix();
  OnlineConfig cfg;
  cfg.rho = rho;
  cfg.lambda_star = 0.3;
  cfg.lambda_one = 0.4;
  cfg.inner_iters = 400;
  cfg.inner_tol = 1e-14;
  auto state = OnlineState::init_with(p0, cfg);
  const Vector y = gaussian_matrix(L, 1, rng);
  auto est = online_step(state, y, all_rows(L), routing);

  // q block: exact ridge stationarity at the returned (q, a)
  const Vector grad_q = -2.0 * p0.transpose() * (y - p0 * est.q - routing * est.a) +
                        cfg.lambda_star * est.q;
  REQUIRE(grad_q.cwiseAbs().maxCoeff() < 1e-6);
  // a block: lasso subgradient conditions
  const Vector grad_a = -2.0 * routing.transpose() * (y - p0 * est.q - routing * est.a);
  for (Eigen::Index f = 0; f < F; ++f) {
    if (est.a(f) != 0.0)
      REQUIRE(std::abs(grad_a(f) + cfg.lambda_one * (est.a(f) > 0 ? 1.0 : -1.0)) <
              1e-5);
    else
      REQUIRE(std::abs(grad_a(f)) <= cfg.lambda_one + 1e-5);
  }
}

TEST_CASE("inner alternation never increases the slot objective") {
  const int L = 9, F = 5, rho = 2;
  Rng rng(11);
  const Matrix p0 = gaussian_matrix(L, rho, rng);
  const Matrix routing =
      (gaussian_matrix(L, F, rng).array().abs() > 0.6).cast<double>().matrix();
  OnlineConfig cfg;
  cfg.rho = rho;
  cfg.lambda_star = 0.5;
  cfg.lambda_one = 0.5;
  auto state = OnlineState::init_with(p0, cfg);
  const Vector y = gaussian_matrix(L, 1, rng);
  auto est = online_step(state, y, all_rows(L), routing);
  // the result beats the zero starting point
  const double at_zero = detail_online::slot_objective(
      p0, routing, y, Vector::Zero(rho), Vector::Zero(F), cfg.lambda_star,
      cfg.lambda_one);
  const double at_est = detail_online::slot_objective(
      p0, routing, y, est.q, est.a, cfg.lambda_star, cfg.lambda_one);
  REQUIRE(at_est <= at_zero + 1e-12);
  REQUIRE(est.inner_iterations >= 1);
}

TEST_CASE("empty mask slots are prediction-only and decay the statistics") {
  const int L = 6, rho = 2;
  Rng rng(13);
  OnlineConfig cfg;
  cfg.rho = rho;
  cfg.beta = 0.5;
  cfg.lambda_star = 0.1;
  cfg.lambda_one = 0.1;
  auto state = OnlineState::init_with(gaussian_matrix(L, rho, rng), cfg);
  const Matrix routing = Matrix::Identity(L, L);
  // one observed slot to populate statistics
  online_step(state, gaussian_matrix(L, 1, rng), all_rows(L), routing);
  const double phi_before = state.row_phi[0].norm();
  auto est = online_step(state, Vector::Zero(0), {}, routing);
  REQUIRE(est.prediction_only);
  REQUIRE(state.row_phi[0].norm() == Catch::Approx(0.5 * phi_before));
  REQUIRE(state.t == 2);
}

TEST_CASE("beta=1 accumulated cost equals the batch factorized objective") {
  const int L = 12, F = 7, T = 25, rho = 3;
  Rng rng(17);
  const Matrix routing =
      (gaussian_matrix(L, F, rng).array().abs() > 0.8).cast<double>().matrix();
  const Matrix truth = gaussian_matrix(L, rho, rng) *
                       gaussian_matrix(T, rho, rng).transpose();
  Matrix y = truth + gaussian_matrix(L, T, rng, 0.05);

  SamplingMask mask;
  mask.keep = MaskArray::Constant(L, T, true);
  Rng drop(19);
  std::uniform_int_distribution<int> pick(0, L - 1);
  for (Eigen::Index t = 0; t < T; ++t) mask.keep(pick(drop), t) = false;

  OnlineConfig cfg;
  cfg.rho = rho;
  cfg.beta = 1.0;
  cfg.lambda_star = 0.2;
  cfg.lambda_one = 0.3;
  auto state = OnlineState::init_with(gaussian_matrix(L, rho, rng), cfg);
  auto res = run_stream(y, mask, {routing}, state);

  std::vector<Vector> y_hist;
  std::vector<std::vector<int>> mask_hist;
  std::vector<Matrix> routing_hist;
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto rows = mask.observed_rows(static_cast<int>(t));
    Vector yo(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) yo(i) = y(rows[i], t);
    y_hist.push_back(yo);
    mask_hist.push_back(rows);
    routing_hist.push_back(routing);
  }
  const double acc =
      accumulated_cost(state.subspace, res.slots, y_hist, mask_hist,
                       routing_hist, 1.0, cfg.lambda_star, cfg.lambda_one);

  BatchProblem batch;
  batch.y = y;
  batch.mask = mask;
  batch.routing = routing;
  batch.lambda_star = cfg.lambda_star;
  batch.lambda_one = cfg.lambda_one;
  Matrix q_mat(T, rho), a_mat(F, T);
  for (int t = 0; t < T; ++t) {
    q_mat.row(t) = res.slots[t].q.transpose();
    a_mat.col(t) = res.slots[t].a;
  }
  const double batch_obj =
      factorized_objective(batch, state.subspace, q_mat, a_mat);
  REQUIRE(acc == Catch::Approx(batch_obj).margin(1e-9 * std::max(1.0, batch_obj)));
}

TEST_CASE("streaming detects an injected burst with good support accuracy") {
  const int L = 20, F = 12, T = 120, rho = 2;
  Rng rng(23);
  const Matrix routing =
      (gaussian_matrix(L, F, rng).array().abs() > 1.0).cast<double>().matrix();
  Matrix r_fixed = routing;
  for (Eigen::Index l = 0; l < L; ++l)
    if (r_fixed.row(l).sum() == 0.0) r_fixed(l, l % F) = 1.0;

  const Matrix u = gaussian_matrix(L, rho, rng);
  Matrix v(T, rho);
  for (int t = 0; t < T; ++t)
    for (int k = 0; k < rho; ++k)
      v(t, k) = 1.0 + 0.3 * std::sin(2.0 * M_PI * t / 30.0 + k);
  Matrix a_true = Matrix::Zero(F, T);
  for (int t = 60; t < 63; ++t) a_true(3, t) = 6.0;
  const Matrix y = u * v.transpose() + r_fixed * a_true +
                   gaussian_matrix(L, T, rng, 0.02);

  OnlineConfig cfg;
  cfg.rho = rho;
  cfg.beta = 0.98;
  cfg.lambda_star = 0.1;
  cfg.lambda_one = 1.0;
  auto state = OnlineState::init_from_svd(y.leftCols(10), cfg);
  auto res = run_stream(y, full_mask(L, T), {r_fixed}, state, &a_true);

  // after warmup, slots with the burst must fire on the right flow
  for (int t = 61; t < 63; ++t) {
    Eigen::Index best;
    res.a_hat.col(t).cwiseAbs().maxCoeff(&best);
    REQUIRE(best == 3);
  }
  // quiet slots stay mostly quiet
  long false_support = 0, quiet = 0;
  for (int t = 20; t < T; ++t) {
    if (a_true.col(t).cwiseAbs().maxCoeff() > 0.0) continue;
    false_support += res.records[t].support_size;
    ++quiet;
  }
  REQUIRE(false_support <= quiet);  // under one spurious flow per slot
}

TEST_CASE("outputs are invariant to values hidden by the mask") {
  const int L = 10, F = 6, T = 15, rho = 2;
  Rng rng(29);
  const Matrix routing =
      (gaussian_matrix(L, F, rng).array().abs() > 0.7).cast<double>().matrix();
  Matrix y = gaussian_matrix(L, T, rng);
  SamplingMask mask;
  mask.keep = MaskArray::Constant(L, T, true);
  Rng drop(31);
  std::uniform_int_distribution<int> pick(0, L - 1);
  for (Eigen::Index t = 0; t < T; ++t)
    for (int k = 0; k < 3; ++k) mask.keep(pick(drop), t) = false;

  OnlineConfig cfg;
  cfg.rho = rho;
  cfg.lambda_star = 0.2;
  cfg.lambda_one = 0.2;
  const Matrix p0 = gaussian_matrix(L, rho, rng);

  auto s1 = OnlineState::init_with(p0, cfg);
  auto r1 = run_stream(y, mask, {routing}, s1);

  Matrix y2 = y;
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index l = 0; l < L; ++l)
      if (!mask.keep(l, t)) y2(l, t) = 1e6;  // should never be read
  auto s2 = OnlineState::init_with(p0, cfg);
  auto r2 = run_stream(y2, mask, {routing}, s2);

  REQUIRE(r1.x_hat == r2.x_hat);
  REQUIRE(r1.a_hat == r2.a_hat);
  REQUIRE(s1.subspace == s2.subspace);
}

TEST_CASE("RLS statistics stay bounded over a long discounted stream") {
  const int L = 6, rho = 2, T = 2000;
  Rng rng(37);
  OnlineConfig cfg;
  cfg.rho = rho;
  cfg.beta = 0.95;
  cfg.lambda_star = 0.1;
  cfg.lambda_one = 0.5;
  auto state = OnlineState::init_with(gaussian_matrix(L, rho, rng), cfg);
  const Matrix routing = Matrix::Identity(L, L);
  double max_phi = 0.0;
  for (int t = 0; t < T; ++t) {
    const Vector y = gaussian_matrix(L, 1, rng);
    online_step(state, y, all_rows(L), routing);
    for (const auto& phi : state.row_phi)
      max_phi = std::max(max_phi, phi.norm());
  }
  REQUIRE(std::isfinite(max_phi));
  // geometric series bound: ||phi|| <= sup||qq'|| / (1 - beta)
  REQUIRE(max_phi < 1e4);
  REQUIRE(state.subspace.allFinite());
}

TEST_CASE("subspace converges to the true column space on clean data") {
  const int L = 15, rho = 3, T = 400;
  Rng rng(41);
  const Matrix u = gaussian_matrix(L, rho, rng);
  OnlineConfig cfg;
  cfg.rho = rho;
  cfg.beta = 1.0;
  cfg.lambda_star = 1e-4;
  cfg.lambda_one = 10.0;
  auto state = OnlineState::init_with(
      u + 0.3 * gaussian_matrix(L, rho, rng), cfg);
  const Matrix routing = Matrix::Identity(L, L);
  for (int t = 0; t < T; ++t) {
    const Vector y = u * gaussian_matrix(rho, 1, rng);
    online_step(state, y, all_rows(L), routing);
  }
  REQUIRE(oracles::max_principal_angle(state.subspace, u) < 0.1);
}

TEST_CASE("discounting tracks a subspace switch that beta=1 cannot follow") {
  const int L = 12, rho = 2, T = 600;
  Rng rng(43);
  const Matrix u1 = gaussian_matrix(L, rho, rng);
  const Matrix u2 = gaussian_matrix(L, rho, rng);
  const Matrix routing = Matrix::Identity(L, L);

  auto run = [&](double beta) {
    OnlineConfig cfg;
    cfg.rho = rho;
    cfg.beta = beta;
    cfg.lambda_star = 1e-4;
    cfg.lambda_one = 10.0;
    auto state = OnlineState::init_with(u1 + 0.1 * gaussian_matrix(L, rho, rng),
                                        cfg);
    Rng stream_rng(47);
    for (int t = 0; t < T; ++t) {
      const Matrix& u = t < T / 2 ? u1 : u2;
      const Vector y = u * gaussian_matrix(rho, 1, stream_rng);
      online_step(state, y, all_rows(L), routing);
    }
    return oracles::max_principal_angle(state.subspace, u2);
  };

  const double angle_discounted = run(0.9);
  const double angle_flat = run(1.0);
  REQUIRE(angle_discounted < 0.15);
  REQUIRE(angle_flat > 2.0 * angle_discounted);
}

TEST_CASE("run_stream edge cases") {
  OnlineConfig cfg;
  cfg.rho = 2;
  auto state = OnlineState::init_with(Matrix::Zero(4, 2), cfg);
  SamplingMask empty;
  empty.keep = MaskArray::Constant(4, 0, false);
  auto res = run_stream(Matrix::Zero(4, 0), empty, {Matrix::Identity(4, 4)},
                        state);
  REQUIRE(res.records.empty());
  REQUIRE(res.x_hat.cols() == 0);
  REQUIRE_THROWS_AS(OnlineState::init_with(Matrix::Zero(4, 2),
                                           [] {
                                             OnlineConfig c;
                                             c.beta = 0.0;
                                             return c;
                                           }()),
                    std::invalid_argument);
}

TEST_CASE("routing churn is detected and flagged") {
  const int L = 10, F = 5, T = 4;
  Rng rng(53);
  Matrix r0 = (gaussian_matrix(L, F, rng).array().abs() > 0.5)
                  .cast<double>()
                  .matrix();
  std::vector<Matrix> seq(T, r0);
  Matrix r_changed = r0;
  r_changed.row(0).setZero();
  r_changed.row(1).setZero();
  r_changed(0, 0) = r_changed(1, 1) = 1.0;
  seq[2] = r_changed;  // 2 of 10 rows changed at t=2
  seq[3] = r_changed;

  OnlineConfig cfg;
  cfg.rho = 2;
  cfg.lambda_star = 0.1;
  cfg.lambda_one = 0.5;
  auto state = OnlineState::init_with(gaussian_matrix(L, 2, rng), cfg);
  auto res = run_stream(gaussian_matrix(L, T, rng), full_mask(L, T), seq, state);
  REQUIRE(res.records[2].routing_rows_changed >= 2);
  REQUIRE(res.records[2].routing_churn_warning);  // > 10% of rows
  REQUIRE(res.records[3].routing_rows_changed == 0);
  REQUIRE_FALSE(res.records[3].routing_churn_warning);
}
