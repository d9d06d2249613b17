#pragma once

// Semi-supervised dictionary learning for link-count cartography: train an
// over-complete basis from incomplete historical link counts, then impute
// missing link counts per time slot.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "netcarto/common.hpp"
#include "netcarto/netmodel.hpp"
#include "netcarto/solvers.hpp"

namespace netcarto {

struct Dictionary {
  Matrix basis;  // L x Q, ||b_q|| <= 1
  int atom_count() const { return static_cast<int>(basis.cols()); }
};

struct SlotObservation {
  Vector y;                   // length = observed.size()
  std::vector<int> observed;  // link indices
};

struct TrainingSet {
  std::vector<SlotObservation> slots;
  Matrix laplacian;  // L x L
  double lambda_w = 0.1;
  double lambda_g = 1e-5;
};

struct TrainResult {
  Dictionary dict;
  Matrix codes;  // Q x T
  std::vector<double> objective_trace;
  bool converged = false;
  std::vector<std::string> warnings;
};

namespace detail {

inline Matrix select_rows(const Matrix& b, const std::vector<int>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), b.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = b.row(rows[i]);
  return out;
}

inline double dict_objective(const TrainingSet& data, const Matrix& b,
                             const Matrix& w) {
  const Matrix h = b.transpose() * data.laplacian * b;
  double obj = 0.0;
  for (std::size_t t = 0; t < data.slots.size(); ++t) {
    const auto& slot = data.slots[t];
    const Vector wt = w.col(static_cast<Eigen::Index>(t));
    obj += (slot.y - select_rows(b, slot.observed) * wt).squaredNorm();
    obj += data.lambda_w * wt.lpNorm<1>();
    obj += data.lambda_g * wt.dot(h * wt);
  }
  return obj;
}

// Gradient of the smooth training cost with respect to B.
inline Matrix dict_gradient(const TrainingSet& data, const Matrix& b,
                            const Matrix& w) {
  Matrix g = Matrix::Zero(b.rows(), b.cols());
  Matrix second_moment = Matrix::Zero(b.cols(), b.cols());
  for (std::size_t t = 0; t < data.slots.size(); ++t) {
    const auto& slot = data.slots[t];
    const Vector wt = w.col(static_cast<Eigen::Index>(t));
    const Vector resid = select_rows(b, slot.observed) * wt - slot.y;
    for (std::size_t i = 0; i < slot.observed.size(); ++i)
      g.row(slot.observed[i]) += 2.0 * resid(static_cast<Eigen::Index>(i)) *
                                 wt.transpose();
    second_moment += wt * wt.transpose();
  }
  g += 2.0 * data.lambda_g * data.laplacian * b * second_moment;
  return g;
}

}  // namespace detail

// Impute the full link-count vector from a partial snapshot: solve the
// composite lasso over codes, then x_hat = B w_hat.
struct Imputation {
  Vector x_hat;
  Vector w_hat;
  SolverReport report;
};

inline Imputation impute_link_counts(const Vector& y,
                                     const std::vector<int>& observed,
                                     const Dictionary& dict,
                                     const Matrix& laplacian, double lambda_w,
                                     double lambda_g, double tol = 1e-8,
                                     int max_iters = 10000) {
  require(!observed.empty(), "impute_link_counts: empty observation set");
  require(y.size() == static_cast<Eigen::Index>(observed.size()),
          "impute_link_counts: observation length mismatch");
  const Matrix d = detail::select_rows(dict.basis, observed);
  const Matrix h = dict.basis.transpose() * laplacian * dict.basis;
  auto problem = CompositeProblem::with_graph_quad(y, d, h, lambda_g, lambda_w);
  auto [w, report] =
      lasso_graph(problem, Vector::Zero(dict.basis.cols()), tol, max_iters);
  return {dict.basis * w, std::move(w), report};
}

// Block coordinate descent over codes and basis. Codes are warm-started and
// solved by lasso_graph; the basis step is projected gradient with
// backtracking under the unit-column-ball constraint, so the objective trace
// is non-increasing by construction.
inline TrainResult train_dictionary(const TrainingSet& data, int atoms,
                                    std::uint64_t seed, int outer_iters = 30,
                                    double tol = 1e-6,
                                    double code_tol = 1e-7) {
  require(atoms >= 1, "train_dictionary: need at least one atom");
  require(!data.slots.empty(), "train_dictionary: empty training set");
  const auto L = data.laplacian.rows();
  const auto T = static_cast<Eigen::Index>(data.slots.size());

  std::vector<bool> seen(L, false);
  for (const auto& slot : data.slots)
    for (int l : slot.observed) seen[l] = true;

  TrainResult result;
  if (std::find(seen.begin(), seen.end(), false) != seen.end())
    result.warnings.push_back(
        "some links never observed in training; relying on Laplacian coupling");

  // init: random observed columns zero-filled and normalized, Gaussian fallback
  Rng rng(seed);
  Matrix b(L, atoms);
  std::uniform_int_distribution<Eigen::Index> pick(0, T - 1);
  for (int q = 0; q < atoms; ++q) {
    Vector col = Vector::Zero(L);
    const auto& slot = data.slots[pick(rng)];
    for (std::size_t i = 0; i < slot.observed.size(); ++i)
      col(slot.observed[i]) = slot.y(static_cast<Eigen::Index>(i));
    if (col.norm() < 1e-12) col = gaussian_matrix(L, 1, rng);
    b.col(q) = col / col.norm();
  }

  Matrix w = Matrix::Zero(atoms, T);
  double prev_obj = detail::dict_objective(data, b, w);
  result.objective_trace.push_back(prev_obj);

  for (int sweep = 0; sweep < outer_iters; ++sweep) {
    // code updates, warm-started per slot
    const Matrix h = b.transpose() * data.laplacian * b;
    for (Eigen::Index t = 0; t < T; ++t) {
      const auto& slot = data.slots[t];
      auto problem = CompositeProblem::with_graph_quad(
          slot.y, detail::select_rows(b, slot.observed), h, data.lambda_g,
          data.lambda_w);
      auto [wt, rep] = lasso_graph(problem, w.col(t), code_tol, 2000);
      w.col(t) = wt;
    }

    // basis update: projected gradient with backtracking, iterated until the
    // block stops making measurable progress at the current codes
    {
      double obj_b = detail::dict_objective(data, b, w);
      for (int inner = 0; inner < 100; ++inner) {
        const Matrix grad = detail::dict_gradient(data, b, w);
        double step = 1.0 / std::max(1e-12, grad.norm());
        bool moved = false;
        for (int h_iter = 0; h_iter <= 30; ++h_iter) {
          Matrix trial = project_columns_unit_ball(b - step * grad);
          const double trial_obj = detail::dict_objective(data, trial, w);
          if (trial_obj < obj_b) {
            b = std::move(trial);
            obj_b = trial_obj;
            moved = true;
            break;
          }
          step *= 0.5;
        }
        if (!moved) break;
      }
    }

    const double obj = detail::dict_objective(data, b, w);
    result.objective_trace.push_back(obj);
    const double change = std::abs(prev_obj - obj) / std::max(1.0, prev_obj);
    prev_obj = obj;
    if (change < tol) {
      result.converged = true;
      break;
    }
  }

  // final code refresh so the returned codes are optimal for the returned
  // basis (the sweep order leaves them half an iteration stale otherwise)
  {
    const Matrix h = b.transpose() * data.laplacian * b;
    for (Eigen::Index t = 0; t < T; ++t) {
      const auto& slot = data.slots[t];
      auto problem = CompositeProblem::with_graph_quad(
          slot.y, detail::select_rows(b, slot.observed), h, data.lambda_g,
          data.lambda_w);
      auto [wt, rep] = lasso_graph(problem, w.col(t), code_tol, 2000);
      w.col(t) = wt;
    }
  }

  result.dict.basis = std::move(b);
  result.codes = std::move(w);
  return result;
}

// Normalized reconstruction error, evaluated against the full true link
// counts: (L T)^-1 sum_t ||truth_t - est_t||^2.
inline double nre(const Matrix& estimates, const Matrix& truth) {
  require(estimates.rows() == truth.rows() && estimates.cols() == truth.cols(),
          "nre: shape mismatch");
  return (truth - estimates).squaredNorm() /
         static_cast<double>(truth.size());
}

// Grid-search cross-validation over (lambda_w, lambda_g) on a 20% held-out
// split, scored on reconstruction of the held-out observed entries.
struct CvResult {
  double lambda_w = 0.0;
  double lambda_g = 0.0;
  double score = 0.0;
};

inline CvResult cross_validate(const TrainingSet& data, int atoms,
                               std::uint64_t seed,
                               const std::vector<double>& lw_grid =
                                   {1e-3, 1e-2, 1e-1, 1.0, 10.0},
                               const std::vector<double>& lg_grid =
                                   {1e-6, 1e-5, 1e-4, 1e-3, 1e-2},
                               int outer_iters = 10) {
  const auto T = data.slots.size();
  require(T >= 5, "cross_validate: too few slots");
  const std::size_t holdout = std::max<std::size_t>(1, T / 5);

  TrainingSet train = data;
  train.slots.assign(data.slots.begin(),
                     data.slots.end() - static_cast<long>(holdout));
  std::vector<SlotObservation> held(data.slots.end() - static_cast<long>(holdout),
                                    data.slots.end());

  CvResult best;
  best.score = std::numeric_limits<double>::infinity();
  for (double lw : lw_grid)
    for (double lg : lg_grid) {
      train.lambda_w = lw;
      train.lambda_g = lg;
      auto trained = train_dictionary(train, atoms, seed, outer_iters, 1e-5);
      double err = 0.0;
      long count = 0;
      for (const auto& slot : held) {
        auto imp = impute_link_counts(slot.y, slot.observed, trained.dict,
                                      data.laplacian, lw, lg, 1e-6, 2000);
        for (std::size_t i = 0; i < slot.observed.size(); ++i) {
          const double d = slot.y(static_cast<Eigen::Index>(i)) -
                           imp.x_hat(slot.observed[i]);
          err += d * d;
          ++count;
        }
      }
      err /= std::max<long>(1, count);
      if (err < best.score) best = {lw, lg, err};
    }
  return best;
}

}  // namespace netcarto
