#pragma once

// In-network anomalography: bilinear factorization of the batch estimator and
// its consensus formulation, solved by synchronous-round ADMM over a
// simulated node graph. Nodes exchange only their {Q_n, A_n} estimates.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <utility>
#include <vector>

#include "netcarto/anomaly_batch.hpp"
#include "netcarto/common.hpp"
#include "netcarto/netmodel.hpp"
#include "netcarto/solvers.hpp"

namespace netcarto {

struct NodePartition {
  std::vector<std::vector<int>> node_links;  // rows of Y/R per node
  std::vector<std::vector<int>> neighbors;   // communication graph

  int nodes() const { return static_cast<int>(node_links.size()); }

  void validate(Eigen::Index total_links) const {
    std::vector<int> count(total_links, 0);
    for (const auto& rows : node_links)
      for (int l : rows) {
        require(l >= 0 && l < total_links, "NodePartition: link out of range");
        count[l]++;
      }
    for (int c : count)
      require(c == 1, "NodePartition: link rows must partition the links");
    // connectivity of the communication graph
    const int n = nodes();
    require(static_cast<int>(neighbors.size()) == n,
            "NodePartition: adjacency size mismatch");
    std::vector<bool> seen(n, false);
    std::queue<int> q;
    q.push(0);
    seen[0] = true;
    int visited = 1;
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (int v : neighbors[u])
        if (!seen[v]) {
          seen[v] = true;
          ++visited;
          q.push(v);
        }
    }
    require(visited == n, "NodePartition: communication graph disconnected");
  }

  static NodePartition even_split_ring(Eigen::Index total_links, int n) {
    NodePartition p;
    p.node_links.resize(n);
    for (Eigen::Index l = 0; l < total_links; ++l)
      p.node_links[l % n].push_back(static_cast<int>(l));
    p.neighbors.resize(n);
    for (int i = 0; i < n; ++i) {
      if (n == 1) continue;
      p.neighbors[i].push_back((i + 1) % n);
      if (n > 2) p.neighbors[i].push_back((i + n - 1) % n);
    }
    p.validate(total_links);
    return p;
  }

  static NodePartition even_split_star(Eigen::Index total_links, int n) {
    NodePartition p;
    p.node_links.resize(n);
    for (Eigen::Index l = 0; l < total_links; ++l)
      p.node_links[l % n].push_back(static_cast<int>(l));
    p.neighbors.resize(n);
    for (int i = 1; i < n; ++i) {
      p.neighbors[0].push_back(i);
      p.neighbors[i].push_back(0);
    }
    p.validate(total_links);
    return p;
  }
};

struct AdmmConfig {
  int rho = 2;
  double penalty = 1.0;
  int rounds = 500;
  double tol_consensus = 1e-4;
  double lambda_star = 1.0;
  double lambda_one = 1.0;
  int inner_steps = 5;  // inexact (Q, A) subproblem
  bool adapt_penalty = true;
  std::uint64_t seed = 0;
};

struct NodeState {
  Matrix p;  // L_n x rho
  Matrix q;  // T x rho
  Matrix a;  // F x T
  Matrix dual_q;
  Matrix dual_a;
};

namespace detail {

struct LocalData {
  Matrix y;  // L_n x T
  MaskArray mask;
  Matrix routing;  // L_n x F
  double lip_r = 0.0;  // 2 * sigma_max(R_n)^2, safety-scaled
};

inline LocalData make_local(const BatchProblem& problem,
                            const std::vector<int>& rows) {
  LocalData d;
  const auto n = static_cast<Eigen::Index>(rows.size());
  d.y.resize(n, problem.y.cols());
  d.mask.resize(n, problem.y.cols());
  d.routing.resize(n, problem.routing.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    d.y.row(i) = problem.y.row(rows[i]);
    d.mask.row(i) = problem.mask.keep.row(rows[i]);
    d.routing.row(i) = problem.routing.row(rows[i]);
  }
  d.lip_r = std::max(
      1e-12, 2.0 * power_iteration_sym(d.routing.transpose() * d.routing));
  return d;
}

inline Matrix masked(const LocalData& d, const Matrix& m) {
  return d.mask.select(m, Matrix::Zero(m.rows(), m.cols()));
}

// Exact ridge update of P rows: per row, over that row's observed slots.
inline void update_p(const LocalData& d, const Matrix& q, const Matrix& a,
                     double lambda_star, Matrix& p) {
  const auto rho = q.cols();
  const Matrix ra = d.routing * a;
  for (Eigen::Index l = 0; l < d.y.rows(); ++l) {
    Matrix phi = Matrix::Zero(rho, rho);
    Vector s = Vector::Zero(rho);
    for (Eigen::Index t = 0; t < d.y.cols(); ++t)
      if (d.mask(l, t)) {
        phi += q.row(t).transpose() * q.row(t);
        s += (d.y(l, t) - ra(l, t)) * q.row(t).transpose();
      }
    p.row(l) = (2.0 * phi + lambda_star * Matrix::Identity(rho, rho))
                   .ldlt()
                   .solve(2.0 * s)
                   .transpose();
  }
}

// Inexact (Q, A) block: a fixed number of sweeps of {exact per-column ridge
// on Q, one prox-gradient step on A}, optionally augmented with
// neighbor-consensus penalty and dual terms. With zero consensus terms this
// is exactly the centralized sweep.
struct ConsensusTerms {
  double c_deg = 0.0;  // penalty * degree
  const Matrix* q_target = nullptr;
  const Matrix* a_target = nullptr;
  const Matrix* dual_q = nullptr;
  const Matrix* dual_a = nullptr;
};

inline void update_q_a(const LocalData& d, const Matrix& p, double q_ridge,
                       double a_l1, int steps, const ConsensusTerms& cons,
                       Matrix& q, Matrix& a) {
  const auto rho = p.cols();
  const double lip_a = d.lip_r + 2.0 * cons.c_deg;
  for (int step = 0; step < steps; ++step) {
    // Q: per-column quadratic solve
    Matrix ra = d.routing * a;
    for (Eigen::Index t = 0; t < d.y.cols(); ++t) {
      Matrix phi = Matrix::Zero(rho, rho);
      Vector s = Vector::Zero(rho);
      for (Eigen::Index l = 0; l < d.y.rows(); ++l)
        if (d.mask(l, t)) {
          phi += p.row(l).transpose() * p.row(l);
          s += (d.y(l, t) - ra(l, t)) * p.row(l).transpose();
        }
      Vector rhs = 2.0 * s;
      double diag = q_ridge;
      if (cons.c_deg > 0.0) {
        rhs -= cons.dual_q->row(t).transpose();
        rhs += 2.0 * cons.c_deg * cons.q_target->row(t).transpose();
        diag += 2.0 * cons.c_deg;
      }
      q.row(t) = (2.0 * phi + diag * Matrix::Identity(rho, rho))
                     .ldlt()
                     .solve(rhs)
                     .transpose();
    }
    // A: one proximal gradient step
    const Matrix resid = masked(d, d.y - p * q.transpose() - d.routing * a);
    Matrix grad = -2.0 * d.routing.transpose() * resid;
    if (cons.c_deg > 0.0)
      grad += *cons.dual_a + 2.0 * cons.c_deg * (a - *cons.a_target);
    a = soft_threshold(Matrix(a - grad / lip_a), a_l1 / lip_a);
  }
}

}  // namespace detail

struct FactorizedResult {
  Matrix p;  // L x rho
  Matrix q;  // T x rho
  Matrix a;  // F x T
  double objective = 0.0;
  std::vector<double> objective_trace;
  bool converged = false;
};

inline double factorized_objective(const BatchProblem& problem, const Matrix& p,
                                   const Matrix& q, const Matrix& a) {
  return problem.mask.apply(problem.y - p * q.transpose() - problem.routing * a)
             .squaredNorm() +
         0.5 * problem.lambda_star * (p.squaredNorm() + q.squaredNorm()) +
         problem.lambda_one * a.lpNorm<1>();
}

// Block-coordinate minimization of the factorized batch cost.
inline FactorizedResult factorized_centralized(const BatchProblem& problem,
                                               int rho, std::uint64_t seed,
                                               int iters = 500,
                                               double tol = 1e-8,
                                               int inner_steps = 5) {
  require(rho >= 1, "factorized_centralized: rho must be >= 1");
  const auto L = problem.y.rows();
  const auto T = problem.y.cols();
  const auto F = problem.routing.cols();

  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(rho));
  FactorizedResult res;
  res.p = gaussian_matrix(L, rho, rng, scale);
  res.q = gaussian_matrix(T, rho, rng, scale);
  res.a = Matrix::Zero(F, T);

  std::vector<int> all_rows(L);
  std::iota(all_rows.begin(), all_rows.end(), 0);
  const auto local = detail::make_local(problem, all_rows);

  double obj = factorized_objective(problem, res.p, res.q, res.a);
  res.objective_trace.push_back(obj);
  for (int k = 0; k < iters; ++k) {
    detail::update_p(local, res.q, res.a, problem.lambda_star, res.p);
    detail::update_q_a(local, res.p, problem.lambda_star, problem.lambda_one,
                       inner_steps, {}, res.q, res.a);
    const double next = factorized_objective(problem, res.p, res.q, res.a);
    res.objective_trace.push_back(next);
    const double change = std::abs(obj - next) / std::max(1.0, std::abs(obj));
    obj = next;
    if (change < tol) {
      res.converged = true;
      break;
    }
  }
  res.objective = obj;
  return res;
}

// --- consensus ADMM -------------------------------------------------------

class AdmmSimulation {
 public:
  AdmmSimulation(const BatchProblem& problem, NodePartition partition,
                 AdmmConfig config)
      : problem_(problem),
        partition_(std::move(partition)),
        config_(config),
        penalty_(config.penalty) {
    partition_.validate(problem.y.rows());
    const auto T = problem.y.cols();
    const auto F = problem.routing.cols();
    const int n = partition_.nodes();

    Rng rng(config_.seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(config_.rho));
    const Matrix p0 = gaussian_matrix(problem.y.rows(), config_.rho, rng, scale);
    const Matrix q0 = gaussian_matrix(T, config_.rho, rng, scale);

    states_.resize(n);
    for (int i = 0; i < n; ++i) {
      const auto& rows = partition_.node_links[i];
      locals_.push_back(detail::make_local(problem, rows));
      auto& st = states_[i];
      st.p.resize(static_cast<Eigen::Index>(rows.size()), config_.rho);
      for (std::size_t r = 0; r < rows.size(); ++r)
        st.p.row(static_cast<Eigen::Index>(r)) = p0.row(rows[r]);
      st.q = q0;  // identical across nodes
      st.a = Matrix::Zero(F, T);
      st.dual_q = Matrix::Zero(T, config_.rho);
      st.dual_a = Matrix::Zero(F, T);
    }
  }

  // One synchronous round. Primal updates read only previous-round neighbor
  // snapshots, so the result is independent of node processing order.
  double round() {
    const int n = partition_.nodes();
    const double c = penalty_;
    const std::vector<NodeState> prev = states_;

    for (int i = 0; i < n; ++i) {
      auto& st = states_[i];
      const auto& nbrs = partition_.neighbors[i];
      const double deg = static_cast<double>(nbrs.size());

      detail::update_p(locals_[i], prev[i].q, prev[i].a,
                       config_.lambda_star, st.p);

      if (nbrs.empty()) {
        detail::update_q_a(locals_[i], st.p, config_.lambda_star,
                           config_.lambda_one, config_.inner_steps, {}, st.q,
                           st.a);
        continue;
      }
      Matrix q_mean = Matrix::Zero(prev[i].q.rows(), prev[i].q.cols());
      Matrix a_mean = Matrix::Zero(prev[i].a.rows(), prev[i].a.cols());
      for (int m : nbrs) {
        q_mean += prev[m].q;
        a_mean += prev[m].a;
        message_bytes_ += 8 * (prev[i].q.size() + prev[i].a.size());
      }
      const Matrix q_target = 0.5 * (prev[i].q + q_mean / deg);
      const Matrix a_target = 0.5 * (prev[i].a + a_mean / deg);

      detail::ConsensusTerms cons;
      cons.c_deg = c * deg;
      cons.q_target = &q_target;
      cons.a_target = &a_target;
      cons.dual_q = &st.dual_q;
      cons.dual_a = &st.dual_a;
      detail::update_q_a(locals_[i], st.p, config_.lambda_star / n,
                         config_.lambda_one / n, config_.inner_steps, cons,
                         st.q, st.a);
    }

    // dual ascent on the new primals
    double dual_residual = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int m : partition_.neighbors[i]) {
        states_[i].dual_q += c * (states_[i].q - states_[m].q);
        states_[i].dual_a += c * (states_[i].a - states_[m].a);
      }
      dual_residual = std::max(
          dual_residual, c * std::sqrt((states_[i].q - prev[i].q).squaredNorm() +
                                       (states_[i].a - prev[i].a).squaredNorm()));
    }

    const double primal_residual = consensus_residual();
    if (config_.adapt_penalty && n > 1) {
      if (primal_residual > 10.0 * dual_residual)
        penalty_ *= 2.0;
      else if (dual_residual > 10.0 * primal_residual)
        penalty_ *= 0.5;
    }
    return primal_residual;
  }

  double consensus_residual() const {
    if (partition_.nodes() < 2) return 0.0;  // trivially in consensus
    double r = 0.0;
    for (int i = 0; i < partition_.nodes(); ++i)
      for (int m : partition_.neighbors[i])
        r = std::max(r, (states_[i].q - states_[m].q).norm() +
                            (states_[i].a - states_[m].a).norm());
    return r;
  }

  // Stacked P and neighborhood-averaged (Q, A), for objective evaluation.
  FactorizedResult consensus_point() const {
    FactorizedResult res;
    const int n = partition_.nodes();
    res.p.resize(problem_.y.rows(), config_.rho);
    res.q = Matrix::Zero(states_[0].q.rows(), states_[0].q.cols());
    res.a = Matrix::Zero(states_[0].a.rows(), states_[0].a.cols());
    for (int i = 0; i < n; ++i) {
      const auto& rows = partition_.node_links[i];
      for (std::size_t r = 0; r < rows.size(); ++r)
        res.p.row(rows[r]) = states_[i].p.row(static_cast<Eigen::Index>(r));
      res.q += states_[i].q;
      res.a += states_[i].a;
    }
    res.q /= n;
    res.a /= n;
    res.objective = factorized_objective(problem_, res.p, res.q, res.a);
    return res;
  }

  const std::vector<NodeState>& states() const { return states_; }
  std::vector<NodeState>& states() { return states_; }
  long long message_bytes() const { return message_bytes_; }
  double penalty() const { return penalty_; }

 private:
  BatchProblem problem_;
  NodePartition partition_;
  AdmmConfig config_;
  std::vector<detail::LocalData> locals_;
  std::vector<NodeState> states_;
  double penalty_ = 0.0;
  long long message_bytes_ = 0;

 public:
  void reset_penalty() { penalty_ = config_.penalty; }
};

struct AdmmTrace {
  std::vector<double> consensus;
  std::vector<double> objective;
  int rounds_run = 0;
  bool converged = false;
};

inline AdmmTrace run_admm(AdmmSimulation& sim, const AdmmConfig& config) {
  AdmmTrace trace;
  sim.reset_penalty();
  double prev_obj = sim.consensus_point().objective;
  for (int k = 0; k < config.rounds; ++k) {
    const double resid = sim.round();
    const double obj = sim.consensus_point().objective;
    trace.consensus.push_back(resid);
    trace.objective.push_back(obj);
    trace.rounds_run = k + 1;
    const bool stalled =
        std::abs(prev_obj - obj) / std::max(1.0, std::abs(prev_obj)) < 1e-9;
    prev_obj = obj;
    if (resid < config.tol_consensus && stalled) {
      trace.converged = true;
      break;
    }
  }
  return trace;
}

inline double consensus_residual(const std::vector<NodeState>& states,
                                 const NodePartition& partition) {
  require(states.size() >= 2, "consensus_residual: need >= 2 nodes");
  double r = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i)
    for (int m : partition.neighbors[i])
      r = std::max(r, (states[i].q - states[m].q).norm() +
                          (states[i].a - states[m].a).norm());
  return r;
}

}  // namespace netcarto
