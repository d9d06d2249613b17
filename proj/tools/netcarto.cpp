// netcarto: CLI surface over the cartography library. Every subcommand reads
// CSV/JSON inputs, writes CSV/JSON artifacts into an output directory and
// finishes by writing a manifest.json listing each artifact with a content
// hash; on any error the partial outputs are removed and the exit code is
// nonzero.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "netcarto/anomaly_batch.hpp"
#include "netcarto/anomaly_distributed.hpp"
#include "netcarto/anomaly_online.hpp"
#include "netcarto/common.hpp"
#include "netcarto/io.hpp"
#include "netcarto/kkf.hpp"
#include "netcarto/netmodel.hpp"
#include "netcarto/solvers.hpp"
#include "netcarto/traffic_dict.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace netcarto;

namespace {

constexpr const char* kVersion = "netcarto 1.0.0";

// Tracks artifacts for one command: registers paths as they are written,
// removes everything on failure, and writes a hash manifest on success.
class ArtifactSet {
 public:
  explicit ArtifactSet(std::string dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
  }

  std::string path(const std::string& name) {
    const std::string full = (fs::path(dir_) / name).string();
    files_.push_back(name);
    return full;
  }

  void write_json(const std::string& name, const json& j) {
    std::ofstream out(path(name));
    if (!out) throw std::runtime_error("cannot open " + name);
    out << j.dump(2) << '\n';
  }

  void finalize(const json& config_echo) {
    json manifest;
    manifest["version"] = kVersion;
    manifest["config"] = config_echo;
    json artifacts = json::object();
    for (const auto& name : files_) {
      const std::string full = (fs::path(dir_) / name).string();
      artifacts[name] = hash_file(full);
    }
    manifest["artifacts"] = artifacts;
    std::ofstream out((fs::path(dir_) / "manifest.json").string());
    out << manifest.dump(2) << '\n';
  }

  void cleanup() {
    for (const auto& name : files_) {
      std::error_code ec;
      fs::remove(fs::path(dir_) / name, ec);
    }
  }

 private:
  std::string dir_;
  std::vector<std::string> files_;
};

std::uint64_t effective_seed(std::uint64_t seed) {
  if (const char* env = std::getenv("NETCARTO_SEED"))
    return std::stoull(env);
  return seed;
}

void apply_thread_cap() {
  if (const char* env = std::getenv("NETCARTO_THREADS")) {
    const int n = std::max(1, std::atoi(env));
    Eigen::setNbThreads(n);
  }
}

TrainingSet training_set_from_csv(const std::string& observations_path,
                                  const Matrix& laplacian, double lw,
                                  double lg) {
  auto loaded = load_matrix_csv(observations_path, MissingPolicy::Mask);
  require(loaded.values.rows() == laplacian.rows(),
          "observations row count does not match the topology link count");
  TrainingSet data;
  data.laplacian = laplacian;
  data.lambda_w = lw;
  data.lambda_g = lg;
  for (Eigen::Index t = 0; t < loaded.values.cols(); ++t) {
    SlotObservation slot;
    slot.observed = loaded.mask.observed_rows(static_cast<int>(t));
    slot.y.resize(static_cast<Eigen::Index>(slot.observed.size()));
    for (std::size_t i = 0; i < slot.observed.size(); ++i)
      slot.y(static_cast<Eigen::Index>(i)) = loaded.values(slot.observed[i], t);
    data.slots.push_back(std::move(slot));
  }
  return data;
}

struct ScenarioFiles {
  Matrix y;
  SamplingMask mask;
  Matrix routing;
  Matrix anomalies;  // empty when absent
  json meta;
};

ScenarioFiles load_scenario(const std::string& dir) {
  ScenarioFiles sc;
  std::ifstream meta_in((fs::path(dir) / "scenario.json").string());
  if (!meta_in)
    throw std::runtime_error("scenario: missing scenario.json in " + dir);
  meta_in >> sc.meta;
  auto obs = load_matrix_csv((fs::path(dir) / "observations.csv").string(),
                             MissingPolicy::Mask);
  sc.y = std::move(obs.values);
  sc.mask = std::move(obs.mask);
  const Eigen::Index flows = sc.meta.at("flows").get<Eigen::Index>();
  sc.routing = load_routing_csv((fs::path(dir) / "routing.csv").string(),
                                sc.y.rows(), flows);
  const auto anomalies_path = (fs::path(dir) / "anomalies.csv").string();
  if (fs::exists(anomalies_path))
    sc.anomalies =
        load_matrix_csv(anomalies_path, MissingPolicy::Error).values;
  return sc;
}

int matrix_rank_at(const Matrix& m, double cutoff) {
  const Vector sv = Eigen::BDCSVD<Matrix>(m).singularValues();
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff * std::max(1.0, sv(0))) ++r;
  return r;
}

long support_size(const Matrix& a, double eps = 1e-6) {
  long n = 0;
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      if (std::abs(a(i, j)) > eps) ++n;
  return n;
}

void write_roc_csv(const std::string& path, const std::vector<RocPoint>& pts) {
  std::ofstream out(path);
  out.precision(17);
  out << "fpr,tpr\n";
  for (const auto& p : pts) out << p.fpr << ',' << p.tpr << '\n';
}

// ---------------------------------------------------------------------------

void cmd_generate(const std::string& out_dir, ScenarioParams params) {
  params.seed = effective_seed(params.seed);
  ArtifactSet artifacts(out_dir);
  try {
    auto sc = make_scenario(params);
    save_topology_csv(artifacts.path("topology.csv"), sc.topology);
    save_routing_csv(artifacts.path("routing.csv"), sc.routing);
    save_matrix_csv(artifacts.path("od_traffic.csv"), sc.od_traffic);
    save_matrix_csv(artifacts.path("anomalies.csv"), sc.anomalies);
    save_matrix_csv(artifacts.path("link_traffic.csv"), sc.link_traffic);
    save_matrix_csv(artifacts.path("observations.csv"), sc.observations,
                    &sc.mask);
    json meta{{"nodes", params.n_nodes},
              {"target_degree", params.target_degree},
              {"links", sc.routing.entries.rows()},
              {"flows", sc.routing.entries.cols()},
              {"horizon", params.horizon},
              {"rank", params.rank},
              {"period", params.period},
              {"anomaly_density", params.anomaly_density},
              {"anomaly_magnitude", params.anomaly_magnitude},
              {"anomaly_duration", params.anomaly_duration},
              {"noise_std", params.noise_std},
              {"keep_fraction", params.keep_fraction},
              {"seed", params.seed}};
    artifacts.write_json("scenario.json", meta);
    artifacts.finalize(meta);
  } catch (...) {
    artifacts.cleanup();
    throw;
  }
}

void cmd_dict_train(const std::string& topology_path,
                    const std::string& routing_path,
                    const std::string& observations_path, int atoms, double lw,
                    double lg, std::uint64_t seed, int outer_iters,
                    const std::string& out_dir) {
  seed = effective_seed(seed);
  ArtifactSet artifacts(out_dir);
  try {
    auto topo = load_topology_csv(topology_path);
    const auto links = static_cast<Eigen::Index>(topo.links.size());
    // flow count is whatever the routing file references
    RoutingMatrix routing;
    {
      std::ifstream in(routing_path);
      if (!in) throw std::runtime_error("cannot open " + routing_path);
      std::string line;
      std::getline(in, line);
      Eigen::Index flows = 0;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string l, f;
        std::getline(ss, l, ',');
        std::getline(ss, f, ',');
        flows = std::max<Eigen::Index>(flows, std::stol(f));
      }
      routing.entries = load_routing_csv(routing_path, links, flows);
    }
    const Matrix lap = laplacian(routing.entries * routing.entries.transpose());
    auto data = training_set_from_csv(observations_path, lap, lw, lg);
    auto result = train_dictionary(data, atoms, seed, outer_iters);

    save_matrix_csv(artifacts.path("dictionary.csv"), result.dict.basis);
    save_matrix_csv(artifacts.path("codes.csv"), result.codes);
    json meta{{"atoms", atoms},
              {"lambda_w", lw},
              {"lambda_g", lg},
              {"seed", seed},
              {"outer_iters", outer_iters},
              {"converged", result.converged},
              {"objective_trace", result.objective_trace},
              {"warnings", result.warnings},
              {"routing", routing_path},
              {"topology", topology_path}};
    artifacts.write_json("dictionary.json", meta);
    artifacts.finalize(meta);
  } catch (...) {
    artifacts.cleanup();
    throw;
  }
}

void cmd_dict_impute(const std::string& dict_path,
                     const std::string& observations_path,
                     const std::string& truth_path,
                     const std::string& out_dir) {
  ArtifactSet artifacts(out_dir);
  try {
    Dictionary dict;
    dict.basis =
        load_matrix_csv(dict_path, MissingPolicy::Error).values;
    // sidecar metadata next to the dictionary CSV
    json meta;
    {
      fs::path sidecar = fs::path(dict_path);
      sidecar.replace_extension(".json");
      std::ifstream in(sidecar.string());
      if (!in)
        throw std::runtime_error("dict impute: missing sidecar " +
                                 sidecar.string());
      in >> meta;
    }
    const double lw = meta.at("lambda_w").get<double>();
    const double lg = meta.at("lambda_g").get<double>();
    Matrix lap = Matrix::Zero(dict.basis.rows(), dict.basis.rows());
    if (meta.contains("routing")) {
      // rebuild the Laplacian exactly as training did
      const Matrix r = load_routing_csv(
          meta.at("routing").get<std::string>(), dict.basis.rows(),
          [&] {
            std::ifstream in(meta.at("routing").get<std::string>());
            std::string line;
            std::getline(in, line);
            Eigen::Index flows = 0;
            while (std::getline(in, line)) {
              if (line.empty()) continue;
              std::stringstream ss(line);
              std::string l, f;
              std::getline(ss, l, ',');
              std::getline(ss, f, ',');
              flows = std::max<Eigen::Index>(flows, std::stol(f));
            }
            return flows;
          }());
      lap = laplacian(r * r.transpose());
    }

    auto obs = load_matrix_csv(observations_path, MissingPolicy::Mask);
    require(obs.values.rows() == dict.basis.rows(),
            "dict impute: observation rows do not match dictionary rows");
    Matrix imputed(dict.basis.rows(), obs.values.cols());
    for (Eigen::Index t = 0; t < obs.values.cols(); ++t) {
      const auto rows = obs.mask.observed_rows(static_cast<int>(t));
      Vector y(static_cast<Eigen::Index>(rows.size()));
      for (std::size_t i = 0; i < rows.size(); ++i)
        y(static_cast<Eigen::Index>(i)) = obs.values(rows[i], t);
      imputed.col(t) =
          impute_link_counts(y, rows, dict, lap, lw, lg, 1e-7, 5000).x_hat;
    }
    save_matrix_csv(artifacts.path("imputed.csv"), imputed);

    json metrics{{"slots", obs.values.cols()}};
    if (!truth_path.empty()) {
      const Matrix truth =
          load_matrix_csv(truth_path, MissingPolicy::Error).values;
      metrics["nre"] = nre(imputed, truth);
    } else {
      // fall back to the observed entries as reference
      double err = 0.0;
      long count = 0;
      for (Eigen::Index t = 0; t < obs.values.cols(); ++t)
        for (Eigen::Index l = 0; l < obs.values.rows(); ++l)
          if (obs.mask.keep(l, t)) {
            const double d = obs.values(l, t) - imputed(l, t);
            err += d * d;
            ++count;
          }
      metrics["nre_observed"] = err / std::max<long>(1, count);
    }
    artifacts.write_json("nre.json", metrics);
    artifacts.finalize(json{{"dict", dict_path}});
  } catch (...) {
    artifacts.cleanup();
    throw;
  }
}

void cmd_kkf_simulate(int nodes, double degree, int paths, double alpha,
                      double eta, double sigma2, int horizon,
                      std::uint64_t seed, const std::string& out_dir) {
  seed = effective_seed(seed);
  ArtifactSet artifacts(out_dir);
  try {
    auto topo = build_topology(nodes, degree, seed);
    Rng rng(seed + 1);
    std::uniform_int_distribution<int> node(0, nodes - 1);
    std::set<std::pair<int, int>> used;
    std::vector<std::pair<int, int>> pairs;
    while (static_cast<int>(pairs.size()) < paths) {
      const int s = node(rng), d = node(rng);
      if (s == d || !used.insert({s, d}).second) continue;
      pairs.emplace_back(s, d);
    }
    const Matrix u =
        shortest_path_routing(topo, pairs).entries.transpose();
    auto model = KkfModel::make(
        u, alpha, eta * Matrix::Identity(paths, paths), sigma2);
    auto traj = simulate_delays(model, Vector::Ones(paths), horizon, seed + 2);

    save_matrix_csv(artifacts.path("path_link.csv"), u);
    save_matrix_csv(artifacts.path("c_eta.csv"), model.c_eta);
    save_matrix_csv(artifacts.path("delays.csv"), traj.d);
    save_matrix_csv(artifacts.path("trend.csv"), traj.chi);
    json meta{{"paths", paths},         {"links", u.cols()},
              {"alpha", alpha},         {"sigma2", sigma2},
              {"horizon", horizon},     {"seed", seed},
              {"path_link", "path_link.csv"}, {"c_eta", "c_eta.csv"}};
    artifacts.write_json("model.json", meta);
    artifacts.finalize(meta);
  } catch (...) {
    artifacts.cleanup();
    throw;
  }
}

KkfModel load_kkf_model(const std::string& model_path) {
  json meta;
  std::ifstream in(model_path);
  if (!in) throw std::runtime_error("cannot open " + model_path);
  in >> meta;
  const fs::path base = fs::path(model_path).parent_path();
  const Matrix u = load_matrix_csv(
                       (base / meta.at("path_link").get<std::string>()).string(),
                       MissingPolicy::Error)
                       .values;
  const Matrix c_eta =
      load_matrix_csv((base / meta.at("c_eta").get<std::string>()).string(),
                      MissingPolicy::Error)
          .values;
  return KkfModel::make(u, meta.at("alpha").get<double>(), c_eta,
                        meta.at("sigma2").get<double>());
}

void cmd_kkf_track(const std::string& model_path, const std::string& delays_path,
                   int budget, const std::string& out_dir) {
  ArtifactSet artifacts(out_dir);
  try {
    auto model = load_kkf_model(model_path);
    const Matrix delays =
        load_matrix_csv(delays_path, MissingPolicy::Error).values;
    const auto P = model.paths();
    require(delays.rows() == P, "kkf track: delay rows do not match the model");
    require(budget >= 1 && budget <= P, "kkf track: bad budget");
    const auto T = delays.cols();

    KkfState state;
    state.chi_hat = delays.col(0);
    state.m = Matrix::Identity(P, P);
    state.m_prev = state.m;

    Matrix predictions(P, T);
    double nmspe_sum = 0.0;
    long nmspe_slots = 0;
    for (Eigen::Index t = 0; t < T; ++t) {
      auto sel = greedy_select_paths(model, state.m, budget);
      const Vector d_obs = sel.sel * delays.col(t);
      state = kalman_update(state, model, sel, d_obs);
      Vector col(P);
      for (Eigen::Index i = 0; i < sel.sel.rows(); ++i)
        col(static_cast<Eigen::Index>(sel.chosen[i])) = d_obs(i);
      if (sel.comp.rows() > 0) {
        auto krig = krig_predict(state, model, sel, d_obs);
        const Vector truth_unobs = sel.comp * delays.col(t);
        for (Eigen::Index i = 0; i < sel.comp.rows(); ++i) {
          Eigen::Index path = 0;
          sel.comp.row(i).maxCoeff(&path);
          col(path) = krig.d_hat(i);
        }
        const double denom = truth_unobs.squaredNorm();
        if (denom > 0.0) {
          nmspe_sum += (truth_unobs - krig.d_hat).squaredNorm() / denom;
          ++nmspe_slots;
        }
      }
      predictions.col(t) = col;
    }
    save_matrix_csv(artifacts.path("predictions.csv"), predictions);
    save_matrix_csv(artifacts.path("delay_heatmap.csv"), predictions);
    json metrics{{"nmspe", nmspe_slots ? nmspe_sum / nmspe_slots : 0.0},
                 {"budget", budget},
                 {"slots", T}};
    artifacts.write_json("nmspe.json", metrics);
    artifacts.finalize(metrics);
  } catch (...) {
    artifacts.cleanup();
    throw;
  }
}

void cmd_kkf_select(const std::string& model_path, int budget,
                    const std::string& out_dir) {
  ArtifactSet artifacts(out_dir);
  try {
    auto model = load_kkf_model(model_path);
    const auto P = static_cast<int>(model.paths());
    require(budget >= 1 && budget <= P, "kkf select: bad budget");
    const Matrix m0 = Matrix::Identity(P, P);
    std::vector<std::pair<double, double>> series;
    std::ofstream chosen_out(artifacts.path("chosen_paths.csv"));
    chosen_out << "budget,path\n";
    for (int s = 1; s <= budget; ++s) {
      auto sel = greedy_select_paths(model, m0, s);
      for (int p : sel.chosen) chosen_out << s << ',' << p + 1 << '\n';
      series.emplace_back(s, log_det_pred_cov(model, m0, sel.chosen));
    }
    chosen_out.close();
    emit_series_csv(artifacts.path("logdet_vs_budget.csv"), "budget", "logdet",
                    series);
    artifacts.finalize(json{{"budget", budget}});
  } catch (...) {
    artifacts.cleanup();
    throw;
  }
}

void cmd_detect_batch(const std::string& scenario_dir, double lstar,
                      double lone, const std::string& out_dir) {
  ArtifactSet artifacts(out_dir);
  try {
    auto sc = load_scenario(scenario_dir);
    BatchProblem p;
    p.y = sc.y;
    p.mask = sc.mask;
    p.routing = sc.routing;
    auto defaults = default_lambdas(p.y, p.mask, p.routing);
    p.lambda_star = lstar > 0.0 ? lstar : defaults.lambda_star;
    p.lambda_one = lone > 0.0 ? lone : defaults.lambda_one;
    auto map = solve_batch(p);

    save_matrix_csv(artifacts.path("a_hat.csv"), map.a_hat);
    save_matrix_csv(artifacts.path("x_hat.csv"), map.x_hat);
    std::vector<std::pair<double, double>> trace;
    for (std::size_t k = 0; k < map.objective_trace.size(); ++k)
      trace.emplace_back(static_cast<double>(k), map.objective_trace[k]);
    emit_series_csv(artifacts.path("objective_trace.csv"), "iteration",
                    "objective", trace);

    json summary{{"objective", map.objective},
                 {"iterations", map.report.iterations},
                 {"converged", map.report.converged},
                 {"lambda_star", p.lambda_star},
                 {"lambda_one", p.lambda_one},
                 {"rank_x", matrix_rank_at(map.x_hat, 1e-6)},
                 {"support", support_size(map.a_hat)}};
    if (sc.anomalies.size() > 0 && sc.anomalies.cwiseAbs().maxCoeff() > 0.0) {
      auto roc = roc_curve(map.a_hat, sc.anomalies);
      write_roc_csv(artifacts.path("roc.csv"), roc);
      summary["auc"] = auc(roc);
    }
    artifacts.write_json("summary.json", summary);
    artifacts.finalize(summary);
  } catch (...) {
    artifacts.cleanup();
    throw;
  }
}

void cmd_detect_distributed(const std::string& scenario_dir, int nodes,
                            const std::string& graph, int rho, int rounds,
                            double lstar, double lone,
                            const std::string& out_dir, std::uint64_t seed) {
  seed = effective_seed(seed);
  ArtifactSet artifacts(out_dir);
  try {
    auto sc = load_scenario(scenario_dir);
    BatchProblem p;
    p.y = sc.y;
    p.mask = sc.mask;
    p.routing = sc.routing;
    auto defaults = default_lambdas(p.y, p.mask, p.routing);
    p.lambda_star = lstar > 0.0 ? lstar : defaults.lambda_star;
    p.lambda_one = lone > 0.0 ? lone : defaults.lambda_one;

    NodePartition partition;
    if (graph == "ring")
      partition = NodePartition::even_split_ring(p.y.rows(), nodes);
    else if (graph == "star")
      partition = NodePartition::even_split_star(p.y.rows(), nodes);
    else
      throw std::runtime_error("detect distributed: unknown graph '" + graph +
                               "'");

    AdmmConfig cfg;
    cfg.rho = rho;
    cfg.rounds = rounds;
    cfg.lambda_star = p.lambda_star;
    cfg.lambda_one = p.lambda_one;
    cfg.seed = seed;
    AdmmSimulation sim(p, partition, cfg);
    auto trace = run_admm(sim, cfg);

    std::ofstream trace_out(artifacts.path("admm_trace.csv"));
    trace_out.precision(17);
    trace_out << "round,consensus,objective\n";
    for (std::size_t k = 0; k < trace.consensus.size(); ++k)
      trace_out << k + 1 << ',' << trace.consensus[k] << ','
                << trace.objective[k] << '\n';
    trace_out.close();

    auto point = sim.consensus_point();
    save_matrix_csv(artifacts.path("a_consensus.csv"), point.a);
    json summary{{"nodes", nodes},
                 {"graph", graph},
                 {"rounds_run", trace.rounds_run},
                 {"converged", trace.converged},
                 {"consensus_residual",
                  trace.consensus.empty() ? 0.0 : trace.consensus.back()},
                 {"objective", point.objective},
                 {"message_bytes", sim.message_bytes()}};
    artifacts.write_json("summary.json", summary);
    artifacts.finalize(summary);
  } catch (...) {
    artifacts.cleanup();
    throw;
  }
}

void cmd_detect_online(const std::string& scenario_dir,
                       const std::string& routing_seq_path, double beta,
                       int rho, double lstar, double lone,
                       const std::string& out_dir) {
  ArtifactSet artifacts(out_dir);
  try {
    auto sc = load_scenario(scenario_dir);
    auto defaults = default_lambdas(sc.y, sc.mask, sc.routing);
    OnlineConfig cfg;
    cfg.rho = rho;
    cfg.beta = beta;
    cfg.lambda_star = lstar > 0.0 ? lstar : defaults.lambda_star;
    cfg.lambda_one = lone > 0.0 ? lone : defaults.lambda_one;

    std::vector<Matrix> routing_seq{sc.routing};
    if (!routing_seq_path.empty()) {
      json seq_meta;
      std::ifstream in(routing_seq_path);
      if (!in) throw std::runtime_error("cannot open " + routing_seq_path);
      in >> seq_meta;
      routing_seq.clear();
      const fs::path base = fs::path(routing_seq_path).parent_path();
      for (const auto& entry : seq_meta.at("routing_files"))
        routing_seq.push_back(
            load_routing_csv((base / entry.get<std::string>()).string(),
                             sc.y.rows(), sc.routing.cols()));
    }

    const int warmup = std::max(rho, 5);
    require(sc.y.cols() > warmup, "detect online: stream shorter than warmup");
    auto state = OnlineState::init_from_svd(
        sc.mask.apply(sc.y).leftCols(warmup), cfg);
    const Matrix* truth =
        sc.anomalies.size() > 0 ? &sc.anomalies : nullptr;
    auto res = run_stream(sc.y, sc.mask, routing_seq, state, truth);

    std::ofstream records(artifacts.path("records.jsonl"));
    for (const auto& r : res.records) {
      json line{{"t", r.t},
                {"support", r.support_size},
                {"micros", r.micros},
                {"routing_rows_changed", r.routing_rows_changed},
                {"routing_churn_warning", r.routing_churn_warning}};
      if (r.precision >= 0.0) {
        line["precision"] = r.precision;
        line["recall"] = r.recall;
      }
      records << line.dump() << '\n';
    }
    records.close();
    save_matrix_csv(artifacts.path("x_hat.csv"), res.x_hat);
    save_matrix_csv(artifacts.path("a_hat.csv"), res.a_hat);
    json summary{{"beta", beta},
                 {"rho", rho},
                 {"lambda_star", cfg.lambda_star},
                 {"lambda_one", cfg.lambda_one},
                 {"slots", res.records.size()}};
    artifacts.write_json("summary.json", summary);
    artifacts.finalize(summary);
  } catch (...) {
    artifacts.cleanup();
    throw;
  }
}

// NRE-vs-coverage sweep for the dictionary pipeline (figure intent nre_vs_S).
void cmd_sweep(const std::string& config_path, const std::string& out_dir) {
  ArtifactSet artifacts(out_dir);
  try {
    json raw;
    {
      std::ifstream in(config_path);
      if (!in) throw std::runtime_error("cannot open " + config_path);
      in >> raw;
    }
    ConfigReader cfg(raw);
    ScenarioParams params;
    params.n_nodes = cfg.get<int>("nodes", 20);
    params.target_degree = cfg.get<double>("target_degree", 5.0);
    params.horizon = cfg.get<int>("horizon", 200);
    params.rank = cfg.get<int>("rank", 5);
    params.period = cfg.get<int>("period", 50);
    params.anomaly_density = 0.0;
    params.noise_std = cfg.get<double>("noise_std", 0.02);
    params.seed = effective_seed(cfg.get<std::uint64_t>("seed", 1));
    const int atoms = cfg.get<int>("atoms", 0);
    const double lw = cfg.get<double>("lambda_w", 0.1);
    const double lg = cfg.get<double>("lambda_g", 1e-5);
    const int train_slots = cfg.get<int>("train_slots", params.horizon / 2);
    const int outer_iters = cfg.get<int>("outer_iters", 10);
    auto s_values = cfg.get<std::vector<int>>("s_values", {});
    cfg.finish();

    params.anomaly_density = 0.0;
    auto sc = make_scenario(params);
    const auto L = sc.link_traffic.rows();
    require(!s_values.empty(), "sweep: s_values must be non-empty");
    for (int s : s_values)
      require(s >= 1 && s <= L, "sweep: s_values entry out of range");

    auto structure = link_graph_structure(sc.routing);
    TrainingSet data;
    data.laplacian = structure.laplacian;
    data.lambda_w = lw;
    data.lambda_g = lg;
    Rng rng(params.seed + 11);
    std::vector<int> idx(L);
    std::iota(idx.begin(), idx.end(), 0);
    for (int t = 0; t < train_slots; ++t) {
      std::shuffle(idx.begin(), idx.end(), rng);
      std::vector<int> obs(idx.begin(),
                           idx.begin() + std::max<Eigen::Index>(1, 3 * L / 4));
      std::sort(obs.begin(), obs.end());
      Vector y(obs.size());
      for (std::size_t i = 0; i < obs.size(); ++i)
        y(static_cast<Eigen::Index>(i)) = sc.link_traffic(obs[i], t);
      data.slots.push_back({y, obs});
    }
    const int q = atoms > 0 ? atoms : static_cast<int>(L);
    auto trained = train_dictionary(data, q, params.seed + 12, outer_iters);

    std::vector<std::pair<double, double>> series;
    for (int s : s_values) {
      double err = 0.0;
      Rng mask_rng(params.seed + 13);
      long count = 0;
      for (int t = train_slots; t < params.horizon; ++t) {
        std::shuffle(idx.begin(), idx.end(), mask_rng);
        std::vector<int> obs(idx.begin(), idx.begin() + s);
        std::sort(obs.begin(), obs.end());
        Vector y(obs.size());
        for (std::size_t i = 0; i < obs.size(); ++i)
          y(static_cast<Eigen::Index>(i)) = sc.link_traffic(obs[i], t);
        auto imp = impute_link_counts(y, obs, trained.dict, data.laplacian, lw,
                                      lg, 1e-6, 3000);
        err += (imp.x_hat - sc.link_traffic.col(t)).squaredNorm();
        count += L;
      }
      series.emplace_back(s, err / count);
    }
    emit_series_csv(artifacts.path("nre_vs_S.csv"), "S", "nre", series);
    artifacts.finalize(raw);
  } catch (...) {
    artifacts.cleanup();
    throw;
  }
}

// Golden fixtures from the independent desk oracles.
void cmd_oracle(const std::string& out_dir, std::uint64_t seed) {
  seed = effective_seed(seed);
  ArtifactSet artifacts(out_dir);
  try {
    // lasso grid fixture: orthogonal design closed form
    {
      CompositeProblem p;
      p.y = Vector(2);
      p.y << 1.0, 0.2;
      p.d = Matrix::Identity(2, 2);
      p.graph_quad = Matrix::Zero(2, 2);
      p.lambda_w = 0.5;
      auto [w, rep] = lasso_graph(p, Vector::Zero(2), 1e-12);
      save_matrix_csv(artifacts.path("lasso_orthogonal.csv"), w);
    }
    // svt fixture on a fixed diagonal matrix
    {
      Matrix m = Matrix::Zero(3, 3);
      m(0, 0) = 5.0;
      m(1, 1) = 2.0;
      m(2, 2) = 0.5;
      save_matrix_csv(artifacts.path("svt_diagonal.csv"), svt(m, 1.0));
    }
    // kalman scalar fixture
    {
      auto model = KkfModel::make(Matrix::Ones(1, 1), 0.0,
                                  0.5 * Matrix::Ones(1, 1), 0.5);
      KkfState state;
      state.chi_hat = Vector::Zero(1);
      state.m = Matrix::Zero(1, 1);
      state.m_prev = Matrix::Zero(1, 1);
      Vector d(1);
      d << 2.0;
      auto next = kalman_update(state, model,
                                PathSelection::from_indices({0}, 1), d);
      Matrix fixture(1, 2);
      fixture << next.chi_hat(0), next.m(0, 0);
      save_matrix_csv(artifacts.path("kalman_scalar.csv"), fixture);
    }
    artifacts.finalize(json{{"seed", seed}});
  } catch (...) {
    artifacts.cleanup();
    throw;
  }
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_cap();
  CLI::App app{"netcarto: dynamic network cartography toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  // generate
  ScenarioParams gen;
  std::string gen_out;
  auto* generate = app.add_subcommand("generate", "Generate a synthetic scenario");
  generate->add_option("--nodes", gen.n_nodes, "Node count");
  generate->add_option("--degree", gen.target_degree, "Target average degree");
  generate->add_option("--horizon", gen.horizon, "Number of time slots");
  generate->add_option("--rank", gen.rank, "Traffic rank");
  generate->add_option("--period", gen.period, "Seasonal period");
  generate->add_option("--density", gen.anomaly_density, "Anomaly density");
  generate->add_option("--magnitude", gen.anomaly_magnitude, "Anomaly magnitude");
  generate->add_option("--duration", gen.anomaly_duration, "Anomaly burst length");
  generate->add_option("--noise", gen.noise_std, "Observation noise std");
  generate->add_option("--keep", gen.keep_fraction, "Observed link fraction");
  generate->add_option("--seed", gen.seed, "Random seed");
  generate->add_option("--out", gen_out, "Output directory")->required();

  // dict train / impute
  auto* dict = app.add_subcommand("dict", "Dictionary-learning traffic cartography");
  dict->require_subcommand(1);
  std::string dt_topology, dt_routing, dt_obs, dt_out;
  int dt_atoms = 0, dt_outer = 30;
  double dt_lw = 0.1, dt_lg = 1e-5;
  std::uint64_t dt_seed = 1;
  auto* dict_train = dict->add_subcommand("train", "Train a dictionary");
  dict_train->add_option("--topology", dt_topology, "Topology CSV")->required();
  dict_train->add_option("--routing", dt_routing, "Routing CSV")->required();
  dict_train->add_option("--observations", dt_obs, "Observations CSV")->required();
  dict_train->add_option("--Q", dt_atoms, "Atom count")->required();
  dict_train->add_option("--lw,--ls", dt_lw, "Sparsity weight");
  dict_train->add_option("--lg", dt_lg, "Graph-regularization weight");
  dict_train->add_option("--seed", dt_seed, "Random seed");
  dict_train->add_option("--outer", dt_outer, "Outer BCD sweeps");
  dict_train->add_option("--out", dt_out, "Output directory")->required();

  std::string di_dict, di_obs, di_truth, di_out;
  auto* dict_impute = dict->add_subcommand("impute", "Impute missing link counts");
  dict_impute->add_option("--dict", di_dict, "Dictionary CSV (JSON sidecar required)")
      ->required();
  dict_impute->add_option("--observations", di_obs, "Observations CSV")->required();
  dict_impute->add_option("--truth", di_truth, "Optional ground-truth CSV");
  dict_impute->add_option("--out", di_out, "Output directory")->required();

  // kkf
  auto* kkf = app.add_subcommand("kkf", "Kriged Kalman delay cartography");
  kkf->require_subcommand(1);
  int ks_nodes = 12, ks_paths = 8, ks_horizon = 200;
  double ks_degree = 4.0, ks_alpha = 0.3, ks_eta = 0.1, ks_sigma2 = 0.05;
  std::uint64_t ks_seed = 1;
  std::string ks_out;
  auto* kkf_sim = kkf->add_subcommand("simulate", "Simulate a delay trajectory");
  kkf_sim->add_option("--nodes", ks_nodes, "Node count");
  kkf_sim->add_option("--degree", ks_degree, "Target average degree");
  kkf_sim->add_option("--paths", ks_paths, "Measurement path count");
  kkf_sim->add_option("--alpha", ks_alpha, "Path-overlap covariance scale");
  kkf_sim->add_option("--eta", ks_eta, "Trend innovation variance");
  kkf_sim->add_option("--sigma2", ks_sigma2, "Measurement noise variance");
  kkf_sim->add_option("--horizon", ks_horizon, "Time slots");
  kkf_sim->add_option("--seed", ks_seed, "Random seed");
  kkf_sim->add_option("--out", ks_out, "Output directory")->required();

  std::string kt_model, kt_delays, kt_out;
  int kt_budget = 1;
  auto* kkf_track = kkf->add_subcommand("track", "Track delays with path selection");
  kkf_track->add_option("--model", kt_model, "Model JSON")->required();
  kkf_track->add_option("--delays", kt_delays, "True delays CSV")->required();
  kkf_track->add_option("--budget", kt_budget, "Paths measured per slot")->required();
  kkf_track->add_option("--out", kt_out, "Output directory")->required();

  std::string kl_model, kl_out;
  int kl_budget = 1;
  auto* kkf_select = kkf->add_subcommand("select", "Greedy D-optimal path selection");
  kkf_select->add_option("--model", kl_model, "Model JSON")->required();
  kkf_select->add_option("--budget", kl_budget, "Maximum budget")->required();
  kkf_select->add_option("--out", kl_out, "Output directory")->required();

  // detect
  auto* detect = app.add_subcommand("detect", "Anomaly detection");
  detect->require_subcommand(1);
  std::string db_scenario, db_out;
  double db_lstar = 0.0, db_lone = 0.0;
  auto* detect_batch = detect->add_subcommand("batch", "Centralized batch detection");
  detect_batch->add_option("--scenario", db_scenario, "Scenario directory")->required();
  detect_batch->add_option("--lstar", db_lstar, "Nuclear-norm weight (0 = auto)");
  detect_batch->add_option("--lone", db_lone, "L1 weight (0 = auto)");
  detect_batch->add_option("--out", db_out, "Output directory")->required();

  std::string dd_scenario, dd_graph = "ring", dd_out;
  int dd_nodes = 4, dd_rho = 5, dd_rounds = 500;
  double dd_lstar = 0.0, dd_lone = 0.0;
  std::uint64_t dd_seed = 1;
  auto* detect_dist =
      detect->add_subcommand("distributed", "Consensus-ADMM detection");
  detect_dist->add_option("--scenario", dd_scenario, "Scenario directory")->required();
  detect_dist->add_option("--nodes", dd_nodes, "Node count");
  detect_dist->add_option("--graph", dd_graph, "Topology: ring|star");
  detect_dist->add_option("--rho", dd_rho, "Factorization rank");
  detect_dist->add_option("--rounds", dd_rounds, "Maximum rounds");
  detect_dist->add_option("--lstar", dd_lstar, "Nuclear-norm weight (0 = auto)");
  detect_dist->add_option("--lone", dd_lone, "L1 weight (0 = auto)");
  detect_dist->add_option("--seed", dd_seed, "Random seed");
  detect_dist->add_option("--out", dd_out, "Output directory")->required();

  std::string do_scenario, do_routing_seq, do_out;
  double do_beta = 0.99, do_lstar = 0.0, do_lone = 0.0;
  int do_rho = 5;
  auto* detect_online = detect->add_subcommand("online", "Streaming detection");
  detect_online->add_option("--scenario", do_scenario, "Scenario directory")->required();
  detect_online->add_option("--routing-seq", do_routing_seq,
                            "JSON manifest of per-slot routing files");
  detect_online->add_option("--beta", do_beta, "Forgetting factor");
  detect_online->add_option("--rho", do_rho, "Subspace rank");
  detect_online->add_option("--lstar", do_lstar, "Subspace weight (0 = auto)");
  detect_online->add_option("--lone", do_lone, "L1 weight (0 = auto)");
  detect_online->add_option("--out", do_out, "Output directory")->required();

  // sweep + oracle
  std::string sw_config, sw_out;
  auto* sweep = app.add_subcommand("sweep", "Parameter sweeps with plot-ready output");
  sweep->add_option("--config", sw_config, "Sweep config JSON")->required();
  sweep->add_option("--out", sw_out, "Output directory")->required();

  std::string or_out;
  std::uint64_t or_seed = 1;
  auto* oracle = app.add_subcommand("oracle", "Write golden oracle fixtures");
  oracle->add_option("--seed", or_seed, "Random seed");
  oracle->add_option("--out", or_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) cmd_generate(gen_out, gen);
    if (*dict_train)
      cmd_dict_train(dt_topology, dt_routing, dt_obs, dt_atoms, dt_lw, dt_lg,
                     dt_seed, dt_outer, dt_out);
    if (*dict_impute) cmd_dict_impute(di_dict, di_obs, di_truth, di_out);
    if (*kkf_sim)
      cmd_kkf_simulate(ks_nodes, ks_degree, ks_paths, ks_alpha, ks_eta,
                       ks_sigma2, ks_horizon, ks_seed, ks_out);
    if (*kkf_track) cmd_kkf_track(kt_model, kt_delays, kt_budget, kt_out);
    if (*kkf_select) cmd_kkf_select(kl_model, kl_budget, kl_out);
    if (*detect_batch) cmd_detect_batch(db_scenario, db_lstar, db_lone, db_out);
    if (*detect_dist)
      cmd_detect_distributed(dd_scenario, dd_nodes, dd_graph, dd_rho, dd_rounds,
                             dd_lstar, dd_lone, dd_out, dd_seed);
    if (*detect_online)
      cmd_detect_online(do_scenario, do_routing_seq, do_beta, do_rho, do_lstar,
                        do_lone, do_out);
    if (*sweep) cmd_sweep(sw_config, sw_out);
    if (*oracle) cmd_oracle(or_out, or_seed);
  } catch (const std::exception& e) {
    std::cerr << "netcarto: error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
