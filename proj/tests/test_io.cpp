#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "netcarto/io.hpp"
#include "support/oracles.hpp"

using namespace netcarto;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("netcarto_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
  static inline int counter = 0;
};

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

}  // namespace

TEST_CASE("load_matrix_csv parses a plain matrix") {
  TempDir dir;
  write_file(dir.file("m.csv"), "1,2\n3,4\n");
  auto m = load_matrix_csv(dir.file("m.csv"), MissingPolicy::Error);
  REQUIRE(m.values.rows() == 2);
  REQUIRE(m.values(0, 0) == 1.0);
  REQUIRE(m.values(0, 1) == 2.0);
  REQUIRE(m.values(1, 0) == 3.0);
  REQUIRE(m.values(1, 1) == 4.0);
  REQUIRE(m.mask.keep.all());
}

TEST_CASE("missing cells: mask policy marks them, error policy throws") {
  TempDir dir;
  write_file(dir.file("m.csv"), "1,,3\n4,5,6\n");
  auto m = load_matrix_csv(dir.file("m.csv"), MissingPolicy::Mask);
  REQUIRE_FALSE(m.mask.keep(0, 1));
  REQUIRE(m.mask.keep(0, 0));
  REQUIRE(m.values(0, 1) == 0.0);
  REQUIRE_THROWS_AS(load_matrix_csv(dir.file("m.csv"), MissingPolicy::Error),
                    std::runtime_error);
}

TEST_CASE("malformed CSV inputs are rejected with clear errors") {
  TempDir dir;
  write_file(dir.file("ragged.csv"), "1,2\n3\n");
  REQUIRE_THROWS_WITH(
      load_matrix_csv(dir.file("ragged.csv"), MissingPolicy::Mask),
      Catch::Matchers::ContainsSubstring("ragged"));
  write_file(dir.file("bad.csv"), "1,two\n3,4\n");
  REQUIRE_THROWS_WITH(load_matrix_csv(dir.file("bad.csv"), MissingPolicy::Mask),
                      Catch::Matchers::ContainsSubstring("non-numeric"));
  REQUIRE_THROWS_AS(load_matrix_csv(dir.file("nope.csv"), MissingPolicy::Mask),
                    std::runtime_error);
}

TEST_CASE("matrix CSV round-trips bit-exactly, including masks") {
  TempDir dir;
  Rng rng(3);
  const Matrix m = gaussian_matrix(4, 6, rng);
  save_matrix_csv(dir.file("m.csv"), m);
  auto loaded = load_matrix_csv(dir.file("m.csv"), MissingPolicy::Error);
  REQUIRE(loaded.values == m);

  SamplingMask mask;
  mask.keep = MaskArray::Constant(4, 6, true);
  mask.keep(1, 2) = mask.keep(3, 5) = false;
  save_matrix_csv(dir.file("masked.csv"), m, &mask);
  auto partial = load_matrix_csv(dir.file("masked.csv"), MissingPolicy::Mask);
  REQUIRE((partial.mask.keep == mask.keep).all());
  for (Eigen::Index t = 0; t < 6; ++t)
    for (Eigen::Index l = 0; l < 4; ++l)
      if (mask.keep(l, t)) REQUIRE(partial.values(l, t) == m(l, t));
}

TEST_CASE("topology CSV round-trips with 1-indexed identifiers on disk") {
  TempDir dir;
  auto topo = build_topology(8, 3.0, 5);
  save_topology_csv(dir.file("topo.csv"), topo);
  auto loaded = load_topology_csv(dir.file("topo.csv"));
  REQUIRE(loaded.links == topo.links);
  REQUIRE(loaded.node_count == topo.node_count);
  // spot-check on-disk indexing
  std::ifstream in(dir.file("topo.csv"));
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  REQUIRE(header == "node_a,node_b");
  REQUIRE(first == std::to_string(topo.links[0].first + 1) + "," +
                       std::to_string(topo.links[0].second + 1));
}

TEST_CASE("routing CSV round-trips through sparse triplets") {
  TempDir dir;
  auto topo = build_topology(6, 3.0, 7);
  std::vector<std::pair<int, int>> flows = {{0, 3}, {2, 5}, {4, 1}};
  auto routing = shortest_path_routing(topo, flows);
  save_routing_csv(dir.file("r.csv"), routing);
  const Matrix loaded =
      load_routing_csv(dir.file("r.csv"), routing.entries.rows(), 3);
  REQUIRE(loaded == routing.entries);
}

TEST_CASE("hashing is stable and content-sensitive") {
  TempDir dir;
  write_file(dir.file("a"), "hello");
  write_file(dir.file("b"), "hello");
  write_file(dir.file("c"), "hellp");
  REQUIRE(hash_file(dir.file("a")) == hash_file(dir.file("b")));
  REQUIRE(hash_file(dir.file("a")) != hash_file(dir.file("c")));
  REQUIRE(fnv1a("") == 14695981039346656037ull);
}

TEST_CASE("metrics records serialize and reject non-finite values") {
  MetricsRecord rec{"nre", 0.25, "ratio", "traffic", 7, 99};
  auto j = to_json(rec);
  REQUIRE(j["name"] == "nre");
  REQUIRE(j["value"] == 0.25);
  REQUIRE(j["seed"] == 7);
  rec.value = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(to_json(rec), std::invalid_argument);
}

TEST_CASE("config reader enforces strict keys") {
  ConfigReader cfg(nlohmann::json{{"alpha", 0.5}, {"steps", 10}});
  REQUIRE(cfg.get<double>("alpha", 0.0) == 0.5);
  REQUIRE(cfg.get<int>("missing", 3) == 3);
  REQUIRE_THROWS_WITH(cfg.finish(),
                      Catch::Matchers::ContainsSubstring("steps"));
  REQUIRE(cfg.required<int>("steps") == 10);
  REQUIRE_NOTHROW(cfg.finish());
  REQUIRE_THROWS_WITH(cfg.required<int>("gamma"),
                      Catch::Matchers::ContainsSubstring("gamma"));
  REQUIRE_THROWS_AS(ConfigReader(nlohmann::json::array()),
                    std::invalid_argument);
}

TEST_CASE("emit_series_csv sorts by x and refuses empty series") {
  TempDir dir;
  emit_series_csv(dir.file("s.csv"), "budget", "err",
                  {{3.0, 0.1}, {1.0, 0.5}, {2.0, 0.3}});
  std::ifstream in(dir.file("s.csv"));
  std::string line;
  std::getline(in, line);
  REQUIRE(line == "budget,err");
  std::getline(in, line);
  REQUIRE(line.rfind("1,", 0) == 0);
  std::getline(in, line);
  REQUIRE(line.rfind("2,", 0) == 0);
  REQUIRE_THROWS_AS(emit_series_csv(dir.file("e.csv"), "x", "y", {}),
                    std::invalid_argument);
}
