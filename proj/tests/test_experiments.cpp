#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cmc/error.hpp"
#include "cmc/experiments.hpp"

using namespace cmc;

namespace {

ExperimentConfig small(const std::string& id, const std::string& overrides, std::uint64_t seed = 1) {
  ExperimentConfig c;
  c.id = id;
  c.seed = seed;
  c.overrides_json = overrides;
  c.threads = 2;
  return c;
}

}  // namespace

TEST_CASE("fnv1a64 reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("configuration errors") {
  CHECK_THROWS_AS(run_experiment(small("exp9", "{}")), ConfigError);
  CHECK_THROWS_AS(run_experiment(small("exp1", "{\"nonsense\": 1}")), ConfigError);
  CHECK_THROWS_AS(run_experiment(small("exp1", "{\"runs\": 0}")), ConfigError);
  CHECK_THROWS_AS(run_experiment(small("exp1", "{\"runs\": \"ten\"}")), ConfigError);
  CHECK_THROWS_AS(run_experiment(small("exp1", "[1, 2]")), ConfigError);
  CHECK_THROWS_AS(run_experiment(small("exp1", "{not json")), ConfigError);
  CHECK_THROWS_AS(run_experiment(small("exp4", "{\"partitions\": [\"P7\"]}")), ConfigError);
  CHECK_THROWS_AS(parse_scale("huge"), ConfigError);
}

TEST_CASE("experiment output is identical across reruns and thread counts") {
  const auto a = run_experiment(small("exp1", "{\"runs\": 6, \"N\": 500, \"M\": [4, 8]}"));
  auto cfg = small("exp1", "{\"runs\": 6, \"N\": 500, \"M\": [4, 8]}");
  cfg.threads = 1;
  const auto b = run_experiment(cfg);
  REQUIRE(a.tables.size() == b.tables.size());
  CHECK(table_to_csv(a, a.tables[0]) == table_to_csv(b, b.tables[0]));
  const auto c = run_experiment(small("exp1", "{\"runs\": 6, \"N\": 500, \"M\": [4, 8]}", 2));
  CHECK(table_to_csv(a, a.tables[0]) != table_to_csv(c, c.tables[0]));
}

TEST_CASE("csv header carries version, seed and config hash") {
  const auto out = run_experiment(small("exp4", "{\"runs\": 2, \"N\": [50], \"T\": 5, \"M_over_N\": [0.2]}", 77));
  const std::string csv = table_to_csv(out, out.tables[0]);
  std::istringstream lines(csv);
  std::string header, columns;
  std::getline(lines, header);
  std::getline(lines, columns);
  CHECK(header.find(std::string("cmc ") + kVersion) != std::string::npos);
  CHECK(header.find("seed=77") != std::string::npos);
  CHECK(header.find("config_hash=" + out.config_hash) != std::string::npos);
  CHECK(columns == "N,M_over_N,M,filter,partition,mse,se,eval_fraction");
  const auto other = run_experiment(small("exp4", "{\"runs\": 3, \"N\": [50], \"T\": 5, \"M_over_N\": [0.2]}", 77));
  CHECK(other.config_hash != out.config_hash);
}

TEST_CASE("table lookup") {
  const auto out = run_experiment(small("exp4", "{\"runs\": 2, \"N\": [50], \"T\": 5, \"M_over_N\": [0.2]}"));
  const Table& t = out.tables[0];
  CHECK(t.value({{"filter", "C-PF"}, {"partition", "equal_count"}}, "eval_fraction") == doctest::Approx(0.2));
  CHECK(t.select({{"filter", "BPF"}}).size() == 1);
  CHECK_THROWS(t.column("missing"));
}

TEST_CASE("every experiment runs at a tiny scale") {
  CHECK(run_experiment(small("exp2", "{\"runs\": 1, \"L\": 2, \"M_l_sweep\": [5], \"N_l\": 50, \"M_l_fixed_rate_sweep\": [1], "
                                     "\"eta\": 20, \"N_l_sweep\": [20], \"L_sweep\": [2], \"pmc_iterations\": 2}"))
            .tables[0]
            .rows.size() == 8);
  CHECK(run_experiment(small("exp3", "{\"runs\": 1, \"T\": 200, \"true_planets\": [1], \"max_planets\": 1, \"init_draws\": 20}"))
            .tables.size() == 2);
  CHECK(run_experiment(small("exp5", "{\"runs\": 2, \"N\": 100, \"T\": 3, \"M\": [5]}")).tables[0].rows.size() == 2);
  CHECK(run_experiment(small("exp6", "{\"runs\": 1, \"N\": 80, \"T\": 2, \"L\": [4], \"K\": [8]}")).tables[0].rows.size() == 2);
}

TEST_CASE("write_output creates one csv per table") {
  const auto dir = std::filesystem::temp_directory_path() / "cmc_write_output_test";
  std::filesystem::remove_all(dir);
  const auto out = run_experiment(small("exp4", "{\"runs\": 1, \"N\": [20], \"T\": 3, \"M_over_N\": [0.5]}"));
  const auto paths = write_output(out, dir.string());
  REQUIRE(paths.size() == 1);
  std::ifstream f(paths[0]);
  std::stringstream text;
  text << f.rdbuf();
  CHECK(text.str() == table_to_csv(out, out.tables[0]));
  std::filesystem::remove_all(dir);
}
