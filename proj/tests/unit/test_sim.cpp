#include "helpers.hpp"
#include "lowrank/sim.hpp"

#include <doctest.h>

using namespace lowrank;

TEST_SUITE("sim") {

TEST_CASE("lrsim scaling") {
  const SimulationBundle s = lrsim(200, 500, 100, 0.5, 1);
  CHECK(s.sigma == doctest::Approx(1.0 / (0.5 * std::sqrt(200.0 * 500.0))));
  CHECK(s.sigma == doctest::Approx(6.3246e-3).epsilon(1e-4));

  const SimulationBundle t = lrsim(200, 500, 10, 4.0, 2);
  CHECK(t.sigma == doctest::Approx(7.906e-4).epsilon(1e-3));
  CHECK(t.mu.norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(count_above(compute_svd(t.mu).d, 1e-10) == 10);
  const double noise_ratio = (t.x - t.mu).squaredNorm() / (200.0 * 500.0 * t.sigma * t.sigma);
  CHECK(noise_ratio >= 0.9);
  CHECK(noise_ratio <= 1.1);

  const SimulationBundle again = lrsim(200, 500, 10, 4.0, 2);
  CHECK(again.x == t.x);
  CHECK(lrsim(200, 500, 10, 4.0, 3).x != t.x);
  CHECK_THROWS_AS(lrsim(10, 5, 6, 1.0, 1), InputError);
  CHECK_THROWS_AS(lrsim(10, 5, 2, 0.0, 1), InputError);
}

TEST_CASE("aggregate recomputes mean, sd and se") {
  ExperimentReport r;
  r.label_columns = {"arm"};
  r.value_columns = {"a", "b"};
  const std::vector<std::pair<std::string, std::vector<double>>> data = {
      {"x", {1, 10}}, {"y", {5, 0}}, {"x", {2, 20}}, {"x", {6, 60}}};
  int rep = 0;
  for (const auto& [label, values] : data) r.rows.push_back({{label}, ++rep, 0, values});
  const auto aggs = aggregate(r);
  REQUIRE(aggs.size() == 4);
  CHECK(aggs[0].labels == std::vector<std::string>{"x"});
  CHECK(aggs[0].column == "a");
  CHECK(aggs[0].count == 3);
  CHECK(std::abs(aggs[0].mean - 3.0) < 1e-12);
  CHECK(std::abs(aggs[0].sd - std::sqrt(7.0)) < 1e-12);
  CHECK(std::abs(aggs[0].se - std::sqrt(7.0 / 3.0)) < 1e-12);
  CHECK(aggs[1].column == "b");
  CHECK(std::abs(aggs[1].mean - 30.0) < 1e-12);
  CHECK(aggs[2].labels == std::vector<std::string>{"y"});
  CHECK(aggs[2].count == 1);
  r.aggregates = aggs;
  CHECK(&r.find({"y"}, "b") == &r.aggregates[3]);
  CHECK_THROWS(r.find({"z"}, "a"));
}

TEST_CASE("bias experiment structure and determinism") {
  BiasConfig c;
  c.n = 20;
  c.p = 10;
  c.k = 2;
  c.fd.tolerance = 1e-6;
  const ExperimentReport a = bias_experiment(c, 3, 7, 1);
  const ExperimentReport b = bias_experiment(c, 3, 7, 3);
  REQUIRE(a.rows.size() == 3);
  CHECK(a.value_columns.size() == 9);
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(a.rows[r].replicate == int(r) + 1);
    CHECK(a.rows[r].values == b.rows[r].values);
    const auto& v = a.rows[r].values;
    CHECK(v[2] == doctest::Approx(v[0] - v[1]));
    CHECK(v[5] == doctest::Approx(v[3] - v[4]));
    CHECK(v[8] == doctest::Approx(v[6] - v[7]));
    CHECK(v[3] <= v[6]);
  }
  CHECK(a.metadata.at("reps") == "3");
  CHECK(a.find({}, "bias_complete").count == 3);
}

TEST_CASE("comparison experiment structure and determinism") {
  MsepConfig c;
  c.n = 20;
  c.p = 8;
  c.gamma_seq = {1.0, 2.0};
  c.lambda_grid = 5;
  c.fd.cell_subset = 20;
  c.search.max_evaluations = 8;
  const ExperimentReport a = comparison_experiment({c}, 2, 3, 1);
  const ExperimentReport b = comparison_experiment({c}, 2, 3, 2);
  REQUIRE(a.rows.size() == 2 * 2 * 3);
  for (std::size_t r = 0; r < a.rows.size(); ++r) {
    CHECK(a.rows[r].labels == b.rows[r].labels);
    CHECK(a.rows[r].values == b.rows[r].values);
    CHECK(a.rows[r].values[0] > 0.0);
  }
  CHECK(a.rows[0].labels == std::vector<std::string>{"simulation1", "mcar", "atn"});
  CHECK(a.find({"simulation1", "mar", "mean"}, "msep").count == 2);

  MsepConfig bad = c;
  bad.mechanisms = {"mnar"};
  CHECK_THROWS_AS(comparison_experiment({bad}, 1, 1), InputError);
}

}  // TEST_SUITE
