#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "probsafe/config.hpp"

using namespace probsafe;

TEST_SUITE("config") {

TEST_CASE("defaults reproduce the example parameters") {
  const auto c = parse_config("");
  CHECK(c.controller.alpha == 1.0);
  CHECK(c.controller.epsilon == 0.1);
  CHECK(c.horizon.H == 10.0);
  CHECK(c.horizon.mode == HorizonMode::Fixed);
  CHECK(c.controller.eta == 1.0);
  CHECK(c.controller.gamma == 0.65);
  CHECK(c.controller.beta == 0.1);
  CHECK(c.dt == 0.1);
  CHECK(c.x0[0] == 3.0);
  CHECK(c.mc_samples == 10000);
  CHECK(c.n_trajectories == 50);
  CHECK(c.t_end == 10.0);
  CHECK(c.K(0, 0) == 2.5);
  CHECK(c.system.A(0, 0) == 2.0);
  CHECK(c.system.S(0, 0) == 2.0);
  CHECK(c.controller.kind == PolicyKind::WorstCaseEquality);
  CHECK(c.field.grid.T.max == 10.0);
}

TEST_CASE("keys override defaults") {
  const auto c = parse_config(R"(
name = "custom"
seed = 99
[system]
A = [[1.0]]
sigma = [[0.5]]
[horizon]
mode = "receding"
H = 4.0
[controller]
kind = "prsbc"
enforcement = "equality"
epsilon = 0.2
[simulation]
x0 = [2.0]
t_end = 4.0
n_trajectories = 7
[field]
source = "mc_smoothed"
ptype = "II"
[field.grid]
x_min = -2.0
x_max = 8.0
x_nodes = 51
T_nodes = 41
[field.smoothing]
sweeps = 5
)");
  CHECK(c.name == "custom");
  CHECK(c.seed == 99);
  CHECK(c.system.A(0, 0) == 1.0);
  CHECK(c.system.S(0, 0) == 0.5);
  CHECK(c.horizon.mode == HorizonMode::Receding);
  CHECK(c.controller.kind == PolicyKind::PrSBC);
  CHECK(c.controller.enforcement == Enforcement::Equality);
  CHECK(c.controller.epsilon == 0.2);
  CHECK(c.n_trajectories == 7);
  CHECK(c.field.source == Provenance::MCSmoothed);
  CHECK(c.field.ptype == ProbabilityType::II);
  CHECK(c.field.grid.x[0].nodes == 51);
  CHECK(c.field.grid.T.max == 4.0);  // follows H when not given
  CHECK(c.field.grid.T.nodes == 41);
  CHECK(c.field.smoothing.sweeps == 5);
}

TEST_CASE("bad configs are rejected with a ConfigError") {
  CHECK_THROWS_AS(parse_config("unknown_key = 1"), ConfigError);
  CHECK_THROWS_AS(parse_config("[controller]\nkind = \"qp\""), ConfigError);
  CHECK_THROWS_AS(parse_config("[controller]\nepsilon = 1.5"), ConfigError);
  CHECK_THROWS_AS(parse_config("[simulation]\ndt = \"fast\""), ConfigError);
  CHECK_THROWS_AS(parse_config("[simulation]\nx0 = [1.0, 2.0]"), ConfigError);
  CHECK_THROWS_AS(parse_config("[horizon]\nmode = \"receding\"\nH = 5.0"), ConfigError);  // t_end 10 > H
  CHECK_THROWS_AS(parse_config("this is not toml ["), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/probsafe.toml"), ConfigError);
}

TEST_CASE("resolved config round-trips") {
  for (const char* text : {"", "[controller]\nkind = \"switching\"\n[field]\nsource = \"mc\"",
                           "seed = 9223372036854775807\n[margin]\nell0 = 0.25\nslope = -0.5\n"
                           "[field.grid]\nL_min = -1.0\nL_max = 0.5\nL_nodes = 16"}) {
    CAPTURE(text);
    const auto c = parse_config(text);
    const auto again = parse_config(serialize_config(c));
    CHECK(again == c);
    CHECK(config_hash(again) == config_hash(c));
  }
  auto a = parse_config("");
  auto b = a;
  b.controller.gamma = 0.6;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("PROBSAFE_SEED overrides the file seed") {
  const auto path = std::filesystem::temp_directory_path() / "probsafe_seed.toml";
  std::ofstream(path) << "seed = 5\n";
  unsetenv("PROBSAFE_SEED");
  CHECK(load_config(path).seed == 5);
  setenv("PROBSAFE_SEED", "1234", 1);
  CHECK(load_config(path).seed == 1234);
  setenv("PROBSAFE_SEED", "18446744073709551615", 1);
  CHECK_THROWS_AS(load_config(path), ConfigError);
  setenv("PROBSAFE_SEED", "abc", 1);
  CHECK_THROWS_AS(load_config(path), ConfigError);
  unsetenv("PROBSAFE_SEED");
}

TEST_CASE("controller labels") {
  ControllerConfig k;
  k.kind = PolicyKind::Switching;
  CHECK(controller_label(k) == "proposed");
  k.kind = PolicyKind::CVaR;
  CHECK(controller_label(k) == "cvar");
  k.label = "mine";
  CHECK(controller_label(k) == "mine");
}

}  // TEST_SUITE
