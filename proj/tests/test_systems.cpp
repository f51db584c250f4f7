#include <cmath>
#include <filesystem>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "kaliko/systems.hpp"

using namespace kaliko;
using namespace kaliko::systems;

namespace {

double radius(const Tensor& s, std::size_t r) { return std::hypot(s(r, 0), s(r, 1)); }

double duffing_energy(double x1, double x2) { return 0.5 * x2 * x2 - 0.5 * x1 * x1 + 0.25 * x1 * x1 * x1 * x1; }

double dist(const Tensor& s, std::size_t r, const Tensor& t, std::size_t q) {
  return std::hypot(s(r, 0) - t(q, 0), s(r, 1) - t(q, 1));
}

}  // namespace

TEST_CASE("vector fields at equilibria and known points") {
  const std::vector<double> origin{0.0, 0.0};
  auto f = vector_field(make_system("vdp"), origin);
  CHECK(f[0] == 0.0);
  CHECK(f[1] == 0.0);

  const std::vector<double> quarter{std::numbers::pi / 2, 0.0};
  f = vector_field(make_system("pendulum"), quarter);
  CHECK(f[0] == doctest::Approx(0.0));
  CHECK(f[1] == doctest::Approx(1.0));

  const std::vector<double> well{1.0, 0.0};
  f = vector_field(make_system("duffing", 1.0), well);
  CHECK(f[0] == 0.0);
  CHECK(f[1] == 0.0);

  f = vector_field(make_system("hopf_bautin"), origin);
  CHECK(f[0] == 0.0);
  CHECK(f[1] == 0.0);
}

TEST_CASE("hopf_bautin rotates at unit angular speed") {
  const std::vector<double> x{0.5, 0.0};
  auto f = vector_field(make_system("hopf_bautin"), x);
  CHECK(f[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(f[1] == doctest::Approx(0.5));
}

TEST_CASE("unknown system names are rejected") {
  CHECK_THROWS_AS(make_system("lorenz"), std::invalid_argument);
  CHECK(make_system("duffing", 1.0).damping == 1.0);
  CHECK(parse_system("hopf_bautin") == SystemKind::hopf_bautin);
}

TEST_CASE("equilibrium stays put") {
  const std::vector<double> origin{0.0, 0.0};
  auto tr = integrate_rk4(make_system("vdp"), origin, 0.05, 50);
  CHECK(tr.length() == 51);
  for (double v : tr.states.storage()) CHECK(v == 0.0);
}

TEST_CASE("hopf_bautin invariant circles") {
  const auto sys = make_system("hopf_bautin");
  const std::vector<double> inner{0.5, 0.0};
  auto tr = integrate_rk4(sys, inner, 0.01, 1000);
  for (std::size_t r = 0; r < tr.length(); ++r) CHECK(std::abs(radius(tr.states, r) - 0.5) < 1e-3);

  const double outer = std::sqrt(3.0) / 2.0;
  const std::vector<double> x{0.0, outer};
  tr = integrate_rk4(sys, x, 0.01, 1000);
  for (std::size_t r = 0; r < tr.length(); ++r) CHECK(std::abs(radius(tr.states, r) - outer) < 1e-2);
}

TEST_CASE("undamped duffing conserves energy") {
  const std::vector<double> x0{0.5, 0.0};
  auto tr = integrate_rk4(make_system("duffing", 0.0), x0, 0.05, 10000);
  const double e0 = duffing_energy(0.5, 0.0);
  double worst = 0.0;
  for (std::size_t r = 0; r < tr.length(); ++r)
    worst = std::max(worst, std::abs(duffing_energy(tr.states(r, 0), tr.states(r, 1)) - e0));
  CHECK(worst < 1e-5);
}

TEST_CASE("rk4 is fourth order") {
  const auto sys = make_system("vdp");
  const std::vector<double> x0{1.5, 0.3};
  const double h = 0.1;
  auto ref = integrate_rk4(sys, x0, h / 100, 100);
  auto one = integrate_rk4(sys, x0, h, 1);
  auto two = integrate_rk4(sys, x0, h / 2, 2);
  const double e1 = dist(one.states, 1, ref.states, 100);
  const double e2 = dist(two.states, 2, ref.states, 100);
  const double ratio = e1 / e2;
  INFO("ratio " << ratio);
  CHECK(ratio > 8.0);
  CHECK(ratio < 32.0);
}

TEST_CASE("backward integration retraces forward integration") {
  const auto sys = make_system("pendulum");
  const std::vector<double> x0{0.3, -0.2};
  auto fwd = integrate_rk4(sys, x0, 0.01, 200);
  const std::vector<double> end{fwd.states(200, 0), fwd.states(200, 1)};
  auto back = integrate_rk4(sys, end, -0.01, 200);
  CHECK(dist(back.states, 200, fwd.states, 0) < 1e-9);
}

TEST_CASE("integration divergence raises") {
  const std::vector<double> x0{3.0, 3.0};
  CHECK_THROWS_AS(integrate_rk4(make_system("vdp"), x0, -0.05, 2000), Divergence);
  CHECK_THROWS_AS(integrate_rk4(make_system("vdp"), x0, 0.0, 10), std::invalid_argument);
}

TEST_CASE("sample_dataset from a degenerate box at the origin") {
  SampleConfig cfg;
  cfg.n_traj = 1;
  cfg.steps = 2;
  cfg.init = InitRegion{false, {0.0, 0.0}, {0.0, 0.0}};
  auto ds = sample_dataset(make_system("vdp"), cfg);
  REQUIRE(ds.trajectories.size() == 1);
  for (double v : ds.trajectories[0].states.storage()) CHECK(v == 0.0);
  CHECK(ds.stats.mean[0] == 0.0);
  CHECK(ds.stats.mean[1] == 0.0);
  CHECK(ds.stats.std[0] == kStdFloor);
}

TEST_CASE("sample_dataset is deterministic under a fixed seed") {
  SampleConfig cfg;
  cfg.n_traj = 6;
  cfg.steps = 50;
  cfg.seed = 42;
  auto a = sample_dataset(make_system("duffing", 1.0), cfg);
  auto b = sample_dataset(make_system("duffing", 1.0), cfg);
  for (std::size_t k = 0; k < a.trajectories.size(); ++k)
    CHECK(a.trajectories[k].states.storage() == b.trajectories[k].states.storage());
  CHECK(a.stats.mean == b.stats.mean);
  CHECK(a.stats.std == b.stats.std);
  cfg.seed = 43;
  auto c = sample_dataset(make_system("duffing", 1.0), cfg);
  CHECK(c.trajectories[0].states.storage() != a.trajectories[0].states.storage());
}

TEST_CASE("sample_dataset respects the init region") {
  SampleConfig cfg;
  cfg.n_traj = 40;
  cfg.steps = 1;
  auto ds = sample_dataset(make_system("pendulum"), cfg);
  for (auto& tr : ds.trajectories) {
    CHECK(std::abs(tr.states(0, 0)) <= std::numbers::pi);
    CHECK(std::abs(tr.states(0, 1)) <= 2.0);
  }
  auto hb = sample_dataset(make_system("hopf_bautin"), cfg);
  for (auto& tr : hb.trajectories) {
    CHECK(radius(tr.states, 0) >= 0.1 - 1e-12);
    CHECK(radius(tr.states, 0) <= 1.2 + 1e-12);
  }
}

TEST_CASE("sample_dataset gives up after repeated divergence") {
  SampleConfig cfg;
  cfg.n_traj = 1;
  cfg.steps = 20;
  cfg.init = InitRegion{false, {1e3, 1e3}, {1e3 + 1, 1e3 + 1}};
  CHECK_THROWS_AS(sample_dataset(make_system("vdp"), cfg), Divergence);
}

TEST_CASE("running statistics") {
  Trajectory a{Tensor::matrix(2, 2, {1, 5, 3, 5}), 0.05, 0.0};
  Trajectory b{Tensor::matrix(2, 2, {5, 5, 7, 5}), 0.05, 0.0};
  auto st = running_stats({a, b});
  CHECK(st.mean[0] == doctest::Approx(4.0));
  CHECK(st.std[0] == doctest::Approx(std::sqrt(5.0)));
  CHECK(st.mean[1] == doctest::Approx(5.0));
  CHECK(st.std[1] == kStdFloor);
}

TEST_CASE("normalize and denormalize") {
  NormStats st{{1.0, 1.0}, {2.0, 2.0}};
  auto y = normalize(Tensor::matrix(1, 2, {3, 1}), st);
  CHECK(y(0, 0) == 1.0);
  CHECK(y(0, 1) == 0.0);
  auto z = normalize(Tensor::matrix(1, 2, {1, 1}), st);
  CHECK(z(0, 0) == 0.0);

  NormStats odd{{0.3, -7.1}, {1.7, 0.013}};
  Tensor x = Tensor::matrix(3, 2, {1.234567, -8.0, 1e3, 2e-4, -5.5, 0.0});
  auto back = denormalize(normalize(x, odd), odd);
  CHECK(max_abs_diff(back, x) < 1e-12 * 1e3);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(back[i] - x[i]) <= 1e-12 * std::max(1.0, std::abs(x[i])));
}

TEST_CASE("dataset files roundtrip exactly") {
  SampleConfig cfg;
  cfg.n_traj = 3;
  cfg.steps = 10;
  cfg.seed = 7;
  auto ds = sample_dataset(make_system("duffing", 1.0), cfg);
  auto dir = std::filesystem::temp_directory_path() / "kaliko_test_dataset";
  std::filesystem::remove_all(dir);
  save_dataset(dir, ds);
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  CHECK(std::filesystem::exists(dir / "traj_0002.csv"));
  auto back = load_dataset(dir);
  CHECK(back.system == "duffing");
  CHECK(back.damping == 1.0);
  CHECK(back.dt == ds.dt);
  CHECK(back.seed == 7);
  CHECK(back.stats.mean == ds.stats.mean);
  CHECK(back.stats.std == ds.stats.std);
  REQUIRE(back.trajectories.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) CHECK(back.trajectories[k].states.storage() == ds.trajectories[k].states.storage());
  std::filesystem::remove_all(dir);
  CHECK_THROWS(load_dataset(dir));
}
