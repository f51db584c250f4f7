#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "cli.hpp"
#include "doctest.h"

using namespace kaliko;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Workdir {
  fs::path root;
  Workdir() : root(fs::temp_directory_path() / ("kaliko_cli_" + std::to_string(::getpid()))) {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Workdir() { fs::remove_all(root); }
  std::string operator/(const std::string& name) const { return (root / name).string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++n;
  return n;
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

const char* kTinyConfig = R"({
  "model": {"n_delays": 2, "sub_latent": 4, "chunk": 2, "hidden": 8, "seed": 3},
  "training": {"steps": 3, "window": 6, "seed": 5}
})";

int run(std::initializer_list<std::string> args) {
  return cli::run(std::vector<std::string>(args));
}

}  // namespace

TEST_CASE("end to end on a tiny model") {
  Workdir w;
  const auto data = w / "data", cfg = w / "cfg.json";
  write_text(cfg, kTinyConfig);
  REQUIRE(run({"gen-data", "--system", "vdp", "--out", data, "--n-traj", "3", "--steps", "80", "--seed", "2"}) == 0);
  CHECK(fs::exists(fs::path(data) / "manifest.json"));
  CHECK(fs::exists(fs::path(data) / "traj_0002.csv"));
  CHECK(read_json(fs::path(data) / "run_config.json")["command"] == "gen-data");

  SUBCASE("training writes a checkpoint, report and resolved config") {
    REQUIRE(run({"train", "--data", data, "--config", cfg, "--out", w / "run"}) == 0);
    CHECK(line_count(w / "run/train_report.csv") == 4);
    auto rc = read_json(w / "run/run_config.json");
    CHECK(rc["config"]["model"]["n_delays"] == 2);
    CHECK(rc["config"]["training"]["learning_rate"] == 1e-3);

    REQUIRE(run({"train", "--data", data, "--config", cfg, "--out", w / "again"}) == 0);
    CHECK(slurp(w / "run/model.klko") == slurp(w / "again/model.klko"));

    REQUIRE(run({"train", "--data", data, "--config", cfg, "--out", w / "resumed", "--resume", w / "run/model.klko"}) ==
            0);
    CHECK(read_json(w / "resumed/run_config.json")["start_step"] == 3);
    CHECK(model::load_checkpoint(w / "resumed/model.klko").step == 6);
    std::ifstream rep(w / "resumed/train_report.csv");
    std::string line;
    std::getline(rep, line);
    std::getline(rep, line);
    CHECK(line.rfind("3,", 0) == 0);
  }

  SUBCASE("prediction and the DMD baseline share a metrics schema") {
    REQUIRE(run({"train", "--data", data, "--config", cfg, "--out", w / "run"}) == 0);
    REQUIRE(run({"predict", "--ckpt", w / "run/model.klko", "--data", data, "--t-in", "16", "--t-out", "8",
                 "--stride", "32", "--out", w / "pred"}) == 0);
    REQUIRE(run({"baseline-dmd", "--data", data, "--t-in", "16", "--t-out", "8", "--stride", "32", "--delay", "4",
                 "--out", w / "dmd"}) == 0);
    auto a = read_json(w / "pred/metrics.json");
    auto b = read_json(w / "dmd/metrics.json");
    for (auto& [k, v] : a.items()) CHECK(b.contains(k));
    for (auto& [k, v] : b.items()) CHECK(a.contains(k));
    CHECK(a["windows"] == 6);
    CHECK(a["T_out"] == 8);
    CHECK(slurp(w / "pred/pred_0000_0000.csv").rfind("t,dim,truth,pred", 0) == 0);
    CHECK(line_count(w / "pred/pred_0000_0000.csv") == 1 + 8 * 2);
    CHECK(fs::exists(w / "dmd/pred_0002_0032.csv"));

    REQUIRE(run({"predict", "--ckpt", w / "run/model.klko", "--data", data, "--t-in", "16", "--t-out", "0", "--out",
                 w / "pred0"}) == 0);
    auto none = read_json(w / "pred0/metrics.json");
    CHECK(none["T_out"] == 0);
    CHECK_FALSE(none.contains("mse"));
    CHECK_FALSE(none.contains("mae"));
  }

  SUBCASE("analysis modes") {
    REQUIRE(run({"train", "--data", data, "--config", cfg, "--out", w / "run"}) == 0);
    const auto ckpt = w / "run/model.klko";
    REQUIRE(run({"analyze", "--ckpt", ckpt, "--mode", "spectrum", "--out", w / "an"}) == 0);
    CHECK(line_count(w / "an/spectrum.csv") == 1 + 8);
    CHECK(run({"analyze", "--ckpt", ckpt, "--mode", "eigenfield", "--eig-index", "8", "--out", w / "bad"}) == 5);
    REQUIRE(run({"analyze", "--ckpt", ckpt, "--mode", "eigenfield", "--eig-index", "0", "--grid", "4", "--warmup",
                 "8", "--svg", "--out", w / "ef"}) == 0);
    CHECK(line_count(w / "ef/eigenfield.csv") == 1 + 16);
    CHECK(fs::exists(w / "ef/eigenfield_abs.svg"));
    REQUIRE(run({"analyze", "--ckpt", ckpt, "--mode", "heatmap", "--grid", "3", "--horizon", "8", "--warmup", "8",
                 "--out", w / "hm"}) == 0);
    CHECK(line_count(w / "hm/heatmap.csv") == 1 + 9);
  }

  SUBCASE("ablation suites train every variant from one seed") {
    for (auto [suite, n] : {std::pair<std::string, std::size_t>{"delay", 3}, {"decoder", 2}, {"prior", 2}}) {
      const auto out = w / ("abl_" + suite);
      REQUIRE(run({"ablate", "--suite", suite, "--data", data, "--config", cfg, "--out", out, "--t-in", "16",
                   "--t-out", "8", "--stride", "32"}) == 0);
      CHECK(line_count(fs::path(out) / "ablation.csv") == 1 + n);
      std::ifstream in(fs::path(out) / "ablation.csv");
      std::string line;
      std::getline(in, line);
      CHECK(line == "variant,n_delays,decoder,prior,seed,steps,mse,mae,recon_mae,wall_seconds");
      while (std::getline(in, line)) CHECK(line.find(",5,3,") != std::string::npos);
    }
  }
}

TEST_CASE("exit codes") {
  Workdir w;
  const auto data = w / "data", cfg = w / "cfg.json";
  write_text(cfg, kTinyConfig);
  REQUIRE(run({"gen-data", "--system", "vdp", "--out", data, "--n-traj", "2", "--steps", "40"}) == 0);

  CHECK(run({}) == 2);
  CHECK(run({"frobnicate"}) == 2);
  CHECK(run({"gen-data", "--system", "lorenz", "--out", w / "x"}) == 2);
  CHECK(run({"train", "--data", w / "missing", "--out", w / "x"}) == 2);
  CHECK(run({"predict", "--ckpt", w / "missing.klko", "--data", data, "--out", w / "x"}) == 2);

  write_text(w / "bad.json", R"({"training": {"stepz": 5}})");
  CHECK(run({"train", "--data", data, "--config", w / "bad.json", "--out", w / "x"}) == 2);
  write_text(w / "typed.json", R"({"training": {"steps": "many"}})");
  CHECK(run({"train", "--data", data, "--config", w / "typed.json", "--out", w / "x"}) == 2);

  write_text(w / "junk.klko", "not a checkpoint");
  CHECK(run({"predict", "--ckpt", w / "junk.klko", "--data", data, "--out", w / "x"}) == 2);

  REQUIRE(run({"train", "--data", data, "--config", cfg, "--out", w / "run"}) == 0);
  CHECK(run({"predict", "--ckpt", w / "run/model.klko", "--data", data, "--t-in", "2", "--t-out", "4", "--out",
             w / "x"}) == 2);

  CHECK(run({"baseline-dmd", "--data", data, "--t-in", "16", "--out", w / "x"}) == 2);

  auto ds = systems::load_dataset(data);
  for (auto& tr : ds.trajectories) tr.states.fill(std::numeric_limits<double>::quiet_NaN());
  systems::save_dataset(w / "nan", ds);
  CHECK(run({"train", "--data", w / "nan", "--config", cfg, "--out", w / "x"}) == 1);

  write_text(w / "hot.json", R"({"model": {"n_delays": 2, "sub_latent": 4, "chunk": 2, "hidden": 8},
    "training": {"steps": 20, "window": 6, "learning_rate": 1e200, "grad_clip_norm": 1e300}})");
  CHECK(run({"train", "--data", data, "--config", w / "hot.json", "--out", w / "diverged"}) == 4);
  CHECK(fs::exists(w / "diverged/last_good.klko"));
  CHECK_FALSE(fs::exists(w / "diverged/model.klko"));
}

TEST_CASE("config parsing") {
  auto rc = cli::parse_run_config(json::parse(kTinyConfig));
  CHECK(rc.model.n_delays == 2);
  CHECK(rc.model.hidden == 8);
  CHECK(rc.training.steps == 3);
  CHECK(rc.training.window == 6);
  CHECK(rc.training.learning_rate == 1e-3);
  auto back = cli::parse_run_config(cli::to_json(rc));
  CHECK(cli::to_json(back) == cli::to_json(rc));
  CHECK_THROWS_AS(cli::parse_run_config(json::parse(R"({"model": {"decoder": "rnn"}})")), cli::ConfigError);
  CHECK_THROWS_AS(cli::parse_run_config(json::parse(R"({"extra": 1})")), cli::ConfigError);
}

TEST_CASE("evaluation windows") {
  systems::Dataset ds;
  systems::Trajectory a, b;
  a.states = Tensor::zeros(100, 2);
  for (std::size_t t = 0; t < 100; ++t) a.states(t, 0) = static_cast<double>(t);
  b.states = Tensor::zeros(20, 2);
  ds.trajectories = {a, b};
  auto ws = cli::eval_windows(ds, 30, 10, 25);
  REQUIRE(ws.size() == 3);
  CHECK(ws[2].offset == 50);
  CHECK(ws[2].context(0, 0) == 50.0);
  CHECK(ws[2].truth(0, 0) == 80.0);
  CHECK(cli::eval_windows(ds, 30, 10, 0).size() == 1);
}
