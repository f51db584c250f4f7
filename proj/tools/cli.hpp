#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "kaliko/inference.hpp"
#include "kaliko/model.hpp"
#include "kaliko/systems.hpp"
#include "kaliko/training.hpp"

namespace kaliko::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kDivergence = 3,
  kTrainingNaN = 4,
  kRange = 5,
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for an out-of-range analysis request such as a bad eigenpair index.
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Model and training settings as read from a JSON config file.
struct RunConfig {
  model::ModelConfig model;
  training::TrainConfig training;
};

nlohmann::json to_json(const model::ModelConfig& c);
nlohmann::json to_json(const training::TrainConfig& c);
nlohmann::json to_json(const RunConfig& c);

/// Strict parse: unknown keys or wrongly typed values raise ConfigError.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Writes `run_config.json` into `dir`.
void write_run_config(const std::filesystem::path& dir, const nlohmann::json& resolved);

/// One context/target split of a trajectory.
struct EvalWindow {
  std::size_t trajectory = 0;
  std::size_t offset = 0;
  Tensor context;
  Tensor truth;
};

/// Windows at offsets 0, stride, 2*stride, ... of every trajectory long
/// enough for t_in + t_out states (a single window when stride is 0).
std::vector<EvalWindow> eval_windows(const systems::Dataset& data, std::size_t t_in, std::size_t t_out,
                                     std::size_t stride);

struct AblationRow {
  std::string variant;
  std::size_t n_delays = 0;
  std::string decoder;
  std::string prior;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  inference::Metrics metrics;
  double recon_mae = 0.0;
  double wall_seconds = 0.0;
};

struct AblationSetup {
  RunConfig base;
  std::size_t t_in = 128;
  std::size_t t_out = 64;
  std::size_t stride = 64;
};

/// Trains every variant of `suite` (delay, decoder or prior) from the same
/// base config and seed, and scores open-loop prediction on `eval`.
std::vector<AblationRow> run_ablation(const std::string& suite, const systems::Dataset& train_data,
                                      const systems::Dataset& eval, const AblationSetup& setup);

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);

/// Parses and runs one command line; never throws.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace kaliko::cli
