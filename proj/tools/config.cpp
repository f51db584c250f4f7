#include <fstream>
#include <set>

#include "cli.hpp"

namespace kaliko::cli {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace

json to_json(const model::ModelConfig& c) {
  return {{"n_delays", c.n_delays},
          {"sub_latent", c.sub_latent},
          {"chunk", c.chunk},
          {"state_dim", c.state_dim},
          {"hidden", c.hidden},
          {"decoder", model::to_string(c.decoder)},
          {"fixed_prior", c.fixed_prior},
          {"seed", c.seed},
          {"init_log_var", c.init_log_var}};
}

json to_json(const training::TrainConfig& c) {
  return {{"alpha_f", c.alpha_f},       {"alpha_p", c.alpha_p},   {"window", c.window},
          {"batch_size", c.batch_size}, {"steps", c.steps},       {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},           {"beta2", c.beta2},       {"eps", c.eps},
          {"seed", c.seed},             {"grad_clip_norm", c.grad_clip_norm}};
}

json to_json(const RunConfig& c) { return {{"model", to_json(c.model)}, {"training", to_json(c.training)}}; }

RunConfig parse_run_config(const json& j) {
  reject_unknown(j, {"model", "training"}, "config");
  RunConfig c;
  if (j.contains("model")) {
    const json& m = j.at("model");
    reject_unknown(m,
                   {"n_delays", "sub_latent", "chunk", "state_dim", "hidden", "decoder", "fixed_prior", "seed",
                    "init_log_var"},
                   "model");
    read(m, "n_delays", c.model.n_delays, "model");
    read(m, "sub_latent", c.model.sub_latent, "model");
    read(m, "chunk", c.model.chunk, "model");
    read(m, "state_dim", c.model.state_dim, "model");
    read(m, "hidden", c.model.hidden, "model");
    std::string decoder = model::to_string(c.model.decoder);
    read(m, "decoder", decoder, "model");
    try {
      c.model.decoder = model::parse_decoder_variant(decoder);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("model.decoder: ") + e.what());
    }
    read(m, "fixed_prior", c.model.fixed_prior, "model");
    read(m, "seed", c.model.seed, "model");
    read(m, "init_log_var", c.model.init_log_var, "model");
    if (c.model.n_delays == 0 || c.model.sub_latent == 0 || c.model.chunk == 0 || c.model.hidden == 0 ||
        c.model.state_dim == 0)
      throw ConfigError("model: dimensions must be positive");
  }
  if (j.contains("training")) {
    const json& t = j.at("training");
    reject_unknown(t,
                   {"alpha_f", "alpha_p", "window", "batch_size", "steps", "learning_rate", "beta1", "beta2", "eps",
                    "seed", "grad_clip_norm"},
                   "training");
    read(t, "alpha_f", c.training.alpha_f, "training");
    read(t, "alpha_p", c.training.alpha_p, "training");
    read(t, "window", c.training.window, "training");
    read(t, "batch_size", c.training.batch_size, "training");
    read(t, "steps", c.training.steps, "training");
    read(t, "learning_rate", c.training.learning_rate, "training");
    read(t, "beta1", c.training.beta1, "training");
    read(t, "beta2", c.training.beta2, "training");
    read(t, "eps", c.training.eps, "training");
    read(t, "seed", c.training.seed, "training");
    read(t, "grad_clip_norm", c.training.grad_clip_norm, "training");
    try {
      c.training.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("training: ") + e.what());
    }
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

void write_run_config(const std::filesystem::path& dir, const json& resolved) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "run_config.json");
  if (!out) throw std::runtime_error("cannot write " + (dir / "run_config.json").string());
  out << resolved.dump(2) << "\n";
}

}  // namespace kaliko::cli
