#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "kaliko/autodiff.hpp"
#include "kaliko/systems.hpp"
#include "kaliko/tensor.hpp"

namespace kaliko::model {

enum class DecoderVariant { conv, mlp };

std::string to_string(DecoderVariant v);
DecoderVariant parse_decoder_variant(const std::string& s);

/// Raw states per sub-latent (chunk) and number of delayed sub-latents.
struct ChunkSpec {
  std::size_t chunk = 4;
  std::size_t n_delays = 4;

  std::size_t window() const { return chunk * n_delays; }
};

struct ModelConfig {
  std::size_t n_delays = 4;
  std::size_t sub_latent = 16;
  std::size_t chunk = 4;
  std::size_t state_dim = 2;
  std::size_t hidden = 64;
  DecoderVariant decoder = DecoderVariant::conv;
  bool fixed_prior = false;
  std::uint64_t seed = 0;
  double init_log_var = std::log(1e-2);

  std::size_t latent_dim() const { return n_delays * sub_latent; }
  std::size_t measurement_dim() const { return n_delays * chunk * state_dim; }
  ChunkSpec chunk_spec() const { return {chunk, n_delays}; }
};

/// Delay-embedded latent dynamics. The lifted operator has identity blocks on
/// the block superdiagonal and a learnable bottom block row [B_1 ... B_nd];
/// only that row is stored.
class BlockCompanionDynamics {
 public:
  BlockCompanionDynamics() = default;
  BlockCompanionDynamics(std::size_t n_delays, std::size_t sub_latent);

  std::size_t n_delays = 1;
  std::size_t sub_latent = 1;
  /// sub_latent x (n_delays * sub_latent), the blocks side by side.
  ad::Parameter blocks;

  std::size_t latent_dim() const { return n_delays * sub_latent; }
  void set_block(std::size_t i, const Tensor& b);

  Tensor materialize() const;
  /// A z for an m-vector or each column of an m x k matrix, without forming A.
  Tensor apply(const Tensor& z) const;
  ad::Var apply(ad::Tape& tape, ad::Var z);
};

/// Decoder from the (n_d, l) sub-latent stack to a window of n_d * c raw
/// states. Each of the two blocks mixes slots per channel (conv variant
/// only) and then applies a residual GELU MLP per slot; a shared linear
/// read-out maps every slot to its chunk.
class DecoderNet {
 public:
  struct Block {
    ad::Parameter mix;       // (l, n_d*n_d)
    ad::Parameter mix_bias;  // (l)
    ad::Parameter w1;        // (hidden, l)
    ad::Parameter b1;        // (hidden)
    ad::Parameter w2;        // (l, hidden)
    ad::Parameter b2;        // (l)
  };

  DecoderNet() = default;
  DecoderNet(const ModelConfig& cfg, std::mt19937_64& rng);

  static constexpr std::size_t kBlocks = 2;

  std::size_t n_delays = 4, sub_latent = 16, chunk = 4, state_dim = 2, hidden = 64;
  DecoderVariant variant = DecoderVariant::conv;
  std::vector<Block> blocks;
  ad::Parameter readout_w;  // (c*n, l)
  ad::Parameter readout_b;  // (c*n)

  std::size_t latent_dim() const { return n_delays * sub_latent; }
  std::size_t output_dim() const { return n_delays * chunk * state_dim; }

  /// Window as an (n_d*c) x n matrix.
  Tensor decode(const Tensor& z);
  /// Flattened p-vector on the tape.
  ad::Var decode(ad::Tape& tape, ad::Var z);
  /// Decodes each row of Z (k x m) into a row of the result (k x p).
  ad::Var decode_rows(ad::Tape& tape, ad::Var z_rows);

  struct Linearization {
    ad::Var value;       // p
    ad::Var jacobian_t;  // m x p, transpose of d value / d z
  };
  /// Value and Jacobian at z, the Jacobian built by pushing all m tangent
  /// directions through the network at once. Both stay differentiable.
  Linearization linearize(ad::Tape& tape, ad::Var z);
  /// p x m Jacobian.
  Tensor jacobian(const Tensor& z);
};

/// Diagonal process/measurement noise as learnable log-variances.
struct NoiseParams {
  static constexpr double kFloor = 1e-8;
  ad::Parameter log_q;  // m
  ad::Parameter log_r;  // p

  /// exp(log_q) + floor, the diagonal of Q.
  ad::Var q_diag(ad::Tape& tape);
  ad::Var r_diag(ad::Tape& tape);
  Tensor q_matrix() const;
  Tensor r_matrix() const;
};

struct LatentPrior {
  ad::Parameter mu0;     // m
  ad::Parameter log_s0;  // m

  ad::Var mean(ad::Tape& tape) { return tape.param(mu0); }
  ad::Var cov(ad::Tape& tape);
  Tensor cov_matrix() const;
};

/// Everything learnable plus the metadata needed to use it on raw data.
class KalikoModel {
 public:
  KalikoModel() : KalikoModel(ModelConfig{}) {}
  explicit KalikoModel(const ModelConfig& cfg);

  ModelConfig config;
  systems::NormStats stats;
  std::string system = "vdp";
  double damping = 0.0;
  double dt = 0.05;
  std::int64_t step = 0;

  BlockCompanionDynamics dynamics;
  DecoderNet decoder;
  NoiseParams noise;
  LatentPrior prior;

  /// Every parameter, in checkpoint order.
  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;
  void zero_grad();
};

// ---- chunking ----------------------------------------------------------------

/// Overlapping measurement windows of a raw L x n trajectory: row t holds raw
/// states [t*c, t*c + n_d*c) flattened. The length is first truncated down to
/// a multiple of c (dropping the tail).
Tensor chunk(const Tensor& states, const ChunkSpec& spec);
std::size_t chunk_count(std::size_t raw_length, const ChunkSpec& spec);
/// Inverse of chunk: overlapping raw-state estimates are averaged.
Tensor unchunk(const Tensor& windows, const ChunkSpec& spec, std::size_t state_dim);

// ---- checkpoints ---------------------------------------------------------------

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_checkpoint(const KalikoModel& model, const std::filesystem::path& path);
KalikoModel load_checkpoint(const std::filesystem::path& path);

}  // namespace kaliko::model
