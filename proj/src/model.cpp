#include "kaliko/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kaliko/kernels.hpp"

namespace kaliko::model {

using ad::Parameter;
using ad::Tape;
using ad::Var;
using kernels::Trans;

std::string to_string(DecoderVariant v) { return v == DecoderVariant::conv ? "conv" : "mlp"; }

DecoderVariant parse_decoder_variant(const std::string& s) {
  if (s == "conv") return DecoderVariant::conv;
  if (s == "mlp") return DecoderVariant::mlp;
  throw std::invalid_argument("unknown decoder variant '" + s + "'");
}

// ---- dynamics ------------------------------------------------------------------

BlockCompanionDynamics::BlockCompanionDynamics(std::size_t n_d, std::size_t l)
    : n_delays(n_d), sub_latent(l), blocks("dynamics.blocks", Tensor({l, n_d * l})) {
  if (n_d == 0 || l == 0) throw std::invalid_argument("dynamics: n_delays and sub_latent must be positive");
}

void BlockCompanionDynamics::set_block(std::size_t i, const Tensor& b) {
  const std::size_t l = sub_latent, m = latent_dim();
  if (i >= n_delays || b.rows() != l || b.cols() != l) throw std::invalid_argument("set_block: bad block");
  for (std::size_t r = 0; r < l; ++r)
    for (std::size_t c = 0; c < l; ++c) blocks.value[r * m + i * l + c] = b(r, c);
}

Tensor BlockCompanionDynamics::materialize() const {
  const std::size_t l = sub_latent, m = latent_dim();
  Tensor a({m, m});
  for (std::size_t r = 0; r + l < m; ++r) a(r, r + l) = 1.0;
  for (std::size_t r = 0; r < l; ++r)
    for (std::size_t c = 0; c < m; ++c) a(m - l + r, c) = blocks.value[r * m + c];
  return a;
}

Tensor BlockCompanionDynamics::apply(const Tensor& z) const {
  const std::size_t l = sub_latent, m = latent_dim();
  if (z.rows() != m) throw std::invalid_argument("dynamics.apply: dimension mismatch");
  const std::size_t k = z.cols();
  Tensor out(z.shape());
  std::copy(z.data() + l * k, z.data() + m * k, out.data());
  kernels::gemm(Trans::no, Trans::no, l, k, m, 1.0, blocks.value.data(), z.data(), 0.0, out.data() + (m - l) * k);
  return out;
}

Var BlockCompanionDynamics::apply(Tape& tape, Var z) {
  const std::size_t l = sub_latent, m = latent_dim();
  const Tensor& zv = z.value();
  if (zv.rows() != m) throw std::invalid_argument("dynamics.apply: dimension mismatch");
  const std::size_t k = zv.cols();
  Var b = tape.param(blocks);
  Tensor out(zv.shape());
  std::copy(zv.data() + l * k, zv.data() + m * k, out.data());
  kernels::gemm(Trans::no, Trans::no, l, k, m, 1.0, b.value().data(), zv.data(), 0.0, out.data() + (m - l) * k);
  return tape.record(std::move(out), {z, b}, [z, b, l, m, k](Tape& tp, const Tensor& g) {
    const double* g_bottom = g.data() + (m - l) * k;
    if (tp.requires_grad(z)) {
      Tensor& gz = tp.grad(z);
      kernels::axpy((m - l) * k, 1.0, g.data(), gz.data() + l * k);
      kernels::gemm(Trans::yes, Trans::no, m, k, l, 1.0, tp.value(b.id).data(), g_bottom, 1.0, gz.data());
    }
    if (tp.requires_grad(b))
      kernels::gemm(Trans::no, Trans::yes, l, m, k, 1.0, g_bottom, tp.value(z.id).data(), 1.0, tp.grad(b).data());
  });
}

// ---- decoder -------------------------------------------------------------------

namespace {

Tensor gaussian(std::vector<std::size_t> shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, stddev);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = nd(rng);
  return t;
}

}  // namespace

DecoderNet::DecoderNet(const ModelConfig& cfg, std::mt19937_64& rng)
    : n_delays(cfg.n_delays),
      sub_latent(cfg.sub_latent),
      chunk(cfg.chunk),
      state_dim(cfg.state_dim),
      hidden(cfg.hidden),
      variant(cfg.decoder) {
  const std::size_t l = sub_latent, nd = n_delays, h = hidden;
  for (std::size_t b = 0; b < kBlocks; ++b) {
    const std::string pre = "decoder.block" + std::to_string(b) + ".";
    Block blk;
    // identity mixing plus a small perturbation
    Tensor mix = gaussian({l, nd * nd}, 0.1 / std::sqrt(static_cast<double>(nd)), rng);
    for (std::size_t j = 0; j < l; ++j)
      for (std::size_t i = 0; i < nd; ++i) mix[j * nd * nd + i * nd + i] += 1.0;
    blk.mix = Parameter(pre + "mix", std::move(mix));
    blk.mix_bias = Parameter(pre + "mix_bias", Tensor({l}));
    blk.w1 = Parameter(pre + "w1", gaussian({h, l}, 1.0 / std::sqrt(static_cast<double>(l)), rng));
    blk.b1 = Parameter(pre + "b1", Tensor({h}));
    blk.w2 = Parameter(pre + "w2", gaussian({l, h}, 1.0 / std::sqrt(static_cast<double>(h)), rng));
    blk.b2 = Parameter(pre + "b2", Tensor({l}));
    if (variant == DecoderVariant::mlp) {
      blk.mix.frozen = true;
      blk.mix_bias.frozen = true;
    }
    blocks.push_back(std::move(blk));
  }
  readout_w = Parameter("decoder.readout_w", gaussian({chunk * state_dim, l}, 1.0 / std::sqrt(static_cast<double>(l)), rng));
  readout_b = Parameter("decoder.readout_b", Tensor({chunk * state_dim}));
}

Var DecoderNet::decode_rows(Tape& tape, Var z_rows) {
  const std::size_t k = z_rows.value().rows();
  if (z_rows.value().size() != k * latent_dim())
    throw std::invalid_argument("decoder: latent dimension mismatch");
  Var x = ad::reshape(z_rows, {k * n_delays, sub_latent});
  for (auto& blk : blocks) {
    Var u = x;
    if (variant == DecoderVariant::conv)
      u = ad::add_row(ad::depthwise_mix(x, tape.param(blk.mix), n_delays), tape.param(blk.mix_bias));
    Var pre = ad::add_row(ad::matmul_nt(u, tape.param(blk.w1)), tape.param(blk.b1));
    Var mlp = ad::add_row(ad::matmul_nt(ad::gelu(pre), tape.param(blk.w2)), tape.param(blk.b2));
    x = ad::add(u, mlp);
  }
  Var y = ad::add_row(ad::matmul_nt(x, tape.param(readout_w)), tape.param(readout_b));
  return ad::reshape(y, {k, output_dim()});
}

Var DecoderNet::decode(Tape& tape, Var z) {
  return ad::reshape(decode_rows(tape, ad::reshape(z, {1, latent_dim()})), {output_dim()});
}

Tensor DecoderNet::decode(const Tensor& z) {
  Tape tape(false);
  Var y = decode(tape, tape.constant(z));
  return y.value().reshaped({n_delays * chunk, state_dim});
}

DecoderNet::Linearization DecoderNet::linearize(Tape& tape, Var z) {
  const std::size_t m = latent_dim();
  if (z.value().size() != m) throw std::invalid_argument("decoder: latent dimension mismatch");
  Var x = ad::reshape(z, {n_delays, sub_latent});
  // Tangent stack: block k (n_d rows) is the unit direction e_k laid out as (n_d, l).
  Var tangent = tape.constant(Tensor::identity(m).reshaped({m * n_delays, sub_latent}));
  for (auto& blk : blocks) {
    Var u = x;
    Var tu = tangent;
    if (variant == DecoderVariant::conv) {
      Var mix = tape.param(blk.mix);
      u = ad::add_row(ad::depthwise_mix(x, mix, n_delays), tape.param(blk.mix_bias));
      tu = ad::depthwise_mix(tangent, mix, n_delays);
    }
    Var w1 = tape.param(blk.w1);
    Var w2 = tape.param(blk.w2);
    Var pre = ad::add_row(ad::matmul_nt(u, w1), tape.param(blk.b1));
    Var mlp = ad::add_row(ad::matmul_nt(ad::gelu(pre), w2), tape.param(blk.b2));
    x = ad::add(u, mlp);
    Var tpre = ad::mul(ad::matmul_nt(tu, w1), ad::tile_rows(ad::gelu_prime(pre), m));
    tangent = ad::add(tu, ad::matmul_nt(tpre, w2));
  }
  Var rw = tape.param(readout_w);
  Var y = ad::add_row(ad::matmul_nt(x, rw), tape.param(readout_b));
  Var ty = ad::matmul_nt(tangent, rw);
  return {ad::reshape(y, {output_dim()}), ad::reshape(ty, {m, output_dim()})};
}

Tensor DecoderNet::jacobian(const Tensor& z) {
  Tape tape(false);
  auto lin = linearize(tape, tape.constant(z));
  return lin.jacobian_t.value().transposed();
}

// ---- noise and prior -------------------------------------------------------------

namespace {

Var exp_plus_floor(Tape& tape, Parameter& p, double floor) {
  Var e = ad::exp(tape.param(p));
  Tensor f({p.value.size()}, floor);
  return ad::add(e, tape.constant(std::move(f)));
}

Tensor diag_exp(const Parameter& p, double floor) {
  const std::size_t n = p.value.size();
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i) out(i, i) = std::exp(p.value[i]) + floor;
  return out;
}

}  // namespace

Var NoiseParams::q_diag(Tape& tape) { return exp_plus_floor(tape, log_q, kFloor); }
Var NoiseParams::r_diag(Tape& tape) { return exp_plus_floor(tape, log_r, kFloor); }
Tensor NoiseParams::q_matrix() const { return diag_exp(log_q, kFloor); }
Tensor NoiseParams::r_matrix() const { return diag_exp(log_r, kFloor); }

Var LatentPrior::cov(Tape& tape) { return ad::diag(ad::exp(tape.param(log_s0))); }
Tensor LatentPrior::cov_matrix() const { return diag_exp(log_s0, 0.0); }

// ---- model -----------------------------------------------------------------------

KalikoModel::KalikoModel(const ModelConfig& cfg)
    : config(cfg), dynamics(cfg.n_delays, cfg.sub_latent) {
  if (cfg.chunk == 0 || cfg.state_dim == 0 || cfg.hidden == 0) throw std::invalid_argument("model: zero-sized config");
  std::mt19937_64 rng(cfg.seed);
  decoder = DecoderNet(cfg, rng);
  const std::size_t m = cfg.latent_dim(), p = cfg.measurement_dim(), l = cfg.sub_latent;
  // near-identity start: the newest slot copies itself with gain 0.99
  Tensor last({l, l});
  for (std::size_t i = 0; i < l; ++i) last(i, i) = 0.99;
  dynamics.set_block(cfg.n_delays - 1, last);

  noise.log_q = Parameter("noise.log_q", Tensor({m}, cfg.init_log_var));
  noise.log_r = Parameter("noise.log_r", Tensor({p}, cfg.init_log_var));
  if (cfg.fixed_prior) {
    prior.mu0 = Parameter("prior.mu0", Tensor({m}));
    prior.log_s0 = Parameter("prior.log_s0", Tensor({m}));
    prior.mu0.frozen = prior.log_s0.frozen = true;
  } else {
    prior.mu0 = Parameter("prior.mu0", Tensor({m}));
    prior.log_s0 = Parameter("prior.log_s0", Tensor({m}, cfg.init_log_var));
  }
  stats.mean.assign(cfg.state_dim, 0.0);
  stats.std.assign(cfg.state_dim, 1.0);
}

std::vector<Parameter*> KalikoModel::parameters() {
  std::vector<Parameter*> out{&dynamics.blocks};
  for (auto& b : decoder.blocks) {
    for (Parameter* p : {&b.mix, &b.mix_bias, &b.w1, &b.b1, &b.w2, &b.b2}) out.push_back(p);
  }
  out.push_back(&decoder.readout_w);
  out.push_back(&decoder.readout_b);
  out.push_back(&noise.log_q);
  out.push_back(&noise.log_r);
  out.push_back(&prior.mu0);
  out.push_back(&prior.log_s0);
  return out;
}

std::vector<const Parameter*> KalikoModel::parameters() const {
  auto ps = const_cast<KalikoModel*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

void KalikoModel::zero_grad() {
  for (Parameter* p : parameters()) {
    if (!p->grad.same_shape(p->value)) p->grad = Tensor(p->value.shape());
    p->zero_grad();
  }
}

// ---- chunking ----------------------------------------------------------------------

std::size_t chunk_count(std::size_t raw_length, const ChunkSpec& spec) {
  const std::size_t chunks = raw_length / spec.chunk;
  if (chunks < spec.n_delays) return 0;
  return chunks - spec.n_delays + 1;
}

Tensor chunk(const Tensor& states, const ChunkSpec& spec) {
  if (spec.chunk == 0 || spec.n_delays == 0) throw std::invalid_argument("chunk: empty chunk spec");
  const std::size_t len = states.rows(), n = states.cols();
  const std::size_t count = chunk_count(len, spec);
  if (count == 0)
    throw systems::InsufficientData("trajectory of length " + std::to_string(len) + " is shorter than one window of " +
                                    std::to_string(spec.window()) + " states");
  const std::size_t p = spec.window() * n;
  Tensor out({count, p});
  for (std::size_t t = 0; t < count; ++t)
    std::copy(states.data() + t * spec.chunk * n, states.data() + t * spec.chunk * n + p, out.data() + t * p);
  return out;
}

Tensor unchunk(const Tensor& windows, const ChunkSpec& spec, std::size_t state_dim) {
  const std::size_t count = windows.rows();
  const std::size_t p = spec.window() * state_dim;
  if (count == 0) return Tensor({0, state_dim});
  if (windows.size() != count * p) throw std::invalid_argument("unchunk: window size mismatch");
  const std::size_t len = (count + spec.n_delays - 1) * spec.chunk;
  Tensor sum({len, state_dim});
  std::vector<double> hits(len, 0.0);
  for (std::size_t t = 0; t < count; ++t) {
    const std::size_t start = t * spec.chunk;
    for (std::size_t r = 0; r < spec.window(); ++r) {
      hits[start + r] += 1.0;
      for (std::size_t i = 0; i < state_dim; ++i) sum(start + r, i) += windows[t * p + r * state_dim + i];
    }
  }
  for (std::size_t r = 0; r < len; ++r)
    for (std::size_t i = 0; i < state_dim; ++i) sum(r, i) /= hits[r];
  return sum;
}

// ---- checkpoints -------------------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'K', 'L', 'K', 'O'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const char* what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw CheckpointError(std::string("truncated checkpoint while reading ") + what);
  return v;
}

nlohmann::json trailer(const KalikoModel& m) {
  const auto& c = m.config;
  return {
      {"n_d", c.n_delays},
      {"l", c.sub_latent},
      {"c", c.chunk},
      {"n", c.state_dim},
      {"hidden", c.hidden},
      {"decoder_variant", to_string(c.decoder)},
      {"fixed_prior", c.fixed_prior},
      {"seed", c.seed},
      {"init_log_var", c.init_log_var},
      {"norm_mean", m.stats.mean},
      {"norm_std", m.stats.std},
      {"system", m.system},
      {"damping", m.damping},
      {"dt", m.dt},
      {"step", m.step},
  };
}

}  // namespace

void save_checkpoint(const KalikoModel& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot write checkpoint " + path.string());
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  const auto params = model.parameters();
  put<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    put<std::uint16_t>(os, static_cast<std::uint16_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put<std::uint8_t>(os, static_cast<std::uint8_t>(p->value.rank()));
    for (auto d : p->value.shape()) put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(p->value.data()), static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
  // full round-trip precision for the floating-point metadata
  os << trailer(model).dump(-1, ' ', false, nlohmann::json::error_handler_t::strict);
  if (!os) throw CheckpointError("failed writing checkpoint " + path.string());
}

KalikoModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError("bad checkpoint magic in " + path.string());
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto count = get<std::uint32_t>(is, "tensor count");
  std::map<std::string, Tensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint16_t>(is, "name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw CheckpointError("truncated checkpoint while reading tensor name");
    const auto rank = get<std::uint8_t>(is, "rank");
    std::vector<std::size_t> shape;
    for (std::uint8_t r = 0; r < rank; ++r) shape.push_back(get<std::uint32_t>(is, "dims"));
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!is) throw CheckpointError("truncated checkpoint while reading tensor '" + name + "'");
    tensors.emplace(std::move(name), std::move(t));
  }
  std::string rest((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(rest);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint trailer: ") + e.what());
  }
  KalikoModel model;
  try {
    ModelConfig cfg;
    cfg.n_delays = meta.at("n_d").get<std::size_t>();
    cfg.sub_latent = meta.at("l").get<std::size_t>();
    cfg.chunk = meta.at("c").get<std::size_t>();
    cfg.state_dim = meta.at("n").get<std::size_t>();
    cfg.hidden = meta.value("hidden", std::size_t{64});
    cfg.decoder = parse_decoder_variant(meta.at("decoder_variant").get<std::string>());
    cfg.fixed_prior = meta.value("fixed_prior", false);
    cfg.seed = meta.value("seed", std::uint64_t{0});
    cfg.init_log_var = meta.value("init_log_var", std::log(1e-2));
    model = KalikoModel(cfg);
    model.stats.mean = meta.at("norm_mean").get<std::vector<double>>();
    model.stats.std = meta.at("norm_std").get<std::vector<double>>();
    model.system = meta.value("system", std::string("vdp"));
    model.damping = meta.value("damping", 0.0);
    model.dt = meta.value("dt", 0.05);
    model.step = meta.value("step", std::int64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("incomplete checkpoint trailer: ") + e.what());
  }
  for (Parameter* p : model.parameters()) {
    auto it = tensors.find(p->name);
    if (it == tensors.end()) throw CheckpointError("checkpoint is missing tensor '" + p->name + "'");
    if (it->second.shape() != p->value.shape())
      throw CheckpointError("shape mismatch for '" + p->name + "': checkpoint " + shape_string(it->second.shape()) +
                            ", model " + shape_string(p->value.shape()));
    p->value = it->second;
    p->grad = Tensor(p->value.shape());
  }
  if (tensors.size() != model.parameters().size()) throw CheckpointError("checkpoint holds unexpected tensors");
  return model;
}

}  // namespace kaliko::model
