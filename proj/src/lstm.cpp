#include "chordgen/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <zlib.h>

#include "chordgen/binio.hpp"
#include "chordgen/rng.hpp"

namespace chordgen {

namespace {

void validate_config(const ModelConfig& c) {
  if (c.seq_len < 1 || c.input_dim < 1 || c.hidden_dim < 1 || c.num_layers < 1 ||
      c.output_dim < 1 || c.batch_size < 1)
    throw std::invalid_argument("model config dimensions must be positive");
  if (c.dropout_rate < 0.0 || c.dropout_rate >= 1.0)
    throw std::invalid_argument("dropout rate must be in [0,1)");
}

int layer_input_dim(const ModelConfig& c, int layer) {
  return layer == 0 ? c.input_dim : c.hidden_dim;
}

double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

Eigen::VectorXd sigmoid(const Eigen::VectorXd& z) {
  return (1.0 / (1.0 + (-z.array()).exp())).matrix();
}

}  // namespace

LstmParams LstmParams::zeros(const ModelConfig& config) {
  LstmParams p;
  p.layers.resize(static_cast<size_t>(config.num_layers));
  for (int l = 0; l < config.num_layers; ++l) {
    LstmLayerWeights& w = p.layers[static_cast<size_t>(l)];
    w.w_input = Eigen::MatrixXd::Zero(4 * config.hidden_dim, layer_input_dim(config, l));
    w.w_hidden = Eigen::MatrixXd::Zero(4 * config.hidden_dim, config.hidden_dim);
    w.bias = Eigen::VectorXd::Zero(4 * config.hidden_dim);
  }
  p.head_weight = Eigen::MatrixXd::Zero(config.output_dim, config.hidden_dim);
  p.head_bias = Eigen::VectorXd::Zero(config.output_dim);
  return p;
}

std::vector<Eigen::Map<Eigen::VectorXd>> LstmParams::tensors() {
  std::vector<Eigen::Map<Eigen::VectorXd>> out;
  for (LstmLayerWeights& w : layers) {
    out.emplace_back(w.w_input.data(), w.w_input.size());
    out.emplace_back(w.w_hidden.data(), w.w_hidden.size());
    out.emplace_back(w.bias.data(), w.bias.size());
  }
  out.emplace_back(head_weight.data(), head_weight.size());
  out.emplace_back(head_bias.data(), head_bias.size());
  return out;
}

std::vector<Eigen::Map<const Eigen::VectorXd>> LstmParams::tensors() const {
  std::vector<Eigen::Map<const Eigen::VectorXd>> out;
  for (const LstmLayerWeights& w : layers) {
    out.emplace_back(w.w_input.data(), w.w_input.size());
    out.emplace_back(w.w_hidden.data(), w.w_hidden.size());
    out.emplace_back(w.bias.data(), w.bias.size());
  }
  out.emplace_back(head_weight.data(), head_weight.size());
  out.emplace_back(head_bias.data(), head_bias.size());
  return out;
}

void LstmParams::add_scaled(const LstmParams& other, double scale) {
  auto mine = tensors();
  auto theirs = other.tensors();
  for (size_t i = 0; i < mine.size(); ++i) mine[i] += scale * theirs[i];
}

void LstmParams::scale(double factor) {
  for (auto& t : tensors()) t *= factor;
}

LstmModel init_model(const ModelConfig& config) {
  validate_config(config);
  LstmModel model;
  model.config = config;
  model.params = LstmParams::zeros(config);

  // Init values are rounded to float32 so a fresh model survives the
  // single-precision checkpoint round trip bit-exactly.
  Rng rng(config.seed);
  auto fill_uniform = [&](Eigen::MatrixXd& m, int fan_in) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = round_f32(rng.uniform(-bound, bound));
  };

  for (int l = 0; l < config.num_layers; ++l) {
    LstmLayerWeights& w = model.params.layers[static_cast<size_t>(l)];
    fill_uniform(w.w_input, layer_input_dim(config, l));
    fill_uniform(w.w_hidden, config.hidden_dim);
    // Forget-gate bias starts at 1 so early gradients flow through time.
    w.bias.segment(config.hidden_dim, config.hidden_dim).setOnes();
  }
  fill_uniform(model.params.head_weight, config.hidden_dim);
  return model;
}

AdamState AdamState::zeros(const ModelConfig& config) {
  AdamState s;
  s.first_moment = LstmParams::zeros(config);
  s.second_moment = LstmParams::zeros(config);
  return s;
}

ForwardResult forward(const LstmModel& model, const Eigen::MatrixXd& input, bool training,
                      uint64_t dropout_seed) {
  const ModelConfig& cfg = model.config;
  if (input.rows() != cfg.seq_len || input.cols() != cfg.input_dim)
    throw ShapeMismatch("forward: input must be seq_len x input_dim");

  const int T = cfg.seq_len;
  const int L = cfg.num_layers;
  const int H = cfg.hidden_dim;
  const double keep_scale = training ? 1.0 / (1.0 - cfg.dropout_rate) : 1.0;

  ForwardCache cache;
  cache.input = input;
  cache.training = training;
  auto grid = [&](auto& field) {
    field.assign(static_cast<size_t>(L), std::vector<Eigen::VectorXd>(static_cast<size_t>(T)));
  };
  grid(cache.layer_input);
  grid(cache.gates);
  grid(cache.cell);
  grid(cache.cell_tanh);
  grid(cache.hidden);
  grid(cache.dropout_mask);

  Rng rng(dropout_seed);
  for (int l = 0; l < L; ++l) {
    for (int t = 0; t < T; ++t) {
      Eigen::VectorXd mask = Eigen::VectorXd::Ones(H);
      if (training && cfg.dropout_rate > 0.0) {
        for (int j = 0; j < H; ++j) mask(j) = rng.uniform() >= cfg.dropout_rate ? 1.0 : 0.0;
      }
      cache.dropout_mask[static_cast<size_t>(l)][static_cast<size_t>(t)] = std::move(mask);
    }
  }

  std::vector<Eigen::VectorXd> h_prev(static_cast<size_t>(L), Eigen::VectorXd::Zero(H));
  std::vector<Eigen::VectorXd> c_prev(static_cast<size_t>(L), Eigen::VectorXd::Zero(H));

  Eigen::VectorXd u;
  for (int t = 0; t < T; ++t) {
    u = input.row(t).transpose();
    for (int l = 0; l < L; ++l) {
      size_t li = static_cast<size_t>(l);
      size_t ti = static_cast<size_t>(t);
      const LstmLayerWeights& w = model.params.layers[li];

      Eigen::VectorXd z = w.w_input * u + w.w_hidden * h_prev[li] + w.bias;
      Eigen::VectorXd gates(4 * H);
      gates.segment(0, H) = sigmoid(z.segment(0, H));                    // input gate
      gates.segment(H, H) = sigmoid(z.segment(H, H));                    // forget gate
      gates.segment(2 * H, H) = z.segment(2 * H, H).array().tanh();      // candidate
      gates.segment(3 * H, H) = sigmoid(z.segment(3 * H, H));            // output gate

      Eigen::VectorXd c = gates.segment(H, H).cwiseProduct(c_prev[li]) +
                          gates.segment(0, H).cwiseProduct(gates.segment(2 * H, H));
      Eigen::VectorXd ct = c.array().tanh();
      Eigen::VectorXd h = gates.segment(3 * H, H).cwiseProduct(ct);

      cache.layer_input[li][ti] = u;
      cache.gates[li][ti] = std::move(gates);
      cache.cell[li][ti] = c;
      cache.cell_tanh[li][ti] = ct;
      cache.hidden[li][ti] = h;

      h_prev[li] = h;
      c_prev[li] = std::move(c);
      u = h.cwiseProduct(cache.dropout_mask[li][ti]) * keep_scale;
    }
  }

  cache.head_input = u; // dropped top-layer output at the final step
  Eigen::VectorXd z_head = model.params.head_weight * cache.head_input + model.params.head_bias;
  cache.prediction = sigmoid(z_head);
  if (!cache.prediction.allFinite()) throw NonFiniteActivation("non-finite model output");

  ForwardResult result;
  result.prediction = cache.prediction;
  result.cache = std::move(cache);
  return result;
}

double loss_msle(const Eigen::VectorXd& pred, const Eigen::VectorXd& target) {
  if (pred.size() != target.size()) throw ShapeMismatch("loss_msle: size mismatch");
  if ((pred.array() < 0.0).any() || (target.array() < 0.0).any())
    throw NegativeInput("loss_msle requires non-negative inputs");
  double total = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    double d = std::log1p(pred(i)) - std::log1p(target(i));
    total += d * d;
  }
  return total / static_cast<double>(pred.size());
}

LstmParams backward(const LstmModel& model, const ForwardCache& cache,
                    const Eigen::VectorXd& target) {
  const ModelConfig& cfg = model.config;
  if (target.size() != cfg.output_dim) throw ShapeMismatch("backward: bad target size");

  const int T = cfg.seq_len;
  const int L = cfg.num_layers;
  const int H = cfg.hidden_dim;
  const double keep_scale = cache.training ? 1.0 / (1.0 - cfg.dropout_rate) : 1.0;

  LstmParams grads = LstmParams::zeros(cfg);

  const Eigen::VectorXd& p = cache.prediction;
  Eigen::VectorXd dloss(cfg.output_dim);
  for (Eigen::Index i = 0; i < p.size(); ++i)
    dloss(i) = 2.0 / static_cast<double>(cfg.output_dim) *
               (std::log1p(p(i)) - std::log1p(target(i))) / (1.0 + p(i));
  Eigen::VectorXd dz_head = dloss.cwiseProduct(p.cwiseProduct(Eigen::VectorXd::Ones(p.size()) - p));

  grads.head_weight = dz_head * cache.head_input.transpose();
  grads.head_bias = dz_head;

  // dh flowing into each timestep of the layer being processed.
  std::vector<Eigen::VectorXd> dh_above(static_cast<size_t>(T), Eigen::VectorXd::Zero(H));
  {
    Eigen::VectorXd dh_dropped = model.params.head_weight.transpose() * dz_head;
    size_t top = static_cast<size_t>(L - 1);
    size_t last = static_cast<size_t>(T - 1);
    dh_above[last] = dh_dropped.cwiseProduct(cache.dropout_mask[top][last]) * keep_scale;
  }

  for (int l = L - 1; l >= 0; --l) {
    size_t li = static_cast<size_t>(l);
    const LstmLayerWeights& w = model.params.layers[li];
    LstmLayerWeights& gw = grads.layers[li];

    std::vector<Eigen::VectorXd> dh_below(static_cast<size_t>(T), Eigen::VectorXd::Zero(H));
    Eigen::VectorXd dh_rec = Eigen::VectorXd::Zero(H);
    Eigen::VectorXd dc_rec = Eigen::VectorXd::Zero(H);

    for (int t = T - 1; t >= 0; --t) {
      size_t ti = static_cast<size_t>(t);
      const Eigen::VectorXd& gates = cache.gates[li][ti];
      auto gate_i = gates.segment(0, H);
      auto gate_f = gates.segment(H, H);
      auto gate_g = gates.segment(2 * H, H);
      auto gate_o = gates.segment(3 * H, H);
      const Eigen::VectorXd& ct = cache.cell_tanh[li][ti];

      Eigen::VectorXd dh = dh_above[ti] + dh_rec;
      Eigen::VectorXd do_ = dh.cwiseProduct(ct);
      Eigen::VectorXd dc =
          dh.cwiseProduct(gate_o).cwiseProduct((1.0 - ct.array().square()).matrix()) + dc_rec;

      Eigen::VectorXd c_prev =
          t > 0 ? cache.cell[li][ti - 1] : Eigen::VectorXd::Zero(H);
      Eigen::VectorXd di = dc.cwiseProduct(gate_g);
      Eigen::VectorXd df = dc.cwiseProduct(c_prev);
      Eigen::VectorXd dg = dc.cwiseProduct(gate_i);

      Eigen::VectorXd dz(4 * H);
      dz.segment(0, H) =
          di.array() * gate_i.array() * (1.0 - gate_i.array());
      dz.segment(H, H) = df.array() * gate_f.array() * (1.0 - gate_f.array());
      dz.segment(2 * H, H) = dg.array() * (1.0 - gate_g.array().square());
      dz.segment(3 * H, H) = do_.array() * gate_o.array() * (1.0 - gate_o.array());

      gw.w_input.noalias() += dz * cache.layer_input[li][ti].transpose();
      if (t > 0) gw.w_hidden.noalias() += dz * cache.hidden[li][ti - 1].transpose();
      gw.bias += dz;

      dh_rec.noalias() = w.w_hidden.transpose() * dz;
      dc_rec = dc.cwiseProduct(gate_f);

      if (l > 0) {
        Eigen::VectorXd du = w.w_input.transpose() * dz;
        dh_below[ti] =
            du.cwiseProduct(cache.dropout_mask[static_cast<size_t>(l - 1)][ti]) * keep_scale;
      }
    }
    dh_above = std::move(dh_below);
  }
  return grads;
}

void adam_step(LstmParams& params, const LstmParams& grads, AdamState& state,
               double learning_rate) {
  state.step += 1;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

  auto tp = params.tensors();
  auto tg = grads.tensors();
  auto tm = state.first_moment.tensors();
  auto tv = state.second_moment.tensors();
  if (tp.size() != tg.size()) throw ShapeMismatch("adam_step: parameter/gradient mismatch");

  for (size_t k = 0; k < tp.size(); ++k) {
    if (tp[k].size() != tg[k].size()) throw ShapeMismatch("adam_step: tensor shape mismatch");
    tm[k] = state.beta1 * tm[k] + (1.0 - state.beta1) * tg[k];
    tv[k] = (state.beta2 * tv[k].array() + (1.0 - state.beta2) * tg[k].array().square()).matrix();
    Eigen::ArrayXd m_hat = tm[k].array() / bc1;
    Eigen::ArrayXd v_hat = tv[k].array() / bc2;
    tp[k].array() -= learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
  }
}

Eigen::MatrixXd make_model_input(std::span<const int> melody_pcs,
                                 std::span<const ChromaHistogram> chords,
                                 const ModelConfig& config) {
  const int T = config.seq_len;
  Eigen::MatrixXd input = Eigen::MatrixXd::Zero(T, config.input_dim);
  for (int t = 0; t < T; ++t) {
    std::ptrdiff_t im = static_cast<std::ptrdiff_t>(melody_pcs.size()) - T + t;
    if (im >= 0) input(t, 0) = static_cast<double>(melody_pcs[static_cast<size_t>(im)]) / 11.0;
    std::ptrdiff_t ic = static_cast<std::ptrdiff_t>(chords.size()) - T + t;
    if (ic >= 0)
      for (int j = 0; j < 12; ++j) input(t, 1 + j) = chords[static_cast<size_t>(ic)][j];
  }
  return input;
}

std::vector<TrainingWindow> build_windows(const std::vector<TrainingExample>& dataset,
                                          int seq_len) {
  std::vector<TrainingWindow> windows;
  windows.reserve(dataset.size());

  ModelConfig probe;
  probe.seq_len = seq_len;

  size_t song_begin = 0;
  while (song_begin < dataset.size()) {
    size_t song_end = song_begin + 1;
    while (song_end < dataset.size() && !dataset[song_end].song_start) ++song_end;

    std::vector<int> pcs;
    std::vector<ChromaHistogram> chords;
    pcs.reserve(song_end - song_begin);
    chords.reserve(song_end - song_begin);
    for (size_t i = song_begin; i < song_end; ++i) {
      pcs.push_back(dataset[i].melody_pc);
      chords.push_back(dataset[i].chord);
    }

    for (size_t p = 0; p < pcs.size(); ++p) {
      TrainingWindow w;
      w.input = make_model_input(std::span(pcs.data(), p + 1), std::span(chords.data(), p),
                                 probe);
      w.target = Eigen::VectorXd(12);
      for (int j = 0; j < 12; ++j) w.target(j) = chords[p][j];
      windows.push_back(std::move(w));
    }
    song_begin = song_end;
  }
  return windows;
}

TrainResult train(const std::vector<TrainingExample>& dataset, const ModelConfig& config,
                  int epochs) {
  validate_config(config);

  size_t longest_song = 0;
  size_t begin = 0;
  while (begin < dataset.size()) {
    size_t end = begin + 1;
    while (end < dataset.size() && !dataset[end].song_start) ++end;
    longest_song = std::max(longest_song, end - begin);
    begin = end;
  }
  if (longest_song < static_cast<size_t>(config.seq_len))
    throw DatasetTooSmall("need at least one song with seq_len or more examples");

  std::vector<TrainingWindow> windows = build_windows(dataset, config.seq_len);

  TrainResult result;
  result.model = init_model(config);
  AdamState adam = AdamState::zeros(config);
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ull);

  std::vector<size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[static_cast<size_t>(rng.uniform_int(static_cast<int>(i + 1)))]);

    double epoch_loss = 0.0;
    size_t pos = 0;
    while (pos < order.size()) {
      size_t batch_end = std::min(pos + static_cast<size_t>(config.batch_size), order.size());
      LstmParams grads = LstmParams::zeros(config);
      for (size_t k = pos; k < batch_end; ++k) {
        const TrainingWindow& w = windows[order[k]];
        ForwardResult fwd = forward(result.model, w.input, true, rng.fork_seed());
        epoch_loss += loss_msle(fwd.prediction, w.target);
        grads.add_scaled(backward(result.model, fwd.cache, w.target), 1.0);
      }
      grads.scale(1.0 / static_cast<double>(batch_end - pos));
      adam_step(result.model.params, grads, adam, config.learning_rate);
      pos = batch_end;
    }
    result.loss_history.push_back(epoch_loss / static_cast<double>(windows.size()));
  }

  // Checkpoints hold float32; round here so a trained model also
  // round-trips bit-exactly.
  for (auto& t : result.model.params.tensors())
    for (Eigen::Index i = 0; i < t.size(); ++i) t(i) = round_f32(t(i));
  result.model.trained_epochs += epochs;
  return result;
}

ChromaHistogram predict_next(const LstmModel& model, std::span<const int> melody_pcs,
                             std::span<const ChromaHistogram> chords) {
  Eigen::MatrixXd input = make_model_input(melody_pcs, chords, model.config);
  ForwardResult fwd = forward(model, input, false, 0);

  ChromaHistogram h;
  double total = fwd.prediction.sum();
  if (total < 1e-12) return h;
  for (int i = 0; i < 12; ++i) h[i] = fwd.prediction(i) / total;
  return h;
}

namespace {

constexpr char kCheckpointMagic[4] = {'L', 'S', 'T', 'M'};
constexpr uint16_t kCheckpointVersion = 1;

void write_tensor(ByteWriter& w, const Eigen::MatrixXd& m) {
  w.u32(2);
  w.u32(static_cast<uint32_t>(m.rows()));
  w.u32(static_cast<uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) w.f32(static_cast<float>(m(r, c)));
}

void write_tensor(ByteWriter& w, const Eigen::VectorXd& v) {
  w.u32(1);
  w.u32(static_cast<uint32_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) w.f32(static_cast<float>(v(i)));
}

void read_tensor(ByteReader& r, Eigen::MatrixXd& m) {
  if (r.u32() != 2) throw CorruptCheckpoint("expected rank-2 tensor");
  uint32_t rows = r.u32();
  uint32_t cols = r.u32();
  if (rows != m.rows() || cols != m.cols()) throw CorruptCheckpoint("tensor shape mismatch");
  for (uint32_t i = 0; i < rows; ++i)
    for (uint32_t j = 0; j < cols; ++j) m(i, j) = r.f32();
}

void read_tensor(ByteReader& r, Eigen::VectorXd& v) {
  if (r.u32() != 1) throw CorruptCheckpoint("expected rank-1 tensor");
  uint32_t n = r.u32();
  if (n != v.size()) throw CorruptCheckpoint("tensor shape mismatch");
  for (uint32_t i = 0; i < n; ++i) v(i) = r.f32();
}

uint32_t crc_of(const std::vector<uint8_t>& bytes, size_t length) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(length));
  return static_cast<uint32_t>(crc);
}

}  // namespace

void save_checkpoint(const LstmModel& model, const std::string& path) {
  ByteWriter w;
  w.magic(kCheckpointMagic);
  w.u16(kCheckpointVersion);
  const ModelConfig& c = model.config;
  w.u32(static_cast<uint32_t>(c.seq_len));
  w.u32(static_cast<uint32_t>(c.input_dim));
  w.u32(static_cast<uint32_t>(c.hidden_dim));
  w.u32(static_cast<uint32_t>(c.num_layers));
  w.u32(static_cast<uint32_t>(c.output_dim));
  w.u32(static_cast<uint32_t>(c.batch_size));
  w.f64(c.dropout_rate);
  w.f64(c.learning_rate);
  w.u32(static_cast<uint32_t>(c.seed & 0xFFFFFFFFull));
  w.u32(static_cast<uint32_t>(c.seed >> 32));
  w.u32(static_cast<uint32_t>(model.trained_epochs));

  for (const LstmLayerWeights& layer : model.params.layers) {
    write_tensor(w, layer.w_input);
    write_tensor(w, layer.w_hidden);
    write_tensor(w, layer.bias);
  }
  write_tensor(w, model.params.head_weight);
  write_tensor(w, model.params.head_bias);

  std::vector<uint8_t> bytes = w.bytes();
  uint32_t crc = crc_of(bytes, bytes.size());
  ByteWriter tail;
  tail.u32(crc);
  bytes.insert(bytes.end(), tail.bytes().begin(), tail.bytes().end());
  write_file_atomic(path, bytes);
}

LstmModel load_checkpoint(const std::string& path) {
  std::vector<uint8_t> bytes = read_file_bytes(path);
  if (bytes.size() < 10) throw CorruptCheckpoint("checkpoint too short");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw CorruptCheckpoint("not a checkpoint file");

  size_t body = bytes.size() - 4;
  uint32_t stored = static_cast<uint32_t>(bytes[body]) |
                    (static_cast<uint32_t>(bytes[body + 1]) << 8) |
                    (static_cast<uint32_t>(bytes[body + 2]) << 16) |
                    (static_cast<uint32_t>(bytes[body + 3]) << 24);
  if (crc_of(bytes, body) != stored) throw CorruptCheckpoint("checksum mismatch");

  try {
    ByteReader r(bytes.data(), body);
    r.expect_magic(kCheckpointMagic, "checkpoint");
    uint16_t version = r.u16();
    if (version != kCheckpointVersion)
      throw VersionMismatch("checkpoint version " + std::to_string(version));

    ModelConfig c;
    c.seq_len = static_cast<int>(r.u32());
    c.input_dim = static_cast<int>(r.u32());
    c.hidden_dim = static_cast<int>(r.u32());
    c.num_layers = static_cast<int>(r.u32());
    c.output_dim = static_cast<int>(r.u32());
    c.batch_size = static_cast<int>(r.u32());
    c.dropout_rate = r.f64();
    c.learning_rate = r.f64();
    uint64_t seed_lo = r.u32();
    uint64_t seed_hi = r.u32();
    c.seed = seed_lo | (seed_hi << 32);
    int trained_epochs = static_cast<int>(r.u32());
    validate_config(c);

    LstmModel model;
    model.config = c;
    model.params = LstmParams::zeros(c);
    model.trained_epochs = trained_epochs;
    for (LstmLayerWeights& layer : model.params.layers) {
      read_tensor(r, layer.w_input);
      read_tensor(r, layer.w_hidden);
      read_tensor(r, layer.bias);
    }
    read_tensor(r, model.params.head_weight);
    read_tensor(r, model.params.head_bias);
    if (!r.at_end()) throw CorruptCheckpoint("trailing bytes in checkpoint");
    return model;
  } catch (const IoError& e) {
    throw CorruptCheckpoint(e.what());
  } catch (const std::invalid_argument& e) {
    throw CorruptCheckpoint(e.what());
  }
}

}  // namespace chordgen
