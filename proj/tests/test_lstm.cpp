#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "chordgen/binio.hpp"
#include "chordgen/lstm.hpp"
#include "chordgen/rng.hpp"
#include "test_util.hpp"

using namespace chordgen;
using namespace chordgen::testutil;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.seq_len = 4;
  c.hidden_dim = 8;
  c.seed = 11;
  return c;
}

Eigen::MatrixXd random_input(const ModelConfig& c, Rng& rng) {
  Eigen::MatrixXd x(c.seq_len, c.input_dim);
  for (int t = 0; t < c.seq_len; ++t) {
    x(t, 0) = rng.uniform_int(12) / 11.0;
    double total = 0.0;
    for (int j = 1; j < c.input_dim; ++j) {
      x(t, j) = rng.uniform();
      total += x(t, j);
    }
    for (int j = 1; j < c.input_dim; ++j) x(t, j) /= total;
  }
  return x;
}

Eigen::VectorXd random_target(Rng& rng) {
  Eigen::VectorXd t = Eigen::VectorXd::Zero(12);
  for (int bins = 0; bins < 3; ++bins) t(rng.uniform_int(12)) += 1.0;
  t /= t.sum();
  return t;
}

/// Central finite differences over every parameter, compared to the
/// analytic gradients at relative tolerance 1e-4.
void check_gradients(LstmModel model, const Eigen::MatrixXd& input, const Eigen::VectorXd& target,
                     bool training, uint64_t dropout_seed) {
  constexpr double kStep = 1e-5;
  constexpr double kTolerance = 1e-4;

  ForwardResult fwd = forward(model, input, training, dropout_seed);
  LstmParams analytic = backward(model, fwd.cache, target);

  auto params = model.params.tensors();
  auto grads = analytic.tensors();
  size_t checked = 0;
  for (size_t k = 0; k < params.size(); ++k) {
    for (Eigen::Index i = 0; i < params[k].size(); ++i) {
      double saved = params[k](i);
      params[k](i) = saved + kStep;
      double up = loss_msle(forward(model, input, training, dropout_seed).prediction, target);
      params[k](i) = saved - kStep;
      double down = loss_msle(forward(model, input, training, dropout_seed).prediction, target);
      params[k](i) = saved;

      double numeric = (up - down) / (2.0 * kStep);
      double analytic_value = grads[k](i);
      double denom = std::max(std::abs(numeric) + std::abs(analytic_value), 1e-6);
      double relative = std::abs(numeric - analytic_value) / denom;
      if (relative > kTolerance) {
        CAPTURE(k);
        CAPTURE(i);
        CAPTURE(numeric);
        CAPTURE(analytic_value);
        REQUIRE(relative <= kTolerance);
      }
      ++checked;
    }
  }
  CHECK(checked > 0);
}

std::vector<TrainingExample> toy_dataset(int songs, int notes_per_song) {
  std::vector<TrainingExample> dataset;
  std::vector<int> roots = {0, 0, 5, 5, 7, 7, 0, 0};
  std::vector<int> melody = {0, 4, 5, 9, 7, 11, 0, 7};
  for (int s = 0; s < songs; ++s)
    for (int i = 0; i < notes_per_song; ++i) {
      TrainingExample ex;
      ex.melody_pc = melody[static_cast<size_t>(i) % melody.size()];
      ex.chord = triad_histogram(roots[static_cast<size_t>(i) % roots.size()]);
      ex.song_start = i == 0;
      dataset.push_back(ex);
    }
  return dataset;
}

}  // namespace

TEST_CASE("zero-weight model predicts sigmoid(0) everywhere") {
  ModelConfig c = tiny_config();
  LstmModel model = init_model(c);
  for (auto& t : model.params.tensors()) t.setZero();

  Eigen::MatrixXd input = Eigen::MatrixXd::Random(c.seq_len, c.input_dim).cwiseAbs();
  ForwardResult fwd = forward(model, input, false, 0);
  for (int i = 0; i < 12; ++i) CHECK(fwd.prediction(i) == doctest::Approx(0.5).epsilon(1e-12));

  SUBCASE("predict_next normalizes to the uniform histogram") {
    std::vector<int> pcs = {0, 4, 7};
    std::vector<ChromaHistogram> chords(2);
    ChromaHistogram h = predict_next(model, pcs, chords);
    for (int i = 0; i < 12; ++i) CHECK(h[i] == doctest::Approx(1.0 / 12.0).epsilon(1e-12));
  }
}

TEST_CASE("inference is deterministic, dropout keyed by seed") {
  ModelConfig c = tiny_config();
  LstmModel model = init_model(c);
  Rng rng(5);
  Eigen::MatrixXd input = random_input(c, rng);

  Eigen::VectorXd a = forward(model, input, false, 1).prediction;
  Eigen::VectorXd b = forward(model, input, false, 2).prediction;
  CHECK((a.array() == b.array()).all());

  Eigen::VectorXd t1 = forward(model, input, true, 123).prediction;
  Eigen::VectorXd t1_again = forward(model, input, true, 123).prediction;
  Eigen::VectorXd t2 = forward(model, input, true, 124).prediction;
  CHECK((t1.array() == t1_again.array()).all());
  CHECK(!(t1.array() == t2.array()).all());
}

TEST_CASE("forward rejects mismatched input shapes") {
  LstmModel model = init_model(tiny_config());
  CHECK_THROWS_AS(forward(model, Eigen::MatrixXd::Zero(3, 13), false, 0), ShapeMismatch);
  CHECK_THROWS_AS(forward(model, Eigen::MatrixXd::Zero(4, 12), false, 0), ShapeMismatch);
}

TEST_CASE("msle matches hand-computed values") {
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(12);
  CHECK(loss_msle(zero, zero) == 0.0);

  Eigen::VectorXd pred = zero;
  pred(0) = 1.0;
  double expected = std::log(2.0) * std::log(2.0) / 12.0;
  CHECK(loss_msle(pred, zero) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(0.040034).epsilon(1e-4));

  Eigen::VectorXd negative = zero;
  negative(3) = -0.1;
  CHECK_THROWS_AS(loss_msle(negative, zero), NegativeInput);

  SUBCASE("identical vectors score zero") {
    Rng rng(9);
    Eigen::VectorXd p = random_target(rng);
    CHECK(loss_msle(p, p) == 0.0);
  }
}

TEST_CASE("msle never exceeds mse on non-negative pairs") {
  Rng rng(10);
  for (int trial = 0; trial < 1000; ++trial) {
    Eigen::VectorXd a(12), b(12);
    for (int i = 0; i < 12; ++i) {
      a(i) = rng.uniform() * 2.0;
      b(i) = rng.uniform() * 2.0;
    }
    double mse = (a - b).squaredNorm() / 12.0;
    CHECK(loss_msle(a, b) <= mse + 1e-12);
  }
}

TEST_CASE("analytic gradients match finite differences") {
  ModelConfig c = tiny_config();
  LstmModel model = init_model(c);
  Rng rng(12);
  Eigen::MatrixXd input = random_input(c, rng);
  Eigen::VectorXd target = random_target(rng);

  SUBCASE("inference graph (no dropout)") { check_gradients(model, input, target, false, 0); }
  SUBCASE("training graph with fixed dropout masks") {
    check_gradients(model, input, target, true, 321);
  }
}

TEST_CASE("gradient of the head bias vanishes at pred == target") {
  ModelConfig c = tiny_config();
  LstmModel model = init_model(c);
  Rng rng(14);
  Eigen::MatrixXd input = random_input(c, rng);
  ForwardResult fwd = forward(model, input, false, 0);
  LstmParams grads = backward(model, fwd.cache, fwd.prediction);
  CHECK(grads.head_bias.cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("an all-zero dropout mask blocks upstream gradients") {
  ModelConfig c = tiny_config();
  c.dropout_rate = 0.999999; // masks will be all zero with near certainty
  LstmModel model = init_model(c);
  Rng rng(15);
  Eigen::MatrixXd input = random_input(c, rng);
  Eigen::VectorXd target = random_target(rng);

  ForwardResult fwd = forward(model, input, true, 77);
  for (const auto& per_layer : fwd.cache.dropout_mask)
    for (const auto& mask : per_layer) REQUIRE(mask.cwiseAbs().maxCoeff() == 0.0);

  LstmParams grads = backward(model, fwd.cache, target);
  // Nothing below the head can influence the loss through zero masks.
  for (const LstmLayerWeights& layer : grads.layers) {
    CHECK(layer.w_input.cwiseAbs().maxCoeff() == 0.0);
    CHECK(layer.w_hidden.cwiseAbs().maxCoeff() == 0.0);
    CHECK(layer.bias.cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(grads.head_bias.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("adam first step moves parameters by about the learning rate") {
  ModelConfig c = tiny_config();
  LstmParams params = LstmParams::zeros(c);
  LstmParams grads = LstmParams::zeros(c);
  for (auto& t : grads.tensors()) t.setOnes();

  AdamState state = AdamState::zeros(c);
  adam_step(params, grads, state, 1e-4);
  for (const auto& t : params.tensors())
    for (Eigen::Index i = 0; i < t.size(); ++i)
      CHECK(t(i) == doctest::Approx(-1e-4).epsilon(1e-6));

  SUBCASE("zero gradient with zero state leaves parameters fixed") {
    LstmParams fresh = LstmParams::zeros(c);
    LstmParams no_grad = LstmParams::zeros(c);
    AdamState idle = AdamState::zeros(c);
    adam_step(fresh, no_grad, idle, 1e-4);
    for (const auto& t : fresh.tensors()) CHECK(t.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("adam is stateful: two steps differ from one double-sized step") {
  // Adam normalizes gradient magnitude, so two unit-gradient steps move
  // ~2*lr while a single step with the summed (doubled) gradient moves
  // only ~lr. A stateless linear update could not tell them apart.
  ModelConfig c = tiny_config();
  Rng rng(16);

  LstmParams grads = LstmParams::zeros(c);
  for (auto& t : grads.tensors())
    for (Eigen::Index i = 0; i < t.size(); ++i) t(i) = rng.uniform(-1.0, 1.0);
  LstmParams doubled_grads = grads;
  doubled_grads.scale(2.0);

  LstmParams twice = LstmParams::zeros(c);
  AdamState state_twice = AdamState::zeros(c);
  adam_step(twice, grads, state_twice, 1e-3);
  adam_step(twice, grads, state_twice, 1e-3);
  CHECK(state_twice.step == 2);

  LstmParams once = LstmParams::zeros(c);
  AdamState state_once = AdamState::zeros(c);
  adam_step(once, doubled_grads, state_once, 1e-3);

  double diff = 0.0;
  auto a = twice.tensors();
  auto b = once.tensors();
  for (size_t k = 0; k < a.size(); ++k) diff += (a[k] - b[k]).cwiseAbs().maxCoeff();
  CHECK(diff > 1e-9);
}

TEST_CASE("window construction matches a brute-force enumerator") {
  Rng rng(17);
  std::vector<TrainingExample> dataset;
  std::vector<size_t> song_lengths = {1, 3, 9, 12, 2};
  for (size_t len : song_lengths)
    for (size_t i = 0; i < len; ++i) {
      TrainingExample ex;
      ex.melody_pc = rng.uniform_int(12);
      ex.chord = triad_histogram(rng.uniform_int(12));
      ex.song_start = i == 0;
      dataset.push_back(ex);
    }

  const int seq_len = 8;
  auto windows = build_windows(dataset, seq_len);

  // Brute force: enumerate songs, then positions, then timesteps.
  size_t w = 0;
  size_t song_begin = 0;
  for (size_t len : song_lengths) {
    for (size_t p = 0; p < len; ++p) {
      REQUIRE(w < windows.size());
      const TrainingWindow& window = windows[w++];
      for (int t = 0; t < seq_len; ++t) {
        std::ptrdiff_t im = static_cast<std::ptrdiff_t>(p) - (seq_len - 1) + t;
        double expect_mel =
            im < 0 ? 0.0 : dataset[song_begin + static_cast<size_t>(im)].melody_pc / 11.0;
        CHECK(window.input(t, 0) == expect_mel);
        std::ptrdiff_t ic = static_cast<std::ptrdiff_t>(p) - seq_len + t;
        for (int j = 0; j < 12; ++j) {
          double expect_chord =
              ic < 0 ? 0.0 : dataset[song_begin + static_cast<size_t>(ic)].chord[j];
          CHECK(window.input(t, 1 + j) == expect_chord);
        }
      }
      for (int j = 0; j < 12; ++j) CHECK(window.target(j) == dataset[song_begin + p].chord[j]);
    }
    song_begin += len;
  }
  CHECK(w == windows.size()); // windows never cross song boundaries
}

TEST_CASE("train validates the dataset and epoch count") {
  ModelConfig c = tiny_config();
  c.seq_len = 8;

  SUBCASE("too-small dataset") {
    auto dataset = toy_dataset(3, 7); // every song shorter than seq_len
    CHECK_THROWS_AS(train(dataset, c, 1), DatasetTooSmall);
    CHECK_THROWS_AS(train({}, c, 1), DatasetTooSmall);
  }
  SUBCASE("songs of exactly seq_len examples are trainable") {
    auto dataset = toy_dataset(2, 8);
    CHECK_NOTHROW(train(dataset, c, 1));
  }
  SUBCASE("zero epochs returns the seeded initialization") {
    auto dataset = toy_dataset(2, 12);
    TrainResult result = train(dataset, c, 0);
    CHECK(result.loss_history.empty());
    CHECK(result.model.trained_epochs == 0);
    LstmModel fresh = init_model(c);
    auto a = result.model.params.tensors();
    auto b = fresh.params.tensors();
    for (size_t k = 0; k < a.size(); ++k) CHECK((a[k].array() == b[k].array()).all());
  }
}

TEST_CASE("training reduces loss and is bit-reproducible per seed") {
  ModelConfig c;
  c.seq_len = 8;
  c.hidden_dim = 16;
  c.learning_rate = 3e-3;
  c.seed = 4242;
  auto dataset = toy_dataset(6, 16);

  TrainResult first = train(dataset, c, 30);
  REQUIRE(first.loss_history.size() == 30);
  for (double loss : first.loss_history) {
    CHECK(std::isfinite(loss));
    CHECK(loss >= 0.0);
  }
  CHECK(first.loss_history.back() < first.loss_history.front());
  CHECK(first.model.trained_epochs == 30);

  SUBCASE("same seed, same history and weights") {
    TrainResult second = train(dataset, c, 30);
    CHECK(second.loss_history == first.loss_history);
    auto a = first.model.params.tensors();
    auto b = second.model.params.tensors();
    for (size_t k = 0; k < a.size(); ++k) CHECK((a[k].array() == b[k].array()).all());
  }
  SUBCASE("different seed diverges") {
    ModelConfig other = c;
    other.seed = 4243;
    TrainResult second = train(dataset, other, 30);
    CHECK(second.loss_history != first.loss_history);
  }
}

TEST_CASE("predict_next output is all-zero or sums to one") {
  ModelConfig c = tiny_config();
  LstmModel model = init_model(c);
  Rng rng(18);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<int> pcs(static_cast<size_t>(rng.uniform_int(10)));
    for (int& pc : pcs) pc = rng.uniform_int(12);
    std::vector<ChromaHistogram> chords(static_cast<size_t>(rng.uniform_int(10)));
    for (auto& h : chords) h = triad_histogram(rng.uniform_int(12));
    ChromaHistogram out = predict_next(model, pcs, chords);
    if (!out.is_zero()) CHECK(out.sum() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  namespace fs = std::filesystem;
  ModelConfig c = tiny_config();
  LstmModel model = init_model(c);
  fs::path path = fs::temp_directory_path() / "chordgen_ckpt_test.lstm";

  save_checkpoint(model, path.string());
  LstmModel loaded = load_checkpoint(path.string());

  CHECK(loaded.config.hidden_dim == c.hidden_dim);
  CHECK(loaded.config.seq_len == c.seq_len);
  CHECK(loaded.config.seed == c.seed);
  auto a = model.params.tensors();
  auto b = loaded.params.tensors();
  for (size_t k = 0; k < a.size(); ++k) CHECK((a[k].array() == b[k].array()).all());

  SUBCASE("a trained model predicts identically after reload") {
    auto dataset = toy_dataset(2, 12);
    ModelConfig tc = c;
    tc.seq_len = 8;
    TrainResult result = train(dataset, tc, 3);
    save_checkpoint(result.model, path.string());
    LstmModel restored = load_checkpoint(path.string());

    std::vector<int> pcs = {0, 4, 7, 0};
    std::vector<ChromaHistogram> chords = {triad_histogram(0), triad_histogram(5)};
    ChromaHistogram before = predict_next(result.model, pcs, chords);
    ChromaHistogram after = predict_next(restored, pcs, chords);
    CHECK(before == after);
  }
  SUBCASE("truncated checkpoint is rejected") {
    std::vector<uint8_t> bytes = read_file_bytes(path.string());
    bytes.resize(bytes.size() / 2);
    fs::path broken = fs::temp_directory_path() / "chordgen_ckpt_broken.lstm";
    write_file_atomic(broken.string(), bytes);
    CHECK_THROWS_AS(load_checkpoint(broken.string()), CorruptCheckpoint);
    fs::remove(broken);
  }
  SUBCASE("flipped payload byte fails the checksum") {
    std::vector<uint8_t> bytes = read_file_bytes(path.string());
    bytes[bytes.size() / 2] ^= 0x40;
    fs::path corrupt = fs::temp_directory_path() / "chordgen_ckpt_corrupt.lstm";
    write_file_atomic(corrupt.string(), bytes);
    CHECK_THROWS_AS(load_checkpoint(corrupt.string()), CorruptCheckpoint);
    fs::remove(corrupt);
  }
  fs::remove(path);
}
