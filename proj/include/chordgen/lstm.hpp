#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "chordgen/chroma.hpp"
#include "chordgen/dataset.hpp"

namespace chordgen {

struct ShapeMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct NonFiniteActivation : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NegativeInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DatasetTooSmall : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct VersionMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CorruptCheckpoint : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  int seq_len = 8;
  int input_dim = 13;
  int hidden_dim = 64;
  int num_layers = 3;
  double dropout_rate = 0.5;
  int output_dim = 12;
  double learning_rate = 1e-4;
  int batch_size = 64;
  uint64_t seed = 1;
};

/// Weights of one LSTM layer with the four gates stacked row-wise in
/// the order input, forget, cell candidate, output. Row block g*h..
/// (g+1)*h belongs to gate g.
struct LstmLayerWeights {
  Eigen::MatrixXd w_input;  // 4*hidden x in_dim
  Eigen::MatrixXd w_hidden; // 4*hidden x hidden
  Eigen::VectorXd bias;     // 4*hidden
};

/// All trainable tensors; shared shape for weights, gradients and the
/// Adam moment accumulators.
struct LstmParams {
  std::vector<LstmLayerWeights> layers;
  Eigen::MatrixXd head_weight; // output_dim x hidden
  Eigen::VectorXd head_bias;   // output_dim

  static LstmParams zeros(const ModelConfig& config);
  void add_scaled(const LstmParams& other, double scale);
  void scale(double factor);
  /// Flat views over every tensor, in a fixed order.
  std::vector<Eigen::Map<Eigen::VectorXd>> tensors();
  std::vector<Eigen::Map<const Eigen::VectorXd>> tensors() const;
};

struct LstmModel {
  ModelConfig config;
  LstmParams params;
  int trained_epochs = 0;
};

/// Seeded initialization: weights uniform in +-1/sqrt(fan_in) (rounded
/// to float32 so checkpoints round-trip bit-exactly), biases zero with
/// the forget gate at 1.
LstmModel init_model(const ModelConfig& config);

struct AdamState {
  LstmParams first_moment;
  LstmParams second_moment;
  int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState zeros(const ModelConfig& config);
};

/// Everything backward needs from a forward pass.
struct ForwardCache {
  Eigen::MatrixXd input; // seq_len x input_dim
  bool training = false;
  // indexed [layer][t]
  std::vector<std::vector<Eigen::VectorXd>> layer_input; // what the layer saw
  std::vector<std::vector<Eigen::VectorXd>> gates;       // stacked post-activation, 4*hidden
  std::vector<std::vector<Eigen::VectorXd>> cell;
  std::vector<std::vector<Eigen::VectorXd>> cell_tanh;
  std::vector<std::vector<Eigen::VectorXd>> hidden; // pre-dropout
  std::vector<std::vector<Eigen::VectorXd>> dropout_mask;
  Eigen::VectorXd head_input;
  Eigen::VectorXd prediction;
};

struct ForwardResult {
  Eigen::VectorXd prediction; // sigmoid outputs in (0,1)
  ForwardCache cache;
};

/// Run the stacked recurrence from zero state. Inverted dropout is
/// applied to each layer's output where it feeds the layer above (or
/// the dense head), training only, deterministic per seed.
ForwardResult forward(const LstmModel& model, const Eigen::MatrixXd& input, bool training,
                      uint64_t dropout_seed);

/// Mean over bins of (ln(1+pred) - ln(1+target))^2.
double loss_msle(const Eigen::VectorXd& pred, const Eigen::VectorXd& target);

/// Exact MSLE gradients via backpropagation through time.
LstmParams backward(const LstmModel& model, const ForwardCache& cache,
                    const Eigen::VectorXd& target);

void adam_step(LstmParams& params, const LstmParams& grads, AdamState& state,
               double learning_rate);

/// One training window: (seq_len x 13) input and its 12-bin target.
struct TrainingWindow {
  Eigen::MatrixXd input;
  Eigen::VectorXd target;
};

/// Sliding windows per song, never crossing song boundaries, left
/// zero-padded for the first positions.
std::vector<TrainingWindow> build_windows(const std::vector<TrainingExample>& dataset,
                                          int seq_len);

/// Timestep t carries the melody scalar for note n-seq_len+1+t and the
/// chord for position n-seq_len+t; short contexts are left zero-padded.
Eigen::MatrixXd make_model_input(std::span<const int> melody_pcs,
                                 std::span<const ChromaHistogram> chords,
                                 const ModelConfig& config);

struct TrainResult {
  LstmModel model;
  std::vector<double> loss_history; // mean MSLE per epoch
};

TrainResult train(const std::vector<TrainingExample>& dataset, const ModelConfig& config,
                  int epochs);

/// Inference: forward without dropout, then L1-normalize the sigmoid
/// outputs (an all-sub-epsilon output maps to all-zero).
ChromaHistogram predict_next(const LstmModel& model, std::span<const int> melody_pcs,
                             std::span<const ChromaHistogram> chords);

void save_checkpoint(const LstmModel& model, const std::string& path);
LstmModel load_checkpoint(const std::string& path);

}  // namespace chordgen
