#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "chordgen/chroma.hpp"
#include "chordgen/midi.hpp"

namespace chordgen {

struct EmptyInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DegenerateData : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InsufficientClasses : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Whole-file chroma histogram with its key label.
struct KeyExample {
  ChromaHistogram histogram;
  int tonic_pc = 0;
  KeyMode mode = KeyMode::Major;
};

struct PcaModel {
  Eigen::VectorXd mean;            // 12
  Eigen::MatrixXd components;      // n_components x 12, orthonormal rows
  Eigen::VectorXd explained_variance; // descending

  int n_components() const { return static_cast<int>(components.rows()); }
};

/// One-vs-rest RBF-kernel soft-margin machines over the 12 major keys.
struct KernelClassifier {
  struct Machine {
    Eigen::MatrixXd support_vectors; // n_sv x dim
    Eigen::VectorXd dual_coef;       // alpha_i * y_i
    double bias = 0.0;
  };

  double gamma = 1.0;
  double c = 0.5;
  std::vector<Machine> machines; // 12, indexed by major tonic pc

  double decision_value(int cls, const Eigen::VectorXd& x) const;
};

struct SvmParams {
  double c = 0.5;
  double gamma = 1.0;
  bool balanced_class_weight = true;
  double kkt_tolerance = 1e-3;
  int max_passes = 10000;
  uint64_t seed = 1;
};

/// Balance and augment a labeled key set: every minor example is
/// duplicated six times with additive noise, every example is rotated
/// by an independent random semitone (labels rotated with it), and
/// minor labels are finally folded onto their relative major. Output
/// labels are all major tonics 0-11. Deterministic per seed.
std::vector<std::pair<ChromaHistogram, int>> augment_keyset(
    const std::vector<KeyExample>& examples, uint64_t seed);

PcaModel fit_pca(const std::vector<std::array<double, 12>>& rows, int n_components);
Eigen::VectorXd pca_transform(const PcaModel& m, const Eigen::VectorXd& x);
Eigen::VectorXd pca_inverse_transform(const PcaModel& m, const Eigen::VectorXd& y);

double rbf_kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double gamma);

/// Train 12 one-vs-rest machines with SMO-style pairwise dual updates.
/// Classes absent from y get a constant negative machine.
KernelClassifier train_kernel_classifier(const std::vector<Eigen::VectorXd>& x,
                                         const std::vector<int>& y, const SvmParams& params);

int predict_class(const KernelClassifier& clf, const Eigen::VectorXd& x);
int predict_key(const KernelClassifier& clf, const PcaModel& pca, const ChromaHistogram& h);

/// Trained key model with its PCA front end, persisted as a "KEYC"
/// container.
struct KeyModel {
  PcaModel pca;
  KernelClassifier classifier;

  int predict(const ChromaHistogram& h) const { return predict_key(classifier, pca, h); }
};

void save_key_model(const KeyModel& model, const std::string& path);
KeyModel load_key_model(const std::string& path);

struct KeyTrainOptions {
  int pca_components = 9;
  double test_fraction = 0.2;
  uint64_t seed = 1;
  SvmParams svm;
};

struct KeyTrainReport {
  KeyModel model;
  double train_accuracy = 0.0;
  double heldout_accuracy = 0.0;
  size_t train_examples = 0;
  size_t heldout_examples = 0;
};

/// Shuffle/split, augment the training split, fit PCA on it, train the
/// classifier, and evaluate. Held-out labels are compared after the
/// relative-major fold.
KeyTrainReport train_key_model(const std::vector<KeyExample>& examples,
                               const KeyTrainOptions& options);

/// Random diatonic histograms with tonic and dominant emphasis, half
/// major and half minor per key. Deterministic per seed.
std::vector<KeyExample> synthetic_key_corpus(int examples_per_key, uint64_t seed);

}  // namespace chordgen
