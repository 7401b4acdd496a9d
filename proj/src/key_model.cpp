#include "chordgen/key_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "chordgen/binio.hpp"
#include "chordgen/rng.hpp"

namespace chordgen {

namespace {

constexpr double kAugmentNoiseMax = 0.02;

ChromaHistogram add_noise(const ChromaHistogram& h, Rng& rng) {
  ChromaHistogram out = h;
  for (double& v : out.values) v = std::max(0.0, v + rng.uniform(0.0, kAugmentNoiseMax));
  double total = out.sum();
  if (total > 0.0)
    for (double& v : out.values) v /= total;
  return out;
}

int relative_major(int minor_pc) { return (minor_pc + 3) % 12; }

}  // namespace

std::vector<std::pair<ChromaHistogram, int>> augment_keyset(
    const std::vector<KeyExample>& examples, uint64_t seed) {
  if (examples.empty()) throw EmptyInput("augment_keyset: no examples");

  Rng rng(seed);
  std::vector<std::pair<ChromaHistogram, int>> out;
  out.reserve(examples.size() * 2);

  auto emit = [&](const ChromaHistogram& h, int label_pc, KeyMode mode) {
    int rotation = rng.uniform_int(12);
    int label = (label_pc + rotation) % 12;
    if (mode == KeyMode::Minor) label = relative_major(label);
    out.emplace_back(transpose_histogram(h, rotation), label);
  };

  for (const KeyExample& ex : examples) {
    if (ex.mode == KeyMode::Minor) {
      emit(ex.histogram, ex.tonic_pc, ex.mode);
      for (int copy = 0; copy < 6; ++copy) emit(add_noise(ex.histogram, rng), ex.tonic_pc, ex.mode);
    } else {
      emit(ex.histogram, ex.tonic_pc, ex.mode);
    }
  }
  return out;
}

PcaModel fit_pca(const std::vector<std::array<double, 12>>& rows, int n_components) {
  const int n = static_cast<int>(rows.size());
  if (n_components < 1 || n_components > 12)
    throw std::invalid_argument("fit_pca: n_components must be in [1,12]");
  if (n <= n_components) throw std::invalid_argument("fit_pca: need more samples than components");

  Eigen::MatrixXd x(n, 12);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 12; ++j) x(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];

  Eigen::VectorXd mean = x.colwise().mean();
  Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw DegenerateData("fit_pca: eigensolver failed");
  Eigen::VectorXd eigenvalues = solver.eigenvalues(); // ascending
  if (eigenvalues(11) <= 1e-15) throw DegenerateData("fit_pca: zero variance in all directions");

  PcaModel model;
  model.mean = mean;
  model.components.resize(n_components, 12);
  model.explained_variance.resize(n_components);
  for (int k = 0; k < n_components; ++k) {
    Eigen::VectorXd comp = solver.eigenvectors().col(11 - k);
    // Sign convention: the largest-magnitude entry is positive.
    int argmax = 0;
    for (int j = 1; j < 12; ++j)
      if (std::abs(comp(j)) > std::abs(comp(argmax))) argmax = j;
    if (comp(argmax) < 0.0) comp = -comp;
    model.components.row(k) = comp.transpose();
    model.explained_variance(k) = std::max(0.0, eigenvalues(11 - k));
  }
  return model;
}

Eigen::VectorXd pca_transform(const PcaModel& m, const Eigen::VectorXd& x) {
  return m.components * (x - m.mean);
}

Eigen::VectorXd pca_inverse_transform(const PcaModel& m, const Eigen::VectorXd& y) {
  return m.components.transpose() * y + m.mean;
}

double rbf_kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double gamma) {
  return std::exp(-gamma * (a - b).squaredNorm());
}

namespace {

/// Platt-style SMO on one binary subproblem with per-example box
/// constraints. Kernel values come precomputed in `gram`.
class SmoSolver {
 public:
  SmoSolver(const Eigen::MatrixXd& gram, const std::vector<double>& y,
            const std::vector<double>& cap, double tol, int max_passes, Rng& rng)
      : gram_(gram), y_(y), cap_(cap), tol_(tol), max_passes_(max_passes), rng_(rng),
        n_(static_cast<int>(y.size())), alpha_(y.size(), 0.0), error_(y.size()) {
    for (int i = 0; i < n_; ++i) error_[static_cast<size_t>(i)] = -y_[static_cast<size_t>(i)];
  }

  void solve() {
    bool examine_all = true;
    int changed = 0;
    int passes = 0;
    while ((changed > 0 || examine_all) && passes < max_passes_) {
      changed = 0;
      for (int i = 0; i < n_; ++i) {
        if (!examine_all && !is_free(i)) continue;
        changed += examine(i);
      }
      if (examine_all)
        examine_all = false;
      else if (changed == 0)
        examine_all = true;
      ++passes;
    }
  }

  const std::vector<double>& alpha() const { return alpha_; }
  double bias() const { return bias_; }

 private:
  bool is_free(int i) const {
    size_t k = static_cast<size_t>(i);
    return alpha_[k] > 0.0 && alpha_[k] < cap_[k];
  }

  bool violates_kkt(int i) const {
    size_t k = static_cast<size_t>(i);
    double r = error_[k] * y_[k];
    return (r < -tol_ && alpha_[k] < cap_[k]) || (r > tol_ && alpha_[k] > 0.0);
  }

  int examine(int i2) {
    if (!violates_kkt(i2)) return 0;

    // Second-choice heuristic first, then sweeps from a random start.
    int best = -1;
    double best_gap = 0.0;
    for (int i = 0; i < n_; ++i) {
      if (!is_free(i)) continue;
      double gap = std::abs(error_[static_cast<size_t>(i)] - error_[static_cast<size_t>(i2)]);
      if (gap > best_gap) {
        best_gap = gap;
        best = i;
      }
    }
    if (best >= 0 && step(best, i2)) return 1;

    int start = rng_.uniform_int(n_);
    for (int k = 0; k < n_; ++k) {
      int i1 = (start + k) % n_;
      if (is_free(i1) && step(i1, i2)) return 1;
    }
    for (int k = 0; k < n_; ++k) {
      int i1 = (start + k) % n_;
      if (step(i1, i2)) return 1;
    }
    return 0;
  }

  bool step(int i1, int i2) {
    if (i1 == i2) return false;
    size_t a = static_cast<size_t>(i1);
    size_t b = static_cast<size_t>(i2);
    double alpha1 = alpha_[a], alpha2 = alpha_[b];
    double y1 = y_[a], y2 = y_[b];
    double e1 = error_[a], e2 = error_[b];
    double s = y1 * y2;

    double low, high;
    if (y1 != y2) {
      low = std::max(0.0, alpha2 - alpha1);
      high = std::min(cap_[b], cap_[a] + alpha2 - alpha1);
    } else {
      low = std::max(0.0, alpha1 + alpha2 - cap_[a]);
      high = std::min(cap_[b], alpha1 + alpha2);
    }
    if (low >= high) return false;

    double k11 = gram_(i1, i1), k22 = gram_(i2, i2), k12 = gram_(i1, i2);
    double eta = k11 + k22 - 2.0 * k12;
    if (eta <= 0.0) return false; // degenerate direction, let another pair move

    double alpha2_new = std::clamp(alpha2 + y2 * (e1 - e2) / eta, low, high);
    if (std::abs(alpha2_new - alpha2) < 1e-12 * (alpha2_new + alpha2 + 1e-12)) return false;
    double alpha1_new = alpha1 + s * (alpha2 - alpha2_new);

    double d1 = alpha1_new - alpha1;
    double d2 = alpha2_new - alpha2;
    double b1 = bias_ - e1 - y1 * d1 * k11 - y2 * d2 * k12;
    double b2 = bias_ - e2 - y1 * d1 * k12 - y2 * d2 * k22;
    double bias_new;
    if (alpha1_new > 0.0 && alpha1_new < cap_[a])
      bias_new = b1;
    else if (alpha2_new > 0.0 && alpha2_new < cap_[b])
      bias_new = b2;
    else
      bias_new = 0.5 * (b1 + b2);
    double delta_bias = bias_new - bias_;

    alpha_[a] = alpha1_new;
    alpha_[b] = alpha2_new;
    bias_ = bias_new;
    for (int k = 0; k < n_; ++k) {
      error_[static_cast<size_t>(k)] +=
          y1 * d1 * gram_(i1, k) + y2 * d2 * gram_(i2, k) + delta_bias;
    }
    return true;
  }

  const Eigen::MatrixXd& gram_;
  const std::vector<double>& y_;
  const std::vector<double>& cap_;
  double tol_;
  int max_passes_;
  Rng& rng_;
  int n_;
  std::vector<double> alpha_;
  std::vector<double> error_;
  double bias_ = 0.0;
};

}  // namespace

double KernelClassifier::decision_value(int cls, const Eigen::VectorXd& x) const {
  const Machine& m = machines[static_cast<size_t>(cls)];
  double v = m.bias;
  for (Eigen::Index i = 0; i < m.support_vectors.rows(); ++i)
    v += m.dual_coef(i) * rbf_kernel(m.support_vectors.row(i).transpose(), x, gamma);
  return v;
}

KernelClassifier train_kernel_classifier(const std::vector<Eigen::VectorXd>& x,
                                         const std::vector<int>& y, const SvmParams& params) {
  const int n = static_cast<int>(x.size());
  if (n == 0 || y.size() != x.size())
    throw std::invalid_argument("train_kernel_classifier: bad input sizes");
  if (std::set<int>(y.begin(), y.end()).size() < 2)
    throw InsufficientClasses("need at least 2 distinct labels");

  Eigen::MatrixXd gram(n, n);
  for (int i = 0; i < n; ++i) {
    gram(i, i) = 1.0;
    for (int j = i + 1; j < n; ++j) {
      double k = rbf_kernel(x[static_cast<size_t>(i)], x[static_cast<size_t>(j)], params.gamma);
      gram(i, j) = k;
      gram(j, i) = k;
    }
  }

  KernelClassifier clf;
  clf.gamma = params.gamma;
  clf.c = params.c;
  clf.machines.resize(12);

  Rng rng(params.seed);
  for (int cls = 0; cls < 12; ++cls) {
    int n_pos = static_cast<int>(std::count(y.begin(), y.end(), cls));
    int n_neg = n - n_pos;
    KernelClassifier::Machine& machine = clf.machines[static_cast<size_t>(cls)];
    if (n_pos == 0 || n_neg == 0) {
      machine.support_vectors.resize(0, x.front().size());
      machine.dual_coef.resize(0);
      machine.bias = n_pos == 0 ? -1.0 : 1.0;
      continue;
    }

    std::vector<double> ybin(static_cast<size_t>(n));
    std::vector<double> cap(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      bool pos = y[static_cast<size_t>(i)] == cls;
      ybin[static_cast<size_t>(i)] = pos ? 1.0 : -1.0;
      double weight = 1.0;
      if (params.balanced_class_weight)
        weight = static_cast<double>(n) / (2.0 * static_cast<double>(pos ? n_pos : n_neg));
      cap[static_cast<size_t>(i)] = params.c * weight;
    }

    SmoSolver solver(gram, ybin, cap, params.kkt_tolerance, params.max_passes, rng);
    solver.solve();

    std::vector<int> sv;
    for (int i = 0; i < n; ++i)
      if (solver.alpha()[static_cast<size_t>(i)] > 1e-12) sv.push_back(i);
    machine.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), x.front().size());
    machine.dual_coef.resize(static_cast<Eigen::Index>(sv.size()));
    for (size_t k = 0; k < sv.size(); ++k) {
      machine.support_vectors.row(static_cast<Eigen::Index>(k)) =
          x[static_cast<size_t>(sv[k])].transpose();
      machine.dual_coef(static_cast<Eigen::Index>(k)) =
          solver.alpha()[static_cast<size_t>(sv[k])] * ybin[static_cast<size_t>(sv[k])];
    }
    machine.bias = solver.bias();
  }
  return clf;
}

int predict_class(const KernelClassifier& clf, const Eigen::VectorXd& x) {
  int best = 0;
  double best_value = clf.decision_value(0, x);
  for (int cls = 1; cls < 12; ++cls) {
    double v = clf.decision_value(cls, x);
    if (v > best_value) { // strict: ties break toward the lowest index
      best_value = v;
      best = cls;
    }
  }
  return best;
}

int predict_key(const KernelClassifier& clf, const PcaModel& pca, const ChromaHistogram& h) {
  Eigen::VectorXd x(12);
  for (int i = 0; i < 12; ++i) x(i) = h[i];
  return predict_class(clf, pca_transform(pca, x));
}

namespace {

constexpr char kKeyMagic[4] = {'K', 'E', 'Y', 'C'};
constexpr uint16_t kKeyVersion = 1;

void write_vector(ByteWriter& w, const Eigen::VectorXd& v) {
  w.u32(static_cast<uint32_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) w.f64(v(i));
}

void write_matrix(ByteWriter& w, const Eigen::MatrixXd& m) {
  w.u32(static_cast<uint32_t>(m.rows()));
  w.u32(static_cast<uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) w.f64(m(i, j));
}

Eigen::VectorXd read_vector(ByteReader& r) {
  uint32_t n = r.u32();
  Eigen::VectorXd v(n);
  for (uint32_t i = 0; i < n; ++i) v(i) = r.f64();
  return v;
}

Eigen::MatrixXd read_matrix(ByteReader& r) {
  uint32_t rows = r.u32();
  uint32_t cols = r.u32();
  Eigen::MatrixXd m(rows, cols);
  for (uint32_t i = 0; i < rows; ++i)
    for (uint32_t j = 0; j < cols; ++j) m(i, j) = r.f64();
  return m;
}

}  // namespace

void save_key_model(const KeyModel& model, const std::string& path) {
  ByteWriter w;
  w.magic(kKeyMagic);
  w.u16(kKeyVersion);
  w.u32(static_cast<uint32_t>(model.pca.n_components()));
  write_vector(w, model.pca.mean);
  write_matrix(w, model.pca.components);
  write_vector(w, model.pca.explained_variance);
  w.f64(model.classifier.gamma);
  w.f64(model.classifier.c);
  w.u32(static_cast<uint32_t>(model.classifier.machines.size()));
  for (const auto& machine : model.classifier.machines) {
    write_matrix(w, machine.support_vectors);
    write_vector(w, machine.dual_coef);
    w.f64(machine.bias);
  }
  write_file_atomic(path, w.bytes());
}

KeyModel load_key_model(const std::string& path) {
  std::vector<uint8_t> bytes = read_file_bytes(path);
  ByteReader r(bytes);
  r.expect_magic(kKeyMagic, "key model");
  uint16_t version = r.u16();
  if (version != kKeyVersion)
    throw IoError("unsupported key model version " + std::to_string(version));

  KeyModel model;
  uint32_t n_components = r.u32();
  model.pca.mean = read_vector(r);
  model.pca.components = read_matrix(r);
  model.pca.explained_variance = read_vector(r);
  if (model.pca.components.rows() != n_components || model.pca.mean.size() != 12)
    throw IoError("inconsistent key model dimensions");
  model.classifier.gamma = r.f64();
  model.classifier.c = r.f64();
  uint32_t n_classes = r.u32();
  if (n_classes != 12) throw IoError("key model must have 12 classes");
  model.classifier.machines.resize(n_classes);
  for (auto& machine : model.classifier.machines) {
    machine.support_vectors = read_matrix(r);
    machine.dual_coef = read_vector(r);
    machine.bias = r.f64();
  }
  return model;
}

KeyTrainReport train_key_model(const std::vector<KeyExample>& examples,
                               const KeyTrainOptions& options) {
  if (examples.empty()) throw EmptyInput("train_key_model: no examples");

  Rng rng(options.seed);
  std::vector<size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  for (size_t i = order.size() - 1; i > 0; --i)
    std::swap(order[i], order[static_cast<size_t>(rng.uniform_int(static_cast<int>(i + 1)))]);

  size_t heldout = static_cast<size_t>(
      std::llround(options.test_fraction * static_cast<double>(examples.size())));
  heldout = std::min(heldout, examples.size() - 1);

  std::vector<KeyExample> train_split;
  std::vector<KeyExample> test_split;
  for (size_t i = 0; i < order.size(); ++i)
    (i < heldout ? test_split : train_split).push_back(examples[order[i]]);

  auto augmented = augment_keyset(train_split, rng.fork_seed());

  std::vector<std::array<double, 12>> rows;
  rows.reserve(augmented.size());
  for (const auto& [hist, label] : augmented) rows.push_back(hist.values);

  KeyTrainReport report;
  report.model.pca = fit_pca(rows, options.pca_components);

  std::vector<Eigen::VectorXd> projected;
  std::vector<int> labels;
  projected.reserve(augmented.size());
  for (const auto& [hist, label] : augmented) {
    Eigen::VectorXd x(12);
    for (int i = 0; i < 12; ++i) x(i) = hist[i];
    projected.push_back(pca_transform(report.model.pca, x));
    labels.push_back(label);
  }

  SvmParams svm = options.svm;
  svm.seed = rng.fork_seed();
  report.model.classifier = train_kernel_classifier(projected, labels, svm);

  size_t correct = 0;
  for (size_t i = 0; i < projected.size(); ++i)
    if (predict_class(report.model.classifier, projected[i]) == labels[i]) ++correct;
  report.train_examples = projected.size();
  report.train_accuracy =
      projected.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(projected.size());

  correct = 0;
  for (const KeyExample& ex : test_split) {
    int truth = ex.mode == KeyMode::Minor ? relative_major(ex.tonic_pc) : ex.tonic_pc;
    if (report.model.predict(ex.histogram) == truth) ++correct;
  }
  report.heldout_examples = test_split.size();
  report.heldout_accuracy =
      test_split.empty() ? 0.0
                         : static_cast<double>(correct) / static_cast<double>(test_split.size());
  return report;
}

std::vector<KeyExample> synthetic_key_corpus(int examples_per_key, uint64_t seed) {
  // Scale-degree weights, tonic and dominant emphasized.
  constexpr std::array<std::pair<int, double>, 7> kMajorProfile = {
      {{0, 4.0}, {2, 1.0}, {4, 1.5}, {5, 1.0}, {7, 2.5}, {9, 1.0}, {11, 0.75}}};
  constexpr std::array<std::pair<int, double>, 7> kMinorProfile = {
      {{0, 4.0}, {2, 1.0}, {3, 1.5}, {5, 1.0}, {7, 2.5}, {8, 1.0}, {10, 0.75}}};

  Rng rng(seed);
  std::vector<KeyExample> corpus;
  corpus.reserve(static_cast<size_t>(examples_per_key) * 12);
  for (int key = 0; key < 12; ++key) {
    for (int i = 0; i < examples_per_key; ++i) {
      bool minor = (i % 2) == 1;
      int tonic = minor ? (key + 9) % 12 : key;
      const auto& profile = minor ? kMinorProfile : kMajorProfile;

      double total_weight = 0.0;
      for (const auto& [deg, w] : profile) total_weight += w;

      int n_notes = 48 + rng.uniform_int(33);
      ChromaHistogram h;
      for (int note = 0; note < n_notes; ++note) {
        double pick = rng.uniform(0.0, total_weight);
        for (const auto& [deg, w] : profile) {
          pick -= w;
          if (pick <= 0.0) {
            h[(tonic + deg) % 12] += 1.0;
            break;
          }
        }
      }
      for (double& v : h.values) v /= static_cast<double>(n_notes);
      corpus.push_back(KeyExample{h, tonic, minor ? KeyMode::Minor : KeyMode::Major});
    }
  }
  return corpus;
}

}  // namespace chordgen
