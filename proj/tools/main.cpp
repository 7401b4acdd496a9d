#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "chordgen/binio.hpp"
#include "chordgen/dataset.hpp"
#include "chordgen/harmonizer.hpp"
#include "chordgen/key_model.hpp"
#include "chordgen/lstm.hpp"
#include "chordgen/midi.hpp"

namespace {

using namespace chordgen;

std::optional<int> parse_tonic(std::string text) {
  std::transform(text.begin(), text.end(), text.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  static const std::vector<std::pair<std::string, int>> names = {
      {"c", 0},  {"c#", 1}, {"db", 1}, {"d", 2},  {"d#", 3}, {"eb", 3},
      {"e", 4},  {"f", 5},  {"f#", 6}, {"gb", 6}, {"g", 7},  {"g#", 8},
      {"ab", 8}, {"a", 9},  {"a#", 10}, {"bb", 10}, {"b", 11}};
  for (const auto& [name, pc] : names)
    if (text == name) return pc;
  try {
    size_t used = 0;
    int value = std::stoi(text, &used);
    if (used == text.size() && value >= 0 && value <= 11) return value;
  } catch (const std::exception&) {
  }
  return std::nullopt;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

struct BuildDatasetArgs {
  std::string corpus;
  std::string out;
  std::string key_model;
  double overlap_threshold = 0.2;
  double prune_threshold = 0.1;
};

int run_build_dataset(const BuildDatasetArgs& args) {
  if (!std::filesystem::is_directory(args.corpus)) {
    std::cerr << "error: corpus directory not found: " << args.corpus << "\n";
    return 1;
  }
  std::optional<KeyModel> key_model;
  if (!args.key_model.empty()) key_model = load_key_model(args.key_model);

  DatasetBuildConfig config;
  config.overlap_threshold = args.overlap_threshold;
  config.prune_threshold = args.prune_threshold;
  CorpusStats stats =
      build_dataset(args.corpus, key_model ? &*key_model : nullptr, config, args.out);
  std::cout << stats.summary();
  return 0;
}

struct TrainKeyArgs {
  std::string corpus;
  bool synthetic = false;
  int examples_per_key = 100;
  std::string out;
  int pca_components = 9;
  double test_fraction = 0.2;
  uint64_t seed = 1;
};

int run_train_key(const TrainKeyArgs& args) {
  std::vector<KeyExample> examples;
  if (args.synthetic) {
    examples = synthetic_key_corpus(args.examples_per_key, args.seed);
  } else {
    if (!std::filesystem::is_directory(args.corpus)) {
      std::cerr << "error: corpus directory not found: " << args.corpus << "\n";
      return 1;
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(args.corpus)) {
      if (!entry.is_regular_file()) continue;
      std::string ext = entry.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      if (ext == ".mid" || ext == ".midi") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& path : files) {
      MidiSong song;
      try {
        song = read_midi_file(path.string());
      } catch (const std::runtime_error&) {
        continue;
      }
      if (song.key_events.empty()) continue;
      const KeySignature& first = song.key_events.front();
      // The default C-major-at-zero meta event is too often wrong.
      if (first.mode == KeyMode::Major && first.tonic_pc == 0 && first.tick == 0) continue;
      ChromaHistogram h = whole_file_histogram(song);
      if (h.is_zero()) continue;
      examples.push_back(KeyExample{h, first.tonic_pc, first.mode});
    }
    if (examples.empty()) {
      std::cerr << "error: no usable key-labeled files under " << args.corpus << "\n";
      return 1;
    }
  }

  KeyTrainOptions options;
  options.pca_components = args.pca_components;
  options.test_fraction = args.test_fraction;
  options.seed = args.seed;
  KeyTrainReport report = train_key_model(examples, options);
  save_key_model(report.model, args.out);
  std::cout << "train_examples=" << report.train_examples << "\n"
            << "heldout_examples=" << report.heldout_examples << "\n"
            << "train_accuracy=" << format_double(report.train_accuracy) << "\n"
            << "heldout_accuracy=" << format_double(report.heldout_accuracy) << "\n";
  return 0;
}

struct TrainArgs {
  std::string dataset;
  std::string out;
  std::string log;
  int epochs = 50;
  int hidden = 64;
  int seq_len = 8;
  int batch = 64;
  double learning_rate = 1e-4;
  double dropout = 0.5;
  uint64_t seed = 1;
};

int run_train(const TrainArgs& args) {
  std::vector<TrainingExample> dataset = read_dataset_file(args.dataset);

  ModelConfig config;
  config.seq_len = args.seq_len;
  config.hidden_dim = args.hidden;
  config.batch_size = args.batch;
  config.learning_rate = args.learning_rate;
  config.dropout_rate = args.dropout;
  config.seed = args.seed;

  TrainResult result = train(dataset, config, args.epochs);
  save_checkpoint(result.model, args.out);

  std::ostringstream log;
  for (size_t i = 0; i < result.loss_history.size(); ++i)
    log << i + 1 << "," << format_double(result.loss_history[i]) << "\n";
  std::string log_path = args.log.empty() ? args.out + ".log" : args.log;
  write_file_atomic(log_path, log.str());
  std::cout << log.str();
  return 0;
}

struct GenerateArgs {
  std::string melody;
  std::string model;
  std::string out;
  std::string tonic;
  double threshold = 0.14;
  double overlap_threshold = 0.2;
};

int run_generate(const GenerateArgs& args) {
  std::optional<int> tonic = parse_tonic(args.tonic);
  if (!tonic) {
    std::cerr << "error: --tonic must be 0-11 or a note name C..B (got '" << args.tonic
              << "')\n";
    return 1;
  }
  LstmModel model = load_checkpoint(args.model);
  GenerationConfig config;
  config.tonic_pc = *tonic;
  config.voicing_threshold = args.threshold;
  config.overlap_threshold = args.overlap_threshold;

  GenerationResult result = generate_file(args.melody, config, model, args.out);
  size_t voiced = 0;
  for (const auto& chord : result.chords)
    if (chord) ++voiced;
  std::cout << "melody_notes=" << result.chords.size() << "\n"
            << "voiced_chords=" << voiced << "\n";
  return 0;
}

struct BenchArgs {
  std::string model;
  int trials = 200;
  uint64_t seed = 1;
};

int run_bench(const BenchArgs& args) {
  if (args.trials < 30) {
    std::cerr << "error: --trials must be at least 30\n";
    return 1;
  }
  LstmModel model = load_checkpoint(args.model);
  LatencyReport report = measure_latency(model, args.trials, args.seed);
  std::cout << "mean_ms=" << format_double(report.mean_ms) << "\n"
            << "p95_ms=" << format_double(report.p95_ms) << "\n"
            << "max_ms=" << format_double(report.max_ms) << "\n"
            << "trials=" << report.trials << "\n";
  return report.mean_ms < 80.0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chordgen: chroma-histogram chord generation for symbolic melodies"};
  app.require_subcommand(1);

  int exit_code = 0;

  BuildDatasetArgs build_args;
  CLI::App* build = app.add_subcommand(
      "build-dataset", "Extract (melody, chord histogram) examples from a MIDI corpus");
  build->set_config("--config");
  build->add_option("--corpus", build_args.corpus, "Directory of .mid/.midi files")->required();
  build->add_option("--out", build_args.out, "Output dataset path")->required();
  build->add_option("--key-model", build_args.key_model,
                    "Key classifier for files without key metadata");
  build->add_option("--overlap-threshold", build_args.overlap_threshold,
                    "Max note overlap for melody candidates");
  build->add_option("--prune-threshold", build_args.prune_threshold,
                    "Bin tolerance for similar adjacent chord removal");
  build->callback([&]() { exit_code = run_build_dataset(build_args); });

  TrainKeyArgs key_args;
  CLI::App* train_key = app.add_subcommand("train-key", "Train the 12-key classifier");
  train_key->set_config("--config");
  CLI::Option* key_corpus =
      train_key->add_option("--corpus", key_args.corpus, "Directory of key-labeled MIDI files");
  train_key->add_flag("--synthetic", key_args.synthetic, "Generate a synthetic diatonic corpus")
      ->excludes(key_corpus);
  train_key->add_option("--examples-per-key", key_args.examples_per_key,
                        "Synthetic corpus size per key");
  train_key->add_option("--out", key_args.out, "Output key model path")->required();
  train_key->add_option("--pca-components", key_args.pca_components, "PCA dimensions (1-12)");
  train_key->add_option("--test-fraction", key_args.test_fraction, "Held-out fraction");
  train_key->add_option("--seed", key_args.seed, "Random seed");
  train_key->callback([&]() {
    if (!key_args.synthetic && key_args.corpus.empty())
      throw CLI::RequiredError("--corpus or --synthetic");
    exit_code = run_train_key(key_args);
  });

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "Train the chord generation model");
  train_cmd->set_config("--config");
  train_cmd->add_option("--dataset", train_args.dataset, "Dataset file from build-dataset")
      ->required();
  train_cmd->add_option("--out", train_args.out, "Output checkpoint path")->required();
  train_cmd->add_option("--log", train_args.log, "Loss log path (default: <out>.log)");
  train_cmd->add_option("--epochs", train_args.epochs, "Training epochs");
  train_cmd->add_option("--hidden", train_args.hidden, "Hidden units per LSTM layer");
  train_cmd->add_option("--seq-len", train_args.seq_len, "Input sequence length");
  train_cmd->add_option("--batch", train_args.batch, "Mini-batch size");
  train_cmd->add_option("--lr", train_args.learning_rate, "Learning rate");
  train_cmd->add_option("--dropout", train_args.dropout, "Dropout rate in [0,1)");
  train_cmd->add_option("--seed", train_args.seed, "Random seed");
  train_cmd->callback([&]() { exit_code = run_train(train_args); });

  GenerateArgs gen_args;
  CLI::App* gen = app.add_subcommand("generate", "Harmonize a melody MIDI file");
  gen->set_config("--config");
  gen->add_option("--melody", gen_args.melody, "Input melody MIDI file")->required();
  gen->add_option("--model", gen_args.model, "Model checkpoint")->required();
  gen->add_option("--out", gen_args.out, "Output MIDI path")->required();
  gen->add_option("--tonic", gen_args.tonic, "Melody key tonic (0-11 or C..B)")->required();
  gen->add_option("--threshold", gen_args.threshold, "Voicing threshold");
  gen->add_option("--overlap-threshold", gen_args.overlap_threshold,
                  "Melody selection overlap threshold");
  gen->callback([&]() { exit_code = run_generate(gen_args); });

  BenchArgs bench_args;
  CLI::App* bench = app.add_subcommand("bench", "Measure per-chord prediction latency");
  bench->set_config("--config");
  bench->add_option("--model", bench_args.model, "Model checkpoint")->required();
  bench->add_option("--trials", bench_args.trials, "Number of timed predictions (min 30)");
  bench->add_option("--seed", bench_args.seed, "Random seed for benchmark inputs");
  bench->callback([&]() { exit_code = run_bench(bench_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return exit_code;
}
