// Acceptance suite: runs every gate criterion end to end and prints one
// pass/fail line per criterion. Invoke with the CLI binary path:
//
//   acceptance <path-to-chordgen-cli>

#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "chordgen/binio.hpp"
#include "chordgen/dataset.hpp"
#include "chordgen/harmonizer.hpp"
#include "chordgen/key_model.hpp"
#include "chordgen/lstm.hpp"
#include "chordgen/midi.hpp"
#include "chordgen/rng.hpp"

namespace fs = std::filesystem;
using namespace chordgen;

namespace {

std::string g_cli;
fs::path g_scratch;

struct CommandResult {
  int exit_code = -1;
  std::string output;
};

CommandResult run_command(const std::string& args) {
  std::string cmd = g_cli + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw std::runtime_error("popen failed for: " + cmd);
  CommandResult result;
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) result.output.append(buf, n);
  int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

std::vector<uint8_t> slurp(const fs::path& p) { return read_file_bytes(p.string()); }

void require(bool condition, const std::string& what) {
  if (!condition) throw std::runtime_error(what);
}

// ---------------------------------------------------------------------------
// Shared synthetic material

/// Eight-note C-major melody with an I-I-IV-IV-V-V-I-I progression.
const std::vector<int> kMelodyPitches = {60, 64, 65, 69, 67, 71, 72, 67};
const std::vector<int> kChordRoots = {0, 0, 5, 5, 7, 7, 0, 0};

/// Root-emphasized triad, the figure-4 shape: without the doubled root
/// the target argmax would tie across chord tones and "root match"
/// would be ill-posed.
ChromaHistogram triad(int root) {
  ChromaHistogram h;
  h[root % 12] = 0.5;
  h[(root + 4) % 12] = 0.25;
  h[(root + 7) % 12] = 0.25;
  return h;
}

std::vector<TrainingExample> overfit_dataset(int copies) {
  std::vector<TrainingExample> dataset;
  for (int s = 0; s < copies; ++s)
    for (size_t i = 0; i < kMelodyPitches.size(); ++i) {
      TrainingExample ex;
      ex.melody_pc = kMelodyPitches[i] % 12;
      ex.chord = triad(kChordRoots[i]);
      ex.song_start = i == 0;
      dataset.push_back(ex);
    }
  return dataset;
}

MidiSong training_melody() {
  MidiSong song;
  Track melody;
  melody.name = "melody";
  for (size_t i = 0; i < kMelodyPitches.size(); ++i)
    melody.notes.push_back(
        Note{kMelodyPitches[i], static_cast<int64_t>(480 * i), 480, 100, 0});
  song.tracks.push_back(std::move(melody));
  return song;
}

MidiSong random_corpus_song(Rng& rng) {
  MidiSong song;
  song.tempo_us_per_quarter = 450000 + rng.uniform_int(200000);
  song.key_events.push_back(
      KeySignature{rng.uniform_int(12), rng.uniform() < 0.4 ? KeyMode::Minor : KeyMode::Major,
                   1 + rng.uniform_int(100)});

  Track melody;
  melody.name = "vocal line";
  int64_t onset = 0;
  int n = 20 + rng.uniform_int(10);
  int previous_pitch = -1;
  for (int i = 0; i < n; ++i) {
    // Overhangs are fine, but a restruck pitch under an open note has
    // no SMF representation, so consecutive pitches must differ.
    int pitch = 60 + rng.uniform_int(20);
    while (pitch == previous_pitch) pitch = 60 + rng.uniform_int(20);
    melody.notes.push_back(Note{pitch, onset, 240 + rng.uniform_int(480),
                                70 + rng.uniform_int(40), 0});
    previous_pitch = pitch;
    onset += 480;
  }
  song.tracks.push_back(std::move(melody));

  Track chords;
  chords.name = "pad";
  for (int64_t start = 0; start < onset; start += 960) {
    int root = 40 + rng.uniform_int(20);
    for (int offset : {0, 4, 7})
      chords.notes.push_back(Note{root + offset, start, 960, 80, 1});
  }
  song.tracks.push_back(std::move(chords));
  for (size_t t = 0; t < song.tracks.size(); ++t)
    for (Note& note : song.tracks[t].notes) note.track_index = static_cast<int>(t);
  return song;
}

// ---------------------------------------------------------------------------
// Criteria

void criterion_gradient_check() {
  ModelConfig config;
  config.seq_len = 4;
  config.hidden_dim = 8;
  config.seed = 7;
  LstmModel model = init_model(config);

  Rng rng(99);
  Eigen::MatrixXd input(config.seq_len, config.input_dim);
  for (int t = 0; t < config.seq_len; ++t) {
    input(t, 0) = rng.uniform_int(12) / 11.0;
    double total = 0.0;
    for (int j = 1; j < 13; ++j) {
      input(t, j) = rng.uniform();
      total += input(t, j);
    }
    for (int j = 1; j < 13; ++j) input(t, j) /= total;
  }
  Eigen::VectorXd target = Eigen::VectorXd::Zero(12);
  target(0) = target(4) = target(7) = 1.0 / 3.0;

  const double step = 1e-5;
  double worst = 0.0;
  for (bool training : {false, true}) {
    uint64_t seed = 55;
    ForwardResult fwd = forward(model, input, training, seed);
    LstmParams analytic = backward(model, fwd.cache, target);
    auto params = model.params.tensors();
    auto grads = analytic.tensors();
    for (size_t k = 0; k < params.size(); ++k) {
      for (Eigen::Index i = 0; i < params[k].size(); ++i) {
        double saved = params[k](i);
        params[k](i) = saved + step;
        double up = loss_msle(forward(model, input, training, seed).prediction, target);
        params[k](i) = saved - step;
        double down = loss_msle(forward(model, input, training, seed).prediction, target);
        params[k](i) = saved;
        double numeric = (up - down) / (2.0 * step);
        double rel = std::abs(numeric - grads[k](i)) /
                     std::max(std::abs(numeric) + std::abs(grads[k](i)), 1e-6);
        worst = std::max(worst, rel);
      }
    }
  }
  require(worst <= 1e-4, "max relative gradient error " + std::to_string(worst));
}

void criterion_overfit_oracle() {
  ModelConfig config;
  config.hidden_dim = 32;
  config.batch_size = 16; // larger batches park on the constant-mean plateau
  config.learning_rate = 1e-3;
  config.seed = 1337;

  auto dataset = overfit_dataset(50);
  const int epochs = 300; // comfortably inside the <=500 budget
  TrainResult result = train(dataset, config, epochs);
  double final_loss = result.loss_history.back();
  require(final_loss < 0.01,
          "final mean MSLE " + std::to_string(final_loss) + " after " + std::to_string(epochs) +
              " epochs");

  GenerationConfig gen_config;
  GenerationResult gen = generate(training_melody(), gen_config, result.model);
  require(gen.predictions.size() == kChordRoots.size(), "one prediction per melody note");
  int matches = 0;
  int voiced_matches = 0;
  for (size_t i = 0; i < gen.predictions.size(); ++i) {
    int argmax = 0;
    for (int pc = 1; pc < 12; ++pc)
      if (gen.predictions[i][pc] > gen.predictions[i][argmax]) argmax = pc;
    if (argmax == kChordRoots[i]) ++matches;
    if (gen.chords[i] && gen.chords[i]->root_pc == kChordRoots[i]) ++voiced_matches;
  }
  require(matches * 4 >= static_cast<int>(gen.predictions.size()) * 3,
          "root match " + std::to_string(matches) + "/8");
  require(voiced_matches * 4 >= static_cast<int>(gen.predictions.size()) * 3,
          "voiced root match " + std::to_string(voiced_matches) + "/8");
}

void criterion_key_classifier() {
  auto corpus = synthetic_key_corpus(100, 2024);
  KeyTrainOptions options;
  options.pca_components = 9;
  options.test_fraction = 0.2;
  options.seed = 2024;
  KeyTrainReport report = train_key_model(corpus, options);
  require(report.heldout_accuracy >= 0.80,
          "held-out accuracy " + std::to_string(report.heldout_accuracy));
}

void criterion_latency() {
  LstmModel model = init_model(ModelConfig{}); // default desk model, hidden 64
  LatencyReport report = measure_latency(model, 200, 11);
  require(report.mean_ms < 80.0, "library mean " + std::to_string(report.mean_ms) + " ms");

  fs::path ckpt = g_scratch / "latency.ckpt";
  save_checkpoint(model, ckpt.string());
  CommandResult bench = run_command("bench --model " + ckpt.string() + " --trials 100");
  require(bench.exit_code == 0, "bench exit code " + std::to_string(bench.exit_code));
  require(bench.output.find("mean_ms=") != std::string::npos, "bench output missing mean_ms");
  require(bench.output.find("p95_ms=") != std::string::npos, "bench output missing p95_ms");
  require(bench.output.find("max_ms=") != std::string::npos, "bench output missing max_ms");
}

void criterion_transposition_equivariance() {
  Rng rng(31415);
  for (int trial = 0; trial < 100; ++trial) {
    MidiSong song = random_corpus_song(rng);
    int tonic = rng.uniform_int(12);
    int shift = rng.uniform_int(12);

    MidiSong transposed = song;
    for (Track& t : transposed.tracks)
      for (Note& n : t.notes) n.pitch += shift;

    auto base = extract_examples(song, tonic, 0);
    auto shifted = extract_examples(transposed, (tonic + shift) % 12, 0);
    require(base == shifted, "mismatch at trial " + std::to_string(trial));
  }
}

std::vector<TrainingExample> brute_force_prune(const std::vector<TrainingExample>& examples) {
  std::vector<TrainingExample> kept;
  for (const TrainingExample& ex : examples) {
    bool keep = true;
    if (!ex.song_start && !kept.empty()) {
      const ChromaHistogram& a = kept.back().chord;
      const ChromaHistogram& b = ex.chord;
      bool identical = true;
      int common = 0;
      for (int j = 0; j < 12; ++j) {
        if (std::fabs(a[j] - b[j]) > 1e-9) identical = false;
        if (a[j] != 0.0 && b[j] != 0.0 && std::fabs(a[j] - b[j]) <= 0.1) ++common;
      }
      keep = !(identical || common >= 4);
    }
    if (keep) kept.push_back(ex);
  }
  return kept;
}

void criterion_pruning_oracle() {
  Rng rng(271828);
  for (int sequence = 0; sequence < 1000; ++sequence) {
    int length = 1 + rng.uniform_int(60);
    std::vector<TrainingExample> examples;
    examples.reserve(static_cast<size_t>(length));
    for (int i = 0; i < length; ++i) {
      TrainingExample ex;
      ex.song_start = i == 0 || rng.uniform() < 0.05;
      ex.melody_pc = rng.uniform_int(12);
      if (!examples.empty() && rng.uniform() < 0.45) {
        ex.chord = examples.back().chord; // near-duplicate run
        for (double& v : ex.chord.values)
          if (v > 0.0 && rng.uniform() < 0.5) v = std::max(0.0, v + rng.uniform(-0.08, 0.08));
        double total = ex.chord.sum();
        if (total > 0.0)
          for (double& v : ex.chord.values) v /= total;
      } else {
        int bins = 1 + rng.uniform_int(5);
        for (int b = 0; b < bins; ++b) ex.chord[rng.uniform_int(12)] += 0.1 + rng.uniform();
        double total = ex.chord.sum();
        for (double& v : ex.chord.values) v /= total;
      }
      examples.push_back(std::move(ex));
    }

    auto pruned = remove_similar_adjacent(examples);
    require(pruned == brute_force_prune(examples),
            "oracle mismatch at sequence " + std::to_string(sequence));
    require(remove_similar_adjacent(pruned) == pruned,
            "not idempotent at sequence " + std::to_string(sequence));
  }
}

void criterion_overlap_anchors() {
  std::vector<Note> monophonic;
  for (int i = 0; i < 8; ++i) monophonic.push_back(Note{60 + i, 480 * i, 480, 80, 0});
  require(overlap_proportion(monophonic) == 0.0, "monophonic overlap not 0");

  std::vector<Note> triads;
  for (int64_t onset : {0, 480, 960, 1440})
    for (int offset : {0, 4, 7}) triads.push_back(Note{60 + offset, onset, 480, 80, 0});
  require(overlap_proportion(triads) == 1.0, "block-triad overlap not 1");

  std::vector<Note> pair = {Note{60, 0, 2, 80, 0}, Note{61, 1, 2, 80, 0}};
  require(overlap_proportion(pair) == 1.0 / 3.0, "interval case not exactly 1/3");
}

void criterion_voicing() {
  ChromaHistogram figure4;
  figure4[0] = 0.5;
  figure4[4] = 0.25;
  figure4[7] = 0.25;
  auto chord = voice_chord(figure4, 0, 0.14);
  require(chord.has_value(), "figure-4 chord came back silent");
  require(chord->pitches == std::vector<int>{36, 48, 52, 55}, "figure-4 pitches wrong");

  ChromaHistogram uniform;
  for (double& v : uniform.values) v = 1.0 / 12.0;
  require(!voice_chord(uniform, 0, 0.14).has_value(), "uniform histogram voiced");

  Rng rng(161803);
  for (int trial = 0; trial < 500; ++trial) {
    ChromaHistogram h;
    int bins = 1 + rng.uniform_int(5);
    for (int b = 0; b < bins; ++b) h[rng.uniform_int(12)] += rng.uniform();
    double total = h.sum();
    for (double& v : h.values) v /= total;
    int tonic = rng.uniform_int(12);
    auto voiced = voice_chord(h, tonic, 0.14);
    if (!voiced) continue;
    auto base = voice_chord(h, 0, 0.14);
    for (size_t i = 0; i < voiced->pitches.size(); ++i) {
      require(base->pitches[i] >= 36 && base->pitches[i] <= 59, "pre-shift range violated");
      require(voiced->pitches[i] == base->pitches[i] + tonic, "tonic shift inconsistent");
      require(voiced->pitches[i] >= 36 && voiced->pitches[i] <= 59 + tonic,
              "post-shift range violated");
    }
  }
}

void criterion_midi_round_trip() {
  Rng rng(777);
  for (int trial = 0; trial < 200; ++trial) {
    MidiSong song = random_corpus_song(rng);
    MidiSong reparsed = parse_midi(write_midi(song));
    require(note_equivalent(song, reparsed), "random song mismatch at " + std::to_string(trial));
  }

  MidiSong fixture;
  fixture.ticks_per_quarter = 960;
  Track a;
  a.name = "Lead Vocal";
  a.notes = {Note{72, 0, 480, 100, 0}, Note{74, 480, 480, 100, 0}};
  Track b;
  b.name = "Piano";
  b.notes = {Note{48, 0, 960, 80, 1}, Note{52, 0, 960, 80, 1}, Note{55, 0, 960, 80, 1}};
  Track drums;
  drums.name = "Drums";
  drums.is_drum = true;
  drums.notes = {Note{36, 0, 240, 110, 2}};
  fixture.tracks = {a, b, drums};
  fixture.key_events.push_back(KeySignature{7, KeyMode::Major, 0});
  MidiSong reparsed = parse_midi(write_midi(fixture));
  require(note_equivalent(fixture, reparsed), "fixture mismatch");
  require(reparsed.tracks[2].is_drum, "drum flag lost");
}

void criterion_cli_determinism() {
  fs::path corpus = g_scratch / "corpus";
  fs::create_directories(corpus);
  Rng rng(55555);
  for (int i = 0; i < 5; ++i) {
    MidiSong song = random_corpus_song(rng);
    write_midi_file(song, (corpus / ("song" + std::to_string(i) + ".mid")).string());
  }
  MidiSong melody = training_melody();
  fs::path melody_path = g_scratch / "melody.mid";
  write_midi_file(melody, melody_path.string());

  auto repeat = [&](const std::string& args, const std::vector<fs::path>& outputs) {
    CommandResult first = run_command(args);
    require(first.exit_code == 0, "exit " + std::to_string(first.exit_code) + " for: " + args);
    std::vector<std::vector<uint8_t>> bytes;
    for (const fs::path& p : outputs) bytes.push_back(slurp(p));
    CommandResult second = run_command(args);
    require(second.exit_code == 0, "second run failed for: " + args);
    require(first.output == second.output, "stdout differs for: " + args);
    for (size_t i = 0; i < outputs.size(); ++i)
      require(bytes[i] == slurp(outputs[i]), "output file differs: " + outputs[i].string());
  };

  fs::path dataset = g_scratch / "data.chrd";
  repeat("build-dataset --corpus " + corpus.string() + " --out " + dataset.string(), {dataset});

  fs::path key_model = g_scratch / "keys.keyc";
  repeat("train-key --synthetic --examples-per-key 12 --seed 5 --out " + key_model.string(),
         {key_model});

  fs::path ckpt = g_scratch / "model.ckpt";
  fs::path log = g_scratch / "model.ckpt.log";
  repeat("train --dataset " + dataset.string() + " --out " + ckpt.string() +
             " --epochs 3 --hidden 8 --seed 9",
         {ckpt, log});

  fs::path generated = g_scratch / "out.mid";
  repeat("generate --melody " + melody_path.string() + " --model " + ckpt.string() +
             " --tonic G --out " + generated.string(),
         {generated});

  // Spec'd CLI contract samples.
  CommandResult bad_tonic = run_command("generate --melody " + melody_path.string() +
                                        " --model " + ckpt.string() +
                                        " --tonic H --out " + generated.string());
  require(bad_tonic.exit_code == 1, "tonic H should exit 1");
  CommandResult few_trials = run_command("bench --model " + ckpt.string() + " --trials 10");
  require(few_trials.exit_code == 1, "bench with 10 trials should exit 1");
  CommandResult missing = run_command("build-dataset --corpus " +
                                      (g_scratch / "nonexistent").string() + " --out " +
                                      dataset.string());
  require(missing.exit_code == 1, "missing corpus should exit 1");
  for (const char* sub : {"build-dataset", "train-key", "train", "generate", "bench"}) {
    CommandResult help = run_command(std::string(sub) + " --help");
    require(help.exit_code == 0, std::string(sub) + " --help should exit 0");
  }

  // The generated file obeys the voicing range (tonic G = 7).
  MidiSong out_song = read_midi_file(generated.string());
  require(out_song.tracks.size() == 2, "generated file should hold melody + accompaniment");
  for (const Note& n : out_song.tracks[1].notes)
    require(n.pitch >= 36 && n.pitch <= 59 + 7, "generated pitch outside voicing range");
}

struct Criterion {
  int number;
  std::string name;
  std::function<void()> run;
};

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <chordgen-cli-path>\n";
    return 2;
  }
  g_cli = argv[1];
  g_scratch = fs::temp_directory_path() / "chordgen_acceptance";
  fs::remove_all(g_scratch);
  fs::create_directories(g_scratch);

  std::vector<Criterion> criteria = {
      {1, "gradient correctness vs central finite differences (rel <= 1e-4)",
       criterion_gradient_check},
      {2, "overfit oracle: MSLE < 0.01 and >= 75% root match", criterion_overfit_oracle},
      {3, "key classifier held-out accuracy >= 80% on the synthetic suite",
       criterion_key_classifier},
      {4, "bench mean prediction latency < 80 ms", criterion_latency},
      {5, "dataset extraction transposition-equivariant on 100 songs",
       criterion_transposition_equivariance},
      {6, "pruning equals brute force on 1000 sequences and is idempotent",
       criterion_pruning_oracle},
      {7, "overlap anchors: monophonic 0, block triads 1, interval case 1/3",
       criterion_overlap_anchors},
      {8, "voicing: figure-4 chord, uniform silence, octave ranges", criterion_voicing},
      {9, "MIDI round trip on 200 random songs plus fixtures", criterion_midi_round_trip},
      {10, "CLI runs are bit-reproducible with fixed seeds", criterion_cli_determinism},
  };

  int failures = 0;
  for (const Criterion& criterion : criteria) {
    try {
      criterion.run();
      std::cout << "[PASS] criterion " << criterion.number << ": " << criterion.name << "\n";
    } catch (const std::exception& e) {
      ++failures;
      std::cout << "[FAIL] criterion " << criterion.number << ": " << criterion.name << " ("
                << e.what() << ")\n";
    }
    std::cout.flush();
  }
  fs::remove_all(g_scratch);
  return failures == 0 ? 0 : 1;
}
