#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "chordgen/chroma.hpp"
#include "chordgen/lstm.hpp"
#include "chordgen/midi.hpp"

namespace chordgen {

struct NoMelodyTrack : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct VoicedChord {
  std::vector<int> pitches; // ascending MIDI note numbers
  int root_pc = 0;          // pitch class of the voiced root
  int64_t onset = 0;
  int64_t duration = 0;
};

struct GenerationConfig {
  int tonic_pc = 0;
  double voicing_threshold = 0.14;
  double overlap_threshold = 0.2; // melody track selection fallback
};

/// Bins below the threshold are disregarded; none left means silence.
/// The largest remaining bin is the root, voiced at C2 and C3 octaves
/// (36/48 + pc); the other kept bins sit in the C3-B3 octave; the whole
/// chord is then shifted up by the tonic.
std::optional<VoicedChord> voice_chord(const ChromaHistogram& h, int tonic_pc, double threshold);

struct GenerationResult {
  MidiSong song;                         // melody track + accompaniment track
  std::vector<ChromaHistogram> predictions; // one per melody note
  std::vector<std::optional<VoicedChord>> chords;
  std::vector<double> predict_ms;        // per-note prediction wall time
};

/// Autoregressive harmonization: the melody is aligned to C with the
/// supplied tonic, each note's chord is predicted from the last eight
/// melody pitch classes and the model's own last eight predictions,
/// then voiced at the note's onset and duration.
GenerationResult generate(const MidiSong& melody_song, const GenerationConfig& config,
                          const LstmModel& model);

GenerationResult generate_file(const std::string& melody_path, const GenerationConfig& config,
                               const LstmModel& model, const std::string& out_path);

struct LatencyReport {
  double mean_ms = 0.0;
  double p95_ms = 0.0;
  double max_ms = 0.0;
  int trials = 0;
};

/// Times predict_next on random valid inputs after five warmup calls.
LatencyReport measure_latency(const LstmModel& model, int trials, uint64_t seed = 1);

}  // namespace chordgen
