#include "chordgen/harmonizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "chordgen/dataset.hpp"
#include "chordgen/rng.hpp"

namespace chordgen {

namespace {

constexpr int kRootLowOctave = 36;  // C2
constexpr int kUpperOctave = 48;    // C3
constexpr int kAccompanimentVelocity = 80;

int select_generation_melody(const MidiSong& song, double overlap_threshold) {
  std::optional<int> melody = select_melody_track(song, overlap_threshold);
  if (melody) return *melody;
  if (song.tracks.size() == 1 && !song.tracks[0].is_drum) return 0;
  throw NoMelodyTrack("no melody track selectable from input");
}

}  // namespace

std::optional<VoicedChord> voice_chord(const ChromaHistogram& h, int tonic_pc, double threshold) {
  int root = -1;
  std::vector<int> kept;
  for (int pc = 0; pc < 12; ++pc) {
    if (h[pc] < threshold) continue;
    kept.push_back(pc);
    if (root < 0 || h[pc] > h[root]) root = pc; // strict: ties keep the lower pc
  }
  if (kept.empty()) return std::nullopt;

  VoicedChord chord;
  chord.pitches.push_back(kRootLowOctave + root);
  chord.pitches.push_back(kUpperOctave + root);
  for (int pc : kept)
    if (pc != root) chord.pitches.push_back(kUpperOctave + pc);
  for (int& p : chord.pitches) p += tonic_pc;
  std::sort(chord.pitches.begin(), chord.pitches.end());
  chord.root_pc = (root + tonic_pc) % 12;
  return chord;
}

GenerationResult generate(const MidiSong& melody_song, const GenerationConfig& config,
                          const LstmModel& model) {
  int melody_index = select_generation_melody(melody_song, config.overlap_threshold);
  const Track& melody = melody_song.tracks[static_cast<size_t>(melody_index)];

  GenerationResult result;
  result.predictions.reserve(melody.notes.size());
  result.chords.reserve(melody.notes.size());
  result.predict_ms.reserve(melody.notes.size());

  std::vector<int> melody_pcs;
  std::vector<ChromaHistogram> chord_context;
  melody_pcs.reserve(melody.notes.size());
  chord_context.reserve(melody.notes.size());

  const size_t window = static_cast<size_t>(model.config.seq_len);
  for (const Note& note : melody.notes) {
    melody_pcs.push_back(((pitch_class(note.pitch) - config.tonic_pc) % 12 + 12) % 12);

    size_t mel_count = std::min(window, melody_pcs.size());
    size_t chord_count = std::min(window, chord_context.size());
    std::span<const int> mel_span(melody_pcs.data() + melody_pcs.size() - mel_count, mel_count);
    std::span<const ChromaHistogram> chord_span(
        chord_context.data() + chord_context.size() - chord_count, chord_count);

    auto start = std::chrono::steady_clock::now();
    ChromaHistogram prediction = predict_next(model, mel_span, chord_span);
    auto stop = std::chrono::steady_clock::now();
    result.predict_ms.push_back(
        std::chrono::duration<double, std::milli>(stop - start).count());

    std::optional<VoicedChord> chord =
        voice_chord(prediction, config.tonic_pc, config.voicing_threshold);
    if (chord) {
      chord->onset = note.onset;
      chord->duration = note.duration;
    }
    chord_context.push_back(prediction);
    result.predictions.push_back(std::move(prediction));
    result.chords.push_back(std::move(chord));
  }

  MidiSong out;
  out.ticks_per_quarter = melody_song.ticks_per_quarter;
  out.tempo_us_per_quarter = melody_song.tempo_us_per_quarter;
  out.key_events = melody_song.key_events;

  Track melody_out = melody;
  for (Note& n : melody_out.notes) n.track_index = 0;
  out.tracks.push_back(std::move(melody_out));

  Track accompaniment;
  accompaniment.name = "accompaniment";
  accompaniment.program = 0; // piano
  for (const auto& chord : result.chords) {
    if (!chord) continue;
    for (int pitch : chord->pitches)
      accompaniment.notes.push_back(
          Note{pitch, chord->onset, chord->duration, kAccompanimentVelocity, 1});
  }
  std::stable_sort(accompaniment.notes.begin(), accompaniment.notes.end(),
                   [](const Note& a, const Note& b) {
                     return a.onset != b.onset ? a.onset < b.onset : a.pitch < b.pitch;
                   });
  out.tracks.push_back(std::move(accompaniment));

  result.song = std::move(out);
  return result;
}

GenerationResult generate_file(const std::string& melody_path, const GenerationConfig& config,
                               const LstmModel& model, const std::string& out_path) {
  MidiSong melody_song = read_midi_file(melody_path);
  GenerationResult result = generate(melody_song, config, model);
  write_midi_file(result.song, out_path);
  return result;
}

LatencyReport measure_latency(const LstmModel& model, int trials, uint64_t seed) {
  if (trials < 30) throw std::invalid_argument("measure_latency: need at least 30 trials");

  Rng rng(seed);
  const size_t window = static_cast<size_t>(model.config.seq_len);
  auto random_input = [&]() {
    std::vector<int> pcs(window);
    std::vector<ChromaHistogram> chords(window);
    for (size_t t = 0; t < window; ++t) {
      pcs[t] = rng.uniform_int(12);
      ChromaHistogram& h = chords[t];
      for (int j = 0; j < 12; ++j) h[j] = rng.uniform();
      double total = h.sum();
      for (double& v : h.values) v /= total;
    }
    return std::make_pair(std::move(pcs), std::move(chords));
  };

  for (int i = 0; i < 5; ++i) {
    auto [pcs, chords] = random_input();
    predict_next(model, pcs, chords);
  }

  std::vector<double> times_ms(static_cast<size_t>(trials));
  for (int i = 0; i < trials; ++i) {
    auto [pcs, chords] = random_input();
    auto start = std::chrono::steady_clock::now();
    predict_next(model, pcs, chords);
    auto stop = std::chrono::steady_clock::now();
    times_ms[static_cast<size_t>(i)] =
        std::chrono::duration<double, std::milli>(stop - start).count();
  }

  LatencyReport report;
  report.trials = trials;
  report.mean_ms = 0.0;
  for (double t : times_ms) report.mean_ms += t;
  report.mean_ms /= static_cast<double>(times_ms.size());
  std::sort(times_ms.begin(), times_ms.end());
  size_t p95_index = static_cast<size_t>(
      std::ceil(0.95 * static_cast<double>(times_ms.size()))) - 1;
  report.p95_ms = times_ms[std::min(p95_index, times_ms.size() - 1)];
  report.max_ms = times_ms.back();
  return report;
}

}  // namespace chordgen
