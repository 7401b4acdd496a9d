#include "chordgen/chroma.hpp"

#include <algorithm>
#include <cmath>

namespace chordgen {

double ChromaHistogram::sum() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

bool ChromaHistogram::is_zero() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
}

int pitch_class(int midi_pitch) {
  if (midi_pitch < 0 || midi_pitch > 127)
    throw std::out_of_range("midi pitch out of range: " + std::to_string(midi_pitch));
  return midi_pitch % 12;
}

ChromaHistogram histogram_from_weighted_notes(
    std::span<const std::pair<int, double>> weighted_pcs) {
  ChromaHistogram h;
  // The divisor accumulates in input order, not bin order, so that
  // relabeling pitch classes rotates the output bit-exactly.
  double total = 0.0;
  for (const auto& [pc, w] : weighted_pcs) {
    if (w < 0.0) throw NegativeWeight("negative histogram weight");
    h[((pc % 12) + 12) % 12] += w;
    total += w;
  }
  if (total > 0.0) {
    for (double& v : h.values) v /= total;
  }
  return h;
}

ChromaHistogram transpose_histogram(const ChromaHistogram& h, int semitones) {
  int shift = ((semitones % 12) + 12) % 12;
  ChromaHistogram out;
  for (int i = 0; i < 12; ++i) out[(i + shift) % 12] = h[i];
  return out;
}

ChromaHistogram align_to_c(const ChromaHistogram& h, int tonic_pc) {
  return transpose_histogram(h, -tonic_pc);
}

double overlap_proportion(std::span<const Note> notes) {
  if (notes.empty()) return 0.0;

  // Sweep over note boundaries, accumulating time with >=1 and >=2
  // active notes.
  std::vector<std::pair<int64_t, int>> events;
  events.reserve(notes.size() * 2);
  for (const Note& n : notes) {
    events.emplace_back(n.onset, +1);
    events.emplace_back(n.onset + n.duration, -1);
  }
  std::sort(events.begin(), events.end());

  int64_t t_any = 0;
  int64_t t_multi = 0;
  int active = 0;
  int64_t prev = events.front().first;
  for (const auto& [time, delta] : events) {
    if (time > prev) {
      if (active >= 1) t_any += time - prev;
      if (active >= 2) t_multi += time - prev;
      prev = time;
    }
    active += delta;
  }
  if (t_any == 0) return 0.0;
  return static_cast<double>(t_multi) / static_cast<double>(t_any);
}

}  // namespace chordgen
