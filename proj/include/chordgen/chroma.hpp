#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "chordgen/midi.hpp"

namespace chordgen {

/// 12-bin pitch-class histogram, index 0 = C. Either all-zero (empty
/// window) or L1-normalized so the voicing threshold stays comparable
/// across chord sizes.
struct ChromaHistogram {
  std::array<double, 12> values{};

  double& operator[](int pc) { return values[static_cast<size_t>(pc)]; }
  double operator[](int pc) const { return values[static_cast<size_t>(pc)]; }

  double sum() const;
  bool is_zero() const;
  bool operator==(const ChromaHistogram&) const = default;
};

struct NegativeWeight : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// midi pitch -> pitch class, C = 0.
int pitch_class(int midi_pitch);

/// Accumulate weights per pitch class and L1-normalize. All-zero input
/// (including an empty list) yields the all-zero histogram.
ChromaHistogram histogram_from_weighted_notes(
    std::span<const std::pair<int, double>> weighted_pcs);

/// Rotate: out[(i + semitones) mod 12] = h[i]. Mass-preserving.
ChromaHistogram transpose_histogram(const ChromaHistogram& h, int semitones);

/// Rotate so the tonic's mass lands on index 0.
ChromaHistogram align_to_c(const ChromaHistogram& h, int tonic_pc);

/// Proportion of sounding time during which two or more notes of the
/// track overlap: T_multi / T_any over a sweep of the note intervals.
/// 0 for a strictly monophonic track (and for an empty one), 1 when
/// every sounding instant has at least two active notes.
double overlap_proportion(std::span<const Note> notes);

}  // namespace chordgen
