#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "chordgen/chroma.hpp"
#include "chordgen/key_model.hpp"
#include "chordgen/midi.hpp"

namespace chordgen {

struct InvalidTrack : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct EmptyCorpus : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One (melody note, accompanying chord) pair, aligned to C.
struct TrainingExample {
  int melody_pc = 0;
  ChromaHistogram chord; // all-zero (no accompaniment) or L1-normalized
  bool song_start = false;

  bool operator==(const TrainingExample&) const = default;
};

struct CorpusStats {
  uint64_t files_seen = 0;
  uint64_t files_skipped_no_key = 0;
  uint64_t files_skipped_no_melody = 0;
  uint64_t examples_before_prune = 0;
  uint64_t examples_after_prune = 0;

  std::string summary() const;
};

struct DatasetBuildConfig {
  double overlap_threshold = 0.2;
  double prune_threshold = 0.1;
  int prune_min_common_bins = 4;
};

/// Pick the melody track: named candidates first ('voice', 'vocal',
/// 'vox', 'sing', 'melody'), otherwise non-drum tracks that are mostly
/// monophonic (overlap below the threshold, at least 8 notes). Among
/// candidates the highest mean pitch wins, ties to the lowest index.
std::optional<int> select_melody_track(const MidiSong& song, double overlap_threshold);

/// One example per melody note: the chord histogram of every note in
/// the other non-drum tracks that sounds during the melody note's
/// window, weighted by overlap duration, with melody pitch class and
/// histogram both aligned to C. Notes with no accompaniment keep their
/// place with an all-zero chord.
std::vector<TrainingExample> extract_examples(const MidiSong& song, int tonic_pc,
                                              int melody_track);

/// Drop an example when its chord matches the most recently kept chord
/// of the same song: identical bins, or at least `min_common_bins`
/// bins that are non-zero in both and within `threshold`. Runs left to
/// right per song; the first example of a song is always kept.
std::vector<TrainingExample> remove_similar_adjacent(const std::vector<TrainingExample>& examples,
                                                     double threshold = 0.1,
                                                     int min_common_bins = 4);

/// Duration-weighted chroma histogram of all non-drum notes in the
/// song; the key classifier's input.
ChromaHistogram whole_file_histogram(const MidiSong& song);

/// Walk a corpus directory (sorted paths, .mid/.midi), resolve each
/// file's key from metadata or the optional classifier, extract and
/// prune, and write the "CHRD" dataset file.
CorpusStats build_dataset(const std::string& corpus_dir, const KeyModel* classifier,
                          const DatasetBuildConfig& config, const std::string& out_path);

std::vector<uint8_t> serialize_dataset(const std::vector<TrainingExample>& examples);
std::vector<TrainingExample> deserialize_dataset(const std::vector<uint8_t>& bytes);
void write_dataset_file(const std::vector<TrainingExample>& examples, const std::string& path);
std::vector<TrainingExample> read_dataset_file(const std::string& path);

}  // namespace chordgen
