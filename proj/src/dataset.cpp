#include "chordgen/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "chordgen/binio.hpp"

namespace chordgen {

namespace {

constexpr std::array<const char*, 5> kMelodyKeywords = {"voice", "vocal", "vox", "sing",
                                                        "melody"};
constexpr int kMinNotesForOverlapCandidate = 8;
constexpr double kBinEqualTolerance = 1e-9;

std::string to_lower(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool has_melody_keyword(const std::string& name) {
  std::string lowered = to_lower(name);
  for (const char* keyword : kMelodyKeywords)
    if (lowered.find(keyword) != std::string::npos) return true;
  return false;
}

double mean_pitch(const Track& track) {
  double total = 0.0;
  for (const Note& n : track.notes) total += n.pitch;
  return total / static_cast<double>(track.notes.size());
}

bool chords_similar(const ChromaHistogram& a, const ChromaHistogram& b, double threshold,
                    int min_common_bins) {
  bool identical = true;
  int common = 0;
  for (int i = 0; i < 12; ++i) {
    if (std::abs(a[i] - b[i]) > kBinEqualTolerance) identical = false;
    if (a[i] > 0.0 && b[i] > 0.0 && std::abs(a[i] - b[i]) <= threshold) ++common;
  }
  return identical || common >= min_common_bins;
}

}  // namespace

std::string CorpusStats::summary() const {
  std::ostringstream out;
  out << "files_seen=" << files_seen << "\n"
      << "files_skipped_no_key=" << files_skipped_no_key << "\n"
      << "files_skipped_no_melody=" << files_skipped_no_melody << "\n"
      << "examples_before_prune=" << examples_before_prune << "\n"
      << "examples_after_prune=" << examples_after_prune << "\n";
  return out.str();
}

std::optional<int> select_melody_track(const MidiSong& song, double overlap_threshold) {
  std::vector<int> candidates;
  for (size_t i = 0; i < song.tracks.size(); ++i) {
    const Track& t = song.tracks[i];
    if (t.is_drum || t.notes.empty()) continue;
    if (has_melody_keyword(t.name)) candidates.push_back(static_cast<int>(i));
  }
  if (candidates.empty()) {
    for (size_t i = 0; i < song.tracks.size(); ++i) {
      const Track& t = song.tracks[i];
      if (t.is_drum || t.notes.size() < kMinNotesForOverlapCandidate) continue;
      if (overlap_proportion(t.notes) < overlap_threshold) candidates.push_back(static_cast<int>(i));
    }
  }
  if (candidates.empty()) return std::nullopt;

  int best = candidates.front();
  double best_mean = mean_pitch(song.tracks[static_cast<size_t>(best)]);
  for (size_t k = 1; k < candidates.size(); ++k) {
    double m = mean_pitch(song.tracks[static_cast<size_t>(candidates[k])]);
    if (m > best_mean) {
      best_mean = m;
      best = candidates[k];
    }
  }
  return best;
}

std::vector<TrainingExample> extract_examples(const MidiSong& song, int tonic_pc,
                                              int melody_track) {
  if (melody_track < 0 || melody_track >= static_cast<int>(song.tracks.size()))
    throw InvalidTrack("melody track index out of range");
  const Track& melody = song.tracks[static_cast<size_t>(melody_track)];
  if (melody.is_drum) throw InvalidTrack("melody track must not be a drum track");

  std::vector<TrainingExample> out;
  out.reserve(melody.notes.size());
  std::vector<std::pair<int, double>> weighted;

  for (const Note& mel : melody.notes) {
    int64_t window_start = mel.onset;
    int64_t window_end = mel.onset + mel.duration;

    weighted.clear();
    for (size_t t = 0; t < song.tracks.size(); ++t) {
      if (static_cast<int>(t) == melody_track || song.tracks[t].is_drum) continue;
      for (const Note& n : song.tracks[t].notes) {
        int64_t overlap = std::min(window_end, n.onset + n.duration) - std::max(window_start, n.onset);
        if (overlap > 0)
          weighted.emplace_back(pitch_class(n.pitch), static_cast<double>(overlap));
      }
    }

    TrainingExample ex;
    ex.melody_pc = ((pitch_class(mel.pitch) - tonic_pc) % 12 + 12) % 12;
    ex.chord = align_to_c(histogram_from_weighted_notes(weighted), tonic_pc);
    ex.song_start = out.empty();
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<TrainingExample> remove_similar_adjacent(const std::vector<TrainingExample>& examples,
                                                     double threshold, int min_common_bins) {
  std::vector<TrainingExample> kept;
  kept.reserve(examples.size());
  const ChromaHistogram* last_kept = nullptr;
  for (const TrainingExample& ex : examples) {
    if (ex.song_start || last_kept == nullptr ||
        !chords_similar(*last_kept, ex.chord, threshold, min_common_bins)) {
      kept.push_back(ex);
      last_kept = &kept.back().chord;
    }
  }
  return kept;
}

ChromaHistogram whole_file_histogram(const MidiSong& song) {
  std::vector<std::pair<int, double>> weighted;
  for (const Track& t : song.tracks) {
    if (t.is_drum) continue;
    for (const Note& n : t.notes)
      weighted.emplace_back(pitch_class(n.pitch), static_cast<double>(n.duration));
  }
  return histogram_from_weighted_notes(weighted);
}

namespace {

constexpr char kDatasetMagic[4] = {'C', 'H', 'R', 'D'};
constexpr uint16_t kDatasetVersion = 1;

bool is_midi_path(const std::filesystem::path& p) {
  std::string ext = to_lower(p.extension().string());
  return ext == ".mid" || ext == ".midi";
}

}  // namespace

std::vector<uint8_t> serialize_dataset(const std::vector<TrainingExample>& examples) {
  ByteWriter w;
  w.magic(kDatasetMagic);
  w.u16(kDatasetVersion);

  size_t i = 0;
  while (i < examples.size()) {
    size_t end = i + 1;
    while (end < examples.size() && !examples[end].song_start) ++end;
    w.u32(static_cast<uint32_t>(end - i));
    for (size_t k = i; k < end; ++k) {
      w.u8(static_cast<uint8_t>(examples[k].melody_pc));
      for (double v : examples[k].chord.values) w.f32(static_cast<float>(v));
    }
    i = end;
  }
  return w.bytes();
}

std::vector<TrainingExample> deserialize_dataset(const std::vector<uint8_t>& bytes) {
  ByteReader r(bytes);
  r.expect_magic(kDatasetMagic, "dataset");
  uint16_t version = r.u16();
  if (version != kDatasetVersion)
    throw IoError("unsupported dataset version " + std::to_string(version));

  std::vector<TrainingExample> out;
  while (!r.at_end()) {
    uint32_t count = r.u32();
    for (uint32_t k = 0; k < count; ++k) {
      TrainingExample ex;
      ex.melody_pc = r.u8();
      for (double& v : ex.chord.values) v = r.f32();
      ex.song_start = k == 0;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

void write_dataset_file(const std::vector<TrainingExample>& examples, const std::string& path) {
  write_file_atomic(path, serialize_dataset(examples));
}

std::vector<TrainingExample> read_dataset_file(const std::string& path) {
  return deserialize_dataset(read_file_bytes(path));
}

CorpusStats build_dataset(const std::string& corpus_dir, const KeyModel* classifier,
                          const DatasetBuildConfig& config, const std::string& out_path) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(corpus_dir)) throw IoError("corpus directory not found: " + corpus_dir);

  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(corpus_dir))
    if (entry.is_regular_file() && is_midi_path(entry.path())) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw EmptyCorpus("no .mid/.midi files under " + corpus_dir);

  CorpusStats stats;
  std::vector<TrainingExample> dataset;
  for (const fs::path& path : files) {
    ++stats.files_seen;
    MidiSong song;
    try {
      song = read_midi_file(path.string());
    } catch (const std::runtime_error&) {
      ++stats.files_skipped_no_key; // unreadable counts with the unusable files
      continue;
    }

    std::optional<int> tonic = extract_key_meta(song);
    if (!tonic && classifier != nullptr) {
      ChromaHistogram h = whole_file_histogram(song);
      if (!h.is_zero()) tonic = classifier->predict(h);
    }
    if (!tonic) {
      ++stats.files_skipped_no_key;
      continue;
    }

    std::optional<int> melody = select_melody_track(song, config.overlap_threshold);
    if (!melody) {
      ++stats.files_skipped_no_melody;
      continue;
    }

    std::vector<TrainingExample> raw = extract_examples(song, *tonic, *melody);
    stats.examples_before_prune += raw.size();
    std::vector<TrainingExample> pruned =
        remove_similar_adjacent(raw, config.prune_threshold, config.prune_min_common_bins);
    stats.examples_after_prune += pruned.size();
    dataset.insert(dataset.end(), pruned.begin(), pruned.end());
  }

  write_dataset_file(dataset, out_path);
  return stats;
}

}  // namespace chordgen
