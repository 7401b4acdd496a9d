#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace chordgen {

struct MalformedFile : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnsupportedFormat : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidSong : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Note {
  int pitch = 0;        // 0-127
  int64_t onset = 0;    // absolute ticks
  int64_t duration = 0; // ticks, > 0
  int velocity = 64;    // 1-127
  int track_index = 0;
};

struct Track {
  std::string name;
  int program = 0;
  bool is_drum = false; // channel 10
  std::vector<Note> notes; // sorted by onset, ties by pitch ascending
};

enum class KeyMode { Major, Minor };

struct KeySignature {
  int tonic_pc = 0; // 0 = C
  KeyMode mode = KeyMode::Major;
  int64_t tick = 0;
};

struct MidiSong {
  int ticks_per_quarter = 480;
  int tempo_us_per_quarter = 500000;
  std::vector<Track> tracks;
  std::vector<KeySignature> key_events; // sorted by tick

  Note& add_note(int track, Note n);
};

/// Parse an SMF format 0/1 byte stream. Note on/off pairs are resolved
/// (velocity-0 note-ons count as note-offs, a repeated note-on closes
/// the earlier note at the later onset); track name, program change,
/// key signature and tempo metadata are captured; everything else is
/// skipped. Throws MalformedFile or UnsupportedFormat.
MidiSong parse_midi(const std::vector<uint8_t>& bytes);

/// Serialize as SMF format 1. parse_midi(write_midi(s)) is
/// note-equivalent to s. Tempo and key events are emitted into the
/// first track chunk. Throws InvalidSong when the song invariants are
/// violated.
std::vector<uint8_t> write_midi(const MidiSong& song);

/// Major-key tonic of the first key event, with minor keys mapped to
/// their relative major ((pc + 3) mod 12). Absent when the song has no
/// key events or the first one is the untrustworthy default C major at
/// tick 0.
std::optional<int> extract_key_meta(const MidiSong& song);

/// Same tracks with the same (pitch, onset, duration) note lists,
/// ignoring trailing trackless structure (empty tracks are skipped so
/// a 0-track song matches its 1-empty-track reparse).
bool note_equivalent(const MidiSong& a, const MidiSong& b);

MidiSong read_midi_file(const std::string& path);
void write_midi_file(const MidiSong& song, const std::string& path);

}  // namespace chordgen
