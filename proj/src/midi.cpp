#include "chordgen/midi.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>

#include "chordgen/binio.hpp"

namespace chordgen {

namespace {

constexpr uint8_t kMetaTrackName = 0x03;
constexpr uint8_t kMetaEndOfTrack = 0x2F;
constexpr uint8_t kMetaTempo = 0x51;
constexpr uint8_t kMetaKeySignature = 0x59;

class BigEndianReader {
 public:
  BigEndianReader(const uint8_t* data, size_t size) : data_(data), size_(size) {}

  size_t pos() const { return pos_; }
  size_t remaining() const { return size_ - pos_; }

  uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  uint8_t peek() const {
    if (pos_ >= size_) throw MalformedFile("truncated midi data");
    return data_[pos_];
  }
  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>((data_[pos_] << 8) | data_[pos_ + 1]);
    pos_ += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = (static_cast<uint32_t>(data_[pos_]) << 24) |
                 (static_cast<uint32_t>(data_[pos_ + 1]) << 16) |
                 (static_cast<uint32_t>(data_[pos_ + 2]) << 8) |
                 static_cast<uint32_t>(data_[pos_ + 3]);
    pos_ += 4;
    return v;
  }
  uint32_t varint() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      uint8_t b = u8();
      v = (v << 7) | (b & 0x7F);
      if ((b & 0x80) == 0) return v;
    }
    throw MalformedFile("variable-length quantity longer than 4 bytes");
  }
  const uint8_t* bytes(size_t n) {
    need(n);
    const uint8_t* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  void skip(size_t n) { bytes(n); }

 private:
  void need(size_t n) const {
    if (remaining() < n) throw MalformedFile("truncated midi data");
  }

  const uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
};

int key_tonic_pc(int sharps, bool minor) {
  // Each sharp moves the major tonic up a fifth; minors sit a sixth
  // above their relative major's tonic.
  int pc = sharps * 7 + (minor ? 9 : 0);
  return ((pc % 12) + 12) % 12;
}

struct OpenNote {
  int64_t onset;
  int velocity;
};

struct TrackParseState {
  Track track;
  int track_index;
  // (channel, pitch) -> open note
  std::map<std::pair<int, int>, OpenNote> open;
  bool has_program = false;
};

void close_note(TrackParseState& st, int channel, int pitch, int64_t end_tick) {
  auto it = st.open.find({channel, pitch});
  if (it == st.open.end()) return; // unmatched note-off: skip
  int64_t dur = end_tick - it->second.onset;
  if (dur > 0) {
    st.track.notes.push_back(Note{pitch, it->second.onset, dur, it->second.velocity,
                                  st.track_index});
  }
  st.open.erase(it);
}

void parse_track(BigEndianReader& r, size_t length, TrackParseState& st, MidiSong& song,
                 bool& tempo_seen, int64_t& tempo_tick) {
  size_t end = r.pos() + length;
  int64_t tick = 0;
  int running_status = -1;

  while (r.pos() < end) {
    tick += r.varint();
    uint8_t status = r.peek();
    if (status < 0x80) {
      if (running_status < 0) throw MalformedFile("data byte without running status");
      status = static_cast<uint8_t>(running_status);
    } else {
      r.skip(1);
    }

    if (status == 0xFF) {
      running_status = -1;
      uint8_t type = r.u8();
      uint32_t len = r.varint();
      const uint8_t* data = r.bytes(len);
      switch (type) {
        case kMetaTrackName:
          if (st.track.name.empty())
            st.track.name.assign(reinterpret_cast<const char*>(data), len);
          break;
        case kMetaTempo: {
          if (len != 3) throw MalformedFile("bad tempo meta length");
          int tempo = (data[0] << 16) | (data[1] << 8) | data[2];
          if (tempo > 0 && (!tempo_seen || tick < tempo_tick)) {
            song.tempo_us_per_quarter = tempo;
            tempo_tick = tick;
            tempo_seen = true;
          }
          break;
        }
        case kMetaKeySignature: {
          if (len != 2) throw MalformedFile("bad key signature meta length");
          int sharps = static_cast<int8_t>(data[0]);
          bool minor = data[1] != 0;
          song.key_events.push_back(KeySignature{
              key_tonic_pc(sharps, minor), minor ? KeyMode::Minor : KeyMode::Major, tick});
          break;
        }
        case kMetaEndOfTrack:
          for (auto& [key, open] : std::map(st.open)) close_note(st, key.first, key.second, tick);
          r.skip(end - r.pos());
          return;
        default:
          break; // other meta events carry nothing the pipeline needs
      }
      continue;
    }
    if (status == 0xF0 || status == 0xF7) {
      running_status = -1;
      uint32_t len = r.varint();
      r.skip(len);
      continue;
    }
    if (status >= 0xF1) throw MalformedFile("unexpected system message in file");

    running_status = status;
    int channel = status & 0x0F;
    switch (status & 0xF0) {
      case 0x90: {
        int pitch = r.u8() & 0x7F;
        int velocity = r.u8() & 0x7F;
        if (channel == 9) st.track.is_drum = true;
        if (velocity == 0) {
          close_note(st, channel, pitch, tick);
        } else {
          // A re-struck pitch closes the earlier note at this onset.
          close_note(st, channel, pitch, tick);
          st.open[{channel, pitch}] = OpenNote{tick, velocity};
        }
        break;
      }
      case 0x80: {
        int pitch = r.u8() & 0x7F;
        r.skip(1); // release velocity
        if (channel == 9) st.track.is_drum = true;
        close_note(st, channel, pitch, tick);
        break;
      }
      case 0xC0: {
        int program = r.u8() & 0x7F;
        if (!st.has_program) {
          st.track.program = program;
          st.has_program = true;
        }
        break;
      }
      case 0xA0:
      case 0xB0:
      case 0xE0:
        r.skip(2);
        break;
      case 0xD0:
        r.skip(1);
        break;
      default:
        throw MalformedFile("unexpected status byte");
    }
  }

  // Track chunk ended without an end-of-track meta; close what is open.
  for (auto& [key, open] : std::map(st.open)) close_note(st, key.first, key.second, tick);
}

void sort_notes(std::vector<Note>& notes) {
  std::stable_sort(notes.begin(), notes.end(), [](const Note& a, const Note& b) {
    if (a.onset != b.onset) return a.onset < b.onset;
    return a.pitch < b.pitch;
  });
}

class BigEndianWriter {
 public:
  void raw(const void* p, size_t n) {
    const auto* b = static_cast<const uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u8(uint8_t v) { buf_.push_back(v); }
  void u16(uint16_t v) {
    u8(static_cast<uint8_t>(v >> 8));
    u8(static_cast<uint8_t>(v));
  }
  void u24(uint32_t v) {
    u8(static_cast<uint8_t>(v >> 16));
    u8(static_cast<uint8_t>(v >> 8));
    u8(static_cast<uint8_t>(v));
  }
  void u32(uint32_t v) {
    u16(static_cast<uint16_t>(v >> 16));
    u16(static_cast<uint16_t>(v));
  }
  void varint(uint32_t v) {
    uint8_t stack[5];
    int n = 0;
    stack[n++] = v & 0x7F;
    v >>= 7;
    while (v) {
      stack[n++] = static_cast<uint8_t>((v & 0x7F) | 0x80);
      v >>= 7;
    }
    while (n) u8(stack[--n]);
  }

  std::vector<uint8_t>& bytes() { return buf_; }

 private:
  std::vector<uint8_t> buf_;
};

struct TrackEvent {
  int64_t tick;
  int priority; // meta < note-off < note-on at equal ticks
  std::vector<uint8_t> bytes;
};

std::vector<uint8_t> render_track(std::vector<TrackEvent> events, int64_t min_end_tick) {
  std::stable_sort(events.begin(), events.end(), [](const TrackEvent& a, const TrackEvent& b) {
    if (a.tick != b.tick) return a.tick < b.tick;
    return a.priority < b.priority;
  });
  BigEndianWriter w;
  int64_t tick = 0;
  for (const TrackEvent& e : events) {
    w.varint(static_cast<uint32_t>(e.tick - tick));
    tick = e.tick;
    w.raw(e.bytes.data(), e.bytes.size());
  }
  w.varint(static_cast<uint32_t>(std::max<int64_t>(0, min_end_tick - tick)));
  w.u8(0xFF);
  w.u8(kMetaEndOfTrack);
  w.u8(0x00);
  return std::move(w.bytes());
}

void validate_song(const MidiSong& song) {
  if (song.ticks_per_quarter <= 0) throw InvalidSong("ticks_per_quarter must be positive");
  if (song.tempo_us_per_quarter <= 0) throw InvalidSong("tempo must be positive");
  for (size_t i = 0; i < song.tracks.size(); ++i) {
    for (const Note& n : song.tracks[i].notes) {
      if (n.pitch < 0 || n.pitch > 127) throw InvalidSong("pitch out of range");
      if (n.duration <= 0) throw InvalidSong("note duration must be positive");
      if (n.onset < 0) throw InvalidSong("negative note onset");
      if (n.velocity < 1 || n.velocity > 127) throw InvalidSong("velocity out of range");
      if (n.track_index != static_cast<int>(i)) throw InvalidSong("note track_index mismatch");
    }
  }
  for (const KeySignature& k : song.key_events) {
    if (k.tonic_pc < 0 || k.tonic_pc > 11) throw InvalidSong("key tonic out of range");
    if (k.tick < 0) throw InvalidSong("negative key event tick");
  }
}

int key_sharps(const KeySignature& k) {
  // Invert key_tonic_pc: tonic = 7*sharps (+9 for minor) mod 12, and
  // 7 inverts to itself mod 12.
  int base = k.mode == KeyMode::Minor ? (k.tonic_pc - 9 + 12) % 12 : k.tonic_pc;
  int sharps = (base * 7) % 12;
  if (sharps > 6) sharps -= 12; // prefer the flat spelling
  return sharps;
}

}  // namespace

Note& MidiSong::add_note(int track, Note n) {
  n.track_index = track;
  return tracks[static_cast<size_t>(track)].notes.emplace_back(n);
}

MidiSong parse_midi(const std::vector<uint8_t>& bytes) {
  BigEndianReader r(bytes.data(), bytes.size());
  if (r.remaining() < 8 || std::memcmp(r.bytes(4), "MThd", 4) != 0)
    throw MalformedFile("missing MThd header");
  uint32_t header_len = r.u32();
  if (header_len < 6) throw MalformedFile("bad MThd length");
  uint16_t format = r.u16();
  uint16_t ntrks = r.u16();
  uint16_t division = r.u16();
  r.skip(header_len - 6);
  if (format > 1) throw UnsupportedFormat("SMF format " + std::to_string(format));
  if (division & 0x8000) throw UnsupportedFormat("SMPTE time division");
  if (division == 0) throw MalformedFile("zero time division");

  MidiSong song;
  song.ticks_per_quarter = division;
  bool tempo_seen = false;
  int64_t tempo_tick = 0;

  int parsed = 0;
  while (parsed < ntrks && r.remaining() > 0) {
    if (r.remaining() < 8) throw MalformedFile("truncated chunk header");
    const uint8_t* id = r.bytes(4);
    uint32_t len = r.u32();
    if (std::memcmp(id, "MTrk", 4) != 0) {
      r.skip(len); // alien chunk, allowed by the SMF spec
      continue;
    }
    if (r.remaining() < len) throw MalformedFile("truncated track chunk");
    TrackParseState st;
    st.track_index = static_cast<int>(song.tracks.size());
    size_t track_end = r.pos() + len;
    parse_track(r, len, st, song, tempo_seen, tempo_tick);
    if (r.pos() != track_end) throw MalformedFile("track events overran chunk length");
    sort_notes(st.track.notes);
    song.tracks.push_back(std::move(st.track));
    ++parsed;
  }
  if (parsed != ntrks) throw MalformedFile("fewer track chunks than header declares");

  std::stable_sort(song.key_events.begin(), song.key_events.end(),
                   [](const KeySignature& a, const KeySignature& b) { return a.tick < b.tick; });
  return song;
}

std::vector<uint8_t> write_midi(const MidiSong& song) {
  validate_song(song);

  size_t ntrks = std::max<size_t>(1, song.tracks.size());
  BigEndianWriter out;
  out.raw("MThd", 4);
  out.u32(6);
  out.u16(1);
  out.u16(static_cast<uint16_t>(ntrks));
  out.u16(static_cast<uint16_t>(song.ticks_per_quarter));

  int melodic_channel = 0;
  for (size_t i = 0; i < ntrks; ++i) {
    std::vector<TrackEvent> events;
    int64_t end_tick = 0;

    if (i == 0) {
      BigEndianWriter tempo;
      tempo.u8(0xFF);
      tempo.u8(kMetaTempo);
      tempo.u8(3);
      tempo.u24(static_cast<uint32_t>(song.tempo_us_per_quarter));
      events.push_back(TrackEvent{0, 0, std::move(tempo.bytes())});
      for (const KeySignature& k : song.key_events) {
        BigEndianWriter ks;
        ks.u8(0xFF);
        ks.u8(kMetaKeySignature);
        ks.u8(2);
        ks.u8(static_cast<uint8_t>(static_cast<int8_t>(key_sharps(k))));
        ks.u8(k.mode == KeyMode::Minor ? 1 : 0);
        events.push_back(TrackEvent{k.tick, 0, std::move(ks.bytes())});
        end_tick = std::max(end_tick, k.tick);
      }
    }

    if (i < song.tracks.size()) {
      const Track& track = song.tracks[i];
      int channel = track.is_drum ? 9 : melodic_channel;
      if (!track.is_drum) {
        melodic_channel = (melodic_channel + 1) % 16;
        if (melodic_channel == 9) melodic_channel = 10;
      }

      if (!track.name.empty()) {
        BigEndianWriter name;
        name.u8(0xFF);
        name.u8(kMetaTrackName);
        name.varint(static_cast<uint32_t>(track.name.size()));
        name.raw(track.name.data(), track.name.size());
        events.push_back(TrackEvent{0, 0, std::move(name.bytes())});
      }
      {
        BigEndianWriter prog;
        prog.u8(static_cast<uint8_t>(0xC0 | channel));
        prog.u8(static_cast<uint8_t>(track.program & 0x7F));
        events.push_back(TrackEvent{0, 0, std::move(prog.bytes())});
      }
      for (const Note& n : track.notes) {
        BigEndianWriter on;
        on.u8(static_cast<uint8_t>(0x90 | channel));
        on.u8(static_cast<uint8_t>(n.pitch));
        on.u8(static_cast<uint8_t>(n.velocity));
        events.push_back(TrackEvent{n.onset, 2, std::move(on.bytes())});
        BigEndianWriter off;
        off.u8(static_cast<uint8_t>(0x80 | channel));
        off.u8(static_cast<uint8_t>(n.pitch));
        off.u8(0x40);
        events.push_back(TrackEvent{n.onset + n.duration, 1, std::move(off.bytes())});
        end_tick = std::max(end_tick, n.onset + n.duration);
      }
    }

    std::vector<uint8_t> body = render_track(std::move(events), end_tick);
    out.raw("MTrk", 4);
    out.u32(static_cast<uint32_t>(body.size()));
    out.raw(body.data(), body.size());
  }
  return std::move(out.bytes());
}

std::optional<int> extract_key_meta(const MidiSong& song) {
  if (song.key_events.empty()) return std::nullopt;
  const KeySignature& first = song.key_events.front();
  if (first.mode == KeyMode::Major && first.tonic_pc == 0 && first.tick == 0)
    return std::nullopt; // the default meta event, too often wrong to trust
  if (first.mode == KeyMode::Minor) return (first.tonic_pc + 3) % 12;
  return first.tonic_pc;
}

bool note_equivalent(const MidiSong& a, const MidiSong& b) {
  auto note_tracks = [](const MidiSong& s) {
    std::vector<std::vector<std::tuple<int, int64_t, int64_t>>> out;
    for (const Track& t : s.tracks) {
      if (t.notes.empty()) continue;
      auto& own = out.emplace_back();
      own.reserve(t.notes.size());
      for (const Note& n : t.notes) own.emplace_back(n.pitch, n.onset, n.duration);
    }
    return out;
  };
  return note_tracks(a) == note_tracks(b);
}

MidiSong read_midi_file(const std::string& path) {
  return parse_midi(read_file_bytes(path));
}

void write_midi_file(const MidiSong& song, const std::string& path) {
  write_file_atomic(path, write_midi(song));
}

}  // namespace chordgen
