/* Copyright 2026 The OVBM Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef OVBM_AUDIO_IO_HPP
#define OVBM_AUDIO_IO_HPP

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ovbm/common.hpp"
#include "ovbm/io.hpp"

namespace ovbm {

/// Mono audio at a fixed sample rate; samples nominally in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 16000;

  double duration() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
  bool operator==(const AudioClip&) const = default;
};

enum class Label { Negative = 0, Positive = 1 };
enum class Gender { Unknown, F, M };

inline const char* to_string(Gender g) {
  switch (g) {
    case Gender::F: return "F";
    case Gender::M: return "M";
    case Gender::Unknown: break;
  }
  return "unknown";
}

struct SubjectRecord {
  std::string subject_id;
  std::string wav_path;
  Label label = Label::Negative;
  Gender gender = Gender::Unknown;
  std::optional<int> age;

  bool operator==(const SubjectRecord&) const = default;
};

enum class WaveformKind { Sine, Noise, Chirp };

struct SynthComponent {
  WaveformKind kind = WaveformKind::Sine;
  double frequency = 440.0;  // Hz; chirps sweep linearly from f to 2f
  double amplitude = 0.5;
};

/// Recipe for a deterministic synthetic clip.
struct SynthSpec {
  char class_id = 'A';
  double duration = 1.0;
  std::vector<SynthComponent> components;
  std::uint64_t seed = 0;
  int sample_rate = 16000;
};

inline void validate(const AudioClip& clip) {
  if (clip.sample_rate <= 0) fail(ErrorCode::InvalidArgument, "sample_rate must be positive");
  if (!all_finite(clip.samples)) fail(ErrorCode::InvalidArgument, "non-finite sample");
}

// ---------------------------------------------------------------------------
// WAV

enum class WavEncoding { Pcm16, Float32 };

inline AudioClip decode_wav(const Bytes& bytes) {
  ByteReader r(bytes, ErrorCode::MalformedContainer);
  if (bytes.size() < 12) fail(ErrorCode::MalformedContainer, "file too short for RIFF header");
  if (r.str(4) != "RIFF") fail(ErrorCode::MalformedContainer, "missing RIFF magic");
  const std::uint32_t riff_size = r.u32();
  if (r.str(4) != "WAVE") fail(ErrorCode::MalformedContainer, "missing WAVE magic");
  if (static_cast<std::size_t>(riff_size) + 8 > bytes.size()) {
    fail(ErrorCode::MalformedContainer, "RIFF size exceeds file size");
  }

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::optional<std::pair<std::size_t, std::size_t>> data_span;

  while (r.remaining() >= 8) {
    const std::string id = r.str(4);
    const std::uint32_t size = r.u32();
    const std::size_t start = r.position();
    if (size > r.remaining()) fail(ErrorCode::MalformedContainer, "chunk '" + id + "' overruns file");
    if (id == "fmt ") {
      if (size < 16) fail(ErrorCode::MalformedContainer, "fmt chunk too small");
      format = r.u16();
      channels = r.u16();
      rate = r.u32();
      r.u32();  // byte rate
      r.u16();  // block align
      bits = r.u16();
      if (format == 0xFFFE) {  // WAVE_FORMAT_EXTENSIBLE: subformat GUID starts with the tag
        if (size < 40) fail(ErrorCode::MalformedContainer, "extensible fmt chunk too small");
        r.u16();
        r.u16();
        r.u32();
        format = r.u16();
      }
      have_fmt = true;
    } else if (id == "data") {
      data_span = {start, size};
    }
    r.seek(std::min<std::size_t>(start + size + (size & 1u), bytes.size()));
  }
  if (!have_fmt) fail(ErrorCode::MalformedContainer, "no fmt chunk");
  if (!data_span) fail(ErrorCode::MalformedContainer, "no data chunk");

  const bool pcm16 = format == 1 && bits == 16;
  const bool float32 = format == 3 && bits == 32;
  if (!pcm16 && !float32) {
    fail(ErrorCode::UnsupportedEncoding,
         "format " + std::to_string(format) + " with " + std::to_string(bits) + " bits");
  }
  if (channels != 1 && channels != 2) {
    fail(ErrorCode::UnsupportedEncoding, std::to_string(channels) + " channels");
  }
  if (rate == 0) fail(ErrorCode::MalformedContainer, "zero sample rate");

  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
  const std::size_t frames = data_span->second / frame_bytes;
  if (frames == 0) fail(ErrorCode::EmptyAudio, "data chunk holds no samples");

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.samples.resize(frames);
  r.seek(data_span->first);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      acc += pcm16 ? static_cast<double>(r.i16()) / 32768.0 : static_cast<double>(r.f32());
    }
    clip.samples[i] = acc / channels;
  }
  if (!all_finite(clip.samples)) fail(ErrorCode::MalformedContainer, "non-finite float sample");
  return clip;
}

inline AudioClip load_wav(const std::filesystem::path& path) {
  return decode_wav(read_file(path));
}

inline Bytes encode_wav(const AudioClip& clip, WavEncoding encoding = WavEncoding::Pcm16,
                        int channels = 1) {
  validate(clip);
  const std::uint16_t bits = encoding == WavEncoding::Pcm16 ? 16 : 32;
  const std::uint32_t block = static_cast<std::uint32_t>(channels) * bits / 8;
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * block);

  ByteWriter w;
  w.str("RIFF");
  w.u32(36 + data_bytes);
  w.str("WAVE");
  w.str("fmt ");
  w.u32(16);
  w.u16(encoding == WavEncoding::Pcm16 ? 1 : 3);
  w.u16(static_cast<std::uint16_t>(channels));
  w.u32(static_cast<std::uint32_t>(clip.sample_rate));
  w.u32(static_cast<std::uint32_t>(clip.sample_rate) * block);
  w.u16(static_cast<std::uint16_t>(block));
  w.u16(bits);
  w.str("data");
  w.u32(data_bytes);
  for (double s : clip.samples) {
    for (int c = 0; c < channels; ++c) {
      if (encoding == WavEncoding::Pcm16) {
        const double q = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
        w.i16(static_cast<std::int16_t>(q));
      } else {
        w.f32(static_cast<float>(s));
      }
    }
  }
  return std::move(w.bytes());
}

inline void write_wav(const std::filesystem::path& path, const AudioClip& clip,
                      WavEncoding encoding = WavEncoding::Pcm16) {
  write_file_atomic(path, encode_wav(clip, encoding));
}

// ---------------------------------------------------------------------------
// Clip transforms

/// Linear-interpolation resampler. Accurate to ~1e-3 for tones below 1 kHz;
/// not band-limited.
inline AudioClip resample_linear(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) fail(ErrorCode::InvalidArgument, "target_rate must be positive");
  validate(clip);
  if (target_rate == clip.sample_rate) return clip;

  const std::size_t n = clip.samples.size();
  AudioClip out;
  out.sample_rate = target_rate;
  if (n == 0) return out;
  const auto m = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * target_rate / clip.sample_rate));
  out.samples.resize(std::max<std::size_t>(m, 1));
  const double step = static_cast<double>(clip.sample_rate) / target_rate;
  for (std::size_t j = 0; j < out.samples.size(); ++j) {
    const double t = static_cast<double>(j) * step;
    const auto i = std::min(static_cast<std::size_t>(t), n - 1);
    const double frac = t - static_cast<double>(i);
    const double a = clip.samples[i];
    const double b = clip.samples[std::min(i + 1, n - 1)];
    out.samples[j] = a + frac * (b - a);
  }
  return out;
}

inline std::size_t seconds_to_samples(double seconds, int rate) {
  return static_cast<std::size_t>(std::llround(seconds * rate));
}

inline AudioClip pad_to(const AudioClip& clip, double duration) {
  const std::size_t target = seconds_to_samples(duration, clip.sample_rate);
  if (target < clip.samples.size()) {
    fail(ErrorCode::ShrinkRequested, "pad_to(" + std::to_string(duration) +
                                         " s) is shorter than the clip (" +
                                         std::to_string(clip.duration()) + " s)");
  }
  AudioClip out = clip;
  out.samples.resize(target, 0.0);
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

namespace detail {

inline std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace detail

inline Label parse_label(const std::string& text) {
  const std::string t = detail::lower(detail::trim(text));
  if (t == "1" || t == "ad") return Label::Positive;
  if (t == "0" || t == "nonad") return Label::Negative;
  fail(ErrorCode::UnparseableLabel, "label '" + text + "'");
}

inline Gender parse_gender(const std::string& text) {
  const std::string t = detail::lower(detail::trim(text));
  if (t == "f") return Gender::F;
  if (t == "m") return Gender::M;
  return Gender::Unknown;
}

inline constexpr const char* kManifestHeader = "subject_id,wav_path,label,gender,age";

inline std::vector<SubjectRecord> parse_manifest_text(std::string text) {
  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
      static_cast<unsigned char>(text[1]) == 0xBB && static_cast<unsigned char>(text[2]) == 0xBF) {
    text.erase(0, 3);
  }
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::MissingColumn, "manifest has no header");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const auto header = detail::split_csv_line(line);
  static const std::vector<std::string> kColumns = {"subject_id", "wav_path", "label", "gender",
                                                    "age"};
  std::vector<std::size_t> index;
  for (const auto& name : kColumns) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) fail(ErrorCode::MissingColumn, "column '" + name + "'");
    index.push_back(static_cast<std::size_t>(it - header.begin()));
  }

  std::vector<SubjectRecord> records;
  std::set<std::string> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() < header.size()) fields.resize(header.size());

    SubjectRecord rec;
    rec.subject_id = fields[index[0]];
    rec.wav_path = fields[index[1]];
    if (rec.subject_id.empty()) {
      fail(ErrorCode::InvalidArgument, "empty subject_id on line " + std::to_string(line_no));
    }
    rec.label = parse_label(fields[index[2]]);
    rec.gender = parse_gender(fields[index[3]]);
    const std::string age = detail::lower(fields[index[4]]);
    if (!age.empty() && age != "unknown") {
      try {
        std::size_t used = 0;
        rec.age = std::stoi(age, &used);
        if (used != age.size() || *rec.age < 0) throw std::invalid_argument(age);
      } catch (const std::exception&) {
        fail(ErrorCode::InvalidArgument, "age '" + age + "' on line " + std::to_string(line_no));
      }
    }
    if (!seen.insert(rec.subject_id).second) {
      fail(ErrorCode::DuplicateSubject, rec.subject_id);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

inline std::vector<SubjectRecord> parse_manifest(const std::filesystem::path& path) {
  const Bytes bytes = read_file(path);
  return parse_manifest_text(std::string(bytes.begin(), bytes.end()));
}

inline std::string format_manifest(const std::vector<SubjectRecord>& records) {
  std::string out = std::string(kManifestHeader) + "\n";
  for (const auto& r : records) {
    out += r.subject_id + "," + r.wav_path + "," + (r.label == Label::Positive ? "1" : "0") +
           "," + to_string(r.gender) + "," + (r.age ? std::to_string(*r.age) : "") + "\n";
  }
  return out;
}

/// Relative WAV paths are taken relative to the manifest's directory.
inline std::filesystem::path resolve_wav(const std::filesystem::path& manifest,
                                         const SubjectRecord& rec) {
  std::filesystem::path p(rec.wav_path);
  if (p.is_absolute()) return p;
  return manifest.parent_path() / p;
}

// ---------------------------------------------------------------------------
// Synthesis

inline AudioClip synth_clip(const SynthSpec& spec) {
  if (!(spec.duration > 0.0)) fail(ErrorCode::InvalidArgument, "synth duration must be positive");
  if (spec.sample_rate <= 0) fail(ErrorCode::InvalidArgument, "synth sample_rate must be positive");
  double amp_sum = 0.0;
  for (const auto& c : spec.components) {
    if (c.amplitude < 0.0) fail(ErrorCode::InvalidArgument, "negative amplitude");
    amp_sum += c.amplitude;
  }
  if (amp_sum > 1.0 + 1e-12) fail(ErrorCode::InvalidArgument, "amplitudes sum above 1");

  AudioClip clip;
  clip.sample_rate = spec.sample_rate;
  const std::size_t n = seconds_to_samples(spec.duration, spec.sample_rate);
  clip.samples.assign(n, 0.0);
  const double rate = spec.sample_rate;
  for (std::size_t ci = 0; ci < spec.components.size(); ++ci) {
    const auto& c = spec.components[ci];
    Rng rng(mix64(spec.seed ^ mix64(ci + 1)));
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / rate;
      double v = 0.0;
      switch (c.kind) {
        case WaveformKind::Sine:
          v = std::sin(2.0 * M_PI * c.frequency * t);
          break;
        case WaveformKind::Noise:
          v = rng.uniform(-1.0, 1.0);
          break;
        case WaveformKind::Chirp:
          v = std::sin(2.0 * M_PI * c.frequency * (t + t * t / (2.0 * spec.duration)));
          break;
      }
      clip.samples[i] += c.amplitude * v;
    }
  }
  return clip;
}

/// Two-class corpus recipe. Class 'A' (disease-like) and class 'B' (control)
/// carry tones in disjoint frequency bands over a shared noise floor; the
/// per-subject seed jitters frequencies by up to 4%.
inline SynthSpec corpus_spec(char class_id, double duration, std::uint64_t seed) {
  Rng rng(sub_seed(seed, "corpus-spec"));
  const auto jitter = [&](double f) { return f * rng.uniform(0.96, 1.04); };
  SynthSpec spec;
  spec.class_id = class_id;
  spec.duration = duration;
  spec.seed = seed;
  if (class_id == 'A') {
    spec.components = {{WaveformKind::Sine, jitter(260.0), 0.30},
                       {WaveformKind::Sine, jitter(780.0), 0.20}};
  } else {
    spec.components = {{WaveformKind::Sine, jitter(520.0), 0.30},
                       {WaveformKind::Sine, jitter(1560.0), 0.20}};
  }
  spec.components.push_back({WaveformKind::Chirp, jitter(300.0), 0.10});
  spec.components.push_back({WaveformKind::Noise, 0.0, 0.15});
  return spec;
}

}  // namespace ovbm

#endif  // OVBM_AUDIO_IO_HPP
