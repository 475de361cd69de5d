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

#include "ovbm/audio_io.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace ovbm {
namespace {

using testing::TempDir;

Bytes stereo_pcm16(const std::vector<std::pair<std::int16_t, std::int16_t>>& frames) {
  ByteWriter w;
  w.str("RIFF");
  w.u32(36 + static_cast<std::uint32_t>(frames.size() * 4));
  w.str("WAVE");
  w.str("fmt ");
  w.u32(16);
  w.u16(1);
  w.u16(2);
  w.u32(16000);
  w.u32(16000 * 4);
  w.u16(4);
  w.u16(16);
  w.str("data");
  w.u32(static_cast<std::uint32_t>(frames.size() * 4));
  for (auto [l, r] : frames) {
    w.i16(l);
    w.i16(r);
  }
  return std::move(w.bytes());
}

TEST(LoadWav, SilenceGivesZeroSamples) {
  TempDir dir("wav");
  AudioClip silence{std::vector<double>(16000, 0.0), 16000};
  write_wav(dir / "s.wav", silence);
  const AudioClip loaded = load_wav(dir / "s.wav");
  EXPECT_EQ(loaded.sample_rate, 16000);
  ASSERT_EQ(loaded.samples.size(), 16000u);
  for (double s : loaded.samples) EXPECT_EQ(s, 0.0);
  EXPECT_DOUBLE_EQ(loaded.duration(), 1.0);
}

TEST(LoadWav, Int16FullScaleIsScaledBy32768) {
  const AudioClip clip = decode_wav(stereo_pcm16({{32767, 32767}}));
  EXPECT_DOUBLE_EQ(clip.samples[0], 32767.0 / 32768.0);
}

TEST(LoadWav, StereoChannelsAreAveraged) {
  const AudioClip clip = decode_wav(stereo_pcm16({{16384, -16384}, {8192, 0}}));
  ASSERT_EQ(clip.samples.size(), 2u);
  EXPECT_EQ(clip.samples[0], 0.0);
  EXPECT_DOUBLE_EQ(clip.samples[1], 0.125);
}

TEST(LoadWav, Float32RoundTripIsExactForFloatValues) {
  AudioClip clip{{0.25, -0.5, 0.125}, 22050};
  const AudioClip back = decode_wav(encode_wav(clip, WavEncoding::Float32));
  EXPECT_EQ(back, clip);
}

TEST(LoadWav, Pcm16RoundTripWithinOneQuantum) {
  const AudioClip clip = testing::random_clip(0.25, 99);
  const AudioClip back = decode_wav(encode_wav(clip, WavEncoding::Pcm16));
  ASSERT_EQ(back.samples.size(), clip.samples.size());
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    EXPECT_LE(std::abs(back.samples[i] - clip.samples[i]), 1.0 / 32768.0);
  }
}

TEST(LoadWav, Errors) {
  Bytes bytes = stereo_pcm16({{1, 1}});
  Bytes bad_magic = bytes;
  bad_magic[0] = 'X';
  try {
    decode_wav(bad_magic);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedContainer);
  }

  Bytes truncated(bytes.begin(), bytes.begin() + 30);
  try {
    decode_wav(truncated);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedContainer);
  }

  Bytes alaw = bytes;
  alaw[20] = 6;  // format tag: A-law
  try {
    decode_wav(alaw);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnsupportedEncoding);
  }

  try {
    decode_wav(stereo_pcm16({}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyAudio);
  }
}

TEST(LoadWav, MissingFileIsIoFailure) {
  try {
    load_wav("/nonexistent/ovbm/x.wav");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoFailure);
  }
}

TEST(ResampleLinear, IdentityWhenRatesMatch) {
  const AudioClip clip = testing::random_clip(0.1, 3);
  EXPECT_EQ(resample_linear(clip, 16000), clip);
}

TEST(ResampleLinear, ConstantsArePreservedExactly) {
  AudioClip clip{std::vector<double>(8000, 0.3), 8000};
  const AudioClip up = resample_linear(clip, 16000);
  EXPECT_EQ(up.sample_rate, 16000);
  EXPECT_EQ(up.samples.size(), 16000u);
  for (double s : up.samples) EXPECT_EQ(s, 0.3);

  const AudioClip odd = resample_linear(clip, 11025);
  for (double s : odd.samples) EXPECT_EQ(s, 0.3);
}

TEST(ResampleLinear, DownsampledToneMatchesAnalyticSine) {
  const AudioClip clip = testing::tone(100.0, 1.0, 1.0, 48000);
  const AudioClip down = resample_linear(clip, 16000);
  ASSERT_EQ(down.samples.size(), 16000u);
  for (std::size_t j = 0; j < down.samples.size(); ++j) {
    const double expected = std::sin(2.0 * M_PI * 100.0 * static_cast<double>(j) / 16000.0);
    EXPECT_LT(std::abs(down.samples[j] - expected), 1e-3);
  }
}

TEST(ResampleLinear, NonIntegerRatioToneStaysWithinBound) {
  const AudioClip clip = testing::tone(440.0, 0.5, 1.0, 44100);
  const AudioClip out = resample_linear(clip, 16000);
  EXPECT_NEAR(out.duration(), clip.duration(), 1.0 / 16000.0);
  double worst = 0.0;
  for (std::size_t j = 0; j < out.samples.size(); ++j) {
    const double t = static_cast<double>(j) / 16000.0;
    if (t * 44100.0 > clip.samples.size() - 1) break;
    worst = std::max(worst, std::abs(out.samples[j] - std::sin(2.0 * M_PI * 440.0 * t)));
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(PadTo, SameDurationIsIdentity) {
  const AudioClip clip = testing::random_clip(3.0, 1);
  EXPECT_EQ(pad_to(clip, 3.0), clip);
}

TEST(PadTo, AppendsZerosAndKeepsPrefix) {
  const AudioClip clip = testing::random_clip(3.0, 1);
  const AudioClip padded = pad_to(clip, 4.0);
  ASSERT_EQ(padded.samples.size(), 64000u);
  for (std::size_t i = 48000; i < 64000; ++i) EXPECT_EQ(padded.samples[i], 0.0);

  const AudioClip short_clip = testing::random_clip(2.5, 2);
  const AudioClip p2 = pad_to(short_clip, 4.0);
  EXPECT_DOUBLE_EQ(p2.duration(), 4.0);
  EXPECT_TRUE(std::equal(short_clip.samples.begin(), short_clip.samples.end(), p2.samples.begin()));
}

TEST(PadTo, ShrinkIsRejected) {
  try {
    pad_to(testing::random_clip(3.0, 1), 2.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShrinkRequested);
  }
}

TEST(ParseManifest, ParsesRowsInOrder) {
  const auto recs = parse_manifest_text(
      "subject_id,wav_path,label,gender,age\nS092,a.wav,1,F,71\nS019,b.wav,nonAD,m,\n"
      "S003,c.wav,ad,,unknown\r\nS004,d.wav,0,x,60\n");
  ASSERT_EQ(recs.size(), 4u);
  EXPECT_EQ(recs[0], (SubjectRecord{"S092", "a.wav", Label::Positive, Gender::F, 71}));
  EXPECT_EQ(recs[1].label, Label::Negative);
  EXPECT_EQ(recs[1].gender, Gender::M);
  EXPECT_FALSE(recs[1].age.has_value());
  EXPECT_EQ(recs[2].label, Label::Positive);
  EXPECT_EQ(recs[2].gender, Gender::Unknown);
  EXPECT_EQ(recs[3].gender, Gender::Unknown);
  EXPECT_EQ(recs[3].subject_id, "S004");
}

TEST(ParseManifest, HeaderOnlyIsEmpty) {
  EXPECT_TRUE(parse_manifest_text("subject_id,wav_path,label,gender,age\n").empty());
}

TEST(ParseManifest, Errors) {
  auto code_of = [](const std::string& text) {
    try {
      parse_manifest_text(text);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  EXPECT_EQ(code_of("subject_id,wav_path,label,gender,age\nS1,a.wav,1,F,70\nS1,b.wav,0,M,71\n"),
            ErrorCode::DuplicateSubject);
  EXPECT_EQ(code_of("subject_id,wav_path,gender,age\nS1,a.wav,F,70\n"), ErrorCode::MissingColumn);
  EXPECT_EQ(code_of("subject_id,wav_path,label,gender,age\nS1,a.wav,maybe,F,70\n"),
            ErrorCode::UnparseableLabel);
  EXPECT_EQ(code_of(""), ErrorCode::MissingColumn);
}

TEST(ParseManifest, FormatRoundTrip) {
  const std::vector<SubjectRecord> recs = {{"S1", "wav/S1.wav", Label::Positive, Gender::F, 70},
                                           {"S2", "wav/S2.wav", Label::Negative, Gender::Unknown, {}}};
  EXPECT_EQ(parse_manifest_text(format_manifest(recs)), recs);
}

TEST(SynthClip, PureSineIsDeterministicTone) {
  SynthSpec spec;
  spec.components = {{WaveformKind::Sine, 440.0, 1.0}};
  spec.seed = 1;
  const AudioClip a = synth_clip(spec);
  spec.seed = 2;
  const AudioClip b = synth_clip(spec);
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.samples.size(), 16000u);
  EXPECT_NEAR(a.samples[9], std::sin(2.0 * M_PI * 440.0 * 9.0 / 16000.0), 1e-15);
}

TEST(SynthClip, NoiseIsSeedDeterministic) {
  SynthSpec spec;
  spec.components = {{WaveformKind::Noise, 0.0, 0.5}};
  spec.seed = 11;
  EXPECT_EQ(synth_clip(spec), synth_clip(spec));
  SynthSpec other = spec;
  other.seed = 12;
  const AudioClip a = synth_clip(spec), b = synth_clip(other);
  std::size_t differing = 0;
  for (std::size_t i = 0; i < a.samples.size(); ++i) differing += a.samples[i] != b.samples[i];
  EXPECT_GT(differing, a.samples.size() * 9 / 10);
}

TEST(SynthClip, RejectsClippingAndBadDuration) {
  SynthSpec spec;
  spec.components = {{WaveformKind::Sine, 100.0, 0.7}, {WaveformKind::Noise, 0.0, 0.5}};
  EXPECT_THROW(synth_clip(spec), Error);
  spec.components.pop_back();
  spec.duration = 0.0;
  EXPECT_THROW(synth_clip(spec), Error);
}

TEST(SynthClip, CorpusClassesStayWithinUnitRange) {
  for (char cls : {'A', 'B'}) {
    const AudioClip clip = synth_clip(corpus_spec(cls, 1.0, 5));
    for (double s : clip.samples) EXPECT_LE(std::abs(s), 1.0);
  }
}

}  // namespace
}  // namespace ovbm
