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

#ifndef OVBM_RUN_CONFIG_HPP
#define OVBM_RUN_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <string>

#include "ovbm/pipeline.hpp"
#include "ovbm/serialize.hpp"

namespace ovbm {

inline constexpr int kArtifactFormat = 1;

/// Everything a command needs besides paths. Layered as
/// defaults < config file < command-line flags.
struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t n_subjects = 40;
  double clip_seconds = 12.0;

  double chunk_size = 4.0;
  double stride = kDefaultStride;
  bool poisson_mask = false;
  AggregationScheme scheme = AggregationScheme::Average;
  TransferStrategy strategy = TransferStrategy::last(2);
  double threshold = 0.5;

  double lr = 1e-3;
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  std::size_t pretrain_epochs = 20;
  std::size_t surrogate_per_class = 12;
  std::size_t fusion_hidden = 1024;
  bool baseline = true;

  int num_cepstra = 200;
  int num_filters = 200;
  int fft_size = 2048;

  std::size_t pool_frames = 4;
  std::size_t pool_coeffs = 8;
  std::size_t stem_channels = 8;
  std::size_t num_blocks = 3;
  std::size_t embedding_dim = 64;
  double input_scale = 0.1;

  MfccParams mfcc() const {
    MfccParams p;
    p.num_cepstra = num_cepstra;
    p.num_filters = num_filters;
    p.fft_size = fft_size;
    return p;
  }

  ChunkingParams chunking() const { return {chunk_size, stride, mfcc()}; }

  /// Input frames follow the main chunk size; coefficients follow the MFCC.
  CnnArch arch() const {
    const MfccParams p = mfcc();
    CnnArch a;
    a.input_frames = num_frames(seconds_to_samples(chunk_size, p.sample_rate), p.frame_length(),
                                p.frame_step());
    a.input_coeffs = static_cast<std::size_t>(num_cepstra);
    a.pool_frames = pool_frames;
    a.pool_coeffs = pool_coeffs;
    a.stem_channels = stem_channels;
    a.num_blocks = num_blocks;
    a.embedding_dim = embedding_dim;
    a.input_scale = input_scale;
    return a;
  }

  ExperimentConfig experiment() const {
    ExperimentConfig e;
    e.seed = seed;
    e.chunking = chunking();
    e.arch = arch();
    e.surrogate_per_class = surrogate_per_class;
    e.pretrain = TrainConfig{1e-3, pretrain_epochs, batch_size};
    e.finetune = TrainConfig{lr, epochs, batch_size};
    e.fusion = TrainConfig{lr, epochs, batch_size};
    e.fusion_hidden = fusion_hidden;
    e.member_strategy = strategy;
    e.poisson_mask = poisson_mask;
    e.scheme = scheme;
    e.threshold = threshold;
    e.train_baseline = baseline;
    return e;
  }

  void validate() const {
    if (n_subjects == 0) fail(ErrorCode::InvalidArgument, "n_subjects must be >= 1");
    if (!(clip_seconds > 0.0)) fail(ErrorCode::InvalidArgument, "clip_seconds must be > 0");
    if (!(chunk_size > 0.0) || !(stride > 0.0)) {
      fail(ErrorCode::InvalidArgument, "chunk size and stride must be > 0");
    }
    if (!(threshold >= 0.0 && threshold <= 1.0)) {
      fail(ErrorCode::InvalidArgument, "threshold must lie in [0, 1]");
    }
    if (epochs == 0 || pretrain_epochs == 0) fail(ErrorCode::InvalidArgument, "epochs must be >= 1");
    if (surrogate_per_class < 2) {
      fail(ErrorCode::InvalidArgument, "surrogate_per_class must be >= 2");
    }
    if (fusion_hidden == 0) fail(ErrorCode::InvalidArgument, "fusion_hidden must be >= 1");
    if (num_cepstra < 1 || num_filters < 1 || fft_size < 1) {
      fail(ErrorCode::InvalidArgument, "MFCC sizes must be >= 1");
    }
    mfcc().validate();
    experiment().finetune.validate();
    arch().validate(8);
    if (!(input_scale > 0.0)) fail(ErrorCode::InvalidArgument, "input_scale must be > 0");
  }
};

/// Canonical JSON: fixed key order, no paths.
inline Json to_json(const RunConfig& c) {
  Json j = Json::object();
  j["seed"] = c.seed;
  j["n_subjects"] = c.n_subjects;
  j["clip_seconds"] = c.clip_seconds;
  j["chunk_size"] = c.chunk_size;
  j["stride"] = c.stride;
  j["poisson_mask"] = c.poisson_mask;
  j["scheme"] = to_string(c.scheme);
  j["strategy"] = c.strategy.to_string();
  j["threshold"] = c.threshold;
  j["lr"] = c.lr;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["pretrain_epochs"] = c.pretrain_epochs;
  j["surrogate_per_class"] = c.surrogate_per_class;
  j["fusion_hidden"] = c.fusion_hidden;
  j["baseline"] = c.baseline;
  j["mfcc"] = {{"num_cepstra", c.num_cepstra},
               {"num_filters", c.num_filters},
               {"fft_size", c.fft_size}};
  j["arch"] = {{"pool_frames", c.pool_frames},         {"pool_coeffs", c.pool_coeffs},
               {"stem_channels", c.stem_channels},     {"num_blocks", c.num_blocks},
               {"embedding_dim", c.embedding_dim},     {"input_scale", c.input_scale}};
  return j;
}

namespace detail {

template <typename T>
void read_key(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception&) {
    fail(ErrorCode::InvalidArgument, std::string("config key '") + key + "' has the wrong type");
  }
}

inline void check_keys(const Json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) fail(ErrorCode::InvalidArgument, where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok |= key == k;
    if (!ok) fail(ErrorCode::InvalidArgument, "unknown config key '" + key + "' in " + where);
  }
}

}  // namespace detail

/// Overlays the keys present in `j`; unknown keys are rejected.
inline void apply_json(RunConfig& c, const Json& j) {
  detail::check_keys(j,
                     {"seed", "n_subjects", "clip_seconds", "chunk_size", "stride", "poisson_mask",
                      "scheme", "strategy", "threshold", "lr", "epochs", "batch_size",
                      "pretrain_epochs", "surrogate_per_class", "fusion_hidden", "baseline", "mfcc",
                      "arch"},
                     "config");
  detail::read_key(j, "seed", c.seed);
  detail::read_key(j, "n_subjects", c.n_subjects);
  detail::read_key(j, "clip_seconds", c.clip_seconds);
  detail::read_key(j, "chunk_size", c.chunk_size);
  detail::read_key(j, "stride", c.stride);
  detail::read_key(j, "poisson_mask", c.poisson_mask);
  if (j.contains("scheme")) {
    std::string s;
    detail::read_key(j, "scheme", s);
    c.scheme = parse_scheme(s);
  }
  if (j.contains("strategy")) {
    std::string s;
    detail::read_key(j, "strategy", s);
    c.strategy = TransferStrategy::parse(s);
  }
  detail::read_key(j, "threshold", c.threshold);
  detail::read_key(j, "lr", c.lr);
  detail::read_key(j, "epochs", c.epochs);
  detail::read_key(j, "batch_size", c.batch_size);
  detail::read_key(j, "pretrain_epochs", c.pretrain_epochs);
  detail::read_key(j, "surrogate_per_class", c.surrogate_per_class);
  detail::read_key(j, "fusion_hidden", c.fusion_hidden);
  detail::read_key(j, "baseline", c.baseline);
  if (j.contains("mfcc")) {
    const Json& m = j.at("mfcc");
    detail::check_keys(m, {"num_cepstra", "num_filters", "fft_size"}, "mfcc");
    detail::read_key(m, "num_cepstra", c.num_cepstra);
    detail::read_key(m, "num_filters", c.num_filters);
    detail::read_key(m, "fft_size", c.fft_size);
  }
  if (j.contains("arch")) {
    const Json& a = j.at("arch");
    detail::check_keys(a,
                       {"pool_frames", "pool_coeffs", "stem_channels", "num_blocks",
                        "embedding_dim", "input_scale"},
                       "arch");
    detail::read_key(a, "pool_frames", c.pool_frames);
    detail::read_key(a, "pool_coeffs", c.pool_coeffs);
    detail::read_key(a, "stem_channels", c.stem_channels);
    detail::read_key(a, "num_blocks", c.num_blocks);
    detail::read_key(a, "embedding_dim", c.embedding_dim);
    detail::read_key(a, "input_scale", c.input_scale);
  }
}

inline RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  apply_json(c, j);
  return c;
}

inline Json load_json_file(const std::filesystem::path& path) {
  const Bytes bytes = read_file(path);
  try {
    return Json::parse(bytes.begin(), bytes.end());
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
  }
}

/// First 16 hex digits of SHA-256 over the canonical config without the seed.
inline std::string config_digest(const RunConfig& c) {
  Json j = to_json(c);
  j.erase("seed");
  return sha256_hex(j.dump()).substr(0, 16);
}

inline std::string artifact_comment(std::uint64_t seed, const std::string& digest) {
  return "# ovbm format=" + std::to_string(kArtifactFormat) + " seed=" + std::to_string(seed) +
         " config=" + digest;
}

inline Json artifact_meta(std::uint64_t seed, const std::string& digest) {
  return {{"artifact_format", kArtifactFormat}, {"seed", seed}, {"config_digest", digest}};
}

}  // namespace ovbm

#endif  // OVBM_RUN_CONFIG_HPP
