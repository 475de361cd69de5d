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

#ifndef OVBM_SERIALIZE_HPP
#define OVBM_SERIALIZE_HPP

#include <filesystem>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "ovbm/cnn.hpp"
#include "ovbm/io.hpp"

namespace ovbm {

using Json = nlohmann::json;

inline constexpr std::uint32_t kWeightFormatVersion = 1;

/// Weight file: "OVBM", u32 version, u32 descriptor length, JSON descriptor,
/// then per tensor: u32 name length, name, u32 rank, u32 dims..., f32 data.
struct WeightFile {
  Json descriptor = Json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;
};

inline Bytes encode_weight_file(const WeightFile& file) {
  ByteWriter w;
  w.str("OVBM");
  w.u32(kWeightFormatVersion);
  const std::string desc = file.descriptor.dump();
  w.u32(static_cast<std::uint32_t>(desc.size()));
  w.str(desc);
  for (const auto& [name, t] : file.tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) w.u32(static_cast<std::uint32_t>(d));
    for (double v : t.data) w.f32(static_cast<float>(v));
  }
  return std::move(w.bytes());
}

inline WeightFile decode_weight_file(const Bytes& bytes) {
  ByteReader r(bytes, ErrorCode::MalformedContainer);
  if (r.str(4) != "OVBM") fail(ErrorCode::MalformedContainer, "missing OVBM magic");
  const std::uint32_t version = r.u32();
  if (version != kWeightFormatVersion) {
    fail(ErrorCode::MalformedContainer, "unsupported weight format version " + std::to_string(version));
  }
  WeightFile file;
  try {
    file.descriptor = Json::parse(r.str(r.u32()));
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::MalformedContainer, std::string("descriptor: ") + e.what());
  }
  while (r.remaining() > 0) {
    std::string name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    if (rank > 8) fail(ErrorCode::MalformedContainer, "tensor rank " + std::to_string(rank));
    std::vector<std::size_t> shape(rank);
    std::size_t count = 1;
    for (auto& d : shape) {
      d = r.u32();
      if (d != 0 && count > r.remaining() / d) {
        fail(ErrorCode::MalformedContainer, "tensor '" + name + "' larger than file");
      }
      count *= d;
    }
    if (count > r.remaining() / 4) fail(ErrorCode::MalformedContainer, "truncated tensor " + name);
    Tensor t(std::move(shape));
    for (double& v : t.data) v = r.f32();
    file.tensors.emplace_back(std::move(name), std::move(t));
  }
  return file;
}

// ---------------------------------------------------------------------------
// Biomarker models

inline Json arch_to_json(const CnnArch& a) {
  return {{"input_frames", a.input_frames}, {"input_coeffs", a.input_coeffs},
          {"pool_frames", a.pool_frames},   {"pool_coeffs", a.pool_coeffs},
          {"stem_channels", a.stem_channels}, {"num_blocks", a.num_blocks},
          {"embedding_dim", a.embedding_dim}, {"input_scale", a.input_scale}};
}

inline CnnArch arch_from_json(const Json& j) {
  CnnArch a;
  a.input_frames = j.at("input_frames").get<std::size_t>();
  a.input_coeffs = j.at("input_coeffs").get<std::size_t>();
  a.pool_frames = j.at("pool_frames").get<std::size_t>();
  a.pool_coeffs = j.at("pool_coeffs").get<std::size_t>();
  a.stem_channels = j.at("stem_channels").get<std::size_t>();
  a.num_blocks = j.at("num_blocks").get<std::size_t>();
  a.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  a.input_scale = j.at("input_scale").get<double>();
  return a;
}

/// `meta` is merged into the descriptor (seed, config digest, ...).
inline WeightFile model_to_weight_file(const BiomarkerModel& m, const Json& meta = Json::object()) {
  WeightFile f;
  f.descriptor = meta;
  f.descriptor["kind"] = "biomarker";
  f.descriptor["format_version"] = kWeightFormatVersion;
  f.descriptor["biomarker_id"] = m.biomarker_id;
  f.descriptor["num_classes"] = m.num_classes;
  f.descriptor["arch"] = arch_to_json(m.arch);
  f.descriptor["trainable"] = m.trainable;
  if (m.input_mask) {
    f.descriptor["input_mask"] = {{"lambda", m.input_mask->lambda}, {"mapping", "round_clamp"}};
  } else {
    f.descriptor["input_mask"] = nullptr;
  }
  for (const auto& name : layer_names(m.arch)) {
    for (const char* kind : {".weight", ".bias"}) {
      f.tensors.emplace_back(name + kind, m.weights.at(name + kind));
    }
  }
  return f;
}

inline BiomarkerModel model_from_weight_file(const WeightFile& f) {
  const Json& d = f.descriptor;
  BiomarkerModel m;
  try {
    if (d.at("kind") != "biomarker") {
      fail(ErrorCode::MalformedContainer, "not a biomarker weight file");
    }
    m.biomarker_id = d.at("biomarker_id").get<std::string>();
    m.num_classes = d.at("num_classes").get<std::size_t>();
    m.arch = arch_from_json(d.at("arch"));
    m.trainable = d.at("trainable").get<std::map<std::string, bool>>();
    if (!d.at("input_mask").is_null()) {
      m.input_mask = PoissonMaskConfig{d["input_mask"].at("lambda").get<double>(),
                                       ValueMapping::RoundClamp};
    }
  } catch (const Json::exception& e) {
    fail(ErrorCode::MalformedContainer, std::string("descriptor: ") + e.what());
  }
  const BiomarkerModel shape = init_cnn(m.arch, m.num_classes, 0);
  for (const auto& [name, t] : f.tensors) m.weights[name] = t;
  for (const auto& [name, t] : shape.weights) {
    auto it = m.weights.find(name);
    if (it == m.weights.end() || it->second.shape != t.shape) {
      fail(ErrorCode::MalformedContainer, "tensor '" + name + "' missing or misshapen");
    }
    if (!all_finite(it->second.data)) fail(ErrorCode::MalformedContainer, "non-finite " + name);
  }
  if (m.weights.size() != shape.weights.size() || m.trainable.size() != shape.trainable.size()) {
    fail(ErrorCode::MalformedContainer, "unexpected tensors or layers in weight file");
  }
  return m;
}

inline void save_model(const std::filesystem::path& path, const BiomarkerModel& m,
                       const Json& meta = Json::object()) {
  write_file_atomic(path, encode_weight_file(model_to_weight_file(m, meta)));
}

inline BiomarkerModel load_model(const std::filesystem::path& path) {
  return model_from_weight_file(decode_weight_file(read_file(path)));
}

}  // namespace ovbm

#endif  // OVBM_SERIALIZE_HPP
