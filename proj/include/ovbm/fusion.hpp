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

#ifndef OVBM_FUSION_HPP
#define OVBM_FUSION_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "ovbm/audio_io.hpp"
#include "ovbm/chunker.hpp"
#include "ovbm/cnn.hpp"
#include "ovbm/serialize.hpp"
#include "ovbm/train.hpp"

namespace ovbm {

/// [gender F, gender M, age / 100]; unknowns encode as zero.
struct MetadataVector {
  double female = 0.0;
  double male = 0.0;
  double age_norm = 0.0;

  static constexpr std::size_t kDim = 3;

  static MetadataVector from_record(const SubjectRecord& r) {
    MetadataVector m;
    m.female = r.gender == Gender::F ? 1.0 : 0.0;
    m.male = r.gender == Gender::M ? 1.0 : 0.0;
    if (r.age) m.age_norm = std::clamp(*r.age / 100.0, 0.0, 1.0);
    return m;
  }
  std::vector<double> values() const { return {female, male, age_norm}; }
};

struct FusionModel {
  std::vector<std::string> member_ids;
  std::vector<std::size_t> member_dims;
  std::size_t metadata_dim = 0;
  std::size_t hidden_dim = 1024;
  Tensor hidden_w, hidden_b;  // [hidden x input], [hidden]
  Tensor head_w, head_b;      // [2 x hidden], [2]

  std::size_t input_dim() const {
    std::size_t d = metadata_dim;
    for (std::size_t m : member_dims) d += m;
    return d;
  }

  std::map<std::string, Tensor*> tensors() {
    return {{"hidden.weight", &hidden_w}, {"hidden.bias", &hidden_b},
            {"head.weight", &head_w},     {"head.bias", &head_b}};
  }
};

inline FusionModel build_fusion(const std::vector<BiomarkerModel>& members,
                                std::size_t metadata_dim, std::uint64_t seed,
                                std::size_t hidden_dim = 1024) {
  if (members.empty()) fail(ErrorCode::EmptyMembers, "fusion needs at least one member");
  FusionModel f;
  f.metadata_dim = metadata_dim;
  f.hidden_dim = hidden_dim;
  for (const auto& m : members) {
    if (m.arch.input_coeffs != members.front().arch.input_coeffs) {
      fail(ErrorCode::ShapeMismatch, "members disagree on input coefficients");
    }
    f.member_ids.push_back(m.biomarker_id);
    f.member_dims.push_back(m.arch.embedding_dim);
  }
  const std::size_t in = f.input_dim();
  Rng rng(seed);
  f.hidden_w = Tensor({hidden_dim, in});
  detail::he_uniform(f.hidden_w, in, rng);
  f.hidden_b = Tensor({hidden_dim});
  f.head_w = Tensor({2, hidden_dim});
  detail::he_uniform(f.head_w, hidden_dim, rng);
  f.head_b = Tensor({2});
  return f;
}

struct FusionTape {
  std::vector<double> input;
  std::vector<double> hidden;  // post-ReLU
  std::vector<double> probs;
};

inline FusionTape fusion_forward_features(const FusionModel& f, std::vector<double> input) {
  if (input.size() != f.input_dim()) {
    fail(ErrorCode::DimMismatch, "fusion input has " + std::to_string(input.size()) +
                                     " values, expected " + std::to_string(f.input_dim()));
  }
  FusionTape t;
  t.input = std::move(input);
  t.hidden = layers::linear_forward(t.input, f.hidden_w, f.hidden_b);
  layers::relu_inplace(t.hidden);
  const auto logits = layers::linear_forward(t.hidden, f.head_w, f.head_b);
  if (!all_finite(logits)) fail(ErrorCode::NonFiniteActivation, "fusion produced non-finite logits");
  t.probs = layers::softmax(logits);
  return t;
}

struct FusionGradients {
  std::map<std::string, Tensor> fusion;
  std::vector<double> dinput;
};

inline FusionGradients fusion_backward(const FusionModel& f, const FusionTape& t,
                                       std::size_t target) {
  FusionGradients g;
  g.fusion = {{"hidden.weight", Tensor(f.hidden_w.shape)}, {"hidden.bias", Tensor(f.hidden_b.shape)},
              {"head.weight", Tensor(f.head_w.shape)},     {"head.bias", Tensor(f.head_b.shape)}};
  const auto dl = layers::softmax_ce_grad(t.probs, target);
  auto dh = layers::linear_backward(t.hidden, f.head_w, dl, &g.fusion["head.weight"],
                                    &g.fusion["head.bias"], true);
  layers::relu_backward_inplace(t.hidden, dh);
  g.dinput = layers::linear_backward(t.input, f.hidden_w, dh, &g.fusion["hidden.weight"],
                                     &g.fusion["hidden.bias"], true);
  return g;
}

inline void check_member_order(const FusionModel& f, const std::vector<BiomarkerModel>& members) {
  bool ok = members.size() == f.member_ids.size();
  for (std::size_t i = 0; ok && i < members.size(); ++i) {
    ok = members[i].biomarker_id == f.member_ids[i];
  }
  if (!ok) {
    fail(ErrorCode::MemberOrderMismatch, "members do not match the fusion's recorded member order");
  }
}

inline std::vector<double> concat_features(const std::vector<std::vector<double>>& embeddings,
                                           const std::vector<double>& metadata) {
  std::vector<double> x;
  for (const auto& e : embeddings) x.insert(x.end(), e.begin(), e.end());
  x.insert(x.end(), metadata.begin(), metadata.end());
  return x;
}

inline std::vector<double> metadata_values(const FusionModel& f, const MetadataVector& meta) {
  auto v = meta.values();
  v.resize(f.metadata_dim, 0.0);
  return v;
}

/// P(positive) for one chunk.
inline double fuse_forward(const FusionModel& f, const MfccImage& chunk,
                           const std::vector<BiomarkerModel>& members,
                           const MetadataVector& meta) {
  check_member_order(f, members);
  std::vector<std::vector<double>> emb;
  emb.reserve(members.size());
  for (const auto& m : members) emb.push_back(forward(m, chunk).embedding);
  return fusion_forward_features(f, concat_features(emb, metadata_values(f, meta))).probs[1];
}

inline double fuse_forward(const FusionModel& f, const Chunk& chunk,
                           const std::vector<BiomarkerModel>& members,
                           const MetadataVector& meta) {
  return fuse_forward(f, chunk.features, members, meta);
}

struct Ensemble {
  FusionModel fusion;
  std::vector<BiomarkerModel> members;

  double predict(const MfccImage& chunk, const MetadataVector& meta) const {
    return fuse_forward(fusion, chunk, members, meta);
  }
};

struct EnsembleGradients {
  double loss = 0.0;
  std::map<std::string, Tensor> fusion;
  std::vector<Gradients> members;  // zero tensors for frozen member layers
};

/// Cross-entropy gradients of one labeled chunk through fusion and members.
inline EnsembleGradients ensemble_gradients(const FusionModel& f,
                                            const std::vector<BiomarkerModel>& members,
                                            const MfccImage& chunk, const MetadataVector& meta,
                                            std::size_t target) {
  check_member_order(f, members);
  std::vector<CnnTape> tapes;
  std::vector<std::vector<double>> emb;
  for (const auto& m : members) {
    tapes.push_back(run_from(m, {0, prepare_input(m, chunk), {}}));
    emb.push_back(tapes.back().embedding);
  }
  const FusionTape ft = fusion_forward_features(f, concat_features(emb, metadata_values(f, meta)));
  FusionGradients g = fusion_backward(f, ft, target);
  EnsembleGradients out;
  out.loss = layers::cross_entropy(ft.probs, target);
  out.fusion = std::move(g.fusion);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < members.size(); ++k) {
    const std::size_t dim = f.member_dims[k];
    const std::vector<double> de(g.dinput.begin() + static_cast<std::ptrdiff_t>(offset),
                                 g.dinput.begin() + static_cast<std::ptrdiff_t>(offset + dim));
    out.members.push_back(backward_tape(members[k], tapes[k], nullptr, &de));
    offset += dim;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Joint training

/// One labeled chunk with its subject's metadata.
struct ChunkSample {
  MfccImage image;
  std::size_t label = 0;  // 1 = positive
  MetadataVector meta;
  std::size_t subject = 0;
};

struct FusionTrainResult {
  Ensemble ensemble;
  std::vector<TrainResult> member_pt;  // filled by the PT variant
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

/// Each member gets a fresh binary head and is trained alone on the target
/// chunks under `strategy`.
inline std::vector<TrainResult> fine_tune_members(const std::vector<BiomarkerModel>& members,
                                                  const std::vector<ChunkSample>& data,
                                                  const Split& split, const TrainConfig& cfg,
                                                  const TransferStrategy& strategy) {
  std::vector<LabeledImage> labeled;
  labeled.reserve(data.size());
  for (const auto& s : data) labeled.push_back({s.image, s.label});
  std::vector<TrainResult> out;
  for (const auto& m : members) {
    TrainConfig c = cfg;
    c.seed = sub_seed(cfg.seed, "pt:" + m.biomarker_id);
    BiomarkerModel fresh = with_new_head(m, 2, sub_seed(cfg.seed, "pt-head:" + m.biomarker_id));
    out.push_back(train_split(std::move(fresh), labeled, split, c, strategy));
  }
  return out;
}

/// Joint Adam over the fusion weights and the member layers the strategy
/// unfreezes. Member heads are not on the fused path and stay untouched.
/// With `pt`, members are first fine-tuned individually (fine_tune_members).
inline FusionTrainResult train_fusion(FusionModel fusion, std::vector<BiomarkerModel> members,
                                      const std::vector<ChunkSample>& data, const Split& split,
                                      const TrainConfig& cfg,
                                      const TransferStrategy& member_strategy, bool pt = false) {
  cfg.validate();
  FusionTrainResult result;
  if (pt) {
    result.member_pt = fine_tune_members(members, data, split, cfg, member_strategy);
    for (std::size_t i = 0; i < members.size(); ++i) members[i] = result.member_pt[i].model;
  }
  check_member_order(fusion, members);
  for (auto& m : members) m = apply_transfer_strategy(std::move(m), member_strategy);

  const std::size_t nm = members.size();
  std::vector<std::size_t> stage(nm);
  std::vector<std::vector<std::string>> names(nm);
  for (std::size_t k = 0; k < nm; ++k) {
    stage[k] = members[k].first_trainable_stage();
    for (const auto& n : trainable_tensors(members[k])) {
      if (n.rfind("head.", 0) != 0) names[k].push_back(n);
    }
    if (names[k].empty()) stage[k] = members[k].arch.head_stage();
  }
  // cache[k][i]: input to member k's earliest trainable stage for sample i.
  std::vector<std::vector<StageInput>> cache(nm, std::vector<StageInput>(data.size()));
  auto fill_cache = [&](const std::vector<std::size_t>& idx) {
    for (std::size_t k = 0; k < nm; ++k) {
      for (std::size_t i : idx) cache[k][i] = stage_input(members[k], data[i].image, stage[k]);
    }
  };
  fill_cache(split.train);
  fill_cache(split.test);

  auto run = [&](std::size_t i, std::vector<CnnTape>* tapes) {
    std::vector<std::vector<double>> emb(nm);
    for (std::size_t k = 0; k < nm; ++k) {
      if (names[k].empty()) {
        emb[k] = cache[k][i].vec;
      } else {
        CnnTape t = run_from(members[k], cache[k][i]);
        emb[k] = t.embedding;
        if (tapes) (*tapes)[k] = std::move(t);
      }
    }
    return fusion_forward_features(fusion, concat_features(emb, metadata_values(fusion, data[i].meta)));
  };

  AdamState fusion_adam;
  std::vector<AdamState> member_adam(nm);
  Rng shuffle_rng(sub_seed(cfg.seed, "shuffle"));
  std::vector<std::size_t> order = split.train;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      Gradients fg;
      for (auto& [n, t] : fusion.tensors()) fg.emplace(n, Tensor(t->shape));
      std::vector<Gradients> mg(nm);
      for (std::size_t k = 0; k < nm; ++k) {
        for (const auto& n : names[k]) mg[k].emplace(n, Tensor(members[k].weights.at(n).shape));
      }
      for (std::size_t q = b0; q < b1; ++q) {
        const std::size_t i = order[q];
        std::vector<CnnTape> tapes(nm);
        const FusionTape ft = run(i, &tapes);
        loss_sum += layers::cross_entropy(ft.probs, data[i].label);
        const FusionGradients g = fusion_backward(fusion, ft, data[i].label);
        for (auto& [n, acc] : fg) {
          const auto& src = g.fusion.at(n).data;
          for (std::size_t j = 0; j < src.size(); ++j) acc.data[j] += src[j];
        }
        std::size_t offset = 0;
        for (std::size_t k = 0; k < nm; ++k) {
          const std::size_t dim = fusion.member_dims[k];
          if (!names[k].empty()) {
            const std::vector<double> de(g.dinput.begin() + static_cast<std::ptrdiff_t>(offset),
                                         g.dinput.begin() + static_cast<std::ptrdiff_t>(offset + dim));
            const Gradients gm = backward_tape(members[k], tapes[k], nullptr, &de);
            for (auto& [n, acc] : mg[k]) {
              const auto& src = gm.at(n).data;
              for (std::size_t j = 0; j < src.size(); ++j) acc.data[j] += src[j];
            }
          }
          offset += dim;
        }
      }
      const double scale = 1.0 / static_cast<double>(b1 - b0);
      ++step;
      {
        for (auto& [n, acc] : fg) {
          for (double& x : acc.data) x *= scale;
        }
        std::map<std::string, Tensor> w;
        for (auto& [n, t] : fusion.tensors()) w.emplace(n, std::move(*t));
        adam_step(w, fg, fusion_adam, cfg, step);
        for (auto& [n, t] : fusion.tensors()) {
          *t = std::move(w.at(n));
          for (double& x : t->data) x = to_f32(x);
        }
      }
      for (std::size_t k = 0; k < nm; ++k) {
        if (names[k].empty()) continue;
        for (auto& [n, acc] : mg[k]) {
          for (double& x : acc.data) x *= scale;
        }
        adam_step(members[k].weights, mg[k], member_adam[k], cfg, step);
        for (const auto& n : names[k]) {
          for (double& x : members[k].weights.at(n).data) x = to_f32(x);
        }
      }
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(std::max<std::size_t>(order.size(), 1)));
  }

  auto accuracy = [&](const std::vector<std::size_t>& idx) {
    if (idx.empty()) return 0.0;
    std::size_t hit = 0;
    for (std::size_t i : idx) hit += argmax(run(i, nullptr).probs) == data[i].label;
    return static_cast<double>(hit) / static_cast<double>(idx.size());
  };
  result.train_accuracy = accuracy(split.train);
  result.test_accuracy = accuracy(split.test);
  result.ensemble = {std::move(fusion), std::move(members)};
  return result;
}

/// Swaps a member for a replacement of equal embedding width; the recorded
/// member id becomes the replacement's.
inline Ensemble ablate_member(Ensemble e, const std::string& member_id,
                              BiomarkerModel replacement) {
  for (std::size_t i = 0; i < e.members.size(); ++i) {
    if (e.fusion.member_ids[i] != member_id) continue;
    if (replacement.arch.embedding_dim != e.fusion.member_dims[i]) {
      fail(ErrorCode::DimMismatch, "replacement embedding dim " +
                                       std::to_string(replacement.arch.embedding_dim) + " != " +
                                       std::to_string(e.fusion.member_dims[i]));
    }
    e.fusion.member_ids[i] = replacement.biomarker_id;
    e.members[i] = std::move(replacement);
    return e;
  }
  fail(ErrorCode::UnknownMember, "no member '" + member_id + "' in ensemble");
}

// ---------------------------------------------------------------------------
// Persistence: one weight file per member plus a fusion file that records
// member ids and their SHA-256 digests.

inline std::string member_file_name(std::size_t index, const std::string& id) {
  return "member_" + std::to_string(index) + "_" + id + ".ovbm";
}

inline void save_ensemble(const std::filesystem::path& dir, const Ensemble& e,
                          const Json& meta = Json::object()) {
  check_member_order(e.fusion, e.members);
  Json members = Json::array();
  for (std::size_t i = 0; i < e.members.size(); ++i) {
    const Bytes bytes = encode_weight_file(model_to_weight_file(e.members[i], meta));
    const std::string name = member_file_name(i, e.members[i].biomarker_id);
    write_file_atomic(dir / name, bytes);
    members.push_back({{"id", e.members[i].biomarker_id}, {"file", name}, {"sha256", sha256_hex(bytes)},
                       {"dim", e.fusion.member_dims[i]}});
  }
  WeightFile f;
  f.descriptor = meta;
  f.descriptor["kind"] = "fusion";
  f.descriptor["format_version"] = kWeightFormatVersion;
  f.descriptor["members"] = members;
  f.descriptor["metadata_dim"] = e.fusion.metadata_dim;
  f.descriptor["hidden_dim"] = e.fusion.hidden_dim;
  FusionModel copy = e.fusion;
  for (auto& [n, t] : copy.tensors()) f.tensors.emplace_back(n, *t);
  write_file_atomic(dir / "fusion.ovbm", encode_weight_file(f));
}

inline Ensemble load_ensemble(const std::filesystem::path& dir) {
  const WeightFile f = decode_weight_file(read_file(dir / "fusion.ovbm"));
  Ensemble e;
  try {
    if (f.descriptor.at("kind") != "fusion") {
      fail(ErrorCode::MalformedContainer, "not a fusion weight file");
    }
    e.fusion.metadata_dim = f.descriptor.at("metadata_dim").get<std::size_t>();
    e.fusion.hidden_dim = f.descriptor.at("hidden_dim").get<std::size_t>();
    for (const auto& m : f.descriptor.at("members")) {
      const std::filesystem::path path = dir / m.at("file").get<std::string>();
      const Bytes bytes = read_file(path);
      if (sha256_hex(bytes) != m.at("sha256").get<std::string>()) {
        fail(ErrorCode::MalformedContainer, "digest mismatch for member file " + path.string());
      }
      BiomarkerModel model = model_from_weight_file(decode_weight_file(bytes));
      if (model.biomarker_id != m.at("id").get<std::string>()) {
        fail(ErrorCode::MemberOrderMismatch, "member file " + path.string() + " holds '" +
                                                 model.biomarker_id + "'");
      }
      e.fusion.member_ids.push_back(model.biomarker_id);
      e.fusion.member_dims.push_back(m.at("dim").get<std::size_t>());
      e.members.push_back(std::move(model));
    }
  } catch (const Json::exception& ex) {
    fail(ErrorCode::MalformedContainer, std::string("fusion descriptor: ") + ex.what());
  }
  for (const auto& [name, t] : f.tensors) {
    auto ts = e.fusion.tensors();
    auto it = ts.find(name);
    if (it == ts.end()) fail(ErrorCode::MalformedContainer, "unexpected fusion tensor " + name);
    *it->second = t;
  }
  const std::size_t in = e.fusion.input_dim();
  if (e.fusion.hidden_w.shape != std::vector<std::size_t>{e.fusion.hidden_dim, in} ||
      e.fusion.hidden_b.size() != e.fusion.hidden_dim ||
      e.fusion.head_w.shape != std::vector<std::size_t>{2, e.fusion.hidden_dim} ||
      e.fusion.head_b.size() != 2) {
    fail(ErrorCode::MalformedContainer, "fusion tensors do not match the recorded members");
  }
  return e;
}

}  // namespace ovbm

#endif  // OVBM_FUSION_HPP
