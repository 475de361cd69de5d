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

#include "ovbm/fusion.hpp"

#include <gtest/gtest.h>

#include "model_fixtures.hpp"
#include "test_util.hpp"

namespace ovbm {
namespace {

using testing::separable_set;
using testing::tiny_arch;

BiomarkerModel member(const std::string& id, std::uint64_t seed) {
  return init_cnn(tiny_arch(), 2, seed, id);
}

std::vector<BiomarkerModel> trio() {
  return {member("a", 1), member("b", 2), member("c", 3)};
}

MetadataVector meta_of(Gender g, std::optional<int> age) {
  SubjectRecord r;
  r.gender = g;
  r.age = age;
  return MetadataVector::from_record(r);
}

std::vector<ChunkSample> chunk_samples(std::size_t n, std::uint64_t seed) {
  std::vector<ChunkSample> out;
  Rng rng(seed + 7);
  std::size_t i = 0;
  for (auto& d : separable_set(n, seed)) {
    out.push_back({std::move(d.image), d.label,
                   meta_of(rng.index(2) ? Gender::F : Gender::M, 60 + static_cast<int>(rng.index(30))),
                   i++});
  }
  return out;
}

Split half_split(std::size_t n) {
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < n; ++i) labels.push_back(i % 2);
  return stratified_split(labels, 0.7, 1);
}

TEST(Metadata, Encoding) {
  EXPECT_EQ(meta_of(Gender::F, 72).values(), (std::vector<double>{1.0, 0.0, 0.72}));
  EXPECT_EQ(meta_of(Gender::M, std::nullopt).values(), (std::vector<double>{0.0, 1.0, 0.0}));
  EXPECT_EQ(meta_of(Gender::Unknown, 150).values(), (std::vector<double>{0.0, 0.0, 1.0}));
}

TEST(BuildFusion, InputDimensionBookkeeping) {
  std::vector<BiomarkerModel> members;
  CnnArch a = tiny_arch();
  a.embedding_dim = 64;
  for (int i = 0; i < 3; ++i) members.push_back(init_cnn(a, 2, i, "m" + std::to_string(i)));
  const FusionModel f = build_fusion(members, 3, 1);
  EXPECT_EQ(f.input_dim(), 195u);
  EXPECT_EQ(f.hidden_dim, 1024u);
  EXPECT_EQ(f.hidden_w.shape, (std::vector<std::size_t>{1024, 195}));
  EXPECT_EQ(f.head_w.shape, (std::vector<std::size_t>{2, 1024}));
  EXPECT_EQ(build_fusion({members[0]}, 0, 1).input_dim(), 64u);
  EXPECT_EQ(build_fusion(members, 3, 1).hidden_w, f.hidden_w);
  EXPECT_NE(build_fusion(members, 3, 2).hidden_w, f.hidden_w);
  try {
    build_fusion({}, 3, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyMembers);
  }
}

TEST(FuseForward, ProbabilityAndZeroHead) {
  const auto members = trio();
  FusionModel f = build_fusion(members, 3, 4);
  Rng rng(1);
  for (int i = 0; i < 5; ++i) {
    const MfccImage img = testing::noise_image(24, 16, rng, 3.0);
    const double p = fuse_forward(f, img, members, meta_of(Gender::F, 70));
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
  f.head_w.zero();
  f.head_b.zero();
  EXPECT_EQ(fuse_forward(f, testing::noise_image(24, 16, rng), members, {}), 0.5);
}

TEST(FuseForward, MemberOrderIsEnforced) {
  auto members = trio();
  const FusionModel f = build_fusion(members, 3, 4);
  std::swap(members[0], members[2]);
  Rng rng(2);
  try {
    fuse_forward(f, testing::noise_image(24, 16, rng), members, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MemberOrderMismatch);
  }
  members.pop_back();
  EXPECT_THROW(fuse_forward(f, testing::noise_image(24, 16, rng), members, {}), Error);
}

TEST(FuseForward, WrongInputLengthFailsLoudly) {
  const FusionModel f = build_fusion(trio(), 3, 4);
  try {
    fusion_forward_features(f, std::vector<double>(f.input_dim() - 1, 0.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimMismatch);
  }
}

TEST(FuseForward, ZeroEmbeddingsLeaveOnlyMetadata) {
  auto members = trio();
  for (auto& m : members) {
    m.weights["embed.weight"].zero();
    m.weights["embed.bias"].zero();
  }
  const FusionModel f = build_fusion(members, 3, 5);
  Rng rng(3);
  const auto a = testing::noise_image(24, 16, rng, 4.0);
  const auto b = testing::noise_image(30, 16, rng, 1.0);
  const MetadataVector old_f = meta_of(Gender::F, 80), young_m = meta_of(Gender::M, 55);
  EXPECT_EQ(fuse_forward(f, a, members, old_f), fuse_forward(f, b, members, old_f));
  EXPECT_NE(fuse_forward(f, a, members, old_f), fuse_forward(f, a, members, young_m));
  const std::vector<double> x = concat_features({std::vector<double>(18, 0.0)}, old_f.values());
  EXPECT_EQ(fusion_forward_features(f, x).probs[1], fuse_forward(f, a, members, old_f));
}

TEST(FusionGradient, MatchesFiniteDifferences) {
  std::vector<BiomarkerModel> members{member("a", 11), member("b", 12)};
  Rng brng(5);
  for (auto& m : members) {
    for (auto& [name, t] : m.weights) {
      if (name.ends_with(".bias")) {
        for (double& v : t.data) v = brng.uniform(-0.2, 0.2);
      }
    }
  }
  FusionModel f = build_fusion(members, 3, 13, 16);
  for (double& v : f.hidden_b.data) v = brng.uniform(-0.2, 0.2);
  Rng rng(6);
  const MfccImage img = testing::noise_image(24, 16, rng, 2.0);
  const MetadataVector meta = meta_of(Gender::F, 64);
  const std::size_t target = 1;
  const EnsembleGradients g = ensemble_gradients(f, members, img, meta, target);
  auto loss = [&] {
    const double p = fuse_forward(f, img, members, meta);
    return -std::log(target == 1 ? p : 1.0 - p);
  };
  EXPECT_NEAR(g.loss, loss(), 1e-12);

  const double h = 1e-5;
  auto check = [&](std::vector<double>& param, const std::vector<double>& analytic,
                   const std::string& name) {
    std::vector<double> diff, numeric;
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double keep = param[i];
      param[i] = keep + h;
      const double up = loss();
      param[i] = keep - h;
      const double down = loss();
      param[i] = keep;
      numeric.push_back((up - down) / (2 * h));
      diff.push_back(analytic[i] - numeric.back());
    }
    EXPECT_LT(testing::frobenius(diff), 1e-4 * std::max(testing::frobenius(numeric), 1e-6)) << name;
  };
  for (auto& [name, t] : f.tensors()) check(t->data, g.fusion.at(name).data, "fusion." + name);
  for (std::size_t k = 0; k < members.size(); ++k) {
    for (auto& [name, t] : members[k].weights) {
      if (name.rfind("head.", 0) == 0) {
        for (double v : g.members[k].at(name).data) EXPECT_EQ(v, 0.0);
        continue;
      }
      check(t.data, g.members[k].at(name).data, members[k].biomarker_id + "." + name);
    }
  }
}

TEST(TrainFusion, FrozenMembersStayBitIdentical) {
  const auto members = trio();
  const auto data = chunk_samples(24, 1);
  TrainConfig cfg;
  cfg.epochs = 3;
  const FusionTrainResult r = train_fusion(build_fusion(members, 3, 1, 32), members, data,
                                           half_split(24), cfg, TransferStrategy::frozen());
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(r.ensemble.members[k].weights, members[k].weights);
  EXPECT_NE(r.ensemble.fusion.hidden_w, build_fusion(members, 3, 1, 32).hidden_w);
}

TEST(TrainFusion, UnfrozenMembersMoveAndPtDiffers) {
  const auto members = trio();
  const auto data = chunk_samples(24, 2);
  TrainConfig cfg;
  cfg.epochs = 2;
  const Split split = half_split(24);
  const FusionTrainResult joint = train_fusion(build_fusion(members, 3, 1, 32), members, data,
                                               split, cfg, TransferStrategy::last(1));
  EXPECT_NE(joint.ensemble.members[0].weight("block2.conv2"), members[0].weight("block2.conv2"));
  EXPECT_EQ(joint.ensemble.members[0].weight("block2.conv1"), members[0].weight("block2.conv1"));
  EXPECT_EQ(joint.ensemble.members[0].weight("head"), members[0].weight("head"));

  const FusionTrainResult pt = train_fusion(build_fusion(members, 3, 1, 32), members, data, split,
                                            cfg, TransferStrategy::last(1), true);
  ASSERT_EQ(pt.member_pt.size(), 3u);
  EXPECT_NE(pt.ensemble.fusion.hidden_w, joint.ensemble.fusion.hidden_w);
  EXPECT_NE(pt.ensemble.members[1].weights, joint.ensemble.members[1].weights);

  const FusionTrainResult again = train_fusion(build_fusion(members, 3, 1, 32), members, data,
                                               split, cfg, TransferStrategy::last(1));
  EXPECT_EQ(again.ensemble.fusion.hidden_w, joint.ensemble.fusion.hidden_w);
  EXPECT_EQ(again.ensemble.members[2].weights, joint.ensemble.members[2].weights);
}

TEST(TrainFusion, EnsembleKeepsUpWithBestMember) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto members = trio();
    const auto data = chunk_samples(40, 20 + seed);
    const Split split = half_split(40);
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.epochs = 30;
    const FusionTrainResult r = train_fusion(build_fusion(members, 3, seed, 64), members, data,
                                             split, cfg, TransferStrategy::last(2), true);
    double best = 0.0;
    for (const auto& m : r.member_pt) best = std::max(best, m.test_accuracy);
    EXPECT_GE(r.test_accuracy, best - 0.05) << "seed " << seed;
  }
}

TEST(Ablation, SwapAndRestore) {
  const auto members = trio();
  Ensemble e{build_fusion(members, 3, 1, 16), members};
  const BiomarkerModel replacement = member("baseline", 99);
  const Ensemble swapped = ablate_member(e, "b", replacement);
  EXPECT_EQ(swapped.fusion.member_ids, (std::vector<std::string>{"a", "baseline", "c"}));
  EXPECT_EQ(swapped.fusion.hidden_w, e.fusion.hidden_w);
  const Ensemble restored = ablate_member(swapped, "baseline", members[1]);
  EXPECT_EQ(restored.fusion.member_ids, e.fusion.member_ids);
  EXPECT_EQ(restored.members[1].weights, members[1].weights);

  CnnArch wide = tiny_arch();
  wide.embedding_dim = 9;
  try {
    ablate_member(e, "a", init_cnn(wide, 2, 1, "wide"));
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::DimMismatch);
  }
  try {
    ablate_member(e, "zzz", replacement);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::UnknownMember);
  }
}

TEST(EnsembleFiles, RoundTripAndDigestCheck) {
  const auto members = trio();
  const Ensemble e{build_fusion(members, 3, 1, 16), members};
  testing::TempDir dir("ensemble");
  save_ensemble(dir.path(), e, {{"seed", 1}});
  const Ensemble back = load_ensemble(dir.path());
  EXPECT_EQ(back.fusion.member_ids, e.fusion.member_ids);
  EXPECT_EQ(back.fusion.hidden_w, e.fusion.hidden_w);
  EXPECT_EQ(back.members[2].weights, e.members[2].weights);
  Rng rng(1);
  const MfccImage img = testing::noise_image(24, 16, rng);
  EXPECT_EQ(back.predict(img, {}), e.predict(img, {}));

  // A member file swapped for another model no longer matches its digest.
  save_model(dir / member_file_name(0, "a"), members[1]);
  try {
    load_ensemble(dir.path());
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::MalformedContainer);
  }
}

}  // namespace
}  // namespace ovbm
