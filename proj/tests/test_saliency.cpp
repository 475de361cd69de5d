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

#include "ovbm/saliency.hpp"

#include <gtest/gtest.h>

#include "model_fixtures.hpp"
#include "test_util.hpp"

namespace ovbm {
namespace {

MfccParams small_mfcc() {
  MfccParams p;
  p.num_cepstra = 16;
  p.num_filters = 26;
  p.fft_size = 512;
  return p;
}

struct Fixture {
  BiomarkerRegistry registry = build_registry();
  Ensemble main;
  Ensemble pt;
  SaliencySources sources;
  ChunkingParams params{4.0, 2.0, small_mfcc()};

  Fixture() {
    std::vector<BiomarkerModel> members;
    for (const auto& id : registry.model_ids()) {
      BiomarkerModel m = init_cnn(testing::tiny_arch(), 2, sub_seed(1, id), id);
      sources.individual.emplace(id, m);
      if (members.size() < 2) members.push_back(m);
    }
    main = {build_fusion(members, 3, 1, 16), members};
    pt = {build_fusion(members, 3, 2, 16), members};
    sources.main = &main;
    sources.pt = &pt;
  }

  SaliencyMap run(const AudioClip& clip, const std::string& id = "S001") const {
    return saliency_map(id, clip, {}, registry, sources, params, AggregationScheme::Average);
  }
};

TEST(Registry, SixteenEntriesFourPerFamily) {
  const BiomarkerRegistry r = build_registry();
  EXPECT_EQ(r.entries.size(), 16u);
  for (Family f : kFamilies) EXPECT_EQ(r.family(f).size(), 4u);
  std::vector<std::string> words;
  for (const auto* e : r.family(Family::Cognitive)) words.push_back(e->recipe.keyword);
  EXPECT_EQ(words, (std::vector<std::string>{"kitchen", "tipping", "jar", "overflow"}));
  EXPECT_EQ(r.at("sentiment_8class").recipe.num_classes, 8u);
  EXPECT_EQ(r.at("vocal_cords_ww_them").recipe.chunk_seconds, 3.0);
  EXPECT_EQ(r.at("cough_origin").recipe.chunk_seconds, 6.0);
  EXPECT_EQ(r.at("cough_origin").recipe.learning_rate, 1e-4);
  EXPECT_TRUE(r.at("poisson_muscular").recipe.poisson_mask);
  EXPECT_EQ(r.model_ids().size(), 8u);
  EXPECT_THROW(r.at("nope"), Error);
}

TEST(Registry, SurrogateClipsAreSeededAndClassDependent) {
  const BiomarkerRegistry r = build_registry();
  for (const auto& id : r.model_ids()) {
    const auto& e = r.at(id);
    const AudioClip a = surrogate_clip(e, 0, 5), b = surrogate_clip(e, 0, 5);
    EXPECT_EQ(a.samples, b.samples) << id;
    EXPECT_NEAR(a.duration(), e.recipe.chunk_seconds, 1e-9);
    EXPECT_NE(surrogate_clip(e, e.recipe.num_classes - 1, 5).samples, a.samples);
    for (double s : a.samples) ASSERT_LE(std::abs(s), 1.0);
  }
  EXPECT_THROW(surrogate_clip(r.at("brainos_2"), 0, 1), Error);
}

TEST(Saliency, ContractShapeAndRange) {
  const Fixture fx;
  const SaliencyMap m = fx.run(testing::random_clip(9.0, 1));
  ASSERT_EQ(m.entries.size(), 16u);
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_EQ(m.entries[i].family, kFamilies[i / 4]);
    EXPECT_GE(m.entries[i].score, 0.0);
    EXPECT_LE(m.entries[i].score, 1.0);
  }
  EXPECT_EQ(m.entries[4].biomarker_id, "brainos_2");
  EXPECT_EQ(m.entries[15].biomarker_id, "symbolic_pt");
  const SaliencyMap again = fx.run(testing::random_clip(9.0, 1));
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(again.entries[i].score, m.entries[i].score);
}

TEST(Saliency, HealthyExtremeScoresOne) {
  Fixture fx;
  for (auto& [id, m] : fx.sources.individual) m.weights["head.bias"].data = {1000.0, -1000.0};
  for (Ensemble* e : {&fx.main, &fx.pt}) e->fusion.head_b.data = {1000.0, -1000.0};
  const SaliencyMap m = fx.run(testing::random_clip(5.0, 2));
  for (const auto& e : m.entries) EXPECT_EQ(e.score, 1.0) << e.biomarker_id;
}

TEST(Saliency, MissingBiomarker) {
  Fixture fx;
  fx.sources.individual.erase("ww_unique");
  try {
    fx.run(testing::random_clip(5.0, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingBiomarker);
  }
}

TEST(CompareMaps, IdentityAntisymmetryAndCardinality) {
  const Fixture fx;
  const SaliencyMap a = fx.run(testing::random_clip(5.0, 4), "S1");
  const SaliencyMap b = fx.run(testing::tone(440.0, 5.0, 0.5), "S2");
  const MapComparison self = compare_maps(a, a);
  ASSERT_EQ(self.rows.size(), 16u);
  for (const auto& r : self.rows) EXPECT_EQ(r.delta, 0.0);
  const MapComparison ab = compare_maps(a, b), ba = compare_maps(b, a);
  ASSERT_EQ(ab.rows.size(), 16u);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(ab.rows[i].delta, -ba.rows[i].delta);
  for (const auto& [fam, d] : ab.family_deltas) EXPECT_NEAR(d, -ba.family_deltas.at(fam), 1e-15);

  SaliencyMap other = b;
  other.registry_version = "ovbm-registry-0";
  try {
    compare_maps(a, other);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RegistryMismatch);
  }
}

TEST(SaliencyOutput, CsvAndSvg) {
  const Fixture fx;
  const SaliencyMap a = fx.run(testing::random_clip(5.0, 5), "S7");
  const std::string csv = saliency_csv({a}, "# ovbm format=1 seed=3 config=abc");
  EXPECT_EQ(csv.rfind("# ovbm format=1 seed=3 config=abc\nsubject_id,family,biomarker_id,score\n", 0),
            0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 18);
  EXPECT_NE(csv.find("S7,BrainOS,brainos_14,"), std::string::npos);
  const std::string svg = saliency_svg({a, a}, "seed=3");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("stroke-dasharray"), std::string::npos);
  EXPECT_NE(svg.find("symbolic_linneg"), std::string::npos);
  EXPECT_EQ(svg, saliency_svg({a, a}, "seed=3"));
}

}  // namespace
}  // namespace ovbm
