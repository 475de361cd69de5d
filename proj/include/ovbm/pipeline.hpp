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

#ifndef OVBM_PIPELINE_HPP
#define OVBM_PIPELINE_HPP

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ovbm/aggregation.hpp"
#include "ovbm/fusion.hpp"
#include "ovbm/registry.hpp"
#include "ovbm/reports.hpp"
#include "ovbm/saliency.hpp"

namespace ovbm {

struct Subject {
  SubjectRecord record;
  AudioClip clip;
};

/// Balanced synthetic cohort: the first floor(n/2) subjects are positive
/// (class 'A' audio), the rest controls. Gender and age are drawn
/// independently of the label.
inline std::vector<Subject> synth_corpus(std::size_t n, std::uint64_t seed, double clip_seconds) {
  if (n == 0) fail(ErrorCode::InvalidArgument, "corpus needs at least one subject");
  Rng meta(sub_seed(seed, "metadata"));
  const std::uint64_t audio = sub_seed(seed, "audio");
  std::vector<Subject> out;
  for (std::size_t i = 0; i < n; ++i) {
    Subject s;
    char id[32];
    std::snprintf(id, sizeof id, "S%03zu", i + 1);
    s.record.subject_id = id;
    s.record.wav_path = std::string("wav/") + id + ".wav";
    const bool positive = i < n / 2;
    s.record.label = positive ? Label::Positive : Label::Negative;
    s.record.gender = meta.index(2) == 0 ? Gender::F : Gender::M;
    s.record.age = static_cast<int>(55 + meta.index(36));
    s.clip = synth_clip(corpus_spec(positive ? 'A' : 'B', clip_seconds, mix64(audio ^ mix64(i + 1))));
    out.push_back(std::move(s));
  }
  return out;
}

struct ExperimentConfig {
  std::uint64_t seed = 1;
  ChunkingParams chunking;
  CnnArch arch = default_arch();
  std::size_t surrogate_per_class = 12;
  TrainConfig pretrain{1e-3, 20, 8};
  TrainConfig finetune{1e-3, 10, 8};
  TrainConfig fusion{1e-3, 10, 8};
  std::size_t fusion_hidden = 1024;
  TransferStrategy member_strategy = TransferStrategy::last(2);
  bool poisson_mask = false;
  AggregationScheme scheme = AggregationScheme::Average;
  double threshold = 0.5;
  bool train_baseline = true;

  /// 4 s chunks, 200 cepstra, pooled 4 x 8 before the stem.
  static CnnArch default_arch() {
    CnnArch a;
    a.input_frames = 399;
    a.input_coeffs = 200;
    a.pool_frames = 4;
    a.pool_coeffs = 8;
    return a;
  }
};

struct ModelScore {
  std::string model;
  double chunk_accuracy = 0.0;
  double subject_accuracy = 0.0;
};

struct ExperimentResult {
  BiomarkerRegistry registry;
  std::map<std::string, TrainResult> pretrained;
  Split subject_split;
  FusionTrainResult main;  // joint training only
  FusionTrainResult pt;    // members fine-tuned individually first
  std::optional<TrainResult> baseline;
  std::vector<ModelScore> scores;                      // on test subjects
  std::map<std::string, std::set<std::string>> detected;  // test subjects called positive
  std::vector<Diagnosis> diagnoses;                    // main ensemble, test subjects

  const ModelScore& score(const std::string& model) const {
    for (const auto& s : scores) {
      if (s.model == model) return s;
    }
    fail(ErrorCode::UnknownMember, "no score for '" + model + "'");
  }
  /// Individually fine-tuned sensory and cognitive models, by id.
  std::map<std::string, BiomarkerModel> individual() const {
    std::map<std::string, BiomarkerModel> out;
    for (const auto& r : pt.member_pt) out.emplace(r.model.biomarker_id, r.model);
    return out;
  }
};

using Progress = std::function<void(const std::string&)>;

inline std::vector<std::size_t> subject_labels(const std::vector<Subject>& subjects) {
  std::vector<std::size_t> labels;
  for (const auto& s : subjects) labels.push_back(s.record.label == Label::Positive ? 1 : 0);
  return labels;
}

/// Surrogate pretraining of every sensory and cognitive model.
inline std::map<std::string, TrainResult> pretrain_all(const BiomarkerRegistry& registry,
                                                       const ExperimentConfig& cfg,
                                                       const Progress& progress = {}) {
  std::map<std::string, TrainResult> out;
  for (const auto& id : registry.model_ids()) {
    const RegistryEntry& e = registry.at(id);
    const auto data = surrogate_dataset(e, cfg.surrogate_per_class, cfg.seed, cfg.chunking.mfcc);
    TrainConfig tc = cfg.pretrain;
    tc.seed = cfg.seed;
    out.emplace(id, pretrain_biomarker(e, cfg.arch, data, tc));
    if (progress) {
      progress("pretrained " + id + " surrogate test accuracy " +
               format_fixed(out.at(id).test_accuracy, 3));
    }
  }
  return out;
}

inline ExperimentResult run_experiment(const std::vector<Subject>& subjects,
                                       const ExperimentConfig& cfg, const Progress& progress = {}) {
  auto note = [&](const std::string& s) {
    if (progress) progress(s);
  };
  ExperimentResult r;
  r.registry = build_registry();
  r.subject_split = stratified_split(subject_labels(subjects), cfg.pretrain.split_fraction,
                                     sub_seed(cfg.seed, "subjects"));
  r.pretrained = pretrain_all(r.registry, cfg, progress);

  std::vector<BiomarkerModel> members;
  for (const auto& id : r.registry.model_ids()) {
    BiomarkerModel m = r.pretrained.at(id).model;
    if (cfg.poisson_mask) m.input_mask = PoissonMaskConfig{};
    members.push_back(std::move(m));
  }

  // Chunk-level data; the split follows subjects so no subject straddles it.
  std::vector<ChunkSample> data;
  std::vector<std::vector<std::size_t>> chunks_of(subjects.size());
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    const auto meta = MetadataVector::from_record(subjects[s].record);
    const std::size_t label = subjects[s].record.label == Label::Positive ? 1 : 0;
    for (auto& c : chunk_clip(subjects[s].clip, cfg.chunking)) {
      chunks_of[s].push_back(data.size());
      data.push_back({std::move(c.features), label, meta, s});
    }
  }
  Split chunk_split;
  for (std::size_t s : r.subject_split.train) {
    chunk_split.train.insert(chunk_split.train.end(), chunks_of[s].begin(), chunks_of[s].end());
  }
  for (std::size_t s : r.subject_split.test) {
    chunk_split.test.insert(chunk_split.test.end(), chunks_of[s].begin(), chunks_of[s].end());
  }
  note("target chunks: " + std::to_string(chunk_split.train.size()) + " train, " +
       std::to_string(chunk_split.test.size()) + " test");

  TrainConfig fc = cfg.fusion;
  fc.seed = sub_seed(cfg.seed, "fusion");
  TrainConfig ftc = cfg.finetune;
  ftc.seed = sub_seed(cfg.seed, "finetune");
  const std::uint64_t fusion_init = sub_seed(cfg.seed, "fusion-init");
  {
    FusionModel f = build_fusion(members, MetadataVector::kDim, fusion_init, cfg.fusion_hidden);
    r.main = train_fusion(std::move(f), members, data, chunk_split, fc, cfg.member_strategy, false);
    note("joint-only ensemble chunk test accuracy " + format_fixed(r.main.test_accuracy, 3));
  }
  {
    // PT: members fine-tuned alone (finetune config), then joint training.
    std::vector<TrainResult> pt = fine_tune_members(members, data, chunk_split, ftc, cfg.member_strategy);
    std::vector<BiomarkerModel> tuned;
    for (const auto& t : pt) tuned.push_back(t.model);
    FusionModel f = build_fusion(tuned, MetadataVector::kDim, fusion_init, cfg.fusion_hidden);
    r.pt = train_fusion(std::move(f), std::move(tuned), data, chunk_split, fc, cfg.member_strategy,
                        false);
    r.pt.member_pt = std::move(pt);
    note("PT ensemble chunk test accuracy " + format_fixed(r.pt.test_accuracy, 3));
  }
  if (cfg.train_baseline) {
    BiomarkerModel b = init_cnn(cfg.arch, 2, sub_seed(cfg.seed, "baseline"), "baseline");
    if (cfg.poisson_mask) b.input_mask = PoissonMaskConfig{};
    std::vector<LabeledImage> labeled;
    for (const auto& s : data) labeled.push_back({s.image, s.label});
    TrainConfig bc = ftc;
    bc.seed = sub_seed(cfg.seed, "baseline-train");
    r.baseline = train_split(std::move(b), labeled, chunk_split, bc, TransferStrategy::all());
    note("baseline chunk test accuracy " + format_fixed(r.baseline->test_accuracy, 3));
  }

  // Test-subject scoring: chunk P(positive) -> aggregate -> threshold.
  auto score = [&](const std::string& name, const std::function<double(const ChunkSample&)>& p_pos,
                   bool keep_diagnoses) {
    ModelScore ms{name, 0.0, 0.0};
    std::size_t chunk_hits = 0, chunk_total = 0, subject_hits = 0;
    for (std::size_t s : r.subject_split.test) {
      std::vector<double> probs;
      for (std::size_t i : chunks_of[s]) {
        probs.push_back(p_pos(data[i]));
        chunk_hits += (probs.back() >= cfg.threshold) == (data[i].label == 1);
        ++chunk_total;
      }
      Diagnosis d = make_diagnosis(subjects[s].record.subject_id, std::move(probs), cfg.scheme,
                                   cfg.threshold);
      subject_hits += d.label == subjects[s].record.label;
      if (d.label == Label::Positive) r.detected[name].insert(d.subject_id);
      if (keep_diagnoses) r.diagnoses.push_back(std::move(d));
    }
    r.detected.try_emplace(name);
    ms.chunk_accuracy = chunk_total ? static_cast<double>(chunk_hits) / chunk_total : 0.0;
    ms.subject_accuracy = r.subject_split.test.empty()
                              ? 0.0
                              : static_cast<double>(subject_hits) / r.subject_split.test.size();
    r.scores.push_back(ms);
  };
  score("ensemble", [&](const ChunkSample& c) { return r.main.ensemble.predict(c.image, c.meta); }, true);
  score("ensemble_pt", [&](const ChunkSample& c) { return r.pt.ensemble.predict(c.image, c.meta); },
        false);
  for (const auto& t : r.pt.member_pt) {
    const BiomarkerModel& m = t.model;
    score(m.biomarker_id, [&](const ChunkSample& c) { return forward(m, c.image).probs[1]; }, false);
  }
  if (r.baseline) {
    const BiomarkerModel& m = r.baseline->model;
    score("baseline", [&](const ChunkSample& c) { return forward(m, c.image).probs[1]; }, false);
  }
  note("ensemble subject test accuracy " + format_fixed(r.score("ensemble").subject_accuracy, 3));
  return r;
}

/// Best subject-level accuracy among the individually fine-tuned models.
inline double best_single_accuracy(const ExperimentResult& r) {
  double best = 0.0;
  for (const auto& id : r.registry.model_ids()) best = std::max(best, r.score(id).subject_accuracy);
  return best;
}

}  // namespace ovbm

#endif  // OVBM_PIPELINE_HPP
