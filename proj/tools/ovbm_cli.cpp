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

// ovbm: command-line driver for corpus synthesis, training, evaluation,
// diagnosis, saliency maps and reports.
//
// Exit codes: 0 success, 2 validation error, 3 I/O error.

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ovbm/pipeline.hpp"
#include "ovbm/run_config.hpp"

namespace fs = std::filesystem;
using namespace ovbm;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;

struct Flags {
  std::optional<std::string> manifest;
  std::optional<std::string> out;
  std::optional<std::string> models;
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<double> chunk_size;
  std::optional<double> stride;
  std::optional<std::string> poisson_mask;
  std::optional<std::string> scheme;
  std::optional<std::string> strategy;
  std::optional<double> lr;
  std::optional<std::size_t> epochs;
  std::optional<double> threshold;
  std::optional<std::size_t> n_subjects;
  std::optional<double> clip_seconds;
  std::optional<std::size_t> pretrain_epochs;
  std::optional<std::size_t> surrogate_per_class;
  std::optional<std::string> baseline;
  bool brainos = false;
  std::vector<std::string> subjects;
  std::optional<std::string> with_mask;
  std::optional<std::string> without_mask;
  std::string uniqueness = "vocal_cords_ww_them,sentiment_8class,cough_origin";
};

void add_shared(CLI::App* cmd, Flags& f) {
  cmd->add_option("--manifest", f.manifest, "Manifest CSV (subject_id,wav_path,label,gender,age)");
  cmd->add_option("--out", f.out, "Output directory")->required();
  cmd->add_option("--config", f.config, "JSON run configuration");
  cmd->add_option("--seed", f.seed, "Run seed");
  cmd->add_option("--chunk-size", f.chunk_size, "Chunk length in seconds");
  cmd->add_option("--stride", f.stride, "Chunk stride in seconds");
  cmd->add_option("--poisson-mask", f.poisson_mask, "Poisson input mask on every member")
      ->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--scheme", f.scheme, "Chunk aggregation")
      ->check(CLI::IsMember({"average", "linpos", "linneg"}));
  cmd->add_option("--strategy", f.strategy, "Member transfer strategy: frozen, last:N or all");
  cmd->add_option("--lr", f.lr, "Target-task learning rate");
  cmd->add_option("--epochs", f.epochs, "Target-task epochs (fine-tuning and fusion)");
  cmd->add_option("--threshold", f.threshold, "Decision threshold on P(positive)");
}

void add_models(CLI::App* cmd, Flags& f) {
  cmd->add_option("--models", f.models, "Directory written by 'train'")->required();
}

bool on_off(const std::string& s) { return s == "on"; }

/// defaults < run.json of --models < --config < flags.
RunConfig resolve(const Flags& f) {
  RunConfig c;
  if (f.models) {
    const fs::path run = fs::path(*f.models) / "run.json";
    apply_json(c, load_json_file(run).at("config"));
  }
  if (f.config) apply_json(c, load_json_file(*f.config));
  if (f.seed) c.seed = *f.seed;
  if (f.chunk_size) c.chunk_size = *f.chunk_size;
  if (f.stride) c.stride = *f.stride;
  if (f.poisson_mask) c.poisson_mask = on_off(*f.poisson_mask);
  if (f.scheme) c.scheme = parse_scheme(*f.scheme);
  if (f.strategy) c.strategy = TransferStrategy::parse(*f.strategy);
  if (f.lr) c.lr = *f.lr;
  if (f.epochs) c.epochs = *f.epochs;
  if (f.threshold) c.threshold = *f.threshold;
  if (f.n_subjects) c.n_subjects = *f.n_subjects;
  if (f.clip_seconds) c.clip_seconds = *f.clip_seconds;
  if (f.pretrain_epochs) c.pretrain_epochs = *f.pretrain_epochs;
  if (f.surrogate_per_class) c.surrogate_per_class = *f.surrogate_per_class;
  if (f.baseline) c.baseline = on_off(*f.baseline);
  c.validate();
  return c;
}

const std::string& need(const std::optional<std::string>& v, const char* flag) {
  if (!v) fail(ErrorCode::InvalidArgument, std::string(flag) + " is required");
  return *v;
}

void log(const std::string& s) { std::cerr << "[ovbm] " << s << "\n"; }

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

std::vector<Subject> load_subjects(const fs::path& manifest, const RunConfig& c,
                                   const std::vector<std::string>& only = {}) {
  std::vector<Subject> out;
  const std::set<std::string> wanted(only.begin(), only.end());
  for (auto& rec : parse_manifest(manifest)) {
    if (!wanted.empty() && !wanted.count(rec.subject_id)) continue;
    AudioClip clip = load_wav(resolve_wav(manifest, rec));
    if (clip.sample_rate != c.mfcc().sample_rate) clip = resample_linear(clip, c.mfcc().sample_rate);
    out.push_back({std::move(rec), std::move(clip)});
  }
  for (const auto& id : wanted) {
    bool found = false;
    for (const auto& s : out) found |= s.record.subject_id == id;
    if (!found) fail(ErrorCode::InvalidArgument, "subject '" + id + "' is not in the manifest");
  }
  if (out.empty()) fail(ErrorCode::InvalidArgument, "manifest lists no subjects");
  return out;
}

Json ids_json(const std::vector<std::size_t>& idx, const std::vector<Subject>& subjects) {
  Json a = Json::array();
  for (std::size_t i : idx) a.push_back(subjects[i].record.subject_id);
  return a;
}

// ---------------------------------------------------------------------------

int cmd_synth(const Flags& f) {
  const RunConfig c = resolve(f);
  const fs::path out(need(f.out, "--out"));
  const auto subjects = synth_corpus(c.n_subjects, c.seed, c.clip_seconds);
  std::vector<SubjectRecord> records;
  for (const auto& s : subjects) {
    write_wav(out / s.record.wav_path, s.clip);
    records.push_back(s.record);
  }
  write_file_atomic(out / "manifest.csv", format_manifest(records));
  log("wrote " + std::to_string(records.size()) + " subjects to " + (out / "manifest.csv").string());
  return 0;
}

int cmd_train(const Flags& f) {
  const RunConfig c = resolve(f);
  const fs::path manifest(need(f.manifest, "--manifest"));
  const fs::path out(need(f.out, "--out"));
  const auto subjects = load_subjects(manifest, c);
  const std::string digest = config_digest(c);
  const Json meta = artifact_meta(c.seed, digest);
  log("config " + digest + ", " + std::to_string(subjects.size()) + " subjects");

  const ExperimentResult r = run_experiment(subjects, c.experiment(), log);

  Json run = meta;
  run["config"] = to_json(c);
  write_file_atomic(out / "run.json", dump(run));
  save_ensemble(out / "models" / "main", r.main.ensemble, meta);
  save_ensemble(out / "models" / "pt", r.pt.ensemble, meta);
  for (const auto& t : r.pt.member_pt) {
    save_model(out / "models" / "individual" / (t.model.biomarker_id + ".ovbm"), t.model, meta);
  }
  if (r.baseline) save_model(out / "models" / "baseline.ovbm", r.baseline->model, meta);

  Json metrics = meta;
  metrics["poisson_mask"] = c.poisson_mask;
  metrics["subject_split"] = {{"train", ids_json(r.subject_split.train, subjects)},
                              {"test", ids_json(r.subject_split.test, subjects)}};
  Json positives = Json::array();
  for (std::size_t i : r.subject_split.test) {
    if (subjects[i].record.label == Label::Positive) positives.push_back(subjects[i].record.subject_id);
  }
  metrics["test_positives"] = positives;
  Json scores = Json::array();
  for (const auto& s : r.scores) {
    scores.push_back({{"model", s.model},
                      {"chunk_accuracy", s.chunk_accuracy},
                      {"subject_accuracy", s.subject_accuracy}});
  }
  metrics["scores"] = scores;
  Json detected = Json::object();
  for (const auto& [model, ids] : r.detected) detected[model] = ids;
  metrics["detected"] = detected;
  Json pretrain = Json::object();
  for (const auto& [id, t] : r.pretrained) pretrain[id] = t.test_accuracy;
  metrics["surrogate_test_accuracy"] = pretrain;
  metrics["fusion_epoch_loss"] = r.main.epoch_loss;
  write_file_atomic(out / "metrics.json", dump(metrics));

  std::cout << "ensemble subject accuracy " << format_fixed(r.score("ensemble").subject_accuracy, 3)
            << " (best single " << format_fixed(best_single_accuracy(r), 3) << ")\n";
  return 0;
}

struct Artifacts {
  RunConfig config;
  std::string digest;
  Ensemble main;
  Ensemble pt;
};

Artifacts load_artifacts(const Flags& f) {
  Artifacts a;
  a.config = resolve(f);
  const fs::path dir(need(f.models, "--models"));
  a.digest = config_digest(a.config);
  a.main = load_ensemble(dir / "models" / "main");
  a.pt = load_ensemble(dir / "models" / "pt");
  return a;
}

int cmd_eval(const Flags& f) {
  const Artifacts a = load_artifacts(f);
  const RunConfig& c = a.config;
  const auto subjects = load_subjects(need(f.manifest, "--manifest"), c, f.subjects);

  auto evaluate = [&](const Ensemble& e, double chunk_size) {
    ChunkingParams p = c.chunking();
    p.chunk_size = chunk_size;
    std::size_t chunk_hits = 0, chunks = 0, subject_hits = 0;
    for (const auto& s : subjects) {
      const auto meta = MetadataVector::from_record(s.record);
      const auto probs = chunk_probabilities(e, chunk_clip(s.clip, p), meta);
      for (double q : probs) chunk_hits += (q >= c.threshold) == (s.record.label == Label::Positive);
      chunks += probs.size();
      subject_hits += make_diagnosis(s.record.subject_id, probs, c.scheme, c.threshold).label ==
                      s.record.label;
    }
    return Json{{"chunk_accuracy", static_cast<double>(chunk_hits) / static_cast<double>(chunks)},
                {"subject_accuracy",
                 static_cast<double>(subject_hits) / static_cast<double>(subjects.size())},
                {"chunks", chunks},
                {"subjects", subjects.size()}};
  };

  Json result = artifact_meta(c.seed, a.digest);
  result["scheme"] = to_string(c.scheme);
  result["threshold"] = c.threshold;
  result["chunk_size"] = c.chunk_size;
  result["models"] = {{"ensemble", evaluate(a.main, c.chunk_size)},
                      {"ensemble_pt", evaluate(a.pt, c.chunk_size)}};
  if (f.brainos) {
    Json sizes = Json::object();
    for (double k : brainos_sizes()) sizes[format_fixed(k, 0)] = evaluate(a.main, k);
    result["brainos"] = sizes;
  }
  const fs::path out(need(f.out, "--out"));
  write_file_atomic(out / "eval.json", dump(result));
  std::cout << "subject accuracy " << format_fixed(result["models"]["ensemble"]["subject_accuracy"].get<double>(), 3)
            << " over " << subjects.size() << " subjects\n";
  return 0;
}

int cmd_diagnose(const Flags& f) {
  const Artifacts a = load_artifacts(f);
  const RunConfig& c = a.config;
  const fs::path manifest(need(f.manifest, "--manifest"));
  const fs::path out(need(f.out, "--out"));
  for (const auto& s : load_subjects(manifest, c, f.subjects)) {
    const Diagnosis d = diagnose_clip(s.record.subject_id, s.clip, MetadataVector::from_record(s.record),
                                      a.main, c.chunking(), c.scheme, c.threshold);
    Json j = artifact_meta(c.seed, a.digest);
    j["subject_id"] = d.subject_id;
    j["probability"] = d.probability;
    j["label"] = d.label == Label::Positive ? "positive" : "negative";
    j["threshold"] = d.threshold;
    j["scheme"] = to_string(d.scheme);
    j["chunk_probabilities"] = d.chunk_probs;
    write_file_atomic(out / "diagnoses" / (d.subject_id + ".json"), dump(j));
    std::cout << d.subject_id << " " << j["label"].get<std::string>() << " "
              << format_fixed(d.probability, 4) << "\n";
  }
  return 0;
}

int cmd_saliency(const Flags& f) {
  const Artifacts a = load_artifacts(f);
  const RunConfig& c = a.config;
  const fs::path dir(need(f.models, "--models"));
  const fs::path out(need(f.out, "--out"));
  const BiomarkerRegistry registry = build_registry();
  SaliencySources src;
  for (const auto& id : registry.model_ids()) {
    const fs::path p = dir / "models" / "individual" / (id + ".ovbm");
    if (!fs::exists(p)) fail(ErrorCode::MissingBiomarker, "no weight file " + p.string());
    src.individual.emplace(id, load_model(p));
  }
  src.main = &a.main;
  src.pt = &a.pt;

  std::vector<SaliencyMap> maps;
  for (const auto& s : load_subjects(need(f.manifest, "--manifest"), c, f.subjects)) {
    maps.push_back(saliency_map(s.record.subject_id, s.clip, MetadataVector::from_record(s.record),
                                registry, src, c.chunking(), c.scheme));
  }
  const std::string comment = artifact_comment(c.seed, a.digest);
  write_file_atomic(out / "saliency.csv", saliency_csv(maps, comment));
  write_file_atomic(out / "saliency.svg", saliency_svg(maps, comment.substr(2)));
  if (maps.size() == 2) {
    write_file_atomic(out / "comparison.csv", comparison_csv(compare_maps(maps[0], maps[1]), comment));
  }
  std::cout << "saliency maps for " << maps.size() << " subjects\n";
  return 0;
}

struct RunMetrics {
  Json metrics;
  RunConfig config;
};

RunMetrics load_run(const std::string& dir) {
  RunMetrics r;
  r.metrics = load_json_file(fs::path(dir) / "metrics.json");
  r.config = run_config_from_json(load_json_file(fs::path(dir) / "run.json").at("config"));
  return r;
}

double subject_percent(const Json& metrics, const std::string& model) {
  for (const auto& s : metrics.at("scores")) {
    if (s.at("model") == model) return 100.0 * s.at("subject_accuracy").get<double>();
  }
  fail(ErrorCode::UnknownMember, "run has no score for '" + model + "'");
}

bool has_score(const Json& metrics, const std::string& model) {
  for (const auto& s : metrics.at("scores")) {
    if (s.at("model") == model) return true;
  }
  return false;
}

int cmd_report(const Flags& f) {
  const fs::path out(need(f.out, "--out"));
  const RunMetrics primary = load_run(need(f.models, "--models"));
  const std::uint64_t seed = primary.config.seed;
  std::string digest = config_digest(primary.config);

  // Uniqueness over the primary run's positive test subjects.
  std::vector<DetectionSet> sets;
  for (const auto& model : CLI::detail::split(f.uniqueness, ',')) {
    if (!primary.metrics.at("detected").contains(model)) {
      fail(ErrorCode::UnknownMember, "run has no detections for '" + model + "'");
    }
    const auto ids = primary.metrics.at("detected").at(model).get<std::vector<std::string>>();
    sets.push_back({model, {ids.begin(), ids.end()}});
  }
  const auto pos = primary.metrics.at("test_positives").get<std::vector<std::string>>();
  const UniquenessReport u = uniqueness_report(sets, {pos.begin(), pos.end()});
  write_file_atomic(out / "uniqueness.csv", uniqueness_csv(u, artifact_comment(seed, digest)));

  if (f.with_mask || f.without_mask) {
    const RunMetrics with = load_run(need(f.with_mask, "--with-mask"));
    const RunMetrics without = load_run(need(f.without_mask, "--without-mask"));
    if (!with.config.poisson_mask || without.config.poisson_mask) {
      fail(ErrorCode::InvalidArgument,
           "--with-mask needs a run trained with the Poisson mask and --without-mask one without");
    }
    static const std::vector<std::pair<std::string, std::string>> kRows = {
        {"Baseline", "baseline"},
        {"WW", "vocal_cords_ww_them"},
        {"Intonation", "sentiment_8class"},
        {"Cough", "cough_origin"},
        {"OVBM", "ensemble"}};
    std::vector<AblationRun> rows;
    for (const auto& [label, model] : kRows) {
      if (!has_score(with.metrics, model) || !has_score(without.metrics, model)) continue;
      rows.push_back({label, subject_percent(without.metrics, model), subject_percent(with.metrics, model)});
    }
    const std::string pair_digest =
        sha256_hex(config_digest(without.config) + ":" + config_digest(with.config)).substr(0, 16);
    write_file_atomic(out / "ablation.csv",
                      ablation_csv(ablation_report(rows), artifact_comment(with.config.seed, pair_digest)));
    std::cout << "ablation avg improvement " << format_percent(ablation_report(rows).avg_improvement)
              << "\n";
  }
  std::cout << "uniqueness report over " << pos.size() << " positive test subjects\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open Voice Brain Model: explainable audio biomarker pipeline"};
  app.require_subcommand(1);
  Flags f;

  auto* synth = app.add_subcommand("synth", "Write a balanced synthetic corpus and manifest");
  add_shared(synth, f);
  synth->add_option("--n-subjects", f.n_subjects, "Number of subjects");
  synth->add_option("--clip-seconds", f.clip_seconds, "Recording length per subject");

  auto* train = app.add_subcommand("train", "Pretrain biomarkers, fine-tune and fuse");
  add_shared(train, f);
  train->add_option("--pretrain-epochs", f.pretrain_epochs, "Surrogate pretraining epochs");
  train->add_option("--surrogate-per-class", f.surrogate_per_class, "Surrogate clips per class");
  train->add_option("--baseline", f.baseline, "Train the from-scratch baseline")
      ->check(CLI::IsMember({"on", "off"}));

  auto* eval = app.add_subcommand("eval", "Chunk- and subject-level accuracy");
  add_shared(eval, f);
  add_models(eval, f);
  eval->add_flag("--brainos", f.brainos, "Also evaluate at chunk sizes 2, 8, 14 and 20 s");
  eval->add_option("--subject", f.subjects, "Restrict to these subject ids");

  auto* diag = app.add_subcommand("diagnose", "Per-subject diagnosis JSON");
  add_shared(diag, f);
  add_models(diag, f);
  diag->add_option("--subject", f.subjects, "Restrict to these subject ids");

  auto* sal = app.add_subcommand("saliency", "Saliency CSV and SVG");
  add_shared(sal, f);
  add_models(sal, f);
  sal->add_option("--subject", f.subjects, "Subjects to map; two subjects also write a comparison");

  auto* report = app.add_subcommand("report", "Uniqueness and Poisson-mask ablation CSVs");
  add_shared(report, f);
  add_models(report, f);
  report->add_option("--with-mask", f.with_mask, "Train directory of a run with the Poisson mask");
  report->add_option("--without-mask", f.without_mask, "Train directory of a run without it");
  report->add_option("--uniqueness", f.uniqueness, "Comma-separated models for the uniqueness table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (synth->parsed()) return cmd_synth(f);
    if (train->parsed()) return cmd_train(f);
    if (eval->parsed()) return cmd_eval(f);
    if (diag->parsed()) return cmd_diagnose(f);
    if (sal->parsed()) return cmd_saliency(f);
    if (report->parsed()) return cmd_report(f);
  } catch (const Error& e) {
    std::cerr << "ovbm: " << e.what() << "\n";
    return e.code() == ErrorCode::IoFailure ? kExitIo : kExitValidation;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "ovbm: IoFailure: " << e.what() << "\n";
    return kExitIo;
  } catch (const Json::exception& e) {
    std::cerr << "ovbm: InvalidArgument: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "ovbm: " << e.what() << "\n";
    return 1;
  }
  return kExitValidation;
}
