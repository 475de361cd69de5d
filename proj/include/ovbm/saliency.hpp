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

#ifndef OVBM_SALIENCY_HPP
#define OVBM_SALIENCY_HPP

#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "ovbm/aggregation.hpp"
#include "ovbm/registry.hpp"

namespace ovbm {

struct SaliencyEntry {
  std::string biomarker_id;
  Family family = Family::Sensory;
  double score = 0.0;  // aggregated healthy-class probability
};

struct SaliencyMap {
  std::string subject_id;
  std::string registry_version;
  std::vector<SaliencyEntry> entries;

  double family_mean(Family f) const {
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& e : entries) {
      if (e.family == f) {
        acc += e.score;
        ++n;
      }
    }
    return n ? acc / static_cast<double>(n) : 0.0;
  }
};

/// Models behind the map: the individually fine-tuned sensory and cognitive
/// models (binary heads), the joint-only ensemble and the PT ensemble.
struct SaliencySources {
  std::map<std::string, BiomarkerModel> individual;
  const Ensemble* main = nullptr;
  const Ensemble* pt = nullptr;
};

inline SaliencyMap saliency_map(const std::string& subject_id, const AudioClip& clip,
                                const MetadataVector& meta, const BiomarkerRegistry& registry,
                                const SaliencySources& src, const ChunkingParams& params,
                                AggregationScheme scheme) {
  if (!src.main || !src.pt) fail(ErrorCode::MissingBiomarker, "saliency needs both ensembles");
  std::map<double, std::vector<Chunk>> chunks;
  auto chunks_at = [&](double size) -> const std::vector<Chunk>& {
    auto it = chunks.find(size);
    if (it == chunks.end()) {
      ChunkingParams p = params;
      p.chunk_size = size;
      it = chunks.emplace(size, chunk_clip(clip, p)).first;
    }
    return it->second;
  };
  auto healthy = [&](const Ensemble& e, double size, AggregationScheme s) {
    return std::clamp(1.0 - aggregate(chunk_probabilities(e, chunks_at(size), meta), s), 0.0, 1.0);
  };

  SaliencyMap map;
  map.subject_id = subject_id;
  map.registry_version = registry.version;
  for (Family fam : kFamilies) {
    for (const RegistryEntry* e : registry.family(fam)) {
      double score = 0.0;
      switch (fam) {
        case Family::Sensory:
        case Family::Cognitive: {
          auto it = src.individual.find(e->id);
          if (it == src.individual.end()) {
            fail(ErrorCode::MissingBiomarker, "no fine-tuned model for '" + e->id + "'");
          }
          if (it->second.num_classes != 2) {
            fail(ErrorCode::MissingBiomarker, "model '" + e->id + "' has no binary target head");
          }
          std::vector<double> neg;
          for (const auto& c : chunks_at(params.chunk_size)) {
            neg.push_back(forward(it->second, c.features).probs[0]);
          }
          score = aggregate(neg, scheme);
          break;
        }
        case Family::BrainOS:
          score = healthy(*src.main, e->recipe.brainos_chunk, scheme);
          break;
        case Family::Symbolic:
          score = e->recipe.symbolic == "pt"
                      ? healthy(*src.pt, params.chunk_size, scheme)
                      : healthy(*src.main, params.chunk_size, parse_scheme(e->recipe.symbolic));
          break;
      }
      map.entries.push_back({e->id, fam, score});
    }
  }
  return map;
}

struct ComparisonRow {
  std::string biomarker_id;
  Family family = Family::Sensory;
  double a = 0.0;
  double b = 0.0;
  double delta = 0.0;
};

struct MapComparison {
  std::string subject_a;
  std::string subject_b;
  std::vector<ComparisonRow> rows;
  std::map<std::string, double> family_deltas;  // mean(a) - mean(b)
};

inline MapComparison compare_maps(const SaliencyMap& a, const SaliencyMap& b) {
  bool same = a.registry_version == b.registry_version && a.entries.size() == b.entries.size();
  for (std::size_t i = 0; same && i < a.entries.size(); ++i) {
    same = a.entries[i].biomarker_id == b.entries[i].biomarker_id &&
           a.entries[i].family == b.entries[i].family;
  }
  if (!same) fail(ErrorCode::RegistryMismatch, "saliency maps come from different registries");
  MapComparison c{a.subject_id, b.subject_id, {}, {}};
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    const auto& ea = a.entries[i];
    c.rows.push_back({ea.biomarker_id, ea.family, ea.score, b.entries[i].score,
                      ea.score - b.entries[i].score});
  }
  for (Family f : kFamilies) c.family_deltas[to_string(f)] = a.family_mean(f) - b.family_mean(f);
  return c;
}

// ---------------------------------------------------------------------------
// Output

inline std::string format_fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string saliency_csv(const std::vector<SaliencyMap>& maps, const std::string& comment) {
  std::string out = comment.empty() ? "" : comment + "\n";
  out += "subject_id,family,biomarker_id,score\n";
  for (const auto& m : maps) {
    for (const auto& e : m.entries) {
      out += m.subject_id + "," + to_string(e.family) + "," + e.biomarker_id + "," +
             format_fixed(e.score) + "\n";
    }
  }
  return out;
}

inline std::string comparison_csv(const MapComparison& c, const std::string& comment) {
  std::string out = comment.empty() ? "" : comment + "\n";
  out += "biomarker_id,family," + c.subject_a + "," + c.subject_b + ",delta\n";
  for (const auto& r : c.rows) {
    out += r.biomarker_id + "," + to_string(r.family) + "," + format_fixed(r.a) + "," +
           format_fixed(r.b) + "," + format_fixed(r.delta) + "\n";
  }
  for (const auto& [fam, d] : c.family_deltas) {
    out += "family_mean," + fam + ",,," + format_fixed(d) + "\n";
  }
  return out;
}

/// Line plot of scores over the 16 biomarkers, one polyline per map; maps
/// after the first are dashed.
inline std::string saliency_svg(const std::vector<SaliencyMap>& maps, const std::string& comment) {
  const double w = 880, h = 420, left = 60, right = 20, top = 40, bottom = 150;
  const double pw = w - left - right, ph = h - top - bottom;
  const std::size_t n = maps.empty() ? 0 : maps.front().entries.size();
  auto x_at = [&](std::size_t i) { return left + (n > 1 ? pw * static_cast<double>(i) / (n - 1) : 0); };
  auto y_at = [&](double s) { return top + ph * (1.0 - s); };
  auto f1 = [](double v) { return format_fixed(v, 1); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + f1(w) + "\" height=\"" +
                  f1(h) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  if (!comment.empty()) s += "<!-- " + comment + " -->\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int g = 0; g <= 4; ++g) {
    const double v = g / 4.0, y = y_at(v);
    s += "<line x1=\"" + f1(left) + "\" y1=\"" + f1(y) + "\" x2=\"" + f1(w - right) + "\" y2=\"" +
         f1(y) + "\" stroke=\"#ddd\"/>\n";
    s += "<text x=\"" + f1(left - 8) + "\" y=\"" + f1(y + 4) + "\" text-anchor=\"end\">" +
         format_fixed(v, 2) + "</text>\n";
  }
  if (n > 0) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& e = maps.front().entries[i];
      const double x = x_at(i), y = h - bottom + 12;
      s += "<text x=\"" + f1(x) + "\" y=\"" + f1(y) + "\" transform=\"rotate(45 " + f1(x) + " " +
           f1(y) + ")\">" + e.biomarker_id + "</text>\n";
      if (i % 4 == 0) {
        s += "<text x=\"" + f1((x + x_at(std::min(i + 3, n - 1))) / 2) + "\" y=\"" + f1(top - 12) +
             "\" text-anchor=\"middle\" font-weight=\"bold\">" + to_string(e.family) + "</text>\n";
      }
    }
  }
  for (std::size_t m = 0; m < maps.size(); ++m) {
    const char* color = colors[m % 5];
    std::string pts;
    for (std::size_t i = 0; i < maps[m].entries.size(); ++i) {
      pts += (i ? " " : "") + f1(x_at(i)) + "," + f1(y_at(maps[m].entries[i].score));
    }
    s += std::string("<polyline fill=\"none\" stroke=\"") + color + "\" stroke-width=\"2\"" +
         (m > 0 ? " stroke-dasharray=\"6 4\"" : "") + " points=\"" + pts + "\"/>\n";
    s += "<text x=\"" + f1(w - right) + "\" y=\"" + f1(top + 14.0 * static_cast<double>(m) - 20) +
         "\" text-anchor=\"end\" fill=\"" + color + "\">" + maps[m].subject_id + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace ovbm

#endif  // OVBM_SALIENCY_HPP
