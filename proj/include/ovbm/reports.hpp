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

#ifndef OVBM_REPORTS_HPP
#define OVBM_REPORTS_HPP

#include <bit>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "ovbm/common.hpp"
#include "ovbm/saliency.hpp"

namespace ovbm {

// ---------------------------------------------------------------------------
// Uniqueness: which true positives each model (or combination) catches.

struct DetectionSet {
  std::string model;
  std::set<std::string> detected;
};

struct UniquenessRow {
  std::string label;
  std::vector<std::size_t> models;  // indices of the detecting models
  std::vector<std::string> subjects;
  double percent = 0.0;
};

struct UniquenessReport {
  std::vector<UniquenessRow> rows;
  std::size_t positives = 0;
};

/// Every positive lands in exactly one row: the exact set of models that
/// detect it. Rows run singles, pairs, ..., then "In all k", then
/// "In neither of the k".
inline UniquenessReport uniqueness_report(const std::vector<DetectionSet>& models,
                                          const std::set<std::string>& positives) {
  const std::size_t k = models.size();
  if (k < 2 || k > 16) fail(ErrorCode::InvalidArgument, "uniqueness report needs 2..16 models");
  const std::uint32_t full = (1u << k) - 1;
  std::vector<std::uint32_t> masks;
  for (std::size_t size = 1; size < k; ++size) {
    for (std::uint32_t m = 1; m < full; ++m) {
      if (static_cast<std::size_t>(std::popcount(m)) == size) masks.push_back(m);
    }
  }
  masks.push_back(full);
  masks.push_back(0);

  UniquenessReport r;
  r.positives = positives.size();
  for (std::uint32_t m : masks) {
    UniquenessRow row;
    if (m == full) {
      row.label = "In all " + std::to_string(k);
    } else if (m == 0) {
      row.label = "In neither of the " + std::to_string(k);
    }
    for (std::size_t i = 0; i < k; ++i) {
      if (m >> i & 1u) {
        row.models.push_back(i);
        if (m != full) row.label += (row.label.empty() ? "" : " & ") + models[i].model;
      }
    }
    for (const auto& s : positives) {
      std::uint32_t hit = 0;
      for (std::size_t i = 0; i < k; ++i) hit |= (models[i].detected.count(s) ? 1u : 0u) << i;
      if (hit == m) row.subjects.push_back(s);
    }
    row.percent = r.positives ? 100.0 * static_cast<double>(row.subjects.size()) /
                                    static_cast<double>(r.positives)
                              : 0.0;
    r.rows.push_back(std::move(row));
  }
  return r;
}

inline std::string uniqueness_csv(const UniquenessReport& r, const std::string& comment) {
  std::string out = comment.empty() ? "" : comment + "\n";
  out += "row,count,percent,subjects\n";
  for (const auto& row : r.rows) {
    std::string subjects;
    for (const auto& s : row.subjects) subjects += (subjects.empty() ? "" : ";") + s;
    out += "\"" + row.label + "\"," + std::to_string(row.subjects.size()) + "," +
           format_fixed(row.percent, 1) + "," + subjects + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ablation: accuracy without vs with the Poisson mask.

struct AblationRun {
  std::string label;
  double without_mask = 0.0;  // percent
  double with_mask = 0.0;     // percent
};

struct AblationReport {
  std::vector<AblationRun> rows;
  double avg_improvement = 0.0;
};

inline AblationReport ablation_report(const std::vector<AblationRun>& runs) {
  if (runs.empty()) fail(ErrorCode::EmptyList, "ablation report needs at least one run");
  AblationReport r{runs, 0.0};
  for (const auto& run : runs) r.avg_improvement += run.with_mask - run.without_mask;
  r.avg_improvement /= static_cast<double>(runs.size());
  return r;
}

/// One decimal, as percentages are tabulated; never prints "-0.0".
inline std::string format_percent(double v) {
  const double rounded = std::round(v * 10.0) / 10.0;
  return format_fixed(rounded == 0.0 ? 0.0 : rounded, 1);
}

inline std::string ablation_csv(const AblationReport& r, const std::string& comment) {
  std::string out = comment.empty() ? "" : comment + "\n";
  out += "model,without_mask_pct,with_mask_pct\n";
  for (const auto& row : r.rows) {
    out += row.label + "," + format_percent(row.without_mask) + "," + format_percent(row.with_mask) +
           "\n";
  }
  out += "Avg improvement,," + format_percent(r.avg_improvement) + "\n";
  return out;
}

}  // namespace ovbm

#endif  // OVBM_REPORTS_HPP
