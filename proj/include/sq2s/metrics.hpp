// sq2s/metrics.hpp
//
// Copyright 2026 The sq2s Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Evaluation metrics: 2-D Pearson correlation between spectrograms and a
// log-spectral distance in dB (the PESQ stand-in; reports label it as such).

#pragma once

#include <map>
#include <string>
#include <vector>

#include "sq2s/dsp.hpp"

namespace sq2s {

// Pearson correlation over the flattened grids. Throws when either grid is
// constant (undefined correlation).
double corr2d(const MelSpec& a, const MelSpec& b);

// RMS over frames of the per-frame RMS dB difference, after de-normalizing
// each spectrogram with its own meta window.
double log_spectral_distance(const MelSpec& a, const MelSpec& b);

// --- reports ------------------------------------------------------------------

struct EvalRow {
  std::string ablation;
  int trial = 0;
  int subject = 0;
  int class_id = 0;
  double corr = 0;
  double lsd = 0;
};

// CSV schema: ablation,trial,subject,class,corr2d,lsd_db
void write_eval_csv(const std::string& path, const std::vector<EvalRow>& rows);
std::vector<EvalRow> read_eval_csv(const std::string& path);

struct AblationSummary {
  std::string label;
  bool present = false;
  int trials = 0;
  double corr_mean = 0, corr_std = 0;
  double lsd_mean = 0, lsd_std = 0;
};

// One summary per requested label, in order; absent labels are marked.
// Values are per-trial means; std is the sample deviation across trials.
std::vector<AblationSummary> summarize_ablations(
    const std::vector<std::string>& labels,
    const std::map<std::string, std::vector<double>>& corr_by_label,
    const std::map<std::string, std::vector<double>>& lsd_by_label);

// CSV schema: ablation,present,trials,corr2d_mean,corr2d_std,lsd_mean,lsd_std
void write_ablation_csv(const std::string& path,
                        const std::vector<AblationSummary>& rows);
std::vector<AblationSummary> read_ablation_csv(const std::string& path);

// Aligned text table, one row per ablation. LSD column is labeled as the
// PESQ substitute.
std::string format_ablation_table(const std::vector<AblationSummary>& rows);

}  // namespace sq2s
