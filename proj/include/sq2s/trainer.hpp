// sq2s/trainer.hpp
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

// Joint optimization: per step, one Adam update of the translator and
// attention nets (translator minimizes rec + beta*KL + lambda*adv; attention
// minimizes rec alone), then one Adam update of the discriminator on real
// targets versus detached fakes. Leave-one-out evaluation trains one model
// per held-out subject.

#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "sq2s/adam.hpp"
#include "sq2s/dsp.hpp"
#include "sq2s/objectives.hpp"
#include "sq2s/synthdata.hpp"
#include "sq2s/translator.hpp"

namespace sq2s {

struct TrainConfig {
  double lr_f = 1e-3;
  double lr_a = 1e-3;
  double lr_d = 1e-4;
  float beta = 0.5f;
  float lambda = 0.5f;
  double p_same = 0.5;
  int steps = 2000;
  int batch_size = 1;  // pairs per step
  std::uint64_t seed = 1;
  std::string scale = "desk";  // desk | paper
  bool no_attention = false;
  bool no_pairwise = false;
  bool no_gan = false;
  int checkpoint_every = 0;  // 0: final checkpoint only

  ModelConfig model_config() const;
  std::string ablation_label() const;
  void apply_ablation(const std::string& label);  // full | no_attention | ...

  std::string serialize() const;
  static TrainConfig parse(const std::string& text);
  static TrainConfig load_file(const std::string& path);
};

struct StepLosses {
  double rec = 0, kl = 0, adv = 0, disc = 0;
};

struct TrainLogRow {
  std::int64_t step = 0;
  double rec = 0, kl = 0, adv = 0, disc = 0;
  double wall_ms = 0;
};

void write_train_log(const std::string& path, const std::vector<TrainLogRow>& log);

// Corpus with rendered sequences and precomputed sliding-window target mels.
struct LoadedCorpus {
  struct Item {
    int subject_id = 0;
    int class_id = 0;
    TaggedSequence seq;
    std::vector<MelSpec> crops;  // window crops at stride = hop; [0] is offset 0
  };
  std::vector<Item> items;
  CorpusManifest manifest;  // aligned with items
  MelConfig dsp;
  // original manifest row of each item (identity under load; set by filters)
  std::vector<std::size_t> global_ids;

  static LoadedCorpus load(const std::string& data_dir);
  LoadedCorpus without_subject(int subject_id) const;
  std::vector<int> subject_ids() const;  // unique, ascending
};

struct TrainPairRef {
  std::size_t first = 0;
  std::size_t second = 0;
  std::size_t crop_first = 0;
  std::size_t crop_second = 0;
  bool same_utterance = false;
};

// One optimization step over a batch of pairs. Throws on non-finite losses,
// naming the component.
StepLosses train_step(const std::vector<TrainPairRef>& batch,
                      const LoadedCorpus& corpus, Models& models,
                      AdamState<float>& opt_f, AdamState<float>& opt_a,
                      AdamState<float>& opt_d, const TrainConfig& cfg,
                      Rng& eps_rng);

struct TrainResult {
  std::string checkpoint_path;
  std::vector<TrainLogRow> log;
  std::set<std::size_t> sampled_global_ids;
  double first_rec = 0;
  double final_rec = 0;
};

TrainResult train(const TrainConfig& cfg, const LoadedCorpus& corpus,
                  const std::string& out_dir);

struct EvalItemResult {
  std::size_t global_id = 0;
  int subject_id = 0;
  int class_id = 0;
  double corr = 0;
  double lsd = 0;
};

// Inference (eps = 0) against each item's offset-0 window target.
std::vector<EvalItemResult> evaluate_items(const Models& models,
                                           const LoadedCorpus& corpus,
                                           const std::vector<std::size_t>& indices,
                                           bool use_attention);

struct LooFold {
  int held_out_subject = 0;
  int trial = 0;
  std::uint64_t seed = 0;
  std::string ablation;
  double mean_corr = 0;
  double mean_lsd = 0;
  std::vector<EvalItemResult> items;
  std::string checkpoint_path;
};

// One train/eval cycle per subject per trial seed. Folds may run in parallel
// threads (capped by `threads`); results are ordered by (trial, subject).
std::vector<LooFold> leave_one_out_eval(const TrainConfig& base,
                                        const LoadedCorpus& corpus, int trials,
                                        const std::string& out_dir, int threads);

// SQ2S_THREADS environment cap (defaults to hardware concurrency).
int worker_threads();

}  // namespace sq2s
