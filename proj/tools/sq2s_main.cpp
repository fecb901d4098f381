// tools/sq2s_main.cpp
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

// Batch command-line front end. Every command exits 0 on success, 2 on a
// usage or input error, and 1 on an internal failure. Errors go to stderr;
// data goes to files.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sq2s/dsp.hpp"
#include "sq2s/metrics.hpp"
#include "sq2s/serialize.hpp"
#include "sq2s/synthdata.hpp"
#include "sq2s/trainer.hpp"
#include "sq2s/translator.hpp"

namespace fs = std::filesystem;
using namespace sq2s;

namespace {

struct DspFlags {
  std::string config_path;
  int sr = -1, n_fft = -1, hop = -1, n_mels = -1, width = -1, gl_iters = 32;
  double fmin = -1, fmax = -1, db_floor = 1, db_ceil = 1, ref_power = -1;
  std::uint64_t phase_seed = 0;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--dsp-config", config_path, "mel config file (e.g. dsp.cfg from gen-data)");
    cmd->add_option("--sr", sr, "sample rate");
    cmd->add_option("--n-fft", n_fft, "FFT size (power of two)");
    cmd->add_option("--hop", hop, "hop length");
    cmd->add_option("--n-mels", n_mels, "mel bands");
    cmd->add_option("--width", width, "spectrogram frames");
    cmd->add_option("--fmin", fmin, "lowest filter frequency");
    cmd->add_option("--fmax", fmax, "highest filter frequency");
    cmd->add_option("--db-floor", db_floor, "dB floor of the [0,1] window");
    cmd->add_option("--db-ceil", db_ceil, "dB ceiling of the [0,1] window");
    cmd->add_option("--ref-power", ref_power, "dB reference power");
  }

  MelConfig resolve() const {
    MelConfig cfg = MelConfig::desk();
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      if (!f) throw UsageError("cannot open dsp config " + config_path);
      std::string text((std::istreambuf_iterator<char>(f)),
                       std::istreambuf_iterator<char>());
      cfg = MelConfig::parse(text);
    }
    if (sr > 0) cfg.sample_rate = sr;
    if (n_fft > 0) cfg.n_fft = n_fft;
    if (hop > 0) cfg.hop = hop;
    if (n_mels > 0) cfg.n_mels = n_mels;
    if (width > 0) cfg.width = width;
    if (fmin >= 0) cfg.fmin = fmin;
    if (fmax >= 0) cfg.fmax = fmax;
    if (db_floor <= 0) cfg.db_floor = db_floor;
    if (db_ceil <= 0) cfg.db_ceil = db_ceil;
    if (ref_power > 0) cfg.ref_power = ref_power;
    return cfg;
  }
};

struct Grid {
  double lo = 0, hi = 0, step = 0;
  bool set = false;
};

Grid parse_grid(const std::string& text) {
  Grid g;
  const auto c1 = text.find(':');
  const auto c2 = text.rfind(':');
  if (c1 == std::string::npos || c2 == c1) {
    throw UsageError("grid must be lo:hi:step, got '" + text + "'");
  }
  try {
    g.lo = std::stod(text.substr(0, c1));
    g.hi = std::stod(text.substr(c1 + 1, c2 - c1 - 1));
    g.step = std::stod(text.substr(c2 + 1));
  } catch (const std::exception&) {
    throw UsageError("grid must be lo:hi:step, got '" + text + "'");
  }
  if (g.step <= 0 || g.hi < g.lo) throw UsageError("grid must ascend: '" + text + "'");
  g.set = true;
  return g;
}

std::vector<double> grid_values(const Grid& g) {
  std::vector<double> out;
  for (double v = g.lo; v <= g.hi + 1e-9; v += g.step) out.push_back(v);
  return out;
}

TrainConfig load_train_config(const std::string& path) {
  if (path.empty()) return TrainConfig{};
  return TrainConfig::load_file(path);
}

MelSpec tensor_to_spec(const Tensor& t, const MelConfig& dsp) {
  MelSpec s;
  s.n_mels = static_cast<int>(t.dim(0));
  s.width = static_cast<int>(t.dim(1));
  s.values = t.data();
  s.meta = dsp;
  return s;
}

int run_gen_data(const std::string& out, int subjects, int classes,
                 std::uint64_t seed, const std::string& scale, bool force) {
  if (fs::exists(out) && !fs::is_empty(out) && !force) {
    throw UsageError("output directory " + out +
                     " is not empty (use --force to overwrite)");
  }
  SynthConfig cfg;
  cfg.subjects = subjects;
  cfg.classes = classes;
  cfg.seed = seed;
  if (scale == "paper") {
    cfg.dsp = MelConfig::paper_scale();
    ModelConfig mc = ModelConfig::paper_scale();
    cfg.video_t = mc.input_t;
    cfg.video_h = mc.input_h;
    cfg.video_w = mc.input_w;
  } else if (scale != "desk") {
    throw UsageError("unknown scale '" + scale + "'");
  }
  CorpusManifest m = make_corpus(out, cfg);
  std::cerr << "wrote " << m.items.size() << " items under " << out << "\n";
  return 0;
}

int run_train(const std::string& config_path, const std::string& data,
              const std::string& out, const std::string& ablate, int steps,
              std::int64_t seed) {
  TrainConfig cfg = load_train_config(config_path);
  if (!ablate.empty()) cfg.apply_ablation(ablate);
  if (steps > 0) cfg.steps = steps;
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  LoadedCorpus corpus = LoadedCorpus::load(data);
  TrainResult r = train(cfg, corpus, out);
  std::cerr << "trained " << cfg.steps << " steps; final L_rec " << r.final_rec
            << "; checkpoint " << r.checkpoint_path << "\n";
  return 0;
}

int run_synth(const std::string& ckpt, const std::string& seq_path,
              const std::string& out_wav, const std::string& out_pgm,
              int gl_iters, std::uint64_t phase_seed) {
  LoadedModels loaded = load_models(ckpt);
  TaggedSequence seq = load_sequence(seq_path);
  const bool use_attention = loaded.extra.count("ablation") == 0 ||
                             loaded.extra.at("ablation") != "no_attention";
  Tensor pred = translate(loaded.models, seq, use_attention);
  MelSpec spec = tensor_to_spec(pred, loaded.dsp);
  if (!out_pgm.empty()) write_pgm(out_pgm, spec);
  if (!out_wav.empty()) {
    Waveform wav = melspec_to_wav(spec, loaded.dsp, gl_iters, phase_seed);
    write_wav(out_wav, wav);
  }
  return 0;
}

int run_eval(const std::string& ckpt, const std::string& data,
             const std::string& out_csv, int subject) {
  LoadedModels loaded = load_models(ckpt);
  LoadedCorpus corpus = LoadedCorpus::load(data);
  std::vector<std::size_t> indices;
  for (std::size_t i = 0; i < corpus.items.size(); ++i) {
    if (subject < 0 || corpus.items[i].subject_id == subject) indices.push_back(i);
  }
  if (indices.empty()) throw UsageError("no items to evaluate");
  const std::string ablation = loaded.extra.count("ablation")
                                   ? loaded.extra.at("ablation")
                                   : std::string("full");
  auto results = evaluate_items(loaded.models, corpus, indices,
                                ablation != "no_attention");
  std::vector<EvalRow> rows;
  for (const auto& r : results) {
    rows.push_back({ablation, 0, r.subject_id, r.class_id, r.corr, r.lsd});
  }
  write_eval_csv(out_csv, rows);
  return 0;
}

std::pair<std::vector<double>, std::vector<double>> loo_trial_means(
    const std::vector<LooFold>& folds, int trials) {
  std::vector<double> corr(static_cast<std::size_t>(trials), 0.0);
  std::vector<double> lsd(static_cast<std::size_t>(trials), 0.0);
  std::vector<int> counts(static_cast<std::size_t>(trials), 0);
  for (const auto& f : folds) {
    corr[static_cast<std::size_t>(f.trial)] += f.mean_corr;
    lsd[static_cast<std::size_t>(f.trial)] += f.mean_lsd;
    counts[static_cast<std::size_t>(f.trial)] += 1;
  }
  for (std::size_t t = 0; t < corr.size(); ++t) {
    corr[t] /= counts[t];
    lsd[t] /= counts[t];
  }
  return {corr, lsd};
}

void write_loo_outputs(const std::string& out_dir,
                       const std::vector<LooFold>& folds,
                       const std::string& items_name) {
  std::vector<EvalRow> rows;
  for (const auto& f : folds) {
    for (const auto& it : f.items) {
      rows.push_back({f.ablation, f.trial, it.subject_id, it.class_id, it.corr,
                      it.lsd});
    }
  }
  write_eval_csv((fs::path(out_dir) / items_name).string(), rows);
}

int run_loo(const std::string& config_path, const std::string& data,
            const std::string& out, const std::string& ablate, int trials,
            int steps, std::int64_t seed) {
  TrainConfig cfg = load_train_config(config_path);
  if (!ablate.empty()) cfg.apply_ablation(ablate);
  if (steps > 0) cfg.steps = steps;
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  LoadedCorpus corpus = LoadedCorpus::load(data);
  fs::create_directories(out);
  auto folds = leave_one_out_eval(cfg, corpus, trials, out, worker_threads());
  write_loo_outputs(out, folds, "loo_items.csv");
  auto [corr, lsd] = loo_trial_means(folds, trials);
  auto summary = summarize_ablations({cfg.ablation_label()},
                                     {{cfg.ablation_label(), corr}},
                                     {{cfg.ablation_label(), lsd}});
  write_ablation_csv((fs::path(out) / "loo_summary.csv").string(), summary);
  std::cerr << format_ablation_table(summary);
  return 0;
}

int run_ablate(const std::string& config_path, const std::string& data,
               const std::string& out, int trials, int steps,
               std::int64_t seed) {
  TrainConfig base = load_train_config(config_path);
  if (steps > 0) base.steps = steps;
  if (seed >= 0) base.seed = static_cast<std::uint64_t>(seed);
  LoadedCorpus corpus = LoadedCorpus::load(data);
  fs::create_directories(out);
  const std::vector<std::string> labels = {"full", "no_attention", "no_pairwise",
                                           "no_gan"};
  std::map<std::string, std::vector<double>> corr_by, lsd_by;
  std::vector<EvalRow> all_rows;
  bool any_missing = false;
  for (const std::string& label : labels) {
    try {
      TrainConfig cfg = base;
      cfg.apply_ablation(label);
      auto folds = leave_one_out_eval(cfg, corpus, trials,
                                      (fs::path(out) / label).string(),
                                      worker_threads());
      auto [corr, lsd] = loo_trial_means(folds, trials);
      corr_by[label] = corr;
      lsd_by[label] = lsd;
      for (const auto& f : folds) {
        for (const auto& it : f.items) {
          all_rows.push_back({label, f.trial, it.subject_id, it.class_id, it.corr,
                              it.lsd});
        }
      }
    } catch (const std::exception& e) {
      std::cerr << "ablation " << label << " failed: " << e.what() << "\n";
      any_missing = true;
    }
  }
  auto summary = summarize_ablations(labels, corr_by, lsd_by);
  write_eval_csv((fs::path(out) / "ablation_items.csv").string(), all_rows);
  write_ablation_csv((fs::path(out) / "ablation.csv").string(), summary);
  {
    std::ofstream f((fs::path(out) / "ablation.txt").string());
    f << format_ablation_table(summary);
  }
  std::cerr << format_ablation_table(summary);
  return any_missing ? 1 : 0;
}

int run_sweep(const std::string& config_path, const std::string& data,
              const std::string& out_csv, const std::string& beta_grid,
              const std::string& lambda_grid, int trials, int steps,
              std::int64_t seed) {
  if (beta_grid.empty() == lambda_grid.empty()) {
    throw UsageError("pass exactly one of --beta-grid or --lambda-grid");
  }
  TrainConfig base = load_train_config(config_path);
  if (steps > 0) base.steps = steps;
  if (seed >= 0) base.seed = static_cast<std::uint64_t>(seed);
  const bool is_beta = !beta_grid.empty();
  Grid grid = parse_grid(is_beta ? beta_grid : lambda_grid);
  LoadedCorpus corpus = LoadedCorpus::load(data);

  const fs::path work = fs::path(out_csv).parent_path().empty()
                            ? fs::path("sweep_work")
                            : fs::path(out_csv).parent_path() / "sweep_work";
  std::ofstream f(out_csv);
  if (!f) throw UsageError("cannot write " + out_csv);
  f << "param,value,corr2d_mean,corr2d_std,lsd_mean,lsd_std\n";
  f << std::setprecision(10);
  for (double v : grid_values(grid)) {
    TrainConfig cfg = base;
    if (is_beta) cfg.beta = static_cast<float>(v);
    else cfg.lambda = static_cast<float>(v);
    char tag[32];
    std::snprintf(tag, sizeof(tag), "%s_%.3f", is_beta ? "beta" : "lambda", v);
    auto folds = leave_one_out_eval(cfg, corpus, trials, (work / tag).string(),
                                    worker_threads());
    auto [corr, lsd] = loo_trial_means(folds, trials);
    auto s = summarize_ablations({"x"}, {{"x", corr}}, {{"x", lsd}});
    f << (is_beta ? "beta" : "lambda") << "," << v << "," << s[0].corr_mean << ","
      << s[0].corr_std << "," << s[0].lsd_mean << "," << s[0].lsd_std << "\n";
  }
  return 0;
}

int run_wav2spec(const std::string& in, const std::string& out,
                 const DspFlags& flags) {
  MelConfig cfg = flags.resolve();
  Waveform wav = read_wav(in);
  MelSpec spec = wav_to_melspec(wav, cfg);
  write_pgm(out, spec);
  return 0;
}

int run_spec2wav(const std::string& in, const std::string& out,
                 const DspFlags& flags) {
  MelConfig cfg = flags.resolve();
  MelSpec spec = read_pgm(in, cfg);
  cfg.width = spec.width;
  Waveform wav = melspec_to_wav(spec, cfg, flags.gl_iters, flags.phase_seed);
  write_wav(out, wav);
  return 0;
}

int run_info(const std::string& ckpt, const std::string& scale) {
  if (!ckpt.empty()) {
    LoadedModels loaded = load_models(ckpt);
    auto counts = param_count(loaded.models);
    std::cout << "checkpoint: " << ckpt << "\n";
    for (const auto& [k, v] : loaded.extra) std::cout << k << ": " << v << "\n";
    std::cout << "input: " << loaded.models.cfg.input_t << "x"
              << loaded.models.cfg.input_h << "x" << loaded.models.cfg.input_w
              << ", spectrogram: " << loaded.models.cfg.spec_h << "x"
              << loaded.models.cfg.spec_w << "\n";
    std::cout << "params F: " << counts["F"] << ", A: " << counts["A"]
              << ", D: " << counts["D"] << ", total: " << counts["total"] << "\n";
    return 0;
  }
  ModelConfig cfg = scale == "paper" ? ModelConfig::paper_scale() : ModelConfig::desk();
  Models m(cfg, 0);
  auto counts = param_count(m);
  std::cout << "scale: " << scale << "\n";
  std::cout << "input: " << cfg.input_t << "x" << cfg.input_h << "x" << cfg.input_w
            << ", spectrogram: " << cfg.spec_h << "x" << cfg.spec_w << "\n";
  std::cout << "params F: " << counts["F"] << ", A: " << counts["A"]
            << ", D: " << counts["D"] << ", total: " << counts["total"] << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sq2s: tagged image sequences to mel spectrograms and audio"};
  app.require_subcommand(1);
  int rc = 0;

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "render a synthetic paired corpus");
  struct {
    std::string out, scale = "desk";
    int subjects = 8, classes = 2;
    std::uint64_t seed = 1234;
    bool force = false;
  } g;
  gen->add_option("--out", g.out, "output directory")->required();
  gen->add_option("--subjects", g.subjects, "number of subjects");
  gen->add_option("--classes", g.classes, "number of utterance classes");
  gen->add_option("--seed", g.seed, "corpus seed");
  gen->add_option("--scale", g.scale, "desk or paper");
  gen->add_flag("--force", g.force, "overwrite a non-empty directory");
  gen->callback([&] { rc = run_gen_data(g.out, g.subjects, g.classes, g.seed, g.scale, g.force); });

  // train
  auto* tr = app.add_subcommand("train", "train on a corpus");
  struct {
    std::string config, data, out, ablate;
    int steps = -1;
    std::int64_t seed = -1;
  } t;
  tr->add_option("--config", t.config, "train config file (key=value)");
  tr->add_option("--data", t.data, "corpus directory")->required();
  tr->add_option("--out", t.out, "output directory")->required();
  tr->add_option("--ablate", t.ablate, "full|no_attention|no_pairwise|no_gan");
  tr->add_option("--steps", t.steps, "override step count");
  tr->add_option("--seed", t.seed, "override seed");
  tr->callback([&] { rc = run_train(t.config, t.data, t.out, t.ablate, t.steps, t.seed); });

  // synth
  auto* sy = app.add_subcommand("synth", "run inference on a sequence file");
  struct {
    std::string ckpt, seq, out_wav, out_pgm;
    int gl_iters = 32;
    std::uint64_t phase_seed = 0;
  } s;
  sy->add_option("--ckpt", s.ckpt, "checkpoint file")->required();
  sy->add_option("--seq", s.seq, "input sequence (tensor file)")->required();
  sy->add_option("--out-wav", s.out_wav, "output waveform");
  sy->add_option("--out-pgm", s.out_pgm, "output spectrogram image");
  sy->add_option("--gl-iters", s.gl_iters, "phase recovery iterations");
  sy->add_option("--phase-seed", s.phase_seed, "phase init seed");
  sy->callback([&] { rc = run_synth(s.ckpt, s.seq, s.out_wav, s.out_pgm, s.gl_iters, s.phase_seed); });

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
  struct {
    std::string ckpt, data, out;
    int subject = -1;
  } e;
  ev->add_option("--ckpt", e.ckpt, "checkpoint file")->required();
  ev->add_option("--data", e.data, "corpus directory")->required();
  ev->add_option("--out", e.out, "output CSV")->required();
  ev->add_option("--subject", e.subject, "restrict to one subject");
  ev->callback([&] { rc = run_eval(e.ckpt, e.data, e.out, e.subject); });

  // loo
  auto* lo = app.add_subcommand("loo", "leave-one-out evaluation");
  struct {
    std::string config, data, out, ablate;
    int trials = 3, steps = -1;
    std::int64_t seed = -1;
  } l;
  lo->add_option("--config", l.config, "train config file");
  lo->add_option("--data", l.data, "corpus directory")->required();
  lo->add_option("--out", l.out, "output directory")->required();
  lo->add_option("--ablate", l.ablate, "ablation label");
  lo->add_option("--trials", l.trials, "random trials");
  lo->add_option("--steps", l.steps, "override step count");
  lo->add_option("--seed", l.seed, "override seed");
  lo->callback([&] { rc = run_loo(l.config, l.data, l.out, l.ablate, l.trials, l.steps, l.seed); });

  // ablate
  auto* ab = app.add_subcommand("ablate", "full ablation grid");
  struct {
    std::string config, data, out;
    int trials = 3, steps = -1;
    std::int64_t seed = -1;
  } a;
  ab->add_option("--config", a.config, "train config file");
  ab->add_option("--data", a.data, "corpus directory")->required();
  ab->add_option("--out", a.out, "output directory")->required();
  ab->add_option("--trials", a.trials, "random trials");
  ab->add_option("--steps", a.steps, "override step count");
  ab->add_option("--seed", a.seed, "override seed");
  ab->callback([&] { rc = run_ablate(a.config, a.data, a.out, a.trials, a.steps, a.seed); });

  // sweep
  auto* sw = app.add_subcommand("sweep", "beta/lambda sensitivity sweep");
  struct {
    std::string config, data, out, beta_grid, lambda_grid;
    int trials = 1, steps = -1;
    std::int64_t seed = -1;
  } w;
  sw->add_option("--config", w.config, "train config file");
  sw->add_option("--data", w.data, "corpus directory")->required();
  sw->add_option("--out", w.out, "output CSV")->required();
  sw->add_option("--beta-grid", w.beta_grid, "lo:hi:step");
  sw->add_option("--lambda-grid", w.lambda_grid, "lo:hi:step");
  sw->add_option("--trials", w.trials, "random trials");
  sw->add_option("--steps", w.steps, "override step count");
  sw->add_option("--seed", w.seed, "override seed");
  sw->callback([&] { rc = run_sweep(w.config, w.data, w.out, w.beta_grid, w.lambda_grid, w.trials, w.steps, w.seed); });

  // wav2spec / spec2wav
  auto* w2s = app.add_subcommand("wav2spec", "waveform to mel spectrogram (PGM)");
  struct {
    std::string in, out;
    DspFlags flags;
  } ws;
  w2s->add_option("--in", ws.in, "input WAV")->required();
  w2s->add_option("--out", ws.out, "output PGM")->required();
  ws.flags.add_to(w2s);
  w2s->callback([&] { rc = run_wav2spec(ws.in, ws.out, ws.flags); });

  auto* s2w = app.add_subcommand("spec2wav", "mel spectrogram (PGM) to waveform");
  struct {
    std::string in, out;
    DspFlags flags;
  } sws;
  s2w->add_option("--in", sws.in, "input PGM")->required();
  s2w->add_option("--out", sws.out, "output WAV")->required();
  s2w->add_option("--gl-iters", sws.flags.gl_iters, "phase recovery iterations");
  s2w->add_option("--phase-seed", sws.flags.phase_seed, "phase init seed");
  sws.flags.add_to(s2w);
  s2w->callback([&] { rc = run_spec2wav(sws.in, sws.out, sws.flags); });

  // info
  auto* in = app.add_subcommand("info", "model and checkpoint information");
  struct {
    std::string ckpt, scale = "desk";
  } i;
  in->add_option("--ckpt", i.ckpt, "checkpoint file");
  in->add_option("--scale", i.scale, "desk or paper");
  in->callback([&] { rc = run_info(i.ckpt, i.scale); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return 2;
  } catch (const UsageError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "internal error: " << ex.what() << "\n";
    return 1;
  }
  return rc;
}
