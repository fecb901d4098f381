// src/trainer.cpp
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

#include "sq2s/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "sq2s/metrics.hpp"

namespace sq2s {

namespace {

Tensor melspec_tensor(const MelSpec& s) {
  return Tensor::from_data({s.n_mels, s.width}, s.values);
}

void check_finite_loss(double v, const char* name, std::int64_t step) {
  if (!std::isfinite(v)) {
    throw std::runtime_error("train: non-finite " + std::string(name) +
                             " at step " + std::to_string(step));
  }
}

std::vector<std::vector<float>> snapshot_grads(const std::vector<Tensor>& params) {
  std::vector<std::vector<float>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.grad());
  return out;
}

void restore_grads(std::vector<Tensor>& params,
                   const std::vector<std::vector<float>>& saved) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i].grad() = saved[i];
}

}  // namespace

// --- TrainConfig ------------------------------------------------------------

ModelConfig TrainConfig::model_config() const {
  if (scale == "desk") return ModelConfig::desk();
  if (scale == "paper") return ModelConfig::paper_scale();
  throw UsageError("train config: unknown scale '" + scale + "'");
}

std::string TrainConfig::ablation_label() const {
  if (no_attention) return "no_attention";
  if (no_pairwise) return "no_pairwise";
  if (no_gan) return "no_gan";
  return "full";
}

void TrainConfig::apply_ablation(const std::string& label) {
  no_attention = no_pairwise = no_gan = false;
  if (label == "full" || label.empty()) return;
  if (label == "no_attention") no_attention = true;
  else if (label == "no_pairwise") no_pairwise = true;
  else if (label == "no_gan") no_gan = true;
  else throw UsageError("train config: unknown ablation '" + label + "'");
}

std::string TrainConfig::serialize() const {
  std::ostringstream os;
  os.precision(17);
  os << "lr_f=" << lr_f << "\n";
  os << "lr_a=" << lr_a << "\n";
  os << "lr_d=" << lr_d << "\n";
  os << "beta=" << beta << "\n";
  os << "lambda=" << lambda << "\n";
  os << "p_same=" << p_same << "\n";
  os << "steps=" << steps << "\n";
  os << "batch_size=" << batch_size << "\n";
  os << "seed=" << seed << "\n";
  os << "scale=" << scale << "\n";
  os << "no_attention=" << (no_attention ? 1 : 0) << "\n";
  os << "no_pairwise=" << (no_pairwise ? 1 : 0) << "\n";
  os << "no_gan=" << (no_gan ? 1 : 0) << "\n";
  os << "checkpoint_every=" << checkpoint_every << "\n";
  return os.str();
}

TrainConfig TrainConfig::parse(const std::string& text) {
  TrainConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("train config: bad line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    try {
      if (key == "lr_f") cfg.lr_f = std::stod(val);
      else if (key == "lr_a") cfg.lr_a = std::stod(val);
      else if (key == "lr_d") cfg.lr_d = std::stod(val);
      else if (key == "beta") cfg.beta = std::stof(val);
      else if (key == "lambda") cfg.lambda = std::stof(val);
      else if (key == "p_same") cfg.p_same = std::stod(val);
      else if (key == "steps") cfg.steps = std::stoi(val);
      else if (key == "batch_size") cfg.batch_size = std::stoi(val);
      else if (key == "seed") cfg.seed = std::stoull(val);
      else if (key == "scale") cfg.scale = val;
      else if (key == "no_attention") cfg.no_attention = std::stoi(val) != 0;
      else if (key == "no_pairwise") cfg.no_pairwise = std::stoi(val) != 0;
      else if (key == "no_gan") cfg.no_gan = std::stoi(val) != 0;
      else if (key == "checkpoint_every") cfg.checkpoint_every = std::stoi(val);
      else throw UsageError("train config: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw UsageError("train config: bad value for '" + key + "'");
    }
  }
  if (cfg.lr_f <= 0 || cfg.lr_a <= 0 || cfg.lr_d <= 0) {
    throw UsageError("train config: learning rates must be positive");
  }
  if (cfg.steps < 1 || cfg.batch_size < 1) {
    throw UsageError("train config: steps and batch_size must be positive");
  }
  return cfg;
}

TrainConfig TrainConfig::load_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("train config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return parse(text);
}

void write_train_log(const std::string& path, const std::vector<TrainLogRow>& log) {
  std::ofstream f(path);
  if (!f) throw UsageError("train log: cannot write " + path);
  f << "step,loss_rec,loss_kl,loss_adv,loss_disc,wall_ms\n";
  f.precision(10);
  for (const auto& r : log) {
    f << r.step << "," << r.rec << "," << r.kl << "," << r.adv << "," << r.disc
      << "," << r.wall_ms << "\n";
  }
}

// --- LoadedCorpus -----------------------------------------------------------

LoadedCorpus LoadedCorpus::load(const std::string& data_dir) {
  namespace fs = std::filesystem;
  const std::string manifest_path = (fs::path(data_dir) / "manifest.tsv").string();
  const std::string dsp_path = (fs::path(data_dir) / "dsp.cfg").string();
  LoadedCorpus corpus;
  corpus.manifest = CorpusManifest::load(manifest_path);
  std::ifstream f(dsp_path);
  if (!f) throw UsageError("corpus: missing dsp.cfg in " + data_dir);
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  corpus.dsp = MelConfig::parse(text);

  const std::int64_t window = corpus.dsp.frame_aligned_length();
  for (std::size_t i = 0; i < corpus.manifest.items.size(); ++i) {
    const CorpusItem& ci = corpus.manifest.items[i];
    Item item;
    item.subject_id = ci.subject_id;
    item.class_id = ci.class_id;
    item.seq = load_sequence(corpus.manifest.resolve(ci.seq_path));
    Waveform wav = read_wav(corpus.manifest.resolve(ci.wav_path));
    auto crops = sliding_window_augment(item.seq, wav, window, corpus.dsp.hop);
    item.crops.reserve(crops.size());
    for (auto& [seq, crop_wav] : crops) {
      item.crops.push_back(wav_to_melspec(crop_wav, corpus.dsp));
    }
    corpus.items.push_back(std::move(item));
    corpus.global_ids.push_back(i);
  }
  return corpus;
}

LoadedCorpus LoadedCorpus::without_subject(int subject_id) const {
  LoadedCorpus out;
  out.dsp = dsp;
  out.manifest.dir = manifest.dir;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].subject_id == subject_id) continue;
    out.items.push_back(items[i]);
    out.manifest.items.push_back(manifest.items[i]);
    out.global_ids.push_back(global_ids[i]);
  }
  return out;
}

std::vector<int> LoadedCorpus::subject_ids() const {
  std::set<int> ids;
  for (const auto& it : items) ids.insert(it.subject_id);
  return {ids.begin(), ids.end()};
}

// --- training ---------------------------------------------------------------

StepLosses train_step(const std::vector<TrainPairRef>& batch,
                      const LoadedCorpus& corpus, Models& models,
                      AdamState<float>& opt_f, AdamState<float>& opt_a,
                      AdamState<float>& opt_d, const TrainConfig& cfg,
                      Rng& eps_rng) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  const auto [bh, bw] = models.cfg.bottleneck_hw();
  const Shape eps_shape = {models.cfg.mu_channels, bh, bw};

  opt_f.zero_grad();
  opt_a.zero_grad();
  auto a_params = models.a_params();

  StepLosses losses;
  struct DPair {
    Tensor real, fake;
  };
  std::vector<DPair> d_inputs;

  for (const TrainPairRef& pr : batch) {
    const auto& item1 = corpus.items[pr.first];
    const auto& item2 = corpus.items[pr.second];
    Tensor eps1 = random_normal<float>(eps_shape, eps_rng);
    Tensor eps2 = random_normal<float>(eps_shape, eps_rng);

    Tape tape;
    TranslationResult r1 =
        translate_full(&tape, models, item1.seq, &eps1, !cfg.no_attention);
    TranslationResult r2 =
        translate_full(&tape, models, item2.seq, &eps2, !cfg.no_attention);
    Tensor t1 = melspec_tensor(item1.crops[pr.crop_first]);
    Tensor t2 = melspec_tensor(item2.crops[pr.crop_second]);

    Tensor rec = scalar_mul(&tape,
                            add(&tape, loss_rec(&tape, r1.spec, t1),
                                loss_rec(&tape, r2.spec, t2)),
                            0.5f);

    const bool kl_active = pr.same_utterance && !cfg.no_pairwise;
    Tensor kl;
    if (kl_active) {
      kl = loss_kl(&tape, channel_mean(&tape, r1.mu),
                   channel_mean(&tape, r1.logvar), channel_mean(&tape, r2.mu),
                   channel_mean(&tape, r2.logvar));
    }

    Tensor adv;
    if (!cfg.no_gan) {
      Tensor d1 = models.d.forward(&tape, r1.spec);
      Tensor d2 = models.d.forward(&tape, r2.spec);
      adv = scalar_mul(&tape,
                       add(&tape, loss_adv(&tape, d1), loss_adv(&tape, d2)),
                       0.5f);
      d_inputs.push_back({t1, r1.spec.detach_copy()});
      d_inputs.push_back({t2, r2.spec.detach_copy()});
    }

    // translator and attention both minimize the reconstruction term
    tape.backward(rec);

    // the attention net is optimized through the reconstruction loss alone
    auto a_saved = snapshot_grads(a_params);
    Tensor aux;
    if (kl_active && !cfg.no_gan) {
      aux = add(&tape, scalar_mul(&tape, kl, cfg.beta),
                scalar_mul(&tape, adv, cfg.lambda));
    } else if (kl_active) {
      aux = scalar_mul(&tape, kl, cfg.beta);
    } else if (!cfg.no_gan) {
      aux = scalar_mul(&tape, adv, cfg.lambda);
    }
    if (aux.defined() && aux.requires_grad()) {
      tape.backward(aux);
      restore_grads(a_params, a_saved);
    }

    losses.rec += rec.item();
    if (kl_active) losses.kl += kl.item();
    if (!cfg.no_gan) losses.adv += adv.item();
  }

  const double scale = 1.0 / static_cast<double>(batch.size());
  losses.rec *= scale;
  losses.kl *= scale;
  losses.adv *= scale;

  // translator first, then discriminator
  opt_f.step();
  opt_a.step();

  if (!cfg.no_gan) {
    Tape dtape;
    Tensor d_real, d_fake;
    for (const auto& di : d_inputs) {
      Tensor r = models.d.forward(&dtape, di.real);
      Tensor f = models.d.forward(&dtape, di.fake);
      d_real = d_real.defined() ? concat_channels(&dtape, d_real, r) : r;
      d_fake = d_fake.defined() ? concat_channels(&dtape, d_fake, f) : f;
    }
    Tensor ld = loss_disc(&dtape, d_real, d_fake);
    opt_d.zero_grad();
    dtape.backward(ld);
    opt_d.step();
    losses.disc = ld.item();
  }
  return losses;
}

TrainResult train(const TrainConfig& cfg, const LoadedCorpus& corpus,
                  const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (corpus.items.size() < 2) {
    throw UsageError("train: corpus has fewer than 2 items");
  }
  ModelConfig model_cfg = cfg.model_config();
  if (model_cfg.spec_h != corpus.dsp.n_mels || model_cfg.spec_w != corpus.dsp.width) {
    throw UsageError("train: model spectrogram " + std::to_string(model_cfg.spec_h) +
                     "x" + std::to_string(model_cfg.spec_w) +
                     " does not match corpus mels " +
                     std::to_string(corpus.dsp.n_mels) + "x" +
                     std::to_string(corpus.dsp.width));
  }
  const auto& first_seq = corpus.items.front().seq;
  if (first_seq.t != model_cfg.input_t || first_seq.h != model_cfg.input_h ||
      first_seq.w != model_cfg.input_w) {
    throw UsageError("train: corpus sequences are " + std::to_string(first_seq.t) +
                     "x" + std::to_string(first_seq.h) + "x" +
                     std::to_string(first_seq.w) + ", model expects " +
                     std::to_string(model_cfg.input_t) + "x" +
                     std::to_string(model_cfg.input_h) + "x" +
                     std::to_string(model_cfg.input_w));
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw UsageError("train: cannot create " + out_dir + ": " + ec.message());

  Models models(model_cfg, derive_seed(cfg.seed, "init"));
  AdamConfig<float> adam_f{static_cast<float>(cfg.lr_f), 0.5f, 0.999f, 1e-8f};
  AdamConfig<float> adam_a{static_cast<float>(cfg.lr_a), 0.5f, 0.999f, 1e-8f};
  AdamConfig<float> adam_d{static_cast<float>(cfg.lr_d), 0.5f, 0.999f, 1e-8f};
  AdamState<float> opt_f(models.f_params(), adam_f);
  AdamState<float> opt_a(models.a_params(), adam_a);
  AdamState<float> opt_d(models.d_params(), adam_d);

  Rng pair_rng(derive_seed(cfg.seed, "pairs"));
  Rng crop_rng(derive_seed(cfg.seed, "crops"));
  Rng eps_rng(derive_seed(cfg.seed, "eps"));

  TrainResult result;
  result.log.reserve(static_cast<std::size_t>(cfg.steps));
  const auto t_start = std::chrono::steady_clock::now();

  const std::map<std::string, std::string> extra = {
      {"ablation", cfg.ablation_label()},
      {"scale", cfg.scale},
      {"seed", std::to_string(cfg.seed)},
      {"steps", std::to_string(cfg.steps)},
  };

  for (int step = 1; step <= cfg.steps; ++step) {
    std::vector<TrainPairRef> batch;
    batch.reserve(static_cast<std::size_t>(cfg.batch_size));
    for (int b = 0; b < cfg.batch_size; ++b) {
      PairSample ps = sample_training_pair(corpus.manifest, pair_rng, cfg.p_same);
      TrainPairRef pr;
      pr.first = ps.first;
      pr.second = ps.second;
      pr.same_utterance = ps.same_utterance;
      pr.crop_first = static_cast<std::size_t>(crop_rng.uniform_int(
          static_cast<std::int64_t>(corpus.items[ps.first].crops.size())));
      pr.crop_second = static_cast<std::size_t>(crop_rng.uniform_int(
          static_cast<std::int64_t>(corpus.items[ps.second].crops.size())));
      batch.push_back(pr);
      result.sampled_global_ids.insert(corpus.global_ids[ps.first]);
      result.sampled_global_ids.insert(corpus.global_ids[ps.second]);
    }
    StepLosses losses =
        train_step(batch, corpus, models, opt_f, opt_a, opt_d, cfg, eps_rng);
    check_finite_loss(losses.rec, "L_rec", step);
    check_finite_loss(losses.kl, "L_KL", step);
    check_finite_loss(losses.adv, "L_adv", step);
    check_finite_loss(losses.disc, "L_D", step);

    TrainLogRow row;
    row.step = step;
    row.rec = losses.rec;
    row.kl = losses.kl;
    row.adv = losses.adv;
    row.disc = losses.disc;
    row.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t_start)
                      .count();
    result.log.push_back(row);
    if (step == 1) result.first_rec = losses.rec;
    result.final_rec = losses.rec;

    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 &&
        step != cfg.steps) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_%06d.sq2c", step);
      save_models((fs::path(out_dir) / name).string(), models, corpus.dsp, extra);
    }
  }

  result.checkpoint_path = (fs::path(out_dir) / "checkpoint.sq2c").string();
  save_models(result.checkpoint_path, models, corpus.dsp, extra);
  write_train_log((fs::path(out_dir) / "train_log.csv").string(), result.log);
  return result;
}

// --- evaluation ---------------------------------------------------------------

std::vector<EvalItemResult> evaluate_items(const Models& models,
                                           const LoadedCorpus& corpus,
                                           const std::vector<std::size_t>& indices,
                                           bool use_attention) {
  std::vector<EvalItemResult> out;
  out.reserve(indices.size());
  for (std::size_t idx : indices) {
    const auto& item = corpus.items[idx];
    Tensor pred = translate(models, item.seq, use_attention);
    MelSpec pred_spec;
    pred_spec.n_mels = corpus.dsp.n_mels;
    pred_spec.width = corpus.dsp.width;
    pred_spec.values = pred.data();
    pred_spec.meta = corpus.dsp;
    const MelSpec& target = item.crops.front();
    EvalItemResult r;
    r.global_id = corpus.global_ids[idx];
    r.subject_id = item.subject_id;
    r.class_id = item.class_id;
    r.corr = corr2d(pred_spec, target);
    r.lsd = log_spectral_distance(pred_spec, target);
    out.push_back(r);
  }
  return out;
}

int worker_threads() {
  if (const char* env = std::getenv("SQ2S_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

std::vector<LooFold> leave_one_out_eval(const TrainConfig& base,
                                        const LoadedCorpus& corpus, int trials,
                                        const std::string& out_dir, int threads) {
  namespace fs = std::filesystem;
  const std::vector<int> subjects = corpus.subject_ids();
  if (subjects.size() < 2) {
    throw UsageError("leave-one-out: need at least 2 subjects, got " +
                     std::to_string(subjects.size()));
  }
  if (trials < 1) throw std::invalid_argument("leave-one-out: trials must be >= 1");

  struct Job {
    int trial;
    int subject;
  };
  std::vector<Job> jobs;
  for (int trial = 0; trial < trials; ++trial) {
    for (int subject : subjects) jobs.push_back({trial, subject});
  }
  std::vector<LooFold> folds(jobs.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::string error_message;
  std::mutex error_mutex;

  auto worker = [&] {
    for (;;) {
      const std::size_t j = next.fetch_add(1);
      if (j >= jobs.size() || failed.load()) return;
      const Job job = jobs[j];
      try {
        TrainConfig cfg = base;
        cfg.seed = derive_seed(base.seed, "trial/" + std::to_string(job.trial) +
                                              "/subject/" + std::to_string(job.subject));
        LoadedCorpus train_corpus = corpus.without_subject(job.subject);
        const std::string fold_dir =
            (fs::path(out_dir) / ("fold_s" + std::to_string(job.subject) + "_t" +
                                  std::to_string(job.trial)))
                .string();
        TrainResult tr = train(cfg, train_corpus, fold_dir);

        // split integrity: held-out items never enter the pair sampler
        std::vector<std::size_t> held_out;
        for (std::size_t i = 0; i < corpus.items.size(); ++i) {
          if (corpus.items[i].subject_id == job.subject) held_out.push_back(i);
        }
        for (std::size_t idx : held_out) {
          if (tr.sampled_global_ids.count(corpus.global_ids[idx])) {
            throw std::logic_error("leave-one-out: held-out item sampled in training");
          }
        }

        LoadedModels loaded = load_models(tr.checkpoint_path);
        LooFold fold;
        fold.held_out_subject = job.subject;
        fold.trial = job.trial;
        fold.seed = cfg.seed;
        fold.ablation = cfg.ablation_label();
        fold.items = evaluate_items(loaded.models, corpus, held_out, !cfg.no_attention);
        fold.checkpoint_path = tr.checkpoint_path;
        double sc = 0, sl = 0;
        for (const auto& r : fold.items) {
          sc += r.corr;
          sl += r.lsd;
        }
        fold.mean_corr = sc / static_cast<double>(fold.items.size());
        fold.mean_lsd = sl / static_cast<double>(fold.items.size());
        folds[j] = std::move(fold);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        failed.store(true);
        if (error_message.empty()) error_message = e.what();
      }
    }
  };

  const int n_threads = std::max(1, std::min<int>(threads, static_cast<int>(jobs.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failed.load()) throw std::runtime_error("leave-one-out: " + error_message);
  return folds;
}

}  // namespace sq2s
