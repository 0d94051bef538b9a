#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "zenfoley/features.hpp"
#include "zenfoley/pipeline.hpp"

namespace fs = std::filesystem;

namespace zenfoley::pipeline {

namespace {

std::vector<int64_t> permutation(int64_t n, uint64_t seed) {
  std::vector<int64_t> p(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) p[static_cast<size_t>(i)] = i;
  SplitMix64 rng(seed);
  for (int64_t i = n; i > 1; --i) {
    int64_t j = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(i)));
    std::swap(p[static_cast<size_t>(i - 1)], p[static_cast<size_t>(j)]);
  }
  return p;
}

struct ClipBuild {
  audio::MelSpec mel;
  audio::ExternalFeatures feats;
};

ClipBuild build_clip(const RunConfig& cfg, const ManifestRecord& rec,
                     uint64_t seed) {
  audio::Waveform w = audio::load_wav(rec.path, cfg.clip_seconds);
  w = audio::resample(w, cfg.model_rate);
  ClipBuild b;
  b.mel = audio::melspectrogram(w, cfg.mel_params());
  if (b.mel.frames != cfg.frames())
    throw AlignmentError("clip " + rec.path + " produced " +
                         std::to_string(b.mel.frames) + " frames, config wants " +
                         std::to_string(cfg.frames()));
  std::string stem = clip_stem(rec.path);
  if (cfg.features_mode == "stub") {
    b.feats = audio::stub_features(mix_seed(seed, fnv1a64(stem)),
                                   cfg.feature_rows, b.mel.frames);
  } else if (cfg.features_mode == "dir") {
    b.feats = audio::load_external_features(
        feature_path(cfg.features_dir, stem));
    if (b.feats.rows != cfg.feature_rows || b.feats.cols != b.mel.frames)
      throw AlignmentError("feature file for " + stem + " is " +
                           std::to_string(b.feats.rows) + "x" +
                           std::to_string(b.feats.cols) + ", config wants " +
                           std::to_string(cfg.feature_rows) + "x" +
                           std::to_string(b.mel.frames));
  } else {
    throw ConfigError("features_mode must be stub|dir, got '" +
                      cfg.features_mode + "'");
  }
  return b;
}

void check_unique_stems(const std::vector<ManifestRecord>& records) {
  std::set<std::string> stems;
  for (const auto& r : records)
    if (!stems.insert(clip_stem(r.path)).second)
      throw FormatError("duplicate clip stem '" + clip_stem(r.path) +
                        "' in manifest; cache file names would collide");
}

Tensor assemble_batch(const RunConfig& cfg,
                      const std::vector<audio::CEmbed>& clips) {
  int64_t B = static_cast<int64_t>(clips.size());
  int64_t R = cfg.cembed_rows(), F = cfg.frames();
  std::vector<float> bv(static_cast<size_t>(B * R * F));
  for (int64_t j = 0; j < B; ++j) {
    const auto& c = clips[static_cast<size_t>(j)];
    if (c.rows() != R || c.frames != F)
      throw DimensionError("cached cembed is " + std::to_string(c.rows()) + "x" +
                           std::to_string(c.frames) + ", config wants " +
                           std::to_string(R) + "x" + std::to_string(F));
    std::copy(c.values.begin(), c.values.end(), bv.begin() + j * R * F);
  }
  return Tensor::from_values({B, 1, R, F}, std::move(bv));
}

Checkpoint assemble_checkpoint(const RunConfig& cfg, uint64_t step,
                               const std::vector<NamedTensor>& params,
                               const optim::Adam& opt,
                               const std::vector<float>* codebook_usage) {
  Checkpoint ck;
  ck.config_hash = cfg.model_hash();
  ck.step = step;
  ck.tensors = params;
  if (codebook_usage)
    ck.tensors.push_back(
        {"codebook.usage",
         Tensor::from_values({static_cast<int64_t>(codebook_usage->size())},
                             *codebook_usage)});
  auto opt_state = opt.state_tensors(params);
  ck.tensors.insert(ck.tensors.end(), opt_state.begin(), opt_state.end());
  return ck;
}

void resume_from_checkpoint(const RunConfig& cfg,
                            std::vector<NamedTensor>& params, optim::Adam& opt,
                            std::vector<float>* codebook_usage,
                            int64_t* start_step) {
  Checkpoint ck = Checkpoint::load(cfg.resume_from);
  if (ck.config_hash != cfg.model_hash())
    throw VersioningError("checkpoint " + cfg.resume_from +
                          " was written under a different configuration "
                          "(hash mismatch)");
  load_parameters(params, ck);
  if (codebook_usage) {
    const Tensor* u = ck.find("codebook.usage");
    if (!u || static_cast<size_t>(u->size()) != codebook_usage->size())
      throw VersioningError("checkpoint missing codebook usage counters");
    codebook_usage->assign(u->values().begin(), u->values().end());
  }
  opt.load_state(params, ck.tensors, static_cast<int64_t>(ck.step));
  *start_step = static_cast<int64_t>(ck.step);
}

std::string join_paths(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ", ") + s;
  return out;
}

}  // namespace

// --- prepare ----------------------------------------------------------------------

void prepare(const RunConfig& cfg, uint64_t seed, const std::string& out_dir) {
  Manifest m = Manifest::load(cfg.manifest);
  check_unique_stems(m.records);
  fs::create_directories(out_dir + "/cache");
  fs::create_directories(out_dir + "/features");

  double mel_sum = 0.0, mel_sq = 0.0, feat_sum = 0.0, feat_sq = 0.0;
  int64_t mel_n = 0, feat_n = 0;
  std::vector<std::string> failures;
  for (const auto& rec : m.records) {
    try {
      ClipBuild b = build_clip(cfg, rec, seed);
      for (float v : b.mel.values) {
        mel_sum += v;
        mel_sq += static_cast<double>(v) * v;
      }
      mel_n += static_cast<int64_t>(b.mel.values.size());
      for (float v : b.feats.values) {
        feat_sum += v;
        feat_sq += static_cast<double>(v) * v;
      }
      feat_n += static_cast<int64_t>(b.feats.values.size());
    } catch (const Error& e) {
      failures.push_back(rec.path + " [" + e.what() + "]");
    }
  }
  if (!failures.empty())
    throw IoError("prepare failed for clips: " + join_paths(failures));
  if (mel_n == 0) throw ContractError("prepare: empty manifest");

  CorpusStats st;
  st.mel_mean = mel_sum / static_cast<double>(mel_n);
  st.mel_std = std::max(
      std::sqrt(std::max(0.0, mel_sq / static_cast<double>(mel_n) -
                                  st.mel_mean * st.mel_mean)),
      1e-6);
  st.feat_mean = feat_sum / static_cast<double>(feat_n);
  st.feat_std = std::max(
      std::sqrt(std::max(0.0, feat_sq / static_cast<double>(feat_n) -
                                  st.feat_mean * st.feat_mean)),
      1e-6);
  st.save(out_dir + "/corpus_stats.txt");

  for (const auto& rec : m.records) {
    ClipBuild b = build_clip(cfg, rec, seed);
    std::string stem = clip_stem(rec.path);
    audio::CEmbed c = audio::assemble_cembed(b.mel, b.feats);
    int64_t F = c.frames;
    for (int r = 0; r < c.mel_rows; ++r)
      for (int64_t t = 0; t < F; ++t) {
        size_t ix = static_cast<size_t>(r * F + t);
        c.values[ix] = static_cast<float>((c.values[ix] - st.mel_mean) / st.mel_std);
      }
    for (int r = c.mel_rows; r < c.rows(); ++r)
      for (int64_t t = 0; t < F; ++t) {
        size_t ix = static_cast<size_t>(r * F + t);
        c.values[ix] = static_cast<float>((c.values[ix] - st.feat_mean) / st.feat_std);
      }
    audio::save_cembed(cache_path(out_dir + "/cache", stem), c);
    audio::save_external_features(feature_path(out_dir + "/features", stem),
                                  b.feats);
  }
}

// --- vqvae training ----------------------------------------------------------------

TrainSummary train_vqvae(const RunConfig& cfg, uint64_t seed,
                         const std::string& out_dir) {
  Manifest m = Manifest::load(cfg.manifest);
  auto train = m.subset("train");
  if (train.empty()) throw ContractError("train_vqvae: no training records");
  fs::create_directories(out_dir);

  vqvae::VqVae model(cfg.vqvae_config(), seed);
  auto params = model.parameters();
  optim::Adam opt;
  int64_t start = 0;
  if (!cfg.resume_from.empty())
    resume_from_checkpoint(cfg, params, opt, &model.codebook().usage, &start);

  int64_t n = static_cast<int64_t>(train.size());
  int64_t B = std::min<int64_t>(cfg.vqvae_batch, n);
  int64_t spe = std::max<int64_t>(1, n / B);
  int64_t total = cfg.vqvae_steps > 0
                      ? cfg.vqvae_steps
                      : static_cast<int64_t>(cfg.vqvae_epochs) * spe;

  std::ofstream log(out_dir + "/vqvae_log.txt",
                    start > 0 ? std::ios::app : std::ios::trunc);
  uint64_t order_seed = mix_seed(seed, fnv1a64("vq-order"));
  uint64_t mask_seed = mix_seed(seed, fnv1a64("vq-mask"));
  uint64_t reseed_seed = mix_seed(seed, fnv1a64("vq-reseed"));

  TrainSummary summary;
  std::vector<int64_t> order;
  int64_t cur_epoch = -1;
  char line[384];
  for (int64_t step = start; step < total; ++step) {
    int64_t e = step / spe, pos = step % spe;
    if (e != cur_epoch) {
      order = permutation(n, mix_seed(order_seed, static_cast<uint64_t>(e)));
      cur_epoch = e;
    }
    std::vector<audio::CEmbed> clips;
    std::vector<int32_t> labels;
    std::vector<std::string> ids;
    for (int64_t j = 0; j < B; ++j) {
      const auto& rec = train[static_cast<size_t>(order[static_cast<size_t>(pos * B + j)])];
      std::string stem = clip_stem(rec.path);
      audio::CEmbed c =
          audio::load_cembed(cache_path(cfg.cache_dir, stem), cfg.mel_rows);
      if (cfg.masks_per_kind > 0) {
        audio::MaskSpec ms;
        ms.time_mask_max_frames = cfg.mask_time_max;
        ms.freq_mask_max_rows = cfg.mask_freq_max;
        ms.num_masks_per_kind = cfg.masks_per_kind;
        ms.seed = mix_seed(mix_seed(mask_seed, static_cast<uint64_t>(step)),
                           static_cast<uint64_t>(j));
        c = audio::mask_augment(c, ms);
      }
      clips.push_back(std::move(c));
      labels.push_back(static_cast<int32_t>(rec.category));
      ids.push_back(stem);
    }
    Tensor batch = assemble_batch(cfg, clips);

    if (pos == 0 && step > 0) {
      Tensor z_probe = model.encode(batch);  // forward only, no graph active
      SplitMix64 rng(mix_seed(reseed_seed, static_cast<uint64_t>(e)));
      model.reseed_dead_codewords(z_probe, rng);
    }

    auto res =
        vqvae::train_step_vqvae(model, params, batch, labels, ids, opt, cfg.vqvae_lr);
    summary.final_loss = res.loss.total;
    summary.final_latent_diff = res.latent_diff;

    if (cfg.log_interval > 0 && (step + 1) % cfg.log_interval == 0) {
      std::snprintf(line, sizeof(line),
                    "step=%lld lr=%.8g recon=%.8g codebook=%.8g commit=%.8g "
                    "ce=%.8g total=%.8g latent_diff=%.8g grad_norm=%.8g",
                    static_cast<long long>(step + 1), cfg.vqvae_lr,
                    res.loss.recon_mse, res.loss.codebook_term,
                    res.loss.commitment_term, res.loss.class_ce, res.loss.total,
                    res.latent_diff, res.grad_norm);
      log << line << "\n";
    }
    if (cfg.checkpoint_interval > 0 && (step + 1) % cfg.checkpoint_interval == 0) {
      assemble_checkpoint(cfg, static_cast<uint64_t>(step + 1), params, opt,
                          &model.codebook().usage)
          .save(out_dir + "/vqvae_step" + std::to_string(step + 1) + ".zfck");
    }
  }
  summary.steps = total;
  summary.checkpoint_path = out_dir + "/vqvae_final.zfck";
  assemble_checkpoint(cfg, static_cast<uint64_t>(total), params, opt,
                      &model.codebook().usage)
      .save(summary.checkpoint_path);
  return summary;
}

// --- code extraction ----------------------------------------------------------------

void extract_codes(const RunConfig& cfg, const std::string& out_dir) {
  Manifest m = Manifest::load(cfg.manifest);
  auto train = m.subset("train");
  if (train.empty()) throw ContractError("extract_codes: no training records");
  fs::create_directories(out_dir);

  vqvae::VqVae model(cfg.vqvae_config(), 0);
  auto params = model.parameters();
  Checkpoint ck = Checkpoint::load(cfg.vqvae_checkpoint);
  if (ck.config_hash != cfg.model_hash())
    throw VersioningError("vqvae checkpoint " + cfg.vqvae_checkpoint +
                          " does not match the current configuration");
  load_parameters(params, ck);

  for (const auto& rec : train) {
    std::string stem = clip_stem(rec.path);
    audio::CEmbed c =
        audio::load_cembed(cache_path(cfg.cache_dir, stem), cfg.mel_rows);
    std::vector<audio::CEmbed> one = {std::move(c)};
    Tensor x = assemble_batch(cfg, one);
    vqvae::CodeGrid g = vqvae::codes_for(model, x, rec.category);
    vqvae::save_code_grid(code_path(out_dir, stem), g);
  }
}

// --- snail training -------------------------------------------------------------------

TrainSummary train_snail(const RunConfig& cfg, uint64_t seed,
                         const std::string& out_dir) {
  Manifest m = Manifest::load(cfg.manifest);
  auto train = m.subset("train");
  if (train.empty()) throw ContractError("train_snail: no training records");
  fs::create_directories(out_dir);

  snail::SnailConfig scfg = cfg.snail_config();
  snail::SnailModel model(scfg, seed);
  auto params = model.parameters();
  optim::Adam opt;

  int64_t N = scfg.seq_len();
  std::vector<std::vector<int32_t>> grids;
  std::vector<int32_t> labels_all;
  for (const auto& rec : train) {
    vqvae::CodeGrid g =
        vqvae::load_code_grid(code_path(cfg.codes_dir, clip_stem(rec.path)));
    if (static_cast<int>(g.rows) != scfg.grid_rows ||
        static_cast<int>(g.cols) != scfg.grid_cols)
      throw VersioningError("code grid for " + rec.path + " is " +
                            std::to_string(g.rows) + "x" + std::to_string(g.cols) +
                            ", config wants " + std::to_string(scfg.grid_rows) +
                            "x" + std::to_string(scfg.grid_cols));
    if (static_cast<int>(g.label) != rec.category)
      throw FormatError("code grid label " + std::to_string(g.label) +
                        " disagrees with manifest category " +
                        std::to_string(rec.category) + " for " + rec.path);
    grids.push_back(g.codes);
    labels_all.push_back(static_cast<int32_t>(g.label));
  }

  int64_t start = 0;
  if (!cfg.resume_from.empty())
    resume_from_checkpoint(cfg, params, opt, nullptr, &start);

  int64_t n = static_cast<int64_t>(grids.size());
  int64_t B = std::min<int64_t>(cfg.snail_batch, n);
  int64_t spe = std::max<int64_t>(1, n / B);
  int64_t total = cfg.snail_steps > 0
                      ? cfg.snail_steps
                      : static_cast<int64_t>(cfg.snail_epochs) * spe;
  CyclicLr sched{cfg.snail_base_lr, cfg.snail_max_lr, cfg.snail_cycle_steps};

  std::ofstream log(out_dir + "/snail_log.txt",
                    start > 0 ? std::ios::app : std::ios::trunc);
  uint64_t order_seed = mix_seed(seed, fnv1a64("sn-order"));

  TrainSummary summary;
  std::vector<int64_t> order;
  int64_t cur_epoch = -1;
  char line[256];
  for (int64_t step = start; step < total; ++step) {
    int64_t e = step / spe, pos = step % spe;
    if (e != cur_epoch) {
      order = permutation(n, mix_seed(order_seed, static_cast<uint64_t>(e)));
      cur_epoch = e;
    }
    std::vector<int32_t> tokens(static_cast<size_t>(B * N));
    std::vector<int32_t> labels(static_cast<size_t>(B));
    for (int64_t j = 0; j < B; ++j) {
      int64_t ix = order[static_cast<size_t>(pos * B + j)];
      std::copy(grids[static_cast<size_t>(ix)].begin(),
                grids[static_cast<size_t>(ix)].end(),
                tokens.begin() + j * N);
      labels[static_cast<size_t>(j)] = labels_all[static_cast<size_t>(ix)];
    }
    double lr = sched.at(step);
    auto res = snail::train_step_snail(model, params, tokens, B, labels, opt,
                                       lr, cfg.max_grad_norm);
    summary.final_loss = res.nll;

    if (cfg.log_interval > 0 && (step + 1) % cfg.log_interval == 0) {
      std::snprintf(line, sizeof(line),
                    "step=%lld lr=%.8g nll=%.8g grad_norm=%.8g",
                    static_cast<long long>(step + 1), lr, res.nll,
                    res.grad_norm);
      log << line << "\n";
    }
    if (cfg.checkpoint_interval > 0 && (step + 1) % cfg.checkpoint_interval == 0) {
      assemble_checkpoint(cfg, static_cast<uint64_t>(step + 1), params, opt,
                          nullptr)
          .save(out_dir + "/snail_step" + std::to_string(step + 1) + ".zfck");
    }
  }
  summary.steps = total;
  summary.checkpoint_path = out_dir + "/snail_final.zfck";
  assemble_checkpoint(cfg, static_cast<uint64_t>(total), params, opt, nullptr)
      .save(summary.checkpoint_path);
  return summary;
}

// --- generation -------------------------------------------------------------------------

void generate(const RunConfig& cfg, int per_class, uint64_t seed,
              const std::string& out_dir) {
  if (per_class < 0) throw ContractError("generate: per_class must be >= 0");
  fs::create_directories(out_dir);

  vqvae::VqVae vq(cfg.vqvae_config(), 0);
  auto vq_params = vq.parameters();
  Checkpoint vq_ck = Checkpoint::load(cfg.vqvae_checkpoint);
  if (vq_ck.config_hash != cfg.model_hash())
    throw VersioningError("vqvae checkpoint does not match the configuration");
  load_parameters(vq_params, vq_ck);

  snail::SnailConfig scfg = cfg.snail_config();
  snail::SnailModel prior(scfg, 0);
  auto sn_params = prior.parameters();
  Checkpoint sn_ck = Checkpoint::load(cfg.snail_checkpoint);
  if (sn_ck.config_hash != cfg.model_hash())
    throw VersioningError("snail checkpoint does not match the configuration");
  load_parameters(sn_params, sn_ck);

  CorpusStats st = CorpusStats::load(cfg.stats);
  uint64_t gen_seed = mix_seed(seed, fnv1a64("generate"));

  Manifest out_manifest;
  int64_t R = scfg.grid_rows, C = scfg.grid_cols;
  int64_t F = cfg.frames();
  for (int cat = 0; cat < kNumCategories; ++cat) {
    for (int i = 0; i < per_class; ++i) {
      std::vector<int32_t> grid = prior.sample(
          cat, cfg.temperature,
          mix_seed(mix_seed(gen_seed, static_cast<uint64_t>(cat)),
                   static_cast<uint64_t>(i)));
      Tensor z_q = codebook_gather(grid, 1, R, C, vq.codebook().codewords);
      Tensor x = vq.decode(z_q);  // (1,1,rows,frames)

      audio::MelSpec spec;
      spec.rows = cfg.mel_rows;
      spec.frames = static_cast<int>(F);
      spec.params = cfg.mel_params();
      spec.values.resize(static_cast<size_t>(cfg.mel_rows) * static_cast<size_t>(F));
      const float* xv = x.values().data();
      for (int r = 0; r < cfg.mel_rows; ++r)
        for (int64_t t = 0; t < F; ++t)
          spec.values[static_cast<size_t>(r * F + t)] = static_cast<float>(
              xv[r * F + t] * st.mel_std + st.mel_mean);

      audio::Waveform w = audio::invert_mel(spec, cfg.invert_iterations);
      std::string path = out_dir + "/gen_" + std::to_string(cat) + "_" +
                         std::to_string(i) + ".wav";
      audio::write_wav(path, w);
      out_manifest.records.push_back({path, cat, "val"});
    }
  }
  out_manifest.save(out_dir + "/generated_manifest.tsv");
}

// --- evaluation ---------------------------------------------------------------------------

fad::FadReport evaluate(const RunConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  Manifest gen = Manifest::load(cfg.generated_manifest);
  Manifest ref = Manifest::load(cfg.reference_manifest);
  std::vector<ManifestRecord> refs = cfg.reference_split.empty()
                                         ? ref.records
                                         : ref.subset(cfg.reference_split);
  std::vector<fad::ClipEntry> gen_entries, ref_entries;
  for (const auto& r : gen.records) gen_entries.push_back({r.path, r.category});
  for (const auto& r : refs) ref_entries.push_back({r.path, r.category});

  fad::FadReport report = fad::evaluate_fad(
      gen_entries, ref_entries, cfg.fad_backend, cfg.mel_params(), cfg.clip_seconds);

  std::ofstream table(out_dir + "/fad_report.txt");
  table << report.table();
  std::ofstream records(out_dir + "/fad_report.tsv");
  records << report.records();
  if (!table || !records)
    throw IoError("cannot write FAD report under " + out_dir);
  return report;
}

}  // namespace zenfoley::pipeline
