#include <algorithm>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "zenfoley/pipeline.hpp"

namespace zenfoley::pipeline {

namespace {

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '"', '\'');
  return s;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"zenfoley: class-conditional neural foley synthesis pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "run configuration file")->required();
    sub->add_option("--seed", seed, "RNG seed (default 0)");
    sub->add_option("--out", out_dir, "output directory")->required();
  };

  CLI::App* cmd_split = app.add_subcommand("split", "stratified train/val split");
  CLI::App* cmd_prepare =
      app.add_subcommand("prepare", "build feature and CEmbed caches");
  CLI::App* cmd_train_vqvae =
      app.add_subcommand("train-vqvae", "train the vector-quantized autoencoder");
  CLI::App* cmd_extract =
      app.add_subcommand("extract-codes", "export code grids from a trained vqvae");
  CLI::App* cmd_train_snail =
      app.add_subcommand("train-snail", "train the autoregressive prior");
  CLI::App* cmd_generate =
      app.add_subcommand("generate", "sample foleys per category to WAV");
  CLI::App* cmd_evaluate =
      app.add_subcommand("evaluate", "Frechet audio distance report");
  for (CLI::App* sub : {cmd_split, cmd_prepare, cmd_train_vqvae, cmd_extract,
                        cmd_train_snail, cmd_generate, cmd_evaluate})
    add_common(sub);

  // CLI11 wants mutable argv storage.
  std::vector<std::string> storage(argv, argv + argc);
  std::vector<char*> mutable_argv;
  mutable_argv.reserve(storage.size());
  for (auto& s : storage) mutable_argv.push_back(s.data());

  try {
    app.parse(argc, mutable_argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    RunConfig cfg = RunConfig::load(config_path);
    std::filesystem::create_directories(out_dir);
    if (cmd_split->parsed()) {
      Manifest m = Manifest::load(cfg.manifest);
      Manifest s = stratified_split(m, cfg.val_per_class, seed);
      s.save(out_dir + "/manifest.tsv");
      int val = static_cast<int>(s.subset("val").size());
      std::cout << "split: " << s.records.size() - static_cast<size_t>(val)
                << " train / " << val << " val -> " << out_dir
                << "/manifest.tsv\n";
    } else if (cmd_prepare->parsed()) {
      prepare(cfg, seed, out_dir);
      std::cout << "prepare: caches written under " << out_dir << "\n";
    } else if (cmd_train_vqvae->parsed()) {
      TrainSummary s = train_vqvae(cfg, seed, out_dir);
      std::cout << "train-vqvae: " << s.steps << " steps, final total loss "
                << s.final_loss << ", checkpoint " << s.checkpoint_path << "\n";
    } else if (cmd_extract->parsed()) {
      extract_codes(cfg, out_dir);
      std::cout << "extract-codes: code grids written under " << out_dir << "\n";
    } else if (cmd_train_snail->parsed()) {
      TrainSummary s = train_snail(cfg, seed, out_dir);
      std::cout << "train-snail: " << s.steps << " steps, final nll "
                << s.final_loss << ", checkpoint " << s.checkpoint_path << "\n";
    } else if (cmd_generate->parsed()) {
      generate(cfg, cfg.generate_per_class, seed, out_dir);
      std::cout << "generate: " << cfg.generate_per_class * kNumCategories
                << " clips written under " << out_dir << "\n";
    } else if (cmd_evaluate->parsed()) {
      fad::FadReport r = evaluate(cfg, out_dir);
      std::cout << r.table();
    }
  } catch (const Error& e) {
    std::cerr << "error: category=" << e.category() << " message=\""
              << one_line(e.what()) << "\"\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: category=internal message=\"" << one_line(e.what())
              << "\"\n";
    return 1;
  }
  return 0;
}

}  // namespace zenfoley::pipeline
