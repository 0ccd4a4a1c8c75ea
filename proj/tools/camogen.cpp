#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "camo/config.hpp"
#include "camo/errors.hpp"
#include "camo/pipeline.hpp"
#include "camo/synth.hpp"

namespace {

int run(int argc, char** argv) {
  CLI::App app{"Foreground-conditioned camouflage image generation"};
  app.require_subcommand(1);

  std::string config_path, resume;
  auto* train = app.add_subcommand("train", "train the codec, then the conditional denoiser");
  train->add_option("--config", config_path, "key=value run configuration")->required()->check(CLI::ExistingFile);
  train->add_option("--resume", resume, "stage-2 checkpoint to continue from (overrides train.resume)");

  std::string ckpt, image, mask, out;
  std::uint64_t seed = 0;
  auto* generate = app.add_subcommand("generate", "camouflage one object");
  generate->add_option("--ckpt", ckpt, "trained checkpoint")->required();
  generate->add_option("--image", image, "8-bit RGB PNG")->required();
  generate->add_option("--mask", mask, "8-bit gray PNG, >127 marks the object")->required();
  generate->add_option("--seed", seed, "sampling seed")->required();
  generate->add_option("--out", out, "output PNG")->required();

  std::string data, generated_dir;
  auto* evaluate = app.add_subcommand("evaluate", "generate for every sample and score the results");
  evaluate->add_option("--ckpt", ckpt, "trained checkpoint")->required();
  evaluate->add_option("--data", data, "dataset directory")->required();
  evaluate->add_option("--out", out, "key=value report")->required();
  evaluate->add_option("--generated-dir", generated_dir, "also write generated PNGs here");

  camo::SynthOptions synth_opts;
  auto* synth = app.add_subcommand("synth-data", "write a procedural dataset");
  synth->add_option("--seed", synth_opts.seed, "generator seed")->required();
  synth->add_option("--n", synth_opts.count, "number of samples")->required()->check(CLI::PositiveNumber);
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--size", synth_opts.height, "frame size (square)")->default_val(64);
  synth->add_flag("--small-only", synth_opts.small_only, "only objects below 1/64 of the frame");

  app.add_subcommand("default-config", "print every config key with its default");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : camo::exit_code(camo::ErrorKind::kConfig);
  }

  if (*train) {
    auto config = camo::load_config(config_path);
    if (!resume.empty()) config.resume = resume;
    camo::TrainRunOptions opts;
    opts.progress = [](const std::string& msg) { std::cerr << msg << '\n'; };
    camo::cmd_train(config, opts);
  } else if (*generate) {
    camo::cmd_generate(ckpt, image, mask, seed, out);
  } else if (*evaluate) {
    const auto report = camo::cmd_evaluate(ckpt, data, out, generated_dir);
    std::cout << camo::report_table(report);
  } else if (*synth) {
    synth_opts.width = synth_opts.height;
    const auto manifest = camo::synth_dataset(synth_opts, out);
    std::cout << "wrote " << manifest.entries.size() << " samples to " << out << '\n';
  } else if (app.got_subcommand("default-config")) {
    std::cout << camo::serialize_config(camo::RunConfig{});
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const camo::Error& e) {
    std::cerr << "camogen: " << e.what() << '\n';
    return camo::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "camogen: " << e.what() << '\n';
    return 1;
  }
}
