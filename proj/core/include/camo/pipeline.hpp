#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "camo/checkpoint.hpp"
#include "camo/config.hpp"
#include "camo/dataset.hpp"
#include "camo/metrics.hpp"

namespace camo {

/// One stage-2 step as written to the CSV log. `t` and `w` are batch means.
struct TrainLogRow {
  int step = 0;
  LossBreakdown loss;
  double t = 0;
  std::uint32_t codec_crc = 0;
};

std::string log_header();
std::string log_line(const TrainLogRow& row);

/// Samples resized to the model resolution (bilinear image, nearest mask).
std::vector<Sample> resize_samples(const std::vector<Sample>& samples, int size);

/// Stage 1 on the given (model-resolution) samples. Returns a frozen codec.
Codec<float> train_stage1(const RunConfig& config, const std::vector<Sample>& samples,
                          const std::function<void(const CodecStepLog&)>& on_step = {});

/// Seed used for everything sample-specific (superpixels, evaluation noise).
std::uint64_t sample_seed(std::uint64_t seed, const std::string& name);

std::vector<SampleFeatures> extract_features(const Codec<float>& codec, const RunConfig& config,
                                             const std::vector<Sample>& samples);

struct Stage2State {
  ParamStore<float> params;
  AdamState<float> adam;
  int step = 0;
};

Stage2State fresh_stage2(const RunConfig& config);

struct Stage2Hooks {
  std::function<void(const TrainLogRow&)> on_step;
  /// Called after every checkpoint_every-th step.
  std::function<void(const Stage2State&)> on_checkpoint;
  /// Stop once this step is done (-1 runs to train.steps).
  int stop_after = -1;
};

/// Runs stage 2 from `state.step + 1` to train.steps. Every step's randomness
/// is derived from (seed, step), so a restored state continues identically.
/// Throws InvariantError if the codec checksum changes.
void train_stage2(const RunConfig& config, const Codec<float>& codec, const std::vector<SampleFeatures>& features,
                  Stage2State& state, const Stage2Hooks& hooks = {});

Checkpoint make_checkpoint(const RunConfig& config, const Codec<float>& codec, const Stage2State* state);

struct TrainedModel {
  RunConfig config;
  Codec<float> codec;
  Stage2State state;
};

TrainedModel restore_model(const Checkpoint& checkpoint);
TrainedModel load_model(const std::filesystem::path& path);

struct TrainRunOptions {
  std::function<void(const std::string&)> progress;
  int stop_after = -1;
};

/// Full two-stage run driven by files under config.out_dir:
///   codec_log.csv, codec.camf, train_log.csv, model_stepN.camf, model.camf.
/// With config.resume set, stage 1 is skipped and training continues from the
/// stage-2 checkpoint, truncating the log to the resumed step.
TrainedModel cmd_train(const RunConfig& config, const TrainRunOptions& options = {});

/// Camouflaged image at model resolution for an image/mask pair of any size.
Image generate_image(const TrainedModel& model, const Image& image, const Mask& mask, std::uint64_t seed);

void cmd_generate(const std::filesystem::path& checkpoint, const std::filesystem::path& image,
                  const std::filesystem::path& mask, std::uint64_t seed, const std::filesystem::path& out);

/// Generates one image per sample (seed from the sample name) and scores it
/// against the resized source. Writes the key=value report to `out` and, when
/// `generated_dir` is non-empty, the generated PNGs there.
MetricReport cmd_evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir,
                          const std::filesystem::path& out, const std::filesystem::path& generated_dir = {});

/// Mean squared noise residual over foreground latent cells, averaged over
/// samples and `draws` (t, eps) pairs drawn from `seed`.
double foreground_residual_mse(const ParamStore<float>& params, const ModelConfig& config, const Codec<float>& codec,
                               const std::vector<SampleFeatures>& features, std::uint64_t seed, int draws);

struct AblationRow {
  std::string key;
  std::string value;
  double loss_head = 0;  // mean total loss over the first 10% of steps
  double loss_tail = 0;  // and over the last 10%
  double fg_residual = 0;
};

/// Stage 2 once per value of `key` on a shared codec and feature set.
std::vector<AblationRow> run_ablation(const RunConfig& base, const Codec<float>& codec,
                                      const std::vector<Sample>& samples, const std::string& key,
                                      const std::vector<std::string>& values);

std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace camo
