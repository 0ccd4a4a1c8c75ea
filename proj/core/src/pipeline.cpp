#include "camo/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "camo/errors.hpp"
#include "camo/ops.hpp"
#include "camo/png_io.hpp"

namespace camo {
namespace fs = std::filesystem;

std::string log_header() { return "step,fadl_fg,fadl_bg,bgrec,total,w,t,codec_crc"; }

std::string log_line(const TrainLogRow& row) {
  std::ostringstream s;
  s << std::setprecision(17) << row.step << ',' << row.loss.fadl_fg << ',' << row.loss.fadl_bg << ','
    << row.loss.bgrec << ',' << row.loss.total << ',' << row.loss.w << ',' << row.t << ',' << std::hex
    << std::setw(8) << std::setfill('0') << row.codec_crc;
  return s.str();
}

std::vector<Sample> resize_samples(const std::vector<Sample>& samples, int size) {
  std::vector<Sample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    Sample r{s.name, s.image, s.mask};
    if (s.image.height != size || s.image.width != size) {
      r.image = resize_bilinear(s.image, size, size);
      r.mask = resize_nearest(s.mask, size, size);
    }
    out.push_back(std::move(r));
  }
  return out;
}

Codec<float> train_stage1(const RunConfig& config, const std::vector<Sample>& samples,
                          const std::function<void(const CodecStepLog&)>& on_step) {
  std::vector<Image> images;
  images.reserve(samples.size());
  for (const auto& s : samples) images.push_back(s.image);
  CodecTrainOptions opts;
  opts.steps = config.codec_steps;
  opts.batch = config.codec_batch;
  opts.adam.lr = config.codec_lr;
  opts.seed = Rng(config.seed).split("stage1").next_u64();
  opts.on_step = on_step;
  return train_codec(images, config.model.codec, opts);
}

std::uint64_t sample_seed(std::uint64_t seed, const std::string& name) {
  return Rng(seed).split("sample").split(name).next_u64();
}

std::vector<SampleFeatures> extract_features(const Codec<float>& codec, const RunConfig& config,
                                             const std::vector<Sample>& samples) {
  std::vector<SampleFeatures> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    out.push_back(prepare_features(codec, s.image, s.mask, config.model.conditioning.slic,
                                   sample_seed(config.seed, s.name)));
  }
  return out;
}

Stage2State fresh_stage2(const RunConfig& config) {
  Stage2State state;
  state.params = init_model<float>(config.model, Rng(config.seed).split("stage2.init").next_u64());
  return state;
}

void train_stage2(const RunConfig& config, const Codec<float>& codec, const std::vector<SampleFeatures>& features,
                  Stage2State& state, const Stage2Hooks& hooks) {
  if (features.empty()) throw InputError("stage 2: no samples");
  if (!codec.frozen) throw InvariantError("stage 2 requires a frozen codec");
  const auto schedule = make_schedule(config.model.schedule);
  const AdamConfig adam{config.train_lr, 0.9, 0.999, 1e-8};
  const Tensor<float> codebook = codec.codebook().detach();
  const std::uint32_t crc = codec.checksum();
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(config.train_batch), features.size());
  const Rng base = Rng(config.seed).split("stage2.steps");
  for (const auto& [name, t] : state.params) {
    if (name.starts_with("codec.")) throw InvariantError("stage-2 parameter set contains codec tensor " + name);
  }

  const int last = hooks.stop_after >= 0 ? std::min(hooks.stop_after, config.train_steps) : config.train_steps;
  while (state.step < last) {
    const int step = state.step + 1;
    Rng rng = base.split(static_cast<std::uint64_t>(step));
    Rng pick = rng.split("batch");
    std::vector<std::size_t> order(features.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<const SampleFeatures*> items;
    for (std::size_t i = 0; i < batch; ++i) {
      const auto j = static_cast<std::size_t>(pick.uniform_int(static_cast<std::int64_t>(i),
                                                               static_cast<std::int64_t>(order.size()) - 1));
      std::swap(order[i], order[j]);
      items.push_back(&features[order[i]]);
    }
    StepResult result;
    try {
      result = train_step(state.params, state.adam, config.model, adam, codebook, items, schedule, rng.split("noise"));
    } catch (const NumericError& e) {
      throw NumericError("stage 2 step " + std::to_string(step) + ": " +
                         std::string(e.what()).substr(std::string("numeric error: ").size()));
    }
    state.step = step;
    const std::uint32_t now = codec.checksum();
    if (now != crc) throw InvariantError("codec checksum changed during stage 2");
    if (hooks.on_step) hooks.on_step(TrainLogRow{step, result.loss, result.t_mean, now});
    if (hooks.on_checkpoint && config.checkpoint_every > 0 && step % config.checkpoint_every == 0) {
      hooks.on_checkpoint(state);
    }
  }
}

Checkpoint make_checkpoint(const RunConfig& config, const Codec<float>& codec, const Stage2State* state) {
  Checkpoint c;
  c.config = serialize_config(config);
  std::ostringstream crc;
  crc << std::hex << std::setw(8) << std::setfill('0') << codec.checksum();
  c.meta["codec_crc"] = crc.str();
  store_params(c, codec.params, "codec/");
  if (state) {
    c.meta["stage"] = "model";
    c.meta["step"] = std::to_string(state->step);
    store_params(c, state->params, "model/");
    store_adam(c, state->adam);
  } else {
    c.meta["stage"] = "codec";
  }
  return c;
}

TrainedModel restore_model(const Checkpoint& checkpoint) {
  TrainedModel m;
  m.config = parse_config(checkpoint.config, "checkpoint config");
  m.codec.config = m.config.model.codec;
  m.codec.params = restore_params<float>(checkpoint, "codec/");
  m.codec.frozen = true;
  std::ostringstream crc;
  crc << std::hex << std::setw(8) << std::setfill('0') << m.codec.checksum();
  if (crc.str() != checkpoint.meta_value("codec_crc")) {
    throw IntegrityError("checkpoint codec tensors do not match the recorded codec checksum");
  }
  if (checkpoint.meta_value("stage") == "model") {
    m.state.params = restore_params<float>(checkpoint, "model/");
    m.state.adam = restore_adam(checkpoint);
    m.state.step = std::stoi(checkpoint.meta_value("step"));
    // same names and shapes as a fresh model
    const auto reference = init_model<float>(m.config.model, 0);
    if (reference.size() != m.state.params.size()) throw IntegrityError("checkpoint model tensors are incomplete");
    for (const auto& [name, t] : reference) {
      if (!m.state.params.contains(name) || m.state.params.get(name).shape() != t.shape()) {
        throw IntegrityError("checkpoint tensor " + name + " missing or misshapen");
      }
    }
  }
  return m;
}

TrainedModel load_model(const fs::path& path) { return restore_model(load_checkpoint(path)); }

namespace {

std::ofstream open_log(const fs::path& path, std::ios::openmode mode) {
  std::ofstream out(path, mode);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  return out;
}

// Keys that may differ between the run that wrote a checkpoint and the run resuming from it.
bool resumable_key(const std::string& key) {
  return key == "train.steps" || key == "train.checkpoint_every" || key == "train.resume" || key == "out_dir" ||
         key == "data_dir";
}

void truncate_log(const fs::path& path, int step) {
  std::vector<std::string> kept{log_header()};
  std::ifstream in(path);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    if (std::stoi(line.substr(0, line.find(','))) <= step) kept.push_back(line);
  }
  in.close();
  auto out = open_log(path, std::ios::trunc);
  for (const auto& l : kept) out << l << '\n';
}

}  // namespace

TrainedModel cmd_train(const RunConfig& config, const TrainRunOptions& options) {
  config.validate();
  auto say = [&](const std::string& msg) {
    if (options.progress) options.progress(msg);
  };
  const fs::path out_dir(config.out_dir);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError(out_dir.string() + ": cannot create directory: " + ec.message());

  const auto dataset = load_dataset(config.data_dir);
  const auto samples = resize_samples(dataset.samples, config.model.codec.image_size);
  say("loaded " + std::to_string(samples.size()) + " samples from " + config.data_dir);

  TrainedModel model;
  model.config = config;
  const fs::path log_path = out_dir / "train_log.csv";
  if (config.resume.empty()) {
    auto codec_log = open_log(out_dir / "codec_log.csv", std::ios::trunc);
    codec_log << "step,recon,codebook,commit,total,revived\n" << std::setprecision(17);
    model.codec = train_stage1(config, samples, [&](const CodecStepLog& s) {
      codec_log << s.step << ',' << s.recon << ',' << s.codebook << ',' << s.commit << ',' << s.total << ','
                << s.revived << '\n';
      if (s.step % 100 == 0) say("stage 1 step " + std::to_string(s.step) + " loss " + std::to_string(s.total));
    });
    save_checkpoint(out_dir / "codec.camf", make_checkpoint(config, model.codec, nullptr));
    model.state = fresh_stage2(config);
    auto log = open_log(log_path, std::ios::trunc);
    log << log_header() << '\n';
  } else {
    auto restored = load_model(config.resume);
    for (const auto& key : config_keys()) {
      if (resumable_key(key.name)) continue;
      if (config_value(restored.config, key.name) != config_value(config, key.name)) {
        throw ConfigError("resume: key '" + key.name + "' differs from the checkpoint (" +
                          config_value(restored.config, key.name) + " vs " + config_value(config, key.name) + ")");
      }
    }
    if (restored.state.params.size() == 0) throw InputError(config.resume + ": not a stage-2 checkpoint");
    model.codec = std::move(restored.codec);
    model.state = std::move(restored.state);
    truncate_log(log_path, model.state.step);
    say("resuming at step " + std::to_string(model.state.step));
  }

  const auto features = extract_features(model.codec, config, samples);
  auto log = open_log(log_path, std::ios::app);
  Stage2Hooks hooks;
  hooks.stop_after = options.stop_after;
  hooks.on_step = [&](const TrainLogRow& row) {
    log << log_line(row) << '\n';
    log.flush();
    if (row.step % 100 == 0) say("stage 2 step " + std::to_string(row.step) + " loss " + std::to_string(row.loss.total));
  };
  hooks.on_checkpoint = [&](const Stage2State& state) {
    save_checkpoint(out_dir / ("model_step" + std::to_string(state.step) + ".camf"),
                    make_checkpoint(config, model.codec, &state));
  };
  train_stage2(config, model.codec, features, model.state, hooks);
  save_checkpoint(out_dir / "model.camf", make_checkpoint(config, model.codec, &model.state));
  say("wrote " + (out_dir / "model.camf").string());
  return model;
}

Image generate_image(const TrainedModel& model, const Image& image, const Mask& mask, std::uint64_t seed) {
  if (model.state.params.size() == 0) throw InputError("generate: checkpoint holds no trained denoiser");
  if (mask.count() == 0) throw InputError("generate: mask has no foreground");
  NoGradGuard no_grad;
  const auto& mc = model.config.model;
  const auto features = prepare_features(model.codec, image, mask, mc.conditioning.slic, seed);
  const auto bundle =
      condition_from_features(model.state.params, mc.conditioning, model.codec.codebook().detach(), features);
  const auto z = sample(model.state.params, mc.unet, bundle, make_schedule(mc.schedule), seed);
  return tensor_image(decode(model.codec, z));
}

void cmd_generate(const fs::path& checkpoint, const fs::path& image, const fs::path& mask, std::uint64_t seed,
                  const fs::path& out) {
  const auto model = load_model(checkpoint);
  const Image img = read_png_rgb(image);
  const auto gray = read_png_gray(mask);
  if (gray.height != img.height || gray.width != img.width) {
    throw InputError(mask.string() + ": mask dims differ from " + image.string());
  }
  const Mask m = gray_to_mask(gray);
  if (m.count() == 0) throw InputError(mask.string() + ": mask has no foreground");
  write_png_rgb(out, generate_image(model, img, m, seed));
}

MetricReport cmd_evaluate(const fs::path& checkpoint, const fs::path& data_dir, const fs::path& out,
                          const fs::path& generated_dir) {
  const auto model = load_model(checkpoint);
  const auto dataset = load_dataset(data_dir);
  const int size = model.config.model.codec.image_size;
  if (!generated_dir.empty()) fs::create_directories(generated_dir);
  std::vector<EvalItem> items;
  for (const auto& s : dataset.samples) {
    EvalItem item;
    item.name = s.name;
    item.generated = generate_image(model, s.image, s.mask, sample_seed(model.config.seed, s.name));
    const auto resized = resize_samples({s}, size).front();
    item.reference = resized.image;
    item.fg = resized.mask;
    item.small = is_small_object(s.mask);
    if (!generated_dir.empty()) write_png_rgb(generated_dir / (s.name + ".png"), item.generated);
    items.push_back(std::move(item));
  }
  auto report = evaluate_images(items);
  std::ofstream file(out);
  if (!file) throw IoError(out.string() + ": cannot open for writing");
  file << report_key_values(report);
  if (!file) throw IoError(out.string() + ": write failed");
  return report;
}

double foreground_residual_mse(const ParamStore<float>& params, const ModelConfig& config, const Codec<float>& codec,
                               const std::vector<SampleFeatures>& features, std::uint64_t seed, int draws) {
  if (features.empty() || draws < 1) throw InputError("foreground_residual_mse: nothing to evaluate");
  NoGradGuard no_grad;
  const auto schedule = make_schedule(config.schedule);
  const Tensor<float> codebook = codec.codebook().detach();
  const Rng base = Rng(seed).split("fg_residual");
  double total = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& f = features[i];
    const auto n = static_cast<std::size_t>(f.latent_size);
    const auto bundle = condition_from_features(params, config.conditioning, codebook, f);
    const auto z0 = latent_tensor<float>(f.z0, f.latent_size);
    Rng r = base.split(static_cast<std::uint64_t>(i));
    std::vector<int> t(static_cast<std::size_t>(draws));
    std::vector<Tensor<float>> zt, conds, noises;
    for (int d = 0; d < draws; ++d) {
      t[static_cast<std::size_t>(d)] = static_cast<int>(r.uniform_int(1, schedule.steps()));
      std::vector<float> e(n * n * 3);
      for (auto& v : e) v = static_cast<float>(r.normal());
      Tensor<float> eps({n, n, 3}, std::move(e));
      zt.push_back(forward_diffuse(z0, t[static_cast<std::size_t>(d)], eps, schedule));
      conds.push_back(bundle.c);
      noises.push_back(eps);
    }
    const auto eps_hat = predict_noise(params, config.unet, stack(zt), stack(conds), t);
    const auto eps = stack(noises);
    double sse = 0;
    std::size_t count = 0;
    for (int d = 0; d < draws; ++d) {
      for (std::size_t cell = 0; cell < n * n; ++cell) {
        if (!f.fg_d.fg[cell]) continue;
        for (std::size_t c = 0; c < 3; ++c) {
          const auto k = (static_cast<std::size_t>(d) * n * n + cell) * 3 + c;
          const double diff = static_cast<double>(eps[k]) - eps_hat[k];
          sse += diff * diff;
          ++count;
        }
      }
    }
    if (count == 0) throw InputError("foreground_residual_mse: sample without latent foreground");
    total += sse / static_cast<double>(count);
  }
  return total / static_cast<double>(features.size());
}

std::vector<AblationRow> run_ablation(const RunConfig& base, const Codec<float>& codec,
                                      const std::vector<Sample>& samples, const std::string& key,
                                      const std::vector<std::string>& values) {
  std::vector<AblationRow> rows;
  for (const auto& value : values) {
    RunConfig cfg = base;
    set_config_value(cfg, key, value);
    cfg.validate();
    const auto features = extract_features(codec, cfg, samples);
    auto state = fresh_stage2(cfg);
    std::vector<double> totals;
    Stage2Hooks hooks;
    hooks.on_step = [&](const TrainLogRow& row) { totals.push_back(row.loss.total); };
    train_stage2(cfg, codec, features, state, hooks);
    AblationRow row{key, value};
    const std::size_t k = std::max<std::size_t>(1, totals.size() / 10);
    if (!totals.empty()) {
      row.loss_head = std::accumulate(totals.begin(), totals.begin() + static_cast<std::ptrdiff_t>(k), 0.0) / k;
      row.loss_tail = std::accumulate(totals.end() - static_cast<std::ptrdiff_t>(k), totals.end(), 0.0) / k;
    }
    row.fg_residual = foreground_residual_mse(state.params, cfg.model, codec, features,
                                              Rng(cfg.seed).split("ablation.eval").next_u64(), 8);
    rows.push_back(row);
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream s;
  s << std::left << std::setw(16) << "key" << std::setw(12) << "value" << std::right << std::setw(12) << "loss_head"
    << std::setw(12) << "loss_tail" << std::setw(14) << "fg_residual" << '\n';
  s << std::fixed << std::setprecision(5);
  for (const auto& r : rows) {
    s << std::left << std::setw(16) << r.key << std::setw(12) << r.value << std::right << std::setw(12)
      << r.loss_head << std::setw(12) << r.loss_tail << std::setw(14) << r.fg_residual << '\n';
  }
  return s.str();
}

}  // namespace camo
