// Acceptance runner. Prints one line per criterion:
//   criterion N: PASS|FAIL  <details>
// Exit status is nonzero when any selected criterion fails.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "camo/attention.hpp"
#include "camo/gradcheck.hpp"
#include "camo/ops.hpp"
#include "camo/pipeline.hpp"
#include "camo/synth.hpp"
#include "metric_oracles.hpp"
#include "oracles.hpp"

using namespace camo;
namespace fs = std::filesystem;
using T = Tensor<double>;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

fs::path scratch(const std::string& tag) {
  const auto dir = fs::temp_directory_path() / ("camogen_acceptance_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<double> column(const fs::path& csv, const std::string& name) {
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::istringstream h(line);
    std::string cell;
    while (std::getline(h, cell, ',')) header.push_back(cell);
  }
  const auto idx = static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
  std::vector<double> out;
  while (std::getline(in, line)) {
    std::istringstream r(line);
    std::string cell;
    for (std::size_t i = 0; std::getline(r, cell, ','); ++i)
      if (i == idx) out.push_back(std::stod(cell));
  }
  return out;
}

// ---------------------------------------------------------------- criterion 1

struct Instance {
  ParamStore<double> params;
  ScalarFn loss;
  std::size_t probes = 0;
};

using Builder = std::function<Instance(Rng&)>;

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
}

T param(ParamStore<double>& p, const std::string& name, Shape shape, Rng& rng, double lo = -1, double hi = 1) {
  return p.add(name, oracle::random_tensor(std::move(shape), rng, false, lo, hi));
}

// Scalar readout with a fixed random projection so every output element matters.
ScalarFn project(std::function<T(const ParamStore<double>&)> f, const Shape& out, Rng& rng) {
  const auto r = oracle::random_tensor(out, rng);
  return [f = std::move(f), r](const ParamStore<double>& p) { return sum(mul(f(p), r)); };
}

Instance unary(Rng& rng, const std::function<T(const T&)>& op) {
  Instance in;
  const Shape s{pick(rng, 1, 4), pick(rng, 1, 5)};
  param(in.params, "a", s, rng, -2, 2);
  const auto out = op(in.params.get("a")).shape();
  in.loss = project([op](const ParamStore<double>& p) { return op(p.get("a")); }, out, rng);
  return in;
}

Instance binary(Rng& rng, const std::function<T(const T&, const T&)>& op) {
  Instance in;
  const std::size_t r = pick(rng, 1, 4), c = pick(rng, 1, 5);
  param(in.params, "a", {r, c}, rng);
  const auto mode = pick(rng, 0, 2);
  const Shape bs = mode == 0 ? Shape{r, c} : mode == 1 ? Shape{c} : Shape{1};
  param(in.params, "b", bs, rng, 0.5, 1.5);
  in.loss = project([op](const ParamStore<double>& p) { return op(p.get("a"), p.get("b")); }, {r, c}, rng);
  return in;
}

struct TinyModel {
  ModelConfig config;
  Codec<float> codec;
  std::vector<SampleFeatures> features;
};

const TinyModel& tiny_model() {
  static const TinyModel model = [] {
    TinyModel m;
    m.config.codec.image_size = 32;
    m.config.codec.codebook_size = 16;
    m.config.codec.base_width = 4;
    m.config.conditioning.fafim.dim = 8;
    m.config.conditioning.fafim.heads = 2;
    m.config.conditioning.slic.superpixels = 4;
    m.config.unet.base_width = 4;
    m.config.unet.time_dim = 4;
    m.config.schedule.steps = 50;
    m.config.validate();
    m.codec = init_codec<float>(m.config.codec, 3);
    SynthOptions o;
    o.seed = 8;
    o.height = o.width = 32;
    Rng spread(17);
    for (int i = 0; i < 4; ++i) {
      const auto s = synth_sample(o, i);
      auto f = prepare_features(m.codec, s.image, s.mask, m.config.conditioning.slic, 10 + i);
      // An untrained encoder gives near-constant descriptors, which flattens the
      // retrieval softmax and leaves the cross-attention gradients at noise
      // level. Spread them out so every parameter has a measurable gradient.
      for (auto* v : {&f.xf, &f.cf, &f.z0})
        for (auto& x : *v) x = spread.uniform(-2, 2);
      m.features.push_back(std::move(f));
    }
    return m;
  }();
  return model;
}

std::vector<std::pair<std::string, Builder>> gradient_suite() {
  std::vector<std::pair<std::string, Builder>> ops;
  ops.emplace_back("add", [](Rng& r) { return binary(r, [](const T& a, const T& b) { return add(a, b); }); });
  ops.emplace_back("sub", [](Rng& r) { return binary(r, [](const T& a, const T& b) { return sub(a, b); }); });
  ops.emplace_back("mul", [](Rng& r) { return binary(r, [](const T& a, const T& b) { return mul(a, b); }); });
  ops.emplace_back("scale", [](Rng& r) {
    const double k = r.uniform(-3, 3);
    return unary(r, [k](const T& a) { return scale(a, k); });
  });
  ops.emplace_back("add_scalar", [](Rng& r) {
    const double k = r.uniform(-3, 3);
    return unary(r, [k](const T& a) { return square(add_scalar(a, k)); });
  });
  ops.emplace_back("square", [](Rng& r) { return unary(r, [](const T& a) { return square(a); }); });
  ops.emplace_back("silu", [](Rng& r) { return unary(r, [](const T& a) { return silu(a); }); });
  ops.emplace_back("masked", [](Rng& r) {
    std::vector<double> m(20);
    for (auto& v : m) v = r.uniform() < 0.5 ? 0.0 : 1.0;
    return unary(r, [m](const T& a) { return masked(a, std::vector<double>(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(a.size()))); });
  });
  ops.emplace_back("sum", [](Rng& r) { return unary(r, [](const T& a) { return square(sum(a)); }); });
  ops.emplace_back("mean", [](Rng& r) { return unary(r, [](const T& a) { return square(mean(a)); }); });
  ops.emplace_back("matmul", [](Rng& rng) {
    Instance in;
    const std::size_t m = pick(rng, 1, 4), k = pick(rng, 1, 5), n = pick(rng, 1, 4);
    param(in.params, "a", {m, k}, rng);
    param(in.params, "b", {k, n}, rng);
    in.loss = project([](const ParamStore<double>& p) { return matmul(p.get("a"), p.get("b")); }, {m, n}, rng);
    return in;
  });
  ops.emplace_back("transpose", [](Rng& r) { return unary(r, [](const T& a) { return transpose(a); }); });
  ops.emplace_back("softmax", [](Rng& r) { return unary(r, [](const T& a) { return softmax(scale(a, 2.0)); }); });
  ops.emplace_back("layer_norm", [](Rng& rng) {
    Instance in;
    const std::size_t n = pick(rng, 1, 4), c = pick(rng, 2, 6);
    param(in.params, "x", {n, c}, rng, -2, 2);
    param(in.params, "g", {c}, rng, 0.5, 1.5);
    param(in.params, "b", {c}, rng);
    in.loss = project([](const ParamStore<double>& p) { return layer_norm(p.get("x"), p.get("g"), p.get("b")); }, {n, c},
                      rng);
    return in;
  });
  ops.emplace_back("reshape", [](Rng& r) {
    return unary(r, [](const T& a) { return square(reshape(a, Shape{a.size()})); });
  });
  ops.emplace_back("take", [](Rng& rng) {
    std::vector<std::size_t> idx(pick(rng, 1, 12));
    for (auto& i : idx) i = pick(rng, 0, 1000);
    return unary(rng, [idx](const T& a) {
      std::vector<std::size_t> local;
      for (auto i : idx) local.push_back(i % a.size());
      const Shape s{local.size()};
      return square(take(a, local, s));
    });
  });
  ops.emplace_back("concat_last", [](Rng& rng) {
    Instance in;
    const std::size_t n = pick(rng, 1, 3), c1 = pick(rng, 1, 4), c2 = pick(rng, 1, 4);
    param(in.params, "a", {n, c1}, rng);
    param(in.params, "b", {n, c2}, rng);
    in.loss = project([](const ParamStore<double>& p) { return concat_last(p.get("a"), square(p.get("b"))); },
                      {n, c1 + c2}, rng);
    return in;
  });
  ops.emplace_back("stack", [](Rng& rng) {
    Instance in;
    const std::size_t n = pick(rng, 1, 3), c = pick(rng, 1, 4);
    param(in.params, "a", {n, c}, rng);
    param(in.params, "b", {n, c}, rng);
    in.loss = project([](const ParamStore<double>& p) { return stack(std::vector<T>{p.get("a"), mul(p.get("b"), p.get("a"))}); },
                      {2, n, c}, rng);
    return in;
  });
  ops.emplace_back("gather_rows", [](Rng& rng) {
    Instance in;
    const std::size_t k = pick(rng, 1, 5), d = pick(rng, 1, 4);
    param(in.params, "table", {k, d}, rng);
    std::vector<std::size_t> rows(pick(rng, 1, 6));
    for (auto& r : rows) r = pick(rng, 0, k - 1);
    in.loss = project([rows](const ParamStore<double>& p) { return square(gather_rows(p.get("table"), rows)); },
                      {rows.size(), d}, rng);
    return in;
  });
  ops.emplace_back("straight_through", [](Rng& rng) {
    const double shift = rng.uniform(-1, 1);
    return unary(rng, [shift](const T& a) { return square(straight_through(a, add_scalar(a, shift))); });
  });
  ops.emplace_back("linear", [](Rng& rng) {
    Instance in;
    const std::size_t b = pick(rng, 1, 3), n = pick(rng, 1, 3), i = pick(rng, 1, 4), o = pick(rng, 1, 4);
    param(in.params, "x", {b, n, i}, rng);
    param(in.params, "w", {i, o}, rng);
    param(in.params, "b", {o}, rng);
    in.loss = project([](const ParamStore<double>& p) { return linear(p.get("x"), p.get("w"), p.get("b")); }, {b, n, o},
                      rng);
    return in;
  });
  ops.emplace_back("conv2d", [](Rng& rng) {
    Instance in;
    const std::size_t b = pick(rng, 1, 2), h = pick(rng, 2, 5), w = pick(rng, 2, 5), ci = pick(rng, 1, 3),
                      co = pick(rng, 1, 3);
    const std::size_t k = rng.uniform() < 0.5 ? 1 : 3, stride = pick(rng, 1, 2);
    param(in.params, "x", {b, h, w, ci}, rng);
    param(in.params, "w", {k * k * ci, co}, rng);
    param(in.params, "b", {co}, rng);
    const auto out = conv2d(in.params.get("x"), in.params.get("w"), in.params.get("b"), k, stride).shape();
    in.loss = project([k, stride](const ParamStore<double>& p) { return conv2d(p.get("x"), p.get("w"), p.get("b"), k, stride); },
                      out, rng);
    return in;
  });
  ops.emplace_back("upsample_nearest", [](Rng& rng) {
    Instance in;
    const std::size_t h = pick(rng, 1, 3), w = pick(rng, 1, 3), c = pick(rng, 1, 3), f = pick(rng, 1, 3);
    param(in.params, "x", {h, w, c}, rng);
    in.loss = project([f](const ParamStore<double>& p) { return upsample_nearest(p.get("x"), f); }, {h * f, w * f, c}, rng);
    return in;
  });
  ops.emplace_back("slice_last", [](Rng& rng) {
    Instance in;
    const std::size_t n = pick(rng, 1, 3), c = pick(rng, 2, 6), begin = pick(rng, 0, c - 1), count = pick(rng, 1, c - begin);
    param(in.params, "x", {n, c}, rng);
    in.loss = project([begin, count](const ParamStore<double>& p) { return square(slice_last(p.get("x"), begin, count)); },
                      {n, count}, rng);
    return in;
  });
  ops.emplace_back("broadcast_spatial", [](Rng& rng) {
    Instance in;
    const std::size_t b = pick(rng, 1, 2), c = pick(rng, 1, 4), h = pick(rng, 1, 3), w = pick(rng, 1, 3);
    param(in.params, "x", {b, c}, rng);
    in.loss = project([h, w](const ParamStore<double>& p) { return broadcast_spatial(p.get("x"), h, w); }, {b, h, w, c},
                      rng);
    return in;
  });
  ops.emplace_back("multi_head_attention", [](Rng& rng) {
    Instance in;
    AttentionDims d;
    d.heads = pick(rng, 1, 3);
    d.query_dim = pick(rng, 1, 4);
    d.key_dim = pick(rng, 1, 4);
    d.value_dim = pick(rng, 1, 4);
    d.model_dim = d.heads * pick(rng, 1, 3);
    d.out_dim = pick(rng, 1, 4);
    init_attention(in.params, "att", d, rng);
    const std::size_t nq = pick(rng, 1, 4), nk = pick(rng, 1, 5);
    param(in.params, "q", {nq, d.query_dim}, rng, -2, 2);
    param(in.params, "k", {nk, d.key_dim}, rng, -2, 2);
    param(in.params, "v", {nk, d.value_dim}, rng);
    const auto heads = d.heads;
    in.loss = project(
        [heads](const ParamStore<double>& p) {
          return multi_head_attention(p.get("q"), p.get("k"), p.get("v"), AttentionWeights<double>::from(p, "att"), heads);
        },
        {nq, d.out_dim}, rng);
    return in;
  });
  ops.emplace_back("forward_diffuse", [](Rng& rng) {
    Instance in;
    const auto sched = NoiseSchedule::linear(200, 1e-4, 0.02);
    const int t = static_cast<int>(rng.uniform_int(1, 200));
    param(in.params, "z0", {3, 3, 3}, rng);
    param(in.params, "eps", {3, 3, 3}, rng);
    in.loss = project([t, sched](const ParamStore<double>& p) { return forward_diffuse(p.get("z0"), t, p.get("eps"), sched); },
                      {3, 3, 3}, rng);
    return in;
  });
  ops.emplace_back("fadl_loss", [](Rng& rng) {
    Instance in;
    const std::size_t b = pick(rng, 1, 2), h = pick(rng, 2, 4);
    param(in.params, "hat", {b, h, h, 3}, rng);
    const auto eps = oracle::random_tensor({b, h, h, 3}, rng);
    std::vector<double> md(b * h * h);
    for (auto& v : md) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
    const T m({b, h, h, 1}, md);
    std::vector<double> w(b);
    for (auto& v : w) v = rng.uniform(1, 8);
    const auto pol = rng.uniform() < 0.5 ? MaskPolarity::kObject : MaskPolarity::kEditable;
    in.loss = [eps, m, w, pol](const ParamStore<double>& p) {
      const auto f = fadl_loss(eps, p.get("hat"), m, w, pol);
      return add(f.fg, f.bg);
    };
    return in;
  });
  ops.emplace_back("bgrec_loss", [](Rng& rng) {
    Instance in;
    const std::size_t h = pick(rng, 2, 4);
    param(in.params, "rec", {h, h, 3}, rng);
    const auto z0 = oracle::random_tensor({h, h, 3}, rng);
    std::vector<double> md(h * h);
    for (auto& v : md) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
    const T m({h, h, 1}, md);
    in.loss = [z0, m](const ParamStore<double>& p) { return bgrec_loss(p.get("rec"), z0, m); };
    return in;
  });
  ops.emplace_back("codec encode/decode", [](Rng& rng) {
    CodecConfig cfg;
    cfg.image_size = 8;
    cfg.levels = 1;
    cfg.base_width = 4;
    cfg.codebook_size = 4;
    auto codec = std::make_shared<Codec<double>>(init_codec<double>(cfg, rng.next_u64()));
    const auto img = oracle::random_tensor({1, 8, 8, 3}, rng, false, 0, 1);
    const auto target = oracle::random_tensor({1, 8, 8, 3}, rng, false, 0, 1);
    Instance in;
    in.params = codec->params.subset("");
    in.probes = 6;
    in.loss = [codec, img, target](const ParamStore<double>&) {
      return mean(square(sub(decode_raw(*codec, encode(*codec, img)), target)));
    };
    return in;
  });
  ops.emplace_back("conditioning path", [](Rng& rng) {
    const auto& m = tiny_model();
    Instance in;
    Rng init = rng.split("init");
    init_conditioning(in.params, m.config.conditioning, m.config.codec, init);
    const auto& f = m.features[pick(rng, 0, m.features.size() - 1)];
    const auto codebook = m.codec.codebook().cast<double>(false);
    const auto cfg = m.config.conditioning;
    in.probes = 4;
    in.loss = project([cfg, codebook, &f](const ParamStore<double>& p) {
      return condition_from_features(p, cfg, codebook, f).c;
    }, {8, 8, 4}, rng);
    return in;
  });
  ops.emplace_back("u-net denoiser", [](Rng& rng) {
    UNetConfig cfg;
    cfg.base_width = 4;
    cfg.time_dim = 4;
    Instance in;
    init_unet(in.params, cfg, rng);
    const auto z = oracle::random_tensor({1, 4, 4, 3}, rng), c = oracle::random_tensor({1, 4, 4, 4}, rng);
    const int t = static_cast<int>(rng.uniform_int(1, 200));
    in.probes = 4;
    in.loss = project([cfg, z, c, t](const ParamStore<double>& p) { return predict_noise(p, cfg, z, c, {t}); },
                      {1, 4, 4, 3}, rng);
    return in;
  });
  ops.emplace_back("composed training loss", [](Rng& rng) {
    const auto& m = tiny_model();
    Instance in;
    in.params = init_model<double>(m.config, rng.next_u64());
    const auto sched = make_schedule(m.config.schedule);
    std::vector<const SampleFeatures*> batch;
    std::vector<int> t;
    for (std::size_t b = 0, n = pick(rng, 1, 2); b < n; ++b) {
      batch.push_back(&m.features[pick(rng, 0, m.features.size() - 1)]);
      t.push_back(static_cast<int>(rng.uniform_int(1, m.config.schedule.steps)));
    }
    const auto eps = oracle::random_tensor({batch.size(), 8, 8, 3}, rng);
    const auto codebook = m.codec.codebook().cast<double>(false);
    const auto cfg = m.config;
    in.probes = 3;
    in.loss = [cfg, codebook, batch, t, eps, sched](const ParamStore<double>& p) {
      return compute_loss(p, cfg, codebook, batch, t, eps, sched).total;
    };
    return in;
  });
  return ops;
}

Outcome criterion_gradients() {
  const auto start = Clock::now();
  std::ostringstream worst;
  double overall = 0;
  bool ok = true;
  std::size_t checks = 0;
  for (auto& [name, build] : gradient_suite()) {
    Rng rng = Rng(1).split(name);
    double op_max = 0;
    for (int i = 0; i < 50; ++i) {
      Rng local = rng.split(static_cast<std::uint64_t>(i));
      auto inst = build(local);
      GradCheckOptions opts;
      opts.max_probes = inst.probes;
      opts.seed = static_cast<std::uint64_t>(i);
      const auto report = grad_check(inst.loss, inst.params, opts);
      op_max = std::max(op_max, report.max_rel_err);
      if (std::getenv("CAMO_DEBUG") && report.max_rel_err >= 1e-4)
        for (const auto& e : report.params)
          if (e.rel_err >= 1e-4) std::cerr << name << " #" << i << " " << e.name << " " << e.rel_err << "\n";
      ok = ok && report.passed && report.max_rel_err < 1e-4;
      ++checks;
    }
    overall = std::max(overall, op_max);
    if (op_max >= 1e-4) worst << " " << name << "=" << fmt(op_max);
  }
  const double secs = seconds_since(start);
  ok = ok && secs < 120;
  std::string detail = std::to_string(checks) + " checks, max rel err " + fmt(overall) + ", " + fmt(secs, 3) + " s";
  if (!worst.str().empty()) detail += ", over tolerance:" + worst.str();
  return {ok, detail};
}

// ------------------------------------------------------------ criteria 2 - 7

Outcome criterion_weight() {
  const double a = 0.125;
  const double w4 = foreground_weight(0.125, a, WeightingFn::kShifted);
  const double w1 = foreground_weight(0.875, a, WeightingFn::kShifted);
  double sup = 0;
  bool bounded = true;
  for (int e = 1; e <= 15; ++e) {
    const double w = foreground_weight(std::pow(10.0, -e), a, WeightingFn::kShifted);
    bounded = bounded && w <= 8.0;
    sup = std::max(sup, w);
  }
  for (int i = 1; i <= 10000; ++i) bounded = bounded && foreground_weight(i / 10000.0, a, WeightingFn::kShifted) <= 8.0;
  const bool ok = w4 == 4.0 && w1 == 1.0 && bounded && std::abs(sup - 8.0) < 1e-12;
  return {ok, "w(0.125)=" + fmt(w4, 17) + " w(0.875)=" + fmt(w1, 17) + " sup~" + fmt(sup, 15)};
}

Outcome criterion_partition() {
  Rng rng(3);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t b = pick(rng, 1, 3), h = pick(rng, 2, 16);
    const auto eps = oracle::random_tensor({b, h, h, 3}, rng), hat = oracle::random_tensor({b, h, h, 3}, rng);
    std::vector<double> md(b * h * h);
    const double p = rng.uniform();
    for (auto& v : md) v = rng.uniform() < p ? 1.0 : 0.0;
    const auto f = fadl_loss(eps, hat, T({b, h, h, 1}, md), std::vector<double>(b, 1.0));
    long double s = 0;
    for (std::size_t k = 0; k < eps.size(); ++k) s += (eps[k] - hat[k]) * (eps[k] - hat[k]);
    worst = std::max(worst, std::abs(f.fg.item() + f.bg.item() - static_cast<double>(s / eps.size())));
  }
  return {worst < 1e-6, "100 triples, max |fadl - mse| " + fmt(worst)};
}

Outcome criterion_inversion() {
  const auto sched = NoiseSchedule::linear(200, 1e-4, 0.02);
  Rng rng(4);
  double worst = 0;
  for (int t = 1; t <= 200; ++t) {
    const auto z0 = oracle::random_tensor({8, 8, 3}, rng, false, -3, 3), eps = oracle::random_tensor({8, 8, 3}, rng);
    const auto zt = forward_diffuse(z0, t, eps, sched);
    const double ab = sched.alpha_bar(t);
    for (std::size_t i = 0; i < z0.size(); ++i)
      worst = std::max(worst, std::abs((zt[i] - std::sqrt(1 - ab) * eps[i]) / std::sqrt(ab) - z0[i]));
  }
  return {worst < 1e-6, "T=200, max |z0' - z0| " + fmt(worst)};
}

Outcome criterion_quantization() {
  Rng rng(5);
  std::size_t mismatches = 0, total = 0;
  std::ostringstream ks;
  for (std::size_t k : {1u, 2u, 17u, 64u, 128u, 256u}) {
    const std::size_t dim = pick(rng, 1, 8);
    const auto codebook = oracle::random_tensor({k, dim}, rng);
    const auto latent = oracle::random_tensor({10000, dim}, rng, false, -1.2, 1.2);
    const auto q = quantize(latent, codebook);
    for (std::size_t n = 0; n < 10000; ++n) {
      std::size_t best = 0;
      long double best_d = -1;
      for (std::size_t j = 0; j < k; ++j) {
        long double d = 0;
        for (std::size_t c = 0; c < dim; ++c) {
          const long double diff = static_cast<long double>(latent[n * dim + c]) - codebook[j * dim + c];
          d += diff * diff;
        }
        if (best_d < 0 || d < best_d) {
          best_d = d;
          best = j;
        }
      }
      mismatches += q.indices[n] != best;
      ++total;
    }
    ks << (ks.str().empty() ? "" : ",") << k;
  }
  return {mismatches == 0, std::to_string(total) + " vectors over K={" + ks.str() + "}, " + std::to_string(mismatches) +
                               " mismatches"};
}

Outcome criterion_superpixels() {
  Rng rng(6);
  bool partition = true, deterministic = true;
  double worst = 0;
  for (int i = 0; i < 50; ++i) {
    const int h = static_cast<int>(pick(rng, 8, 24)), w = static_cast<int>(pick(rng, 8, 24));
    std::vector<double> feats(static_cast<std::size_t>(h * w * 3));
    for (auto& v : feats) v = rng.uniform(-2, 2);
    Mask fg = Mask::zeros(h, w);
    const double cy = rng.uniform(0, h), cx = rng.uniform(0, w), ry = rng.uniform(2, h), rx = rng.uniform(2, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) fg.at(y, x) = std::pow((y - cy) / ry, 2) + std::pow((x - cx) / rx, 2) < 1.0;
    if (fg.count() == 0) fg.at(h / 2, w / 2) = 1;
    SlicConfig cfg;
    cfg.superpixels = static_cast<int>(pick(rng, 1, 20));
    const auto seed = rng.next_u64();
    const auto a = slic_superpixels(feats, 3, fg, cfg, seed);
    const auto b = slic_superpixels(feats, 3, fg, cfg, seed);
    std::vector<std::size_t> counts(static_cast<std::size_t>(a.count), 0);
    for (std::size_t p = 0; p < a.labels.size(); ++p) {
      const int l = a.labels[p];
      if (fg.fg[p]) {
        if (l < 0 || l >= a.count) partition = false;
        else ++counts[static_cast<std::size_t>(l)];
      } else if (l != -1) {
        partition = false;
      }
    }
    for (std::size_t j = 0; j < counts.size(); ++j) partition = partition && counts[j] > 0 && counts[j] == a.sizes[j];
    const auto pooled = masked_pool(feats, 3, a);
    for (int j = 0; j < a.count; ++j)
      for (int c = 0; c < 3; ++c) {
        long double s = 0;
        for (std::size_t p = 0; p < a.labels.size(); ++p)
          if (a.labels[p] == j) s += feats[p * 3 + static_cast<std::size_t>(c)];
        const double direct = static_cast<double>(s / counts[static_cast<std::size_t>(j)]);
        worst = std::max(worst, std::abs(pooled[static_cast<std::size_t>(j * 3 + c)] - direct));
      }
    deterministic = deterministic && a.labels == b.labels && masked_pool(feats, 3, b) == pooled;
  }
  const bool ok = partition && deterministic && worst < 1e-12;
  return {ok, std::string("50 masks, partition ") + (partition ? "exact" : "BROKEN") + ", pooling err " + fmt(worst) +
                  ", " + (deterministic ? "deterministic" : "NON-DETERMINISTIC")};
}

Outcome criterion_metric_oracles() {
  Rng rng(7);
  double psnr = 0, ssim = 0, frechet = 0, mmd = 0;
  auto image = [&](int h, int w) {
    Image img = Image::zeros(h, w, 3);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform());
    return img;
  };
  for (int i = 0; i < 20; ++i) {
    const int n = 16;
    const auto a = image(n, n), b = image(n, n);
    Mask m = Mask::zeros(n, n);
    const double p = rng.uniform(0.05, 1.0);
    for (auto& v : m.fg) v = rng.uniform() < p;
    if (m.count() == 0) m.fg[0] = 1;
    psnr = std::max(psnr, std::abs(masked_psnr(a, b, m) - oracle::psnr_loop(a, b, m)));
    ssim = std::max(ssim, std::abs(masked_ssim(a, b, m) - oracle::ssim_by_maps(a, b, m)));

    const std::size_t dim = pick(rng, 1, 8);
    std::vector<std::vector<double>> fa(pick(rng, 2, 30), std::vector<double>(dim)),
        fb(pick(rng, 2, 30), std::vector<double>(dim));
    for (auto& v : fa)
      for (auto& x : v) x = rng.normal();
    for (auto& v : fb)
      for (auto& x : v) x = rng.normal() * 1.5 + 0.3;
    frechet = std::max(frechet, std::abs(frechet_proxy(feature_stats(fa), feature_stats(fb)) -
                                         oracle::frechet_jacobi(oracle::moments(fa), oracle::moments(fb))));
    std::vector<std::vector<double>> ma(5, std::vector<double>(48)), mb(i % 2 ? 5 : 7, std::vector<double>(48));
    for (auto& v : ma)
      for (auto& x : v) x = rng.normal();
    for (auto& v : mb)
      for (auto& x : v) x = rng.normal() + 0.2;
    mmd = std::max(mmd, std::abs(mmd_proxy(ma, mb) - oracle::mmd_loops(ma, mb)));
  }
  const bool ok = psnr < 1e-9 && ssim < 1e-6 && frechet < 1e-6 && mmd < 1e-9;
  return {ok, "max err psnr " + fmt(psnr) + ", ssim " + fmt(ssim) + ", frechet " + fmt(frechet) + ", mmd " + fmt(mmd)};
}

// ----------------------------------------------------------- criteria 8 - 11

Outcome criterion_end_to_end() {
  const auto start = Clock::now();
  const auto root = scratch("e2e");
  SynthOptions o;
  o.seed = 2024;
  o.count = 32;
  synth_dataset(o, root / "data");
  RunConfig cfg;
  cfg.seed = 1;
  cfg.data_dir = (root / "data").string();
  cfg.out_dir = (root / "run").string();
  cfg.codec_steps = 500;
  cfg.train_steps = 2000;
  cfg.train_batch = 4;
  cfg.model.schedule.steps = 200;
  cmd_train(cfg);
  const auto totals = column(root / "run" / "train_log.csv", "total");
  bool finite = true;
  for (const char* key : {"fadl_fg", "fadl_bg", "bgrec", "total", "w"})
    for (double v : column(root / "run" / "train_log.csv", key)) finite = finite && std::isfinite(v);
  for (double v : column(root / "run" / "codec_log.csv", "total")) finite = finite && std::isfinite(v);
  double head = 0, tail = 0;
  for (std::size_t i = 0; i < 100 && totals.size() >= 200; ++i) {
    head += totals[i] / 100;
    tail += totals[totals.size() - 1 - i] / 100;
  }
  const double secs = seconds_since(start);
  fs::remove_all(root);
  const double ratio = tail / head;
  const bool ok = totals.size() == 2000 && finite && ratio <= 0.5 && secs < 900;
  return {ok, "head " + fmt(head) + ", tail " + fmt(tail) + ", ratio " + fmt(ratio) + (finite ? ", finite" : ", NON-FINITE") +
                  ", " + fmt(secs, 4) + " s"};
}

Outcome criterion_fadl_trend() {
  const auto start = Clock::now();
  std::vector<double> shifted, uniform;
  std::ostringstream per_seed;
  int wins = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SynthOptions o;
    o.seed = 500 + seed;
    o.count = 32;
    o.small_only = true;
    std::vector<Sample> samples;
    for (int i = 0; i < o.count; ++i) samples.push_back(synth_sample(o, i));
    RunConfig cfg;
    cfg.seed = seed;
    cfg.train_steps = 2000;
    const auto codec = train_stage1(cfg, samples);
    const auto features = extract_features(codec, cfg, samples);
    double mse[2] = {0, 0};
    for (int variant = 0; variant < 2; ++variant) {
      RunConfig run = cfg;
      run.model.loss.weighting = variant == 0 ? WeightingFn::kShifted : WeightingFn::kUniform;
      run.model.loss.alpha = 0.125;
      auto state = fresh_stage2(run);
      train_stage2(run, codec, features, state);
      mse[variant] = foreground_residual_mse(state.params, run.model, codec, features, 9000 + seed, 8);
    }
    shifted.push_back(mse[0]);
    uniform.push_back(mse[1]);
    wins += mse[0] < mse[1];
    per_seed << " seed" << seed << ": " << fmt(mse[0]) << " vs " << fmt(mse[1]) << " (margin "
             << fmt(mse[1] - mse[0]) << ")";
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  const double mp = median(shifted), mu = median(uniform);
  const bool ok = mp < mu && wins >= 2;
  return {ok, "median fg residual shifted " + fmt(mp) + " vs uniform " + fmt(mu) + ", wins " + std::to_string(wins) +
                  "/3;" + per_seed.str() + ", " + fmt(seconds_since(start), 4) + " s"};
}

Outcome criterion_ablation() {
  const auto start = Clock::now();
  SynthOptions o;
  o.seed = 77;
  o.count = 32;
  std::vector<Sample> samples;
  for (int i = 0; i < o.count; ++i) samples.push_back(synth_sample(o, i));
  RunConfig base;
  base.seed = 4;
  base.train_steps = 500;
  const auto codec = train_stage1(base, samples);
  const std::vector<std::pair<std::string, std::vector<std::string>>> sweeps{
      {"loss.weighting", {"shifted", "linear", "log", "reciprocal"}},
      {"loss.alpha", {"0.25", "0.125", "0.0625"}},
      {"fafim.patch", {"2", "4", "8"}},
  };
  bool ok = true;
  std::vector<AblationRow> all;
  for (const auto& [key, values] : sweeps) {
    const auto rows = run_ablation(base, codec, samples, key, values);
    ok = ok && rows.size() == values.size();
    for (const auto& r : rows)
      ok = ok && std::isfinite(r.loss_head) && std::isfinite(r.loss_tail) && std::isfinite(r.fg_residual);
    all.insert(all.end(), rows.begin(), rows.end());
  }
  std::cout << ablation_table(all);
  return {ok, std::to_string(all.size()) + " runs of " + std::to_string(base.train_steps) + " steps, " +
                  fmt(seconds_since(start), 4) + " s"};
}

Outcome criterion_persistence() {
  const auto root = scratch("persist");
  SynthOptions o;
  o.seed = 31;
  o.count = 8;
  synth_dataset(o, root / "data");
  RunConfig cfg;
  cfg.seed = 6;
  cfg.data_dir = (root / "data").string();
  cfg.out_dir = (root / "full").string();
  cfg.codec_steps = 100;
  cfg.train_steps = 200;
  cfg.checkpoint_every = 100;
  cmd_train(cfg);

  const auto original = slurp(root / "full" / "model.camf");
  const auto ckpt = load_checkpoint(root / "full" / "model.camf");
  save_checkpoint(root / "copy.camf", ckpt);
  const auto bytes = encode_checkpoint(ckpt);
  const bool round_trip = slurp(root / "copy.camf") == original && std::string(bytes.begin(), bytes.end()) == original &&
                          load_checkpoint(root / "copy.camf") == ckpt;

  auto part = cfg;
  part.out_dir = (root / "part").string();
  TrainRunOptions stop;
  stop.stop_after = 100;
  cmd_train(part, stop);
  part.resume = (root / "part" / "model_step100.camf").string();
  cmd_train(part);
  const bool resumed = slurp(root / "part" / "train_log.csv") == slurp(root / "full" / "train_log.csv");

  const auto data = load_dataset(root / "data");
  const auto& s = data.samples[3];
  const auto img = root / "data" / (s.name + ".png"), mask = root / "data" / (s.name + "_mask.png");
  cmd_generate(root / "full" / "model.camf", img, mask, 42, root / "g1.png");
  cmd_generate(root / "full" / "model.camf", img, mask, 42, root / "g2.png");
  cmd_generate(root / "full" / "model.camf", img, mask, 43, root / "g3.png");
  const bool generation = slurp(root / "g1.png") == slurp(root / "g2.png");
  const bool seed_matters = slurp(root / "g1.png") != slurp(root / "g3.png");
  fs::remove_all(root);
  return {round_trip && resumed && generation,
          std::string("checkpoint round trip ") + (round_trip ? "exact" : "DIFFERS") + ", resumed log " +
              (resumed ? "identical" : "DIFFERS") + ", generation " + (generation ? "deterministic" : "DIFFERS") +
              (seed_matters ? "" : " (warning: seed has no effect)")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"camogen acceptance checks"};
  int only = 0;
  app.add_option("--criterion", only, "Run a single criterion (1-11)")->check(CLI::Range(1, 11));
  CLI11_PARSE(app, argc, argv);

  const std::map<int, std::function<Outcome()>> criteria{
      {1, criterion_gradients},   {2, criterion_weight},         {3, criterion_partition},
      {4, criterion_inversion},   {5, criterion_quantization},   {6, criterion_superpixels},
      {7, criterion_metric_oracles}, {8, criterion_end_to_end},  {9, criterion_fadl_trend},
      {10, criterion_ablation},   {11, criterion_persistence},
  };
  bool all = true;
  for (const auto& [id, run] : criteria) {
    if (only != 0 && id != only) continue;
    Outcome out;
    try {
      out = run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "criterion " << id << ": " << (out.pass ? "PASS" : "FAIL") << "  " << out.detail << std::endl;
    all = all && out.pass;
  }
  return all ? 0 : 1;
}
