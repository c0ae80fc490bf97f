#include "touchsdf/sdf_decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "touchsdf/rng.hpp"

namespace touchsdf::sdf {

using ad::Graph;
using ad::Tensor;
using ad::Var;

std::vector<double> positional_encode(const Vec3& x, const PosEnc& enc) {
  std::vector<double> out;
  out.reserve(enc.dim());
  for (int a = 0; a < 3; ++a) {
    const double v = x[a];
    if (enc.include_input) out.push_back(v);
    double freq = std::numbers::pi * enc.scale;
    for (std::size_t k = 0; k < enc.L; ++k, freq *= 2.0) {
      out.push_back(std::sin(freq * v));
      out.push_back(std::cos(freq * v));
    }
  }
  return out;
}

void DecoderConfig::validate() const {
  if (enc.dim() == 0) throw ConfigError("positional encoding has zero width");
  if (!(enc.scale > 0.0)) throw ConfigError("encoding scale must be > 0");
  if (latent_dim == 0) throw ConfigError("latent_dim must be >= 1");
  if (hidden_layers == 0 || width == 0) throw ConfigError("decoder needs hidden layers of positive width");
  if (skip_layer == 1 || skip_layer > hidden_layers) throw ConfigError("skip_layer must be 0 or in [2, hidden_layers]");
  if (!(delta > 0.0)) throw ConfigError("delta must be > 0");
}

void TrainConfigSdf::validate() const {
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
  if (!(lr_theta >= 0.0) || !(lr_z >= 0.0)) throw ConfigError("learning rates must be >= 0");
  if (shapes_per_batch == 0 || points_per_shape == 0) throw ConfigError("batch sizes must be >= 1");
}

namespace {

std::string layer_key(std::size_t k, const char* what) { return "layer" + std::to_string(k) + "." + what; }

std::size_t layer_input(const DecoderConfig& c, std::size_t k) {
  if (k == 0) return c.input_dim();
  if (k == c.hidden_layers) return c.width;
  return c.width + (k + 1 == c.skip_layer ? c.input_dim() : 0);
}

std::vector<float> latent_row(const Tensor<float>& table, std::size_t row) {
  const std::size_t d = table.cols();
  return std::vector<float>(table.data.begin() + row * d, table.data.begin() + (row + 1) * d);
}

bool sample_less(const SdfSample& a, const SdfSample& b) {
  if (a.x.x() != b.x.x()) return a.x.x() < b.x.x();
  if (a.x.y() != b.x.y()) return a.x.y() < b.x.y();
  if (a.x.z() != b.x.z()) return a.x.z() < b.x.z();
  return a.s < b.s;
}

std::vector<std::size_t> pick(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (k >= n) return idx;
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.index(n - i)]);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<Tensor<float>*> theta_ptrs(std::vector<std::pair<std::string, Tensor<float>>>& entries) {
  std::vector<Tensor<float>*> out;
  for (auto& [name, t] : entries) out.push_back(&t);
  return out;
}

std::vector<const Tensor<float>*> grads_of(const Graph<float>& g, const std::vector<Var>& vars) {
  std::vector<const Tensor<float>*> out;
  for (Var v : vars) out.push_back(&g.grad(v));
  return out;
}

}  // namespace

DecoderParams DecoderParams::init(const DecoderConfig& config, std::uint64_t seed) {
  config.validate();
  DecoderParams p;
  p.config = config;
  Rng rng(seed, 0x6465636f6465);
  for (std::size_t k = 0; k <= config.hidden_layers; ++k) {
    const std::size_t in = layer_input(config, k);
    const std::size_t out = k == config.hidden_layers ? 1 : config.width;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Tensor<float> w({in, out});
    Tensor<float> b({out});
    for (auto& v : w.data) v = static_cast<float>(rng.uniform(-bound, bound));
    for (auto& v : b.data) v = static_cast<float>(rng.uniform(-bound, bound));
    p.params.add(layer_key(k, "w"), std::move(w));
    p.params.add(layer_key(k, "b"), std::move(b));
  }
  return p;
}

void DecoderParams::save(const std::filesystem::path& path, const Sidecar& extra) const {
  ad::save_parameters(path, params);
  Sidecar meta = extra;
  meta["kind"] = "decoder";
  meta["L"] = std::to_string(config.enc.L);
  meta["include_input"] = config.enc.include_input ? "1" : "0";
  meta["enc_scale"] = format_double(config.enc.scale);
  meta["latent_dim"] = std::to_string(config.latent_dim);
  meta["hidden_layers"] = std::to_string(config.hidden_layers);
  meta["width"] = std::to_string(config.width);
  meta["skip_layer"] = std::to_string(config.skip_layer);
  meta["delta"] = format_double(config.delta);
  meta["clamp"] = config.clamp ? "1" : "0";
  save_sidecar(path.string() + ".meta", meta);
}

DecoderParams DecoderParams::load(const std::filesystem::path& path, Sidecar* meta_out) {
  const Sidecar meta = load_sidecar(path.string() + ".meta");
  if (sidecar_get(meta, "kind") != "decoder") throw ParseError(path.string() + " is not a decoder checkpoint");
  DecoderParams p;
  auto& c = p.config;
  c.enc.L = std::stoul(sidecar_get(meta, "L"));
  c.enc.include_input = sidecar_get(meta, "include_input") == "1";
  c.enc.scale = std::stod(sidecar_get(meta, "enc_scale"));
  c.latent_dim = std::stoul(sidecar_get(meta, "latent_dim"));
  c.hidden_layers = std::stoul(sidecar_get(meta, "hidden_layers"));
  c.width = std::stoul(sidecar_get(meta, "width"));
  c.skip_layer = std::stoul(sidecar_get(meta, "skip_layer"));
  c.delta = std::stod(sidecar_get(meta, "delta"));
  c.clamp = sidecar_get(meta, "clamp") == "1";
  c.validate();
  p.params = ad::load_parameters(path);
  if (p.params.size() != 2 * (c.hidden_layers + 1)) throw ShapeMismatch("decoder checkpoint layer count mismatch");
  for (std::size_t k = 0; k <= c.hidden_layers; ++k) {
    const ad::Shape expect{layer_input(c, k), k == c.hidden_layers ? 1 : c.width};
    if (p.params.get(layer_key(k, "w")).shape != expect) {
      throw ShapeMismatch("decoder checkpoint shape mismatch at " + layer_key(k, "w"));
    }
  }
  if (meta_out) *meta_out = meta;
  return p;
}

void save_latents(const std::filesystem::path& path, const std::vector<LatentCode>& latents) {
  ad::ParameterSet<float> set;
  for (const auto& l : latents) set.add(l.shape_id, Tensor<float>({l.z.size()}, l.z));
  ad::save_parameters(path, set);
}

std::vector<LatentCode> load_latents(const std::filesystem::path& path) {
  const auto set = ad::load_parameters(path);
  std::vector<LatentCode> out;
  for (const auto& [name, t] : set.entries()) out.push_back({t.data, name});
  return out;
}

template <typename T>
Batch<T> make_batch(const DecoderConfig& config, const std::vector<SdfSample>& samples,
                    const std::vector<std::size_t>& rows) {
  if (rows.size() != samples.size()) throw ShapeMismatch("one latent row per sample required");
  const std::size_t e = config.enc.dim();
  Batch<T> b;
  b.encoded = Tensor<T>({samples.size(), e});
  b.targets = Tensor<T>({samples.size(), 1});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto enc = positional_encode(samples[i].x, config.enc);
    for (std::size_t k = 0; k < e; ++k) b.encoded.data[i * e + k] = static_cast<T>(enc[k]);
    b.targets.data[i] = static_cast<T>(samples[i].s);
  }
  b.rows = rows;
  b.shapes = rows;
  std::sort(b.shapes.begin(), b.shapes.end());
  b.shapes.erase(std::unique(b.shapes.begin(), b.shapes.end()), b.shapes.end());
  return b;
}

template <typename T>
LossGraph<T> build_loss(Graph<T>& g, const DecoderConfig& config, std::vector<std::pair<std::string, Tensor<T>>>& theta,
                        bool train_theta, Tensor<T>* latent_table, bool train_z, const Batch<T>& batch, double alpha,
                        double data_weight) {
  if (theta.size() != 2 * (config.hidden_layers + 1)) throw ShapeMismatch("decoder parameter count mismatch");
  if (latent_table->rank() != 2 || latent_table->cols() != config.latent_dim) {
    throw ShapeMismatch("latent table must be [shapes, " + std::to_string(config.latent_dim) + "]");
  }
  if (batch.encoded.cols() != config.enc.dim()) throw ShapeMismatch("encoded input width mismatch");
  LossGraph<T> out;
  const Var x = g.constant(batch.encoded);
  out.latents = g.parameter(latent_table, train_z);
  const Var input = g.concat(x, g.gather(out.latents, batch.rows));
  Var h = input;
  for (std::size_t k = 0; k <= config.hidden_layers; ++k) {
    const Var w = g.parameter(&theta[2 * k].second, train_theta);
    const Var b = g.parameter(&theta[2 * k + 1].second, train_theta);
    out.theta.push_back(w);
    out.theta.push_back(b);
    if (k > 0 && k + 1 == config.skip_layer) h = g.concat(h, input);
    h = g.add(g.matmul(h, w), b);
    if (k < config.hidden_layers) h = g.relu(h);
  }
  Tensor<T> target = batch.targets;
  if (config.clamp) {
    h = g.clamp(h, -config.delta, config.delta);
    for (auto& v : target.data) v = std::clamp<T>(v, T(-config.delta), T(config.delta));
  }
  out.prediction = h;
  out.data_term = g.l1_loss(h, g.constant(std::move(target)));
  out.reg_term = g.sq_norm(g.gather(out.latents, batch.shapes));
  out.loss = g.add(g.scale(out.data_term, data_weight), g.scale(out.reg_term, alpha));
  return out;
}

template Batch<float> make_batch<float>(const DecoderConfig&, const std::vector<SdfSample>&,
                                        const std::vector<std::size_t>&);
template Batch<double> make_batch<double>(const DecoderConfig&, const std::vector<SdfSample>&,
                                          const std::vector<std::size_t>&);
template LossGraph<float> build_loss<float>(Graph<float>&, const DecoderConfig&,
                                            std::vector<std::pair<std::string, Tensor<float>>>&, bool, Tensor<float>*,
                                            bool, const Batch<float>&, double, double);
template LossGraph<double> build_loss<double>(Graph<double>&, const DecoderConfig&,
                                              std::vector<std::pair<std::string, Tensor<double>>>&, bool,
                                              Tensor<double>*, bool, const Batch<double>&, double, double);

TrainResult train_decoder(const std::vector<ShapeSamples>& shapes, const DecoderConfig& config,
                          const TrainConfigSdf& cfg) {
  config.validate();
  cfg.validate();
  if (shapes.empty()) throw EmptyDataset("no shapes to train on");
  for (const auto& s : shapes) {
    if (s.samples.empty()) throw EmptyDataset("shape " + s.shape_id + " has no samples");
  }

  TrainResult result{DecoderParams::init(config, cfg.seed), {}, {}};
  Tensor<float> table({shapes.size(), config.latent_dim});
  Rng latent_rng(cfg.seed, 0x6c6174656e74);
  for (auto& v : table.data) v = static_cast<float>(latent_rng.normal(0.0, 0.01));

  ad::AdamState<float> adam_theta, adam_z;
  Rng rng(cfg.seed, 0x747261696e);
  std::vector<std::size_t> order(shapes.size());
  std::iota(order.begin(), order.end(), 0);
  auto& theta = result.params.params.entries();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double decay = cfg.decay_every ? std::pow(0.5, static_cast<double>(epoch / cfg.decay_every)) : 1.0;
    adam_theta.hyper.lr = cfg.lr_theta * decay;
    adam_z.hyper.lr = cfg.lr_z * decay;
    std::shuffle(order.begin(), order.end(), rng.engine());
    double total = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.shapes_per_batch) {
      const std::size_t end = std::min(order.size(), start + cfg.shapes_per_batch);
      std::vector<SdfSample> samples;
      std::vector<std::size_t> rows;
      for (std::size_t i = start; i < end; ++i) {
        const auto& data = shapes[order[i]].samples;
        for (std::size_t k = 0; k < cfg.points_per_shape; ++k) {
          samples.push_back(data[rng.index(data.size())]);
          rows.push_back(order[i]);
        }
      }
      const auto batch = make_batch<float>(config, samples, rows);
      Graph<float> g;
      const auto lg = build_loss(g, config, theta, true, &table, true, batch, cfg.alpha, cfg.data_weight);
      g.backward(lg.loss);
      adam_step(theta_ptrs(theta), grads_of(g, lg.theta), adam_theta);
      adam_step<float>({&table}, {&g.grad(lg.latents)}, adam_z);
      total += g.value(lg.loss).item();
      ++steps;
    }
    result.loss_history.push_back(total / steps);
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) result.latents.push_back({latent_row(table, i), shapes[i].shape_id});
  return result;
}

std::vector<double> decode(const DecoderParams& params, const std::vector<float>& z, const std::vector<Vec3>& xs) {
  const auto& c = params.config;
  if (z.size() != c.latent_dim) throw ShapeMismatch("latent has " + std::to_string(z.size()) + " entries, expected " +
                                                    std::to_string(c.latent_dim));
  auto theta = params.params.entries();
  Tensor<float> table({1, c.latent_dim}, z);
  std::vector<double> out;
  out.reserve(xs.size());
  constexpr std::size_t kChunk = 16384;
  for (std::size_t start = 0; start < xs.size(); start += kChunk) {
    const std::size_t end = std::min(xs.size(), start + kChunk);
    std::vector<SdfSample> samples;
    for (std::size_t i = start; i < end; ++i) samples.push_back({xs[i], 0.0});
    const auto batch = make_batch<float>(c, samples, std::vector<std::size_t>(samples.size(), 0));
    Graph<float> g;
    const auto lg = build_loss(g, c, theta, false, &table, false, batch, 0.0);
    for (float v : g.value(lg.prediction).data) out.push_back(v);
  }
  return out;
}

double decode(const DecoderParams& params, const std::vector<float>& z, const Vec3& x) {
  return decode(params, z, std::vector<Vec3>{x}).front();
}

double observation_loss(const DecoderParams& params, const std::vector<float>& z, const Observation& obs,
                        double alpha) {
  if (obs.samples.empty()) throw EmptyObservation("observation has no samples");
  const auto& c = params.config;
  if (z.size() != c.latent_dim) throw ShapeMismatch("latent size mismatch");
  auto theta = params.params.entries();
  Tensor<float> table({1, c.latent_dim}, z);
  const auto batch = make_batch<float>(c, obs.samples, std::vector<std::size_t>(obs.samples.size(), 0));
  Graph<float> g;
  const auto lg = build_loss(g, c, theta, false, &table, false, batch, alpha);
  return g.value(lg.loss).item();
}

InferResult infer_latent(const DecoderParams& params, const Observation& obs, const InferConfig& cfg) {
  if (obs.samples.empty()) throw EmptyObservation("observation has no samples");
  const auto& c = params.config;
  std::vector<SdfSample> samples = obs.samples;
  std::sort(samples.begin(), samples.end(), sample_less);

  Rng init_rng(cfg.seed, 0x696e666572);
  Tensor<float> table({1, c.latent_dim});
  for (auto& v : table.data) v = static_cast<float>(init_rng.normal(0.0, cfg.init_std));

  auto theta = params.params.entries();
  const bool full = cfg.batch == 0 || samples.size() <= cfg.batch;
  const auto full_batch = make_batch<float>(c, samples, std::vector<std::size_t>(samples.size(), 0));
  Rng batch_rng(cfg.seed, 0x6261746368);
  ad::AdamState<float> adam;
  adam.hyper.lr = cfg.lr;

  InferResult result;
  result.best_loss = std::numeric_limits<double>::infinity();
  auto full_loss = [&]() {
    Graph<float> g;
    return static_cast<double>(g.value(build_loss(g, c, theta, false, &table, false, full_batch, cfg.alpha).loss).item());
  };
  auto consider = [&](double loss) {
    if (loss < result.best_loss) {
      result.best_loss = loss;
      result.z.z = table.data;
    }
  };
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Graph<float> g;
    LossGraph<float> lg;
    if (full) {
      lg = build_loss(g, c, theta, false, &table, true, full_batch, cfg.alpha);
    } else {
      std::vector<SdfSample> sub;
      for (auto i : pick(samples.size(), cfg.batch, batch_rng)) sub.push_back(samples[i]);
      const auto batch = make_batch<float>(c, sub, std::vector<std::size_t>(sub.size(), 0));
      lg = build_loss(g, c, theta, false, &table, true, batch, cfg.alpha);
    }
    const double loss = full ? g.value(lg.loss).item() : full_loss();
    result.loss_history.push_back(loss);
    consider(loss);
    g.backward(lg.loss);
    adam_step<float>({&table}, {&g.grad(lg.latents)}, adam);
  }
  consider(full_loss());
  return result;
}

FinetuneResult finetune_pivotal(const DecoderParams& params, const LatentCode& z, const Observation& obs,
                                const FinetuneConfig& cfg) {
  if (obs.samples.empty()) throw EmptyObservation("observation has no samples");
  const auto& c = params.config;
  if (z.z.size() != c.latent_dim) throw ShapeMismatch("latent size mismatch");
  std::vector<SdfSample> samples = obs.samples;
  std::sort(samples.begin(), samples.end(), sample_less);

  FinetuneResult result{params, {}, 0.0, 0.0};
  DecoderParams work = params;
  auto& theta = work.params.entries();
  Tensor<float> table({1, c.latent_dim}, z.z);
  const bool full = cfg.batch == 0 || samples.size() <= cfg.batch;
  const auto full_batch = make_batch<float>(c, samples, std::vector<std::size_t>(samples.size(), 0));
  Rng batch_rng(cfg.seed, 0x66696e65);
  ad::AdamState<float> adam;
  adam.hyper.lr = cfg.lr;

  // data term only: z is fixed, so the regularizer is a constant
  auto full_loss = [&]() {
    Graph<float> g;
    return static_cast<double>(g.value(build_loss(g, c, theta, false, &table, false, full_batch, 0.0).loss).item());
  };
  double best = std::numeric_limits<double>::infinity();
  auto consider = [&](double loss) {
    if (result.loss_history.empty()) result.loss_before = loss;
    result.loss_history.push_back(loss);
    if (loss < best) {
      best = loss;
      result.params.params = work.params;
    }
  };
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Graph<float> g;
    LossGraph<float> lg;
    if (full) {
      lg = build_loss(g, c, theta, true, &table, false, full_batch, 0.0);
    } else {
      std::vector<SdfSample> sub;
      for (auto i : pick(samples.size(), cfg.batch, batch_rng)) sub.push_back(samples[i]);
      lg = build_loss(g, c, theta, true, &table, false,
                      make_batch<float>(c, sub, std::vector<std::size_t>(sub.size(), 0)), 0.0);
    }
    consider(full ? g.value(lg.loss).item() : full_loss());
    g.backward(lg.loss);
    adam_step(theta_ptrs(theta), grads_of(g, lg.theta), adam);
  }
  if (cfg.steps == 0) {
    result.loss_before = result.loss_after = full_loss();
    result.loss_history.push_back(result.loss_before);
    return result;
  }
  consider(full_loss());
  result.loss_after = best;
  return result;
}

iso::BatchField reconstruct_sdf(const DecoderParams& params, const LatentCode& z) {
  return [params, z](const std::vector<Vec3>& xs) { return decode(params, z.z, xs); };
}

}  // namespace touchsdf::sdf
