#include "touchsdf/chart.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "touchsdf/checkpoint.hpp"
#include "touchsdf/rng.hpp"

namespace touchsdf::chart {

using ad::Graph;
using ad::Tensor;
using ad::Var;

BaseChart BaseChart::make(double footprint_radius) {
  if (!(footprint_radius > 0.0)) throw InvalidArgument("footprint_radius must be > 0");
  BaseChart base;
  const double step = 2.0 * footprint_radius / (kGridSide - 1);
  for (std::size_t r = 0; r < kGridSide; ++r) {
    for (std::size_t c = 0; c < kGridSide; ++c) {
      base.vertices[r * kGridSide + c] = Vec3(-footprint_radius + c * step, -footprint_radius + r * step, 0.0);
    }
  }
  for (std::uint32_t r = 0; r + 1 < kGridSide; ++r) {
    for (std::uint32_t c = 0; c + 1 < kGridSide; ++c) {
      const std::uint32_t i = r * kGridSide + c;
      const std::uint32_t right = i + 1, up = i + kGridSide, diag = i + kGridSide + 1;
      base.faces.push_back({i, right, diag});
      base.faces.push_back({i, diag, up});
    }
  }
  return base;
}

TriangleMesh BaseChart::mesh() const {
  TriangleMesh m;
  m.vertices.assign(vertices.begin(), vertices.end());
  m.faces = faces;
  return m;
}

void ChartConfig::validate() const {
  if (!(footprint_radius > 0.0)) throw ConfigError("chart footprint_radius must be > 0");
  if (input_resolution < 2) throw ConfigError("chart input_resolution must be >= 2");
  if (hidden.empty()) throw ConfigError("chart needs at least one hidden layer");
  for (auto w : hidden)
    if (w == 0) throw ConfigError("chart hidden widths must be >= 1");
  if (!(displacement_scale > 0.0)) throw ConfigError("chart displacement_scale must be > 0");
  if (n_surface == 0) throw ConfigError("chart n_surface must be >= 1");
  if (m_extra > n_surface) throw ConfigError("chart m_extra must not exceed n_surface");
  if (!(eps > 0.0)) throw ConfigError("chart eps must be > 0");
}

namespace {

std::string layer_key(std::size_t k, const char* what) { return "layer" + std::to_string(k) + "." + what; }

std::vector<std::size_t> widths(const ChartConfig& cfg) {
  std::vector<std::size_t> w{static_cast<std::size_t>(cfg.input_resolution) * cfg.input_resolution};
  w.insert(w.end(), cfg.hidden.begin(), cfg.hidden.end());
  w.push_back(kChartOutputs);
  return w;
}

// Encoder graph on a [B, res*res] input; returns the [B, 75] displacements.
template <typename T>
Var encoder(Graph<T>& g, Var x, std::vector<std::pair<std::string, Tensor<T>>>& params, double out_scale,
            std::vector<Var>* leaves) {
  const std::size_t layers = params.size() / 2;
  Var h = x;
  for (std::size_t k = 0; k < layers; ++k) {
    const Var w = g.parameter(&params[2 * k].second, leaves != nullptr);
    const Var b = g.parameter(&params[2 * k + 1].second, leaves != nullptr);
    if (leaves) {
      leaves->push_back(w);
      leaves->push_back(b);
    }
    h = g.add(g.matmul(h, w), b);
    h = k + 1 < layers ? g.relu(h) : g.scale(g.tanh(h), out_scale);
  }
  return h;
}

Tensor<float> stack_images(const std::vector<const touch::TactileImage*>& images, std::uint32_t res) {
  Tensor<float> x({images.size(), static_cast<std::size_t>(res) * res});
  for (std::size_t b = 0; b < images.size(); ++b) {
    const auto row = downsample(*images[b], res);
    std::copy(row.begin(), row.end(), x.data.begin() + b * row.size());
  }
  return x;
}

Tensor<float> displacements(const ChartModel& model, const Tensor<float>& x) {
  auto params = model.params.entries();  // local copy: forward never writes parameters
  Graph<float> g;
  const Var out = encoder(g, g.constant(x), params, model.config.max_displacement(), nullptr);
  return g.value(out);
}

TriangleMesh deformed(const BaseChart& base, const float* disp) {
  TriangleMesh m = base.mesh();
  for (std::size_t v = 0; v < kChartVertices; ++v) {
    m.vertices[v] += Vec3(disp[3 * v], disp[3 * v + 1], disp[3 * v + 2]);
  }
  return m;
}

std::vector<Vec3> to_sensor(const touch::TouchRecord& rec) {
  const Pose inv = rec.pose.inverse();
  std::vector<Vec3> out;
  out.reserve(rec.local_cloud.size());
  for (const auto& p : rec.local_cloud.points) out.push_back(inv.apply(p));
  return out;
}

struct NearestResult {
  std::vector<std::size_t> idx;
  std::vector<double> d2;
};

NearestResult nearest(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
  NearestResult r{std::vector<std::size_t>(from.size()), std::vector<double>(from.size())};
  for (std::size_t i = 0; i < from.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t j = 0; j < to.size(); ++j) {
      const double d = (from[i] - to[j]).squaredNorm();
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    r.idx[i] = arg;
    r.d2[i] = best;
  }
  return r;
}

template <typename T>
std::vector<Vec3> chart_points(const BaseChart& base, const T* disp, const std::vector<ChartSample>& samples) {
  std::array<Vec3, kChartVertices> v;
  for (std::size_t k = 0; k < kChartVertices; ++k) {
    v[k] = base.vertices[k] + Vec3(double(disp[3 * k]), double(disp[3 * k + 1]), double(disp[3 * k + 2]));
  }
  std::vector<Vec3> pts;
  pts.reserve(samples.size());
  for (const auto& s : samples) {
    const auto& f = base.faces[s.face];
    pts.push_back(s.w0 * v[f[0]] + s.w1 * v[f[1]] + s.w2 * v[f[2]]);
  }
  return pts;
}

}  // namespace

ChartModel ChartModel::init(const ChartConfig& config, std::uint64_t seed) {
  config.validate();
  ChartModel model;
  model.config = config;
  const auto w = widths(config);
  Rng rng(seed, 0x6368617274);
  for (std::size_t k = 0; k + 1 < w.size(); ++k) {
    Tensor<float> weight({w[k], w[k + 1]});
    const bool last = k + 2 == w.size();
    if (!last) {
      const double bound = std::sqrt(6.0 / static_cast<double>(w[k]));
      for (auto& x : weight.data) x = static_cast<float>(rng.uniform(-bound, bound));
    }
    model.params.add(layer_key(k, "w"), std::move(weight));
    model.params.add(layer_key(k, "b"), Tensor<float>({w[k + 1]}));
  }
  return model;
}

void ChartModel::save(const std::filesystem::path& path) const {
  ad::save_parameters(path, params);
  Sidecar meta;
  meta["kind"] = "chart";
  meta["footprint_radius"] = format_double(config.footprint_radius);
  meta["input_resolution"] = std::to_string(config.input_resolution);
  std::string hidden;
  for (std::size_t i = 0; i < config.hidden.size(); ++i) hidden += (i ? "," : "") + std::to_string(config.hidden[i]);
  meta["hidden"] = hidden;
  meta["displacement_scale"] = format_double(config.displacement_scale);
  meta["n_surface"] = std::to_string(config.n_surface);
  meta["m_extra"] = std::to_string(config.m_extra);
  meta["eps"] = format_double(config.eps);
  save_sidecar(path.string() + ".meta", meta);
}

ChartModel ChartModel::load(const std::filesystem::path& path) {
  const Sidecar meta = load_sidecar(path.string() + ".meta");
  if (sidecar_get(meta, "kind") != "chart") throw ParseError(path.string() + " is not a chart checkpoint");
  ChartModel model;
  auto& c = model.config;
  c.footprint_radius = std::stod(sidecar_get(meta, "footprint_radius"));
  c.input_resolution = static_cast<std::uint32_t>(std::stoul(sidecar_get(meta, "input_resolution")));
  c.hidden.clear();
  std::string hidden = sidecar_get(meta, "hidden");
  for (std::size_t pos = 0; pos < hidden.size();) {
    const std::size_t next = std::min(hidden.find(',', pos), hidden.size());
    c.hidden.push_back(std::stoul(hidden.substr(pos, next - pos)));
    pos = next + 1;
  }
  c.displacement_scale = std::stod(sidecar_get(meta, "displacement_scale"));
  c.n_surface = std::stoul(sidecar_get(meta, "n_surface"));
  c.m_extra = std::stoul(sidecar_get(meta, "m_extra"));
  c.eps = std::stod(sidecar_get(meta, "eps"));
  c.validate();
  model.params = ad::load_parameters(path);
  const auto w = widths(c);
  if (model.params.size() != 2 * (w.size() - 1)) throw ShapeMismatch("chart checkpoint layer count mismatch");
  for (std::size_t k = 0; k + 1 < w.size(); ++k) {
    if (model.params.get(layer_key(k, "w")).shape != ad::Shape{w[k], w[k + 1]}) {
      throw ShapeMismatch("chart checkpoint shape mismatch at " + layer_key(k, "w"));
    }
  }
  return model;
}

std::vector<float> downsample(const touch::TactileImage& image, std::uint32_t res) {
  const std::uint32_t n = image.size;
  if (n == 0 || image.depth.size() != static_cast<std::size_t>(n) * n) throw ShapeMismatch("malformed tactile image");
  std::vector<float> out(static_cast<std::size_t>(res) * res);
  const double scale = static_cast<double>(n) / res;
  auto coord = [&](std::uint32_t i, std::uint32_t& lo, std::uint32_t& hi, double& t) {
    const double s = std::clamp((i + 0.5) * scale - 0.5, 0.0, static_cast<double>(n - 1));
    lo = static_cast<std::uint32_t>(std::floor(s));
    hi = std::min(lo + 1, n - 1);
    t = s - lo;
  };
  for (std::uint32_t r = 0; r < res; ++r) {
    std::uint32_t r0, r1;
    double tr;
    coord(r, r0, r1, tr);
    for (std::uint32_t c = 0; c < res; ++c) {
      std::uint32_t c0, c1;
      double tc;
      coord(c, c0, c1, tc);
      const double top = (1 - tc) * image.at(r0, c0) + tc * image.at(r0, c1);
      const double bottom = (1 - tc) * image.at(r1, c0) + tc * image.at(r1, c1);
      out[r * res + c] = static_cast<float>((1 - tr) * top + tr * bottom);
    }
  }
  return out;
}

std::vector<TriangleMesh> predict_charts(const ChartModel& model, const std::vector<touch::TactileImage>& images) {
  if (images.empty()) return {};
  std::vector<const touch::TactileImage*> ptrs;
  for (const auto& im : images) ptrs.push_back(&im);
  const auto disp = displacements(model, stack_images(ptrs, model.config.input_resolution));
  const BaseChart base = BaseChart::make(model.config.footprint_radius);
  std::vector<TriangleMesh> out;
  for (std::size_t b = 0; b < images.size(); ++b) out.push_back(deformed(base, disp.data.data() + b * kChartOutputs));
  return out;
}

TriangleMesh predict_chart(const ChartModel& model, const touch::TactileImage& image) {
  return predict_charts(model, {image}).front();
}

TriangleMesh chart_to_world(const TriangleMesh& chart, const Pose& pose) { return transform(chart, pose); }

void AugmentedCloud::append(const AugmentedCloud& other) {
  points.insert(points.end(), other.points.begin(), other.points.end());
  labels.insert(labels.end(), other.labels.begin(), other.labels.end());
}

AugmentedCloud sample_chart_cloud(const TriangleMesh& chart, std::size_t n, std::size_t m_extra, double eps,
                                  std::uint64_t seed, const Vec3* toward) {
  if (n == 0) throw InvalidArgument("sample_chart_cloud needs n >= 1");
  if (m_extra > n) throw InvalidArgument("m_extra must not exceed n");
  if (!(eps > 0.0)) throw InvalidArgument("eps must be > 0");
  const PointCloud surface = sample_surface(chart, n, seed);
  AugmentedCloud out;
  out.points = surface.points;
  out.labels.assign(n, 0.0);
  for (std::size_t i = 0; i < m_extra; ++i) {
    Vec3 normal = surface.normals[i];
    if (toward && normal.dot(*toward) < 0.0) normal = -normal;
    out.points.push_back(surface.points[i] + eps * normal);
    out.labels.push_back(eps);
    out.points.push_back(surface.points[i] - eps * normal);
    out.labels.push_back(-eps);
  }
  return out;
}

std::vector<ChartSample> draw_chart_samples(std::size_t n, std::uint64_t seed) {
  // all base faces have equal area, so uniform face choice is area-weighted
  Rng rng(seed, 0x73616d70);
  std::vector<ChartSample> out(n);
  for (auto& s : out) {
    s.face = static_cast<std::uint32_t>(rng.index(kChartFaces));
    const double r1 = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    s.w0 = 1.0 - r1;
    s.w1 = r1 * (1.0 - r2);
    s.w2 = r1 * r2;
  }
  return out;
}

template <typename T>
ad::CustomOp<T> chart_chamfer_op(const BaseChart& base, std::vector<std::vector<Vec3>> targets,
                                 std::vector<std::vector<ChartSample>> samples) {
  if (targets.size() != samples.size()) throw ShapeMismatch("chart chamfer: one sample set per target");
  for (const auto& t : targets)
    if (t.empty()) throw EmptyCloud("chart chamfer target is empty");
  struct Data {
    BaseChart base;
    std::vector<std::vector<Vec3>> targets;
    std::vector<std::vector<ChartSample>> samples;
  };
  auto data = std::make_shared<const Data>(Data{base, std::move(targets), std::move(samples)});
  auto check = [data](const Tensor<T>& d) {
    if (d.rank() != 2 || d.shape[0] != data->targets.size() || d.shape[1] != kChartOutputs) {
      throw ShapeMismatch("chart chamfer expects [" + std::to_string(data->targets.size()) + ",75], got " +
                          ad::shape_str(d.shape));
    }
  };

  ad::CustomOp<T> op;
  op.name = "chart_chamfer";
  op.forward = [data, check](const typename ad::CustomOp<T>::Inputs& in) {
    const Tensor<T>& d = *in[0];
    check(d);
    double total = 0.0;
    for (std::size_t b = 0; b < data->targets.size(); ++b) {
      const auto pts = chart_points(data->base, d.data.data() + b * kChartOutputs, data->samples[b]);
      const auto& gt = data->targets[b];
      const auto fwd = nearest(pts, gt);
      const auto bwd = nearest(gt, pts);
      total += std::accumulate(fwd.d2.begin(), fwd.d2.end(), 0.0) / pts.size() +
               std::accumulate(bwd.d2.begin(), bwd.d2.end(), 0.0) / gt.size();
    }
    return Tensor<T>::scalar(static_cast<T>(total / data->targets.size()));
  };
  op.vjp = [data, check](const typename ad::CustomOp<T>::Inputs& in, const Tensor<T>&, const Tensor<T>& grad_out) {
    const Tensor<T>& d = *in[0];
    check(d);
    Tensor<T> grad(d.shape);
    const double g = static_cast<double>(grad_out[0]) / data->targets.size();
    for (std::size_t b = 0; b < data->targets.size(); ++b) {
      const auto& samples = data->samples[b];
      const auto pts = chart_points(data->base, d.data.data() + b * kChartOutputs, samples);
      const auto& gt = data->targets[b];
      const auto fwd = nearest(pts, gt);
      const auto bwd = nearest(gt, pts);
      std::vector<Vec3> dp(pts.size(), Vec3::Zero());
      for (std::size_t i = 0; i < pts.size(); ++i) dp[i] += (2.0 / pts.size()) * (pts[i] - gt[fwd.idx[i]]);
      for (std::size_t j = 0; j < gt.size(); ++j) dp[bwd.idx[j]] += (2.0 / gt.size()) * (pts[bwd.idx[j]] - gt[j]);
      T* out = grad.data.data() + b * kChartOutputs;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& f = data->base.faces[samples[i].face];
        const double w[3] = {samples[i].w0, samples[i].w1, samples[i].w2};
        for (int k = 0; k < 3; ++k) {
          for (int a = 0; a < 3; ++a) out[3 * f[k] + a] += static_cast<T>(g * w[k] * dp[i][a]);
        }
      }
    }
    return std::vector<Tensor<T>>{grad};
  };
  return op;
}

template ad::CustomOp<float> chart_chamfer_op<float>(const BaseChart&, std::vector<std::vector<Vec3>>,
                                                     std::vector<std::vector<ChartSample>>);
template ad::CustomOp<double> chart_chamfer_op<double>(const BaseChart&, std::vector<std::vector<Vec3>>,
                                                       std::vector<std::vector<ChartSample>>);

double chart_loss(const ChartModel& model, const std::vector<touch::TouchRecord>& records,
                  std::size_t samples_per_chart, std::uint64_t seed) {
  if (records.empty()) throw EmptyDataset("no touch records");
  std::vector<const touch::TactileImage*> images;
  for (const auto& r : records) images.push_back(&r.image);
  const auto disp = displacements(model, stack_images(images, model.config.input_resolution));
  const BaseChart base = BaseChart::make(model.config.footprint_radius);
  double total = 0.0;
  for (std::size_t b = 0; b < records.size(); ++b) {
    const auto pts = chart_points(base, disp.data.data() + b * kChartOutputs,
                                  draw_chart_samples(samples_per_chart, mix_seed(seed, b)));
    const auto gt = to_sensor(records[b]);
    const auto fwd = nearest(pts, gt);
    const auto bwd = nearest(gt, pts);
    total += std::accumulate(fwd.d2.begin(), fwd.d2.end(), 0.0) / pts.size() +
             std::accumulate(bwd.d2.begin(), bwd.d2.end(), 0.0) / gt.size();
  }
  return total / records.size();
}

ChartTrainResult train_chart(ChartModel& model, const std::vector<touch::TouchRecord>& records,
                             const ChartTrainConfig& cfg, const std::vector<touch::TouchRecord>& validation) {
  if (records.empty()) throw EmptyDataset("no touch records to train the chart predictor");
  if (cfg.batch_size == 0 || cfg.samples_per_chart == 0) throw ConfigError("chart batch_size and samples must be >= 1");
  model.config.validate();
  for (const auto& r : records) {
    if (r.local_cloud.empty()) throw EmptyCloud("touch record without ground-truth cloud");
  }

  const std::uint32_t res = model.config.input_resolution;
  const std::size_t in_dim = static_cast<std::size_t>(res) * res;
  std::vector<std::vector<float>> inputs;
  std::vector<std::vector<Vec3>> targets;
  for (const auto& r : records) {
    inputs.push_back(downsample(r.image, res));
    targets.push_back(to_sensor(r));
  }
  const BaseChart base = BaseChart::make(model.config.footprint_radius);

  ad::AdamState<float> adam;
  adam.hyper.lr = cfg.lr;
  Rng order_rng(cfg.seed, 0x6f72646572);
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);

  ChartTrainResult result;
  std::uint64_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng.engine());
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Tensor<float> x({end - start, in_dim});
      std::vector<std::vector<Vec3>> batch_targets;
      std::vector<std::vector<ChartSample>> batch_samples;
      for (std::size_t i = start; i < end; ++i) {
        const auto& row = inputs[order[i]];
        std::copy(row.begin(), row.end(), x.data.begin() + (i - start) * in_dim);
        batch_targets.push_back(targets[order[i]]);
        batch_samples.push_back(draw_chart_samples(cfg.samples_per_chart, mix_seed(cfg.seed, (step << 20) + i)));
      }
      Graph<float> g;
      std::vector<Var> leaves;
      const Var disp = encoder(g, g.constant(std::move(x)), model.params.entries(), model.config.max_displacement(),
                               &leaves);
      const Var loss =
          g.custom({disp}, chart_chamfer_op<float>(base, std::move(batch_targets), std::move(batch_samples)));
      g.backward(loss);
      std::vector<Tensor<float>*> params;
      std::vector<const Tensor<float>*> grads;
      for (std::size_t k = 0; k < leaves.size(); ++k) {
        params.push_back(&model.params.entries()[k].second);
        grads.push_back(&g.grad(leaves[k]));
      }
      adam_step(params, grads, adam);
      epoch_loss += g.value(loss).item();
      ++batches;
      ++step;
    }
    result.loss_history.push_back(epoch_loss / batches);
    if (!validation.empty()) result.val_history.push_back(chart_loss(model, validation, cfg.samples_per_chart, 7));
  }
  return result;
}

AugmentedCloud chart_observation(const std::vector<touch::TouchRecord>& records, const ChartModel& model,
                                 std::uint64_t seed) {
  if (records.empty()) throw EmptyDataset("no touch records for the observation");
  for (const auto& r : records) {
    if (r.shape_id != records.front().shape_id) throw MixedShapes("touch records come from different shapes");
  }
  std::vector<touch::TactileImage> images;
  for (const auto& r : records) images.push_back(r.image);
  const auto charts = predict_charts(model, images);
  AugmentedCloud out;
  const auto& c = model.config;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Vec3 toward = records[i].pose.rotation.col(2);
    out.append(sample_chart_cloud(chart_to_world(charts[i], records[i].pose), c.n_surface, c.m_extra, c.eps,
                                  mix_seed(seed, i), &toward));
  }
  return out;
}

}  // namespace touchsdf::chart
