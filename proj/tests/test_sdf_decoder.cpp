#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <cstring>
#include <limits>
#include <numeric>

#include "touchsdf/primitives.hpp"
#include "touchsdf/rng.hpp"
#include "touchsdf/sdf_dataset.hpp"
#include "touchsdf/sdf_decoder.hpp"

using namespace touchsdf;
using namespace touchsdf::sdf;

namespace {

DecoderConfig tiny_config() {
  DecoderConfig c;
  c.enc.L = 2;
  c.latent_dim = 4;
  c.hidden_layers = 3;
  c.width = 6;
  c.skip_layer = 2;
  return c;
}

DecoderConfig small_config() {
  DecoderConfig c;
  c.width = 64;
  return c;
}

double norm(const std::vector<float>& z) {
  double s = 0.0;
  for (float v : z) s += double(v) * v;
  return std::sqrt(s);
}

double clamp_l1(const DecoderParams& p, const std::vector<float>& z, const std::vector<SdfSample>& samples) {
  std::vector<Vec3> xs;
  for (const auto& s : samples) xs.push_back(s.x);
  const auto pred = decode(p, z, xs);
  const double d = p.config.delta;
  double e = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) e += std::abs(pred[i] - std::clamp(samples[i].s, -d, d));
  return e / samples.size();
}

// Sphere, an identical sphere with its own samples, a box and a cylinder,
// trained once and shared by the slower tests.
struct Trained {
  std::vector<TriangleMesh> meshes;
  std::vector<ShapeSamples> data;
  TrainResult result;
};

const Trained& trained() {
  static const Trained t = [] {
    Trained t;
    t.meshes = {shapes::icosphere(0.6, 3), shapes::icosphere(0.6, 3), shapes::box(Vec3(0.5, 0.4, 0.3), 3),
                shapes::cylinder(0.35, 0.55, 32)};
    for (std::size_t i = 0; i < t.meshes.size(); ++i) {
      t.data.push_back({"shape" + std::to_string(i), generate_sdf_dataset(t.meshes[i], 2000, 2000, 0.05, 10 + i)});
    }
    TrainConfigSdf cfg;
    cfg.epochs = 400;
    cfg.shapes_per_batch = 4;
    cfg.points_per_shape = 1024;
    cfg.decay_every = 200;
    cfg.seed = 3;
    t.result = train_decoder(t.data, small_config(), cfg);
    return t;
  }();
  return t;
}

}  // namespace

TEST(PosEnc, DimensionAndLayout) {
  PosEnc enc{6, true};
  EXPECT_EQ(enc.dim(), 39u);
  EXPECT_EQ((PosEnc{6, false}).dim(), 36u);
  EXPECT_EQ((PosEnc{0, true}).dim(), 3u);
  const auto e = positional_encode(Vec3(0.25, -0.5, 0.0), PosEnc{2, true, 1.0});
  ASSERT_EQ(e.size(), 15u);
  const double pi = 3.14159265358979323846;
  const std::vector<double> x_axis{0.25, std::sin(pi * 0.25), std::cos(pi * 0.25), std::sin(2 * pi * 0.25),
                                   std::cos(2 * pi * 0.25)};
  for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(e[i], x_axis[i]);
  EXPECT_DOUBLE_EQ(e[5], -0.5);
  EXPECT_DOUBLE_EQ(e[10], 0.0);
  EXPECT_DOUBLE_EQ(e[11], 0.0);  // sin(0)
  EXPECT_DOUBLE_EQ(e[12], 1.0);  // cos(0)
  // default scale 0.5: x = 1.05 and x = -0.95 must not share features
  const auto a = positional_encode(Vec3(1.05, 0, 0), PosEnc{});
  const auto b = positional_encode(Vec3(-0.95, 0, 0), PosEnc{});
  double diff = 0.0;
  for (std::size_t i = 1; i < 13; ++i) diff += std::abs(a[i] - b[i]);
  EXPECT_GT(diff, 1.0);
}

TEST(Decoder, ConfigValidation) {
  auto c = small_config();
  c.skip_layer = 5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.delta = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.width = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Decoder, ZeroFinalWeightsGiveTheBias) {
  auto p = DecoderParams::init(small_config(), 1);
  const std::string last = "layer" + std::to_string(p.config.hidden_layers);
  for (auto& v : p.params.get(last + ".w").data) v = 0.0f;
  p.params.get(last + ".b").data[0] = 0.0625f;
  Rng rng(5);
  std::vector<float> z(p.config.latent_dim);
  for (auto& v : z) v = static_cast<float>(rng.normal());
  for (int i = 0; i < 20; ++i) {
    const Vec3 x(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    EXPECT_EQ(decode(p, z, x), 0.0625);
  }
}

TEST(Decoder, ClampBoundsTheOutput) {
  auto p = DecoderParams::init(small_config(), 2);
  const std::string last = "layer" + std::to_string(p.config.hidden_layers);
  p.params.get(last + ".b").data[0] = 5.0f;
  std::vector<float> z(p.config.latent_dim, 0.0f);
  EXPECT_NEAR(decode(p, z, Vec3(0.1, 0.2, 0.3)), 0.1, 1e-7);
  p.config.clamp = false;
  EXPECT_GT(decode(p, z, Vec3(0.1, 0.2, 0.3)), 1.0);
}

TEST(Decoder, BatchedEqualsPointwise) {
  const auto p = DecoderParams::init(small_config(), 3);
  Rng rng(6);
  std::vector<float> z(p.config.latent_dim);
  for (auto& v : z) v = static_cast<float>(rng.normal(0.0, 0.3));
  std::vector<Vec3> xs;
  for (int i = 0; i < 300; ++i) xs.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  const auto batched = decode(p, z, xs);
  // GEMM and GEMV kernels round differently in float; agreement is to a few ulp
  for (std::size_t i = 0; i < xs.size(); ++i) EXPECT_NEAR(batched[i], decode(p, z, xs[i]), 1e-6) << i;
}

TEST(Decoder, ReconstructFieldIsDeterministicAndBounded) {
  auto p = DecoderParams::init(small_config(), 4);
  const std::string last = "layer" + std::to_string(p.config.hidden_layers);
  for (auto& v : p.params.get(last + ".w").data) v *= 50.0f;
  LatentCode z{std::vector<float>(p.config.latent_dim, 0.2f), "a"};
  const auto f = reconstruct_sdf(p, z);
  Rng rng(7);
  std::vector<Vec3> xs;
  for (int i = 0; i < 2000; ++i) xs.emplace_back(rng.uniform(-1.1, 1.1), rng.uniform(-1.1, 1.1), rng.uniform(-1.1, 1.1));
  const auto a = f(xs);
  const auto b = f(xs);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, decode(p, z.z, xs));
  for (double v : a) EXPECT_LE(std::abs(v), p.config.delta + 1e-7);
}

TEST(Decoder, LossGraphMatchesFiniteDifferences) {
  const auto config = tiny_config();
  auto theta = DecoderParams::init(config, 8).params.cast<double>();
  Rng rng(9);
  std::vector<SdfSample> samples;
  std::vector<std::size_t> rows;
  for (int i = 0; i < 12; ++i) {
    // targets kept inside (-delta, delta) so the target clamp is inactive
    samples.push_back({Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)), rng.uniform(-0.08, 0.08)});
    rows.push_back(i % 3 == 0 ? 0 : 2);
  }
  ad::Tensor<double> table({3, config.latent_dim});
  for (auto& v : table.data) v = rng.normal(0.0, 0.5);
  // scale the output layer so predictions sit inside the clamp band
  auto& w_last = theta.get("layer3.w");
  for (auto& v : w_last.data) v *= 0.05;
  const auto batch = make_batch<double>(config, samples, rows);
  ad::Graph<double> g;
  const auto lg = build_loss(g, config, theta.entries(), true, &table, true, batch, 0.3);
  const auto r = ad::check_gradients(g, lg.loss, {});
  EXPECT_GT(r.checked, 150u);
  EXPECT_LT(r.max_rel_error, 1e-4);
  // latent row 1 is unused: exactly zero gradient, and only present rows are regularized
  const auto& gz = g.grad(lg.latents);
  for (std::size_t j = 0; j < config.latent_dim; ++j) EXPECT_EQ(gz.data[config.latent_dim + j], 0.0);
}

TEST(Decoder, LossDecomposesIntoDataAndRegularizer) {
  const auto config = tiny_config();
  auto theta = DecoderParams::init(config, 10).params.cast<double>();
  Rng rng(11);
  std::vector<SdfSample> samples;
  for (int i = 0; i < 10; ++i) samples.push_back({Vec3(rng.uniform(-1, 1), 0.1 * i, 0.0), rng.uniform(-0.3, 0.3)});
  ad::Tensor<double> table({2, config.latent_dim});
  for (auto& v : table.data) v = rng.normal();
  const auto batch = make_batch<double>(config, samples, std::vector<std::size_t>(10, 1));
  ad::Graph<double> g;
  const auto plain = build_loss(g, config, theta.entries(), false, &table, false, batch, 0.0);
  const auto reg = build_loss(g, config, theta.entries(), false, &table, false, batch, 2.0);
  double zn = 0.0;
  for (std::size_t j = 0; j < config.latent_dim; ++j) zn += table.at(1, j) * table.at(1, j);
  EXPECT_NEAR(g.value(reg.loss).item(), g.value(plain.loss).item() + 2.0 * zn, 1e-12);
  // data term: mean |clamp(f) - clamp(s)|
  double expect = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    expect += std::abs(g.value(plain.prediction).data[i] - std::clamp(samples[i].s, -0.1, 0.1));
  }
  EXPECT_NEAR(g.value(plain.data_term).item(), expect / samples.size(), 1e-12);
}

TEST(Decoder, PureWeightDecayShrinksLatentsEveryStep) {
  std::vector<ShapeSamples> data{{"a", generate_sdf_dataset(shapes::icosphere(0.5, 2), 100, 100, 0.05, 1)}};
  TrainConfigSdf cfg;
  cfg.alpha = 1e3;
  cfg.data_weight = 0.0;
  cfg.shapes_per_batch = 1;
  cfg.points_per_shape = 64;
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t epochs = 1; epochs <= 6; ++epochs) {
    cfg.epochs = epochs;
    const auto r = train_decoder(data, tiny_config(), cfg);
    const double n = norm(r.latents[0].z);
    EXPECT_LT(n, previous) << epochs;
    previous = n;
  }
}

TEST(Decoder, TrainingErrors) {
  EXPECT_THROW(train_decoder({}, tiny_config(), TrainConfigSdf{}), EmptyDataset);
  EXPECT_THROW(train_decoder({{"a", {}}}, tiny_config(), TrainConfigSdf{}), EmptyDataset);
}

TEST(Decoder, TrainingIsDeterministic) {
  std::vector<ShapeSamples> data{{"a", generate_sdf_dataset(shapes::icosphere(0.5, 2), 200, 100, 0.05, 1)},
                                 {"b", generate_sdf_dataset(shapes::box(Vec3(0.4, 0.3, 0.2)), 200, 100, 0.05, 2)}};
  TrainConfigSdf cfg;
  cfg.epochs = 5;
  cfg.points_per_shape = 128;
  const auto a = train_decoder(data, tiny_config(), cfg);
  const auto b = train_decoder(data, tiny_config(), cfg);
  EXPECT_EQ(a.loss_history, b.loss_history);
  EXPECT_EQ(a.latents[1].z, b.latents[1].z);
  EXPECT_EQ(a.params.params.get("layer0.w").data, b.params.params.get("layer0.w").data);
  EXPECT_EQ(a.latents[1].shape_id, "b");
}

TEST(Decoder, CheckpointAndLatentsRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "touchsdf_decoder_test";
  std::filesystem::create_directories(dir);
  const auto p = DecoderParams::init(tiny_config(), 12);
  p.save(dir / "dec.tprm", {{"note", "x"}});
  Sidecar meta;
  const auto q = DecoderParams::load(dir / "dec.tprm", &meta);
  EXPECT_EQ(q.config.latent_dim, 4u);
  EXPECT_EQ(q.config.skip_layer, 2u);
  EXPECT_EQ(sidecar_get(meta, "note"), "x");
  for (std::size_t i = 0; i < p.params.size(); ++i) {
    EXPECT_EQ(p.params.entries()[i].second.data, q.params.entries()[i].second.data);
  }
  std::vector<LatentCode> zs{{{0.1f, -2.5f, 1e-30f, 3.0f}, "sphere-000"}, {{0.0f, 0.0f, 0.0f, -0.0f}, "box-001"}};
  save_latents(dir / "z.tprm", zs);
  const auto back = load_latents(dir / "z.tprm");
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].shape_id, zs[i].shape_id);
    EXPECT_EQ(std::memcmp(back[i].z.data(), zs[i].z.data(), 4 * sizeof(float)), 0);
  }
  std::filesystem::remove_all(dir);
}

TEST(Inference, EmptyObservation) {
  const auto p = DecoderParams::init(tiny_config(), 1);
  EXPECT_THROW(infer_latent(p, Observation{}, InferConfig{}), EmptyObservation);
}

TEST(Inference, PermutationInvariant) {
  const auto& t = trained();
  Observation obs{std::vector<SdfSample>(t.data[2].samples.begin(), t.data[2].samples.begin() + 300)};
  InferConfig cfg;
  cfg.steps = 30;
  const auto a = infer_latent(t.result.params, obs, cfg);
  std::reverse(obs.samples.begin(), obs.samples.end());
  const auto b = infer_latent(t.result.params, obs, cfg);
  EXPECT_EQ(a.z.z, b.z.z);
  EXPECT_EQ(a.best_loss, b.best_loss);
}

TEST(Inference, RegularizationShrinksTheLatent) {
  const auto& t = trained();
  Observation obs{std::vector<SdfSample>(t.data[3].samples.begin(), t.data[3].samples.begin() + 400)};
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    InferConfig cfg;
    cfg.steps = 150;
    cfg.seed = seed;
    cfg.alpha = 0.0;
    const auto free = infer_latent(t.result.params, obs, cfg);
    cfg.alpha = 1e-4;
    const auto reg = infer_latent(t.result.params, obs, cfg);
    ok += norm(reg.z.z) <= norm(free.z.z);
  }
  EXPECT_EQ(ok, 5);
}

TEST(Trained, SphereSignAccuracy) {
  const auto& t = trained();
  Rng rng(21);
  std::vector<Vec3> xs;
  for (int i = 0; i < 10000; ++i) xs.emplace_back(rng.uniform(-1.1, 1.1), rng.uniform(-1.1, 1.1), rng.uniform(-1.1, 1.1));
  const auto pred = decode(t.result.params, t.result.latents[0].z, xs);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) agree += (pred[i] < 0) == (shapes::sphere_sdf(xs[i], 0.6) < 0);
  EXPECT_GE(agree, 9800u);
}

TEST(Trained, IdenticalShapesGetCloseLatents) {
  const auto& z = trained().result.latents;
  auto dist = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < z[i].z.size(); ++k) s += std::pow(double(z[i].z[k]) - z[j].z[k], 2);
    return std::sqrt(s);
  };
  std::vector<double> distinct{dist(0, 2), dist(0, 3), dist(1, 2), dist(1, 3), dist(2, 3)};
  std::sort(distinct.begin(), distinct.end());
  EXPECT_LT(dist(0, 1), distinct[2]);
}

TEST(Trained, SelfRecoveryFromOwnSamples) {
  const auto& t = trained();
  for (std::size_t s : {0u, 2u, 3u}) {
    const double train_err = clamp_l1(t.result.params, t.result.latents[s].z, t.data[s].samples);
    const auto held_out = generate_sdf_dataset(t.meshes[s], 1000, 1000, 0.05, 500 + s);
    Observation obs;
    for (std::size_t i = 0; i < t.data[s].samples.size(); i += 3) obs.samples.push_back(t.data[s].samples[i]);
    InferConfig cfg;
    cfg.steps = 300;
    const auto r = infer_latent(t.result.params, obs, cfg);
    const double err = clamp_l1(t.result.params, r.z.z, held_out);
    EXPECT_LT(err, 2.0 * train_err) << "shape " << s << " train " << train_err;
    EXPECT_LE(r.best_loss, r.loss_history.front());
  }
}

TEST(Finetune, ZeroStepsLeaveParametersUnchanged) {
  const auto& t = trained();
  Observation obs{std::vector<SdfSample>(t.data[2].samples.begin(), t.data[2].samples.begin() + 200)};
  FinetuneConfig cfg;
  cfg.steps = 0;
  const auto r = finetune_pivotal(t.result.params, t.result.latents[2], obs, cfg);
  for (std::size_t i = 0; i < r.params.params.size(); ++i) {
    const auto& a = r.params.params.entries()[i].second.data;
    const auto& b = t.result.params.params.entries()[i].second.data;
    ASSERT_EQ(a.size(), b.size());
    EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)), 0);
  }
  EXPECT_EQ(r.loss_after, r.loss_before);
}

TEST(Finetune, NeverIncreasesObservationLoss) {
  const auto& t = trained();
  Observation obs{std::vector<SdfSample>(t.data[3].samples.begin(), t.data[3].samples.begin() + 500)};
  InferConfig icfg;
  icfg.steps = 60;
  const auto z = infer_latent(t.result.params, obs, icfg).z;
  for (double lr : {1e-5, 1e-3, 1e-1}) {
    FinetuneConfig cfg;
    cfg.steps = 40;
    cfg.lr = lr;
    const auto r = finetune_pivotal(t.result.params, z, obs, cfg);
    EXPECT_LE(r.loss_after, r.loss_before) << lr;
    EXPECT_NEAR(r.loss_after, observation_loss(r.params, z.z, obs), 1e-6);
  }
}
