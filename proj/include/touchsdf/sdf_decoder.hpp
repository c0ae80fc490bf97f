#pragma once

// Latent-conditioned SDF decoder (auto-decoder): f(gamma(x), z) -> s.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "touchsdf/autodiff.hpp"
#include "touchsdf/checkpoint.hpp"
#include "touchsdf/geometry.hpp"
#include "touchsdf/isosurface.hpp"

namespace touchsdf::sdf {

struct PosEnc {
  std::size_t L = 6;
  bool include_input = true;
  // Coordinates are scaled before the sinusoids. The k = 0 term has period 2,
  // so at scale 1 opposite faces of the [-1.1, 1.1] sampling cube share
  // features; 0.5 keeps the whole cube inside one period.
  double scale = 0.5;

  std::size_t dim() const { return 3 * (2 * L + (include_input ? 1 : 0)); }
};

// Per axis: [v], then sin(2^k pi scale v), cos(2^k pi scale v) for k = 0..L-1, axes
// concatenated x, y, z.
std::vector<double> positional_encode(const Vec3& x, const PosEnc& enc);

struct DecoderConfig {
  PosEnc enc;
  std::size_t latent_dim = 32;
  std::size_t hidden_layers = 4;
  std::size_t width = 128;
  // 1-based hidden layer that also receives the encoder input; 0 disables.
  std::size_t skip_layer = 3;
  double delta = 0.1;
  bool clamp = true;

  std::size_t input_dim() const { return enc.dim() + latent_dim; }
  void validate() const;
};

struct LatentCode {
  std::vector<float> z;
  std::string shape_id;
};

struct DecoderParams {
  DecoderConfig config;
  ad::ParameterSet<float> params;  // layer{k}.w [in,out], layer{k}.b [out]

  static DecoderParams init(const DecoderConfig& config, std::uint64_t seed);

  // Writes the TPRM file plus a "<path>.meta" sidecar; `extra` entries are
  // appended to the sidecar (e.g. per-shape normalization).
  void save(const std::filesystem::path& path, const Sidecar& extra = {}) const;
  static DecoderParams load(const std::filesystem::path& path, Sidecar* meta = nullptr);
};

void save_latents(const std::filesystem::path& path, const std::vector<LatentCode>& latents);
std::vector<LatentCode> load_latents(const std::filesystem::path& path);

struct TrainConfigSdf {
  double alpha = 1e-4;
  double lr_theta = 1e-3;
  double lr_z = 1e-3;
  std::size_t epochs = 1000;
  std::size_t shapes_per_batch = 8;
  std::size_t points_per_shape = 1024;
  std::size_t decay_every = 400;  // epochs between lr halvings; 0 keeps lr constant
  double data_weight = 1.0;     // weight on the L1 term; 1 is the plain objective
  std::uint64_t seed = 0;

  void validate() const;
};

struct ShapeSamples {
  std::string shape_id;
  std::vector<SdfSample> samples;
};

struct TrainResult {
  DecoderParams params;
  std::vector<LatentCode> latents;
  std::vector<double> loss_history;  // per-epoch mean loss
};

// Joint optimization of theta and one latent per shape on
//   data_weight * mean |clamp(f) - clamp(s)| + alpha * sum_i |z_i|^2
// over mini-batches of shapes. Throws EmptyDataset.
TrainResult train_decoder(const std::vector<ShapeSamples>& shapes, const DecoderConfig& config,
                          const TrainConfigSdf& cfg);

// Scalar prediction (clamped to [-delta, delta] when clamping is on).
double decode(const DecoderParams& params, const std::vector<float>& z, const Vec3& x);
std::vector<double> decode(const DecoderParams& params, const std::vector<float>& z, const std::vector<Vec3>& xs);

struct Observation {
  std::vector<SdfSample> samples;
};

struct InferConfig {
  std::size_t steps = 800;
  double lr = 5e-3;
  double alpha = 1e-4;
  std::size_t batch = 8192;  // points per step; whole observation when smaller
  double init_std = 0.01;
  std::uint64_t seed = 0;
};

struct FinetuneConfig {
  std::size_t steps = 200;
  double lr = 1e-5;
  std::size_t batch = 8192;
  std::uint64_t seed = 0;
};

struct InferResult {
  LatentCode z;
  std::vector<double> loss_history;  // loss of the iterate before each step
  double best_loss = 0.0;
};

// theta frozen; z ~ N(0, init_std^2) then Adam on the objective restricted to
// the observation. Returns the best-loss iterate. The observation is
// canonically ordered first, so permuting it does not change the result.
// Throws EmptyObservation.
InferResult infer_latent(const DecoderParams& params, const Observation& obs, const InferConfig& cfg);

struct FinetuneResult {
  DecoderParams params;
  std::vector<double> loss_history;
  double loss_before = 0.0;
  double loss_after = 0.0;
};

// z frozen; small-lr Adam on theta. Returns the best iterate, so the
// observation loss never increases.
FinetuneResult finetune_pivotal(const DecoderParams& params, const LatentCode& z, const Observation& obs,
                                const FinetuneConfig& cfg);

// Full-observation objective (data term only when alpha = 0).
double observation_loss(const DecoderParams& params, const std::vector<float>& z, const Observation& obs,
                        double alpha = 0.0);

iso::BatchField reconstruct_sdf(const DecoderParams& params, const LatentCode& z);

// Loss graph pieces exposed for gradient checks.
template <typename T>
struct LossGraph {
  ad::Var loss;
  ad::Var data_term;
  ad::Var reg_term;
  ad::Var prediction;
  std::vector<ad::Var> theta;
  ad::Var latents;
};

// Batch of points from several shapes; `encoded` is [N, enc.dim()],
// `targets` [N, 1], `rows[i]` the latent-table row of point i, `shapes` the
// distinct rows present (regularized once each).
template <typename T>
struct Batch {
  ad::Tensor<T> encoded;
  ad::Tensor<T> targets;
  std::vector<std::size_t> rows;
  std::vector<std::size_t> shapes;
};

template <typename T>
Batch<T> make_batch(const DecoderConfig& config, const std::vector<SdfSample>& samples,
                    const std::vector<std::size_t>& rows);

template <typename T>
LossGraph<T> build_loss(ad::Graph<T>& g, const DecoderConfig& config,
                        std::vector<std::pair<std::string, ad::Tensor<T>>>& theta, bool train_theta,
                        ad::Tensor<T>* latent_table, bool train_z, const Batch<T>& batch, double alpha,
                        double data_weight = 1.0);

}  // namespace touchsdf::sdf
