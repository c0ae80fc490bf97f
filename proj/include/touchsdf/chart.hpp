#pragma once

// Local chart predictor: tactile image -> displacements of a 5x5 vertex grid
// laid over the sensor footprint, plus the augmented point cloud sampled from
// the deformed chart.

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "touchsdf/autodiff.hpp"
#include "touchsdf/geometry.hpp"
#include "touchsdf/touch.hpp"

namespace touchsdf::chart {

inline constexpr std::size_t kGridSide = 5;
inline constexpr std::size_t kChartVertices = kGridSide * kGridSide;
inline constexpr std::size_t kChartFaces = 2 * (kGridSide - 1) * (kGridSide - 1);
inline constexpr std::size_t kChartOutputs = 3 * kChartVertices;

// Planar grid at z = 0 of the sensor frame spanning [-r, r]^2, wound so face
// normals point along +z (toward the sensor).
struct BaseChart {
  std::array<Vec3, kChartVertices> vertices;
  std::vector<Face> faces;

  static BaseChart make(double footprint_radius);
  TriangleMesh mesh() const;
};

struct ChartConfig {
  double footprint_radius = 0.15;
  std::uint32_t input_resolution = 32;
  std::vector<std::size_t> hidden{256, 256};
  double displacement_scale = 0.5;  // tanh output times this times footprint_radius
  std::size_t n_surface = 128;
  std::size_t m_extra = 64;
  double eps = 0.01;

  double max_displacement() const { return displacement_scale * footprint_radius; }
  void validate() const;
};

struct ChartModel {
  ChartConfig config;
  ad::ParameterSet<float> params;  // layer{k}.w [in,out], layer{k}.b [out]

  // Hidden layers get He-uniform weights; the output layer starts at zero so
  // an untrained model predicts the base chart.
  static ChartModel init(const ChartConfig& config, std::uint64_t seed);
  std::size_t layer_count() const { return config.hidden.size() + 1; }

  void save(const std::filesystem::path& path) const;  // path + ".meta" sidecar
  static ChartModel load(const std::filesystem::path& path);
};

// Bilinear resample (pixel-centre aligned) to res x res, row-major.
std::vector<float> downsample(const touch::TactileImage& image, std::uint32_t res);

// Deformed chart in the sensor frame; faces are BaseChart faces.
TriangleMesh predict_chart(const ChartModel& model, const touch::TactileImage& image);
std::vector<TriangleMesh> predict_charts(const ChartModel& model, const std::vector<touch::TactileImage>& images);

TriangleMesh chart_to_world(const TriangleMesh& chart, const Pose& pose);

struct AugmentedCloud {
  std::vector<Vec3> points;
  std::vector<double> labels;  // 0 on the surface, +eps outside, -eps inside

  std::size_t size() const { return points.size(); }
  void append(const AugmentedCloud& other);
};

// n area-weighted surface samples labelled 0; the first m_extra of them also
// get points at +-eps along the face normal. When `toward` is given, normals
// are flipped to have a non-negative component along it.
AugmentedCloud sample_chart_cloud(const TriangleMesh& chart, std::size_t n, std::size_t m_extra, double eps,
                                  std::uint64_t seed, const Vec3* toward = nullptr);

// Barycentric sample on a chart face, shared by training and evaluation.
struct ChartSample {
  std::uint32_t face;
  double w0, w1, w2;
};
std::vector<ChartSample> draw_chart_samples(std::size_t n, std::uint64_t seed);

// Mean over the batch of the symmetric squared Chamfer distance between the
// sampled points of each deformed chart and its target cloud. Input is the
// [B, 75] displacement tensor. Targets are in the sensor frame.
template <typename T>
ad::CustomOp<T> chart_chamfer_op(const BaseChart& base, std::vector<std::vector<Vec3>> targets,
                                 std::vector<std::vector<ChartSample>> samples);

struct ChartTrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::size_t samples_per_chart = 128;
  std::uint64_t seed = 0;
};

struct ChartTrainResult {
  std::vector<double> loss_history;  // per-epoch mean training loss
  std::vector<double> val_history;   // per-epoch validation Chamfer (empty without validation data)
};

// Trains on records in the sensor frame (Chamfer is rigid-invariant, so this
// equals the world-frame loss). Throws EmptyDataset.
ChartTrainResult train_chart(ChartModel& model, const std::vector<touch::TouchRecord>& records,
                             const ChartTrainConfig& cfg, const std::vector<touch::TouchRecord>& validation = {});

// Mean Chamfer between predicted chart samples and ground-truth clouds.
double chart_loss(const ChartModel& model, const std::vector<touch::TouchRecord>& records,
                  std::size_t samples_per_chart, std::uint64_t seed);

// Union of per-touch augmented clouds in the world frame. Throws MixedShapes
// and EmptyDataset.
AugmentedCloud chart_observation(const std::vector<touch::TouchRecord>& records, const ChartModel& model,
                                 std::uint64_t seed);

}  // namespace touchsdf::chart
