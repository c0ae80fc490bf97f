#pragma once

// End-to-end orchestration: procedural corpus, touch datasets, the two
// training stages, reconstructions and the touches-vs-quality experiment.
// Every stage writes a run manifest (config hash + code version) next to its
// outputs; later stages refuse inputs whose manifest disagrees.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "touchsdf/chart.hpp"
#include "touchsdf/checkpoint.hpp"
#include "touchsdf/config.hpp"
#include "touchsdf/metrics.hpp"
#include "touchsdf/sdf_decoder.hpp"
#include "touchsdf/touch.hpp"

namespace touchsdf::pipeline {

const char* code_version();

// Independent seed for one stage of one run: mixes the master seed with a
// stable hash of `stage` and an index.
std::uint64_t stage_seed(std::uint64_t master, std::string_view stage, std::uint64_t index = 0);

// ---- corpus ---------------------------------------------------------------

struct PrimitiveSpec {
  std::string family;
  std::map<std::string, double> params;  // dimensions, CSG placement, rotation quaternion (qw..qz)
  int tessellation = 0;                  // subdivisions, segments or CSG grid resolution
};

// Parameters drawn uniformly from fixed per-family ranges.
PrimitiveSpec sample_primitive(const std::string& family, const CorpusConfig& cfg, std::uint64_t seed);

struct BuiltPrimitive {
  TriangleMesh mesh;      // normalized, watertight
  bool csg_noop = false;  // box-minus-sphere whose sphere misses the box
};

// Throws TessellationFailure for unknown families or non-watertight output.
BuiltPrimitive build_primitive(const PrimitiveSpec& spec);

struct ShapeEntry {
  std::string id;
  std::string family;
  std::string split;  // train | val | test
  PrimitiveSpec spec;
  bool csg_noop = false;
  std::string sha256;  // of the OBJ file
};

struct Corpus {
  std::filesystem::path dir;
  std::vector<ShapeEntry> shapes;

  std::vector<ShapeEntry> split(const std::string& name) const;
  const ShapeEntry& find(const std::string& id) const;
  std::size_t index_of(const std::string& id) const;
  std::filesystem::path mesh_path(const ShapeEntry& shape) const;
  // Loads and checks the file hash against the manifest.
  TriangleMesh load_mesh(const ShapeEntry& shape) const;
};

// Writes shapes/<id>.obj and manifest.tsv under `dir`.
Corpus gen_corpus(const ExperimentConfig& cfg, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

// ---- run manifests ---------------------------------------------------------

void write_run_manifest(const std::filesystem::path& dir, const std::string& command, const ExperimentConfig& cfg,
                        const Sidecar& extra = {});
// Throws ConfigError when the manifest is missing or its config hash or code
// version differ from the current ones.
Sidecar check_run_manifest(const std::filesystem::path& dir, const std::string& command, const ExperimentConfig& cfg);

// ---- touches ----------------------------------------------------------------

// `count` touches; a ray that makes no contact is replaced by the next
// sub-seed, at most `max_retries` times in total (then RetriesExhausted).
std::vector<touch::TouchRecord> collect_touches(const MeshQuery& mesh, const touch::SensorSpec& spec,
                                                std::uint64_t shape_index, std::size_t count,
                                                std::size_t cloud_points, std::size_t max_retries,
                                                std::uint64_t seed, std::size_t* retries = nullptr);

// <id>.ttch for every train and val shape.
void run_touch_dataset(const ExperimentConfig& cfg, const Corpus& corpus, const std::filesystem::path& out_dir,
                       std::ostream* log = nullptr);

// ---- training stages ----------------------------------------------------------

struct ChartStageResult {
  chart::ChartTrainResult history;
  double baseline_val = 0.0;  // untrained validation Chamfer
  double trained_val = 0.0;
};

// Trains on train-split touches, validates on val-split touches; writes
// chart.tprm and chart_loss.csv under `out_dir`.
ChartStageResult run_train_chart(const ExperimentConfig& cfg, const Corpus& corpus,
                                 const std::filesystem::path& touches_dir, const std::filesystem::path& out_dir,
                                 std::ostream* log = nullptr);

// SDF datasets (sdf/<id>.tsdf) for train shapes, then the auto-decoder;
// writes decoder.tprm, latents.tprm and decoder_loss.csv under `out_dir`.
sdf::TrainResult run_train_sdf(const ExperimentConfig& cfg, const Corpus& corpus, const std::filesystem::path& out_dir,
                               std::ostream* log = nullptr);

// ---- reconstruction --------------------------------------------------------

struct Models {
  chart::ChartModel chart;
  sdf::DecoderParams decoder;
};

Models load_models(const std::filesystem::path& models_dir);

struct Reconstruction {
  TriangleMesh mesh;
  metrics::ReportRow row;
  sdf::Observation observation;
  sdf::InferResult latent;
  sdf::FinetuneResult finetune;
};

// k touches (the first k of a per-(shape, seed) sequence, so larger k extends
// smaller k) -> predicted charts -> latent inference -> pivotal fine-tuning
// from the pristine decoder -> marching cubes -> metrics against `gt`.
// With `out_dir`, writes mesh.obj, observation.tsdf, latent.tprm,
// infer_loss.csv, finetune_loss.csv and report.csv there.
Reconstruction run_reconstruction(const ExperimentConfig& cfg, const Models& models, const Corpus& corpus,
                                  const ShapeEntry& shape, std::size_t k, std::uint64_t seed,
                                  const std::filesystem::path* out_dir = nullptr);

struct TrendSummaryLine {
  std::size_t touches = 0;
  std::size_t n = 0;
  double emd_mean = 0.0, emd_std = 0.0;
  double cd_mean = 0.0, cd_std = 0.0;
};

struct TrendSummary {
  std::vector<TrendSummaryLine> lines;
  // Shapes whose seed-mean EMD at the largest count beats the smallest count.
  std::size_t improved_shapes = 0;
  std::size_t shapes = 0;
  bool strictly_decreasing = false;
};

TrendSummary summarize(const std::vector<metrics::ReportRow>& rows);
void write_summary(std::ostream& out, const TrendSummary& summary);

// Test shapes x touch counts x seeds; writes trend.csv and trend_summary.txt
// plus per-run artifacts under out_dir/runs.
std::vector<metrics::ReportRow> run_trend_experiment(const ExperimentConfig& cfg, const Models& models,
                                                     const Corpus& corpus, const std::filesystem::path& out_dir,
                                                     std::ostream* log = nullptr);

}  // namespace touchsdf::pipeline
