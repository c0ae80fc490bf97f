#pragma once

// Experiment configuration: plain-text `key = value` lines grouped under
// `[section]` headers. '#' starts a comment. Every key has a default; unknown
// sections or keys are errors.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "touchsdf/chart.hpp"
#include "touchsdf/sdf_decoder.hpp"
#include "touchsdf/touch.hpp"

namespace touchsdf {

// section -> key -> raw value, with the line each key came from.
struct ConfigFile {
  struct Entry {
    std::string value;
    int line = 0;
  };
  std::map<std::string, std::map<std::string, Entry>> sections;

  static ConfigFile parse(std::istream& in);  // throws ParseError
  static ConfigFile load(const std::filesystem::path& path);
};

struct CorpusConfig {
  std::vector<std::string> families{"sphere", "box", "cylinder", "capsule", "box-sphere-union", "box-minus-sphere"};
  std::size_t train = 24;
  std::size_t val = 4;
  std::size_t test = 4;
  std::uint32_t sphere_subdivisions = 4;
  std::uint32_t segments = 64;        // cylinder/capsule tessellation
  std::uint32_t box_subdivisions = 4;
  std::size_t csg_resolution = 96;    // marching-cubes grid for CSG families
};

struct TouchDatasetConfig {
  std::size_t per_shape = 50;
  std::size_t cloud_points = 256;
  std::size_t max_retries = 64;
};

struct SdfDataConfig {
  std::size_t n_surface = 8000;
  std::size_t n_uniform = 8000;
  double sigma_near = 0.05;
};

struct ReconstructionConfig {
  sdf::InferConfig infer;
  sdf::FinetuneConfig finetune;
  std::size_t grid_resolution = 128;
  double grid_half_width = 1.1;
  std::size_t eval_points = 4096;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::vector<std::size_t> touch_counts{1, 10, 20};
  std::size_t seeds_per_shape = 5;

  CorpusConfig corpus;
  touch::SensorSpec sensor;
  TouchDatasetConfig touches;
  chart::ChartConfig chart;
  chart::ChartTrainConfig chart_train;
  SdfDataConfig sdf_data;
  sdf::DecoderConfig decoder;
  sdf::TrainConfigSdf decoder_train;
  ReconstructionConfig reconstruction;

  static ExperimentConfig from_file(const ConfigFile& file);  // throws ConfigError
  static ExperimentConfig load(const std::filesystem::path& path);
  void validate() const;
  // Canonical text of every key, loadable by from_file.
  std::string to_text() const;
  // SHA-256 of to_text(), hex.
  std::string hash() const;
};

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace touchsdf
