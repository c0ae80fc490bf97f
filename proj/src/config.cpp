#include "touchsdf/config.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "touchsdf/checkpoint.hpp"

namespace touchsdf {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::uint64_t to_uint(const std::string& s) {
  std::size_t used = 0;
  if (s.empty() || s[0] == '-') throw ConfigError("expected a non-negative integer, got '" + s + "'");
  const auto v = std::stoull(s, &used);
  if (used != s.size()) throw ConfigError("expected a non-negative integer, got '" + s + "'");
  return v;
}

double to_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError("expected a number, got '" + s + "'");
  }
  if (used != s.size()) throw ConfigError("expected a number, got '" + s + "'");
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("expected a boolean, got '" + s + "'");
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

template <typename T>
std::string join_numbers(const std::vector<T>& items) {
  std::vector<std::string> s;
  for (auto v : items) s.push_back(std::to_string(v));
  return join(s);
}

struct Field {
  std::string section;
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

template <typename T>
Field uint_field(const std::string& sec, const std::string& key, T& ref) {
  return {sec, key, [&ref](const std::string& v) { ref = static_cast<T>(to_uint(v)); },
          [&ref] { return std::to_string(ref); }};
}

Field double_field(const std::string& sec, const std::string& key, double& ref) {
  return {sec, key, [&ref](const std::string& v) { ref = to_double(v); }, [&ref] { return format_double(ref); }};
}

Field bool_field(const std::string& sec, const std::string& key, bool& ref) {
  return {sec, key, [&ref](const std::string& v) { ref = to_bool(v); },
          [&ref] { return std::string(ref ? "true" : "false"); }};
}

Field size_list_field(const std::string& sec, const std::string& key, std::vector<std::size_t>& ref) {
  return {sec, key,
          [&ref](const std::string& v) {
            ref.clear();
            for (const auto& item : split_list(v)) ref.push_back(to_uint(item));
          },
          [&ref] { return join_numbers(ref); }};
}

std::vector<Field> fields(ExperimentConfig& c) {
  std::vector<Field> f;
  f.push_back(uint_field("experiment", "seed", c.seed));
  f.push_back(size_list_field("experiment", "touch_counts", c.touch_counts));
  f.push_back(uint_field("experiment", "seeds_per_shape", c.seeds_per_shape));

  f.push_back({"corpus", "families", [&c](const std::string& v) { c.corpus.families = split_list(v); },
               [&c] { return join(c.corpus.families); }});
  f.push_back(uint_field("corpus", "train", c.corpus.train));
  f.push_back(uint_field("corpus", "val", c.corpus.val));
  f.push_back(uint_field("corpus", "test", c.corpus.test));
  f.push_back(uint_field("corpus", "sphere_subdivisions", c.corpus.sphere_subdivisions));
  f.push_back(uint_field("corpus", "segments", c.corpus.segments));
  f.push_back(uint_field("corpus", "box_subdivisions", c.corpus.box_subdivisions));
  f.push_back(uint_field("corpus", "csg_resolution", c.corpus.csg_resolution));

  f.push_back(double_field("sensor", "footprint_radius", c.sensor.footprint_radius));
  f.push_back(uint_field("sensor", "image_size", c.sensor.image_size));
  f.push_back(double_field("sensor", "max_press_depth", c.sensor.max_press_depth));
  f.push_back(double_field("sensor", "intensity_threshold", c.sensor.intensity_threshold));
  f.push_back(double_field("sensor", "step", c.sensor.step));

  f.push_back(uint_field("touches", "per_shape", c.touches.per_shape));
  f.push_back(uint_field("touches", "cloud_points", c.touches.cloud_points));
  f.push_back(uint_field("touches", "max_retries", c.touches.max_retries));

  f.push_back(uint_field("chart", "input_resolution", c.chart.input_resolution));
  f.push_back(size_list_field("chart", "hidden", c.chart.hidden));
  f.push_back(double_field("chart", "displacement_scale", c.chart.displacement_scale));
  f.push_back(uint_field("chart", "n_surface", c.chart.n_surface));
  f.push_back(uint_field("chart", "m_extra", c.chart.m_extra));
  f.push_back(double_field("chart", "eps", c.chart.eps));
  f.push_back(uint_field("chart", "epochs", c.chart_train.epochs));
  f.push_back(uint_field("chart", "batch_size", c.chart_train.batch_size));
  f.push_back(double_field("chart", "lr", c.chart_train.lr));
  f.push_back(uint_field("chart", "samples_per_chart", c.chart_train.samples_per_chart));

  f.push_back(uint_field("sdf_data", "n_surface", c.sdf_data.n_surface));
  f.push_back(uint_field("sdf_data", "n_uniform", c.sdf_data.n_uniform));
  f.push_back(double_field("sdf_data", "sigma_near", c.sdf_data.sigma_near));

  f.push_back(uint_field("decoder", "L", c.decoder.enc.L));
  f.push_back(bool_field("decoder", "include_input", c.decoder.enc.include_input));
  f.push_back(double_field("decoder", "encoding_scale", c.decoder.enc.scale));
  f.push_back(uint_field("decoder", "latent_dim", c.decoder.latent_dim));
  f.push_back(uint_field("decoder", "hidden_layers", c.decoder.hidden_layers));
  f.push_back(uint_field("decoder", "width", c.decoder.width));
  f.push_back(uint_field("decoder", "skip_layer", c.decoder.skip_layer));
  f.push_back(double_field("decoder", "delta", c.decoder.delta));
  f.push_back(bool_field("decoder", "clamp", c.decoder.clamp));
  f.push_back(double_field("decoder", "alpha", c.decoder_train.alpha));
  f.push_back(double_field("decoder", "lr_theta", c.decoder_train.lr_theta));
  f.push_back(double_field("decoder", "lr_z", c.decoder_train.lr_z));
  f.push_back(uint_field("decoder", "epochs", c.decoder_train.epochs));
  f.push_back(uint_field("decoder", "shapes_per_batch", c.decoder_train.shapes_per_batch));
  f.push_back(uint_field("decoder", "points_per_shape", c.decoder_train.points_per_shape));
  f.push_back(uint_field("decoder", "decay_every", c.decoder_train.decay_every));

  auto& r = c.reconstruction;
  f.push_back(uint_field("reconstruction", "infer_steps", r.infer.steps));
  f.push_back(double_field("reconstruction", "infer_lr", r.infer.lr));
  f.push_back(uint_field("reconstruction", "infer_batch", r.infer.batch));
  f.push_back(double_field("reconstruction", "init_std", r.infer.init_std));
  f.push_back(uint_field("reconstruction", "finetune_steps", r.finetune.steps));
  f.push_back(double_field("reconstruction", "finetune_lr", r.finetune.lr));
  f.push_back(uint_field("reconstruction", "finetune_batch", r.finetune.batch));
  f.push_back(uint_field("reconstruction", "grid_resolution", r.grid_resolution));
  f.push_back(double_field("reconstruction", "grid_half_width", r.grid_half_width));
  f.push_back(uint_field("reconstruction", "eval_points", r.eval_points));
  return f;
}

}  // namespace

ConfigFile ConfigFile::parse(std::istream& in) {
  ConfigFile file;
  std::string line;
  std::string section;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("line " + std::to_string(number) + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ParseError("line " + std::to_string(number) + ": empty section name");
      file.sections[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("line " + std::to_string(number) + ": expected key = value");
    if (section.empty()) throw ParseError("line " + std::to_string(number) + ": key outside of any section");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError("line " + std::to_string(number) + ": empty key");
    auto& sec = file.sections[section];
    if (sec.count(key)) throw ParseError("line " + std::to_string(number) + ": duplicate key " + section + "." + key);
    sec[key] = {trim(line.substr(eq + 1)), number};
  }
  return file;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse(in);
}

ExperimentConfig ExperimentConfig::from_file(const ConfigFile& file) {
  ExperimentConfig c;
  auto table = fields(c);
  std::set<std::string> sections;
  for (const auto& f : table) sections.insert(f.section);
  for (const auto& [section, keys] : file.sections) {
    if (!sections.count(section)) throw ConfigError("unknown config section [" + section + "]");
    for (const auto& [key, entry] : keys) {
      auto it = std::find_if(table.begin(), table.end(),
                             [&](const Field& f) { return f.section == section && f.key == key; });
      if (it == table.end()) {
        throw ConfigError("line " + std::to_string(entry.line) + ": unknown key " + section + "." + key);
      }
      try {
        it->set(entry.value);
      } catch (const ConfigError& e) {
        throw ConfigError("line " + std::to_string(entry.line) + ": " + section + "." + key + ": " + e.what());
      } catch (const std::exception& e) {
        throw ConfigError("line " + std::to_string(entry.line) + ": " + section + "." + key + ": bad value '" +
                          entry.value + "'");
      }
    }
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) { return from_file(ConfigFile::load(path)); }

void ExperimentConfig::validate() const {
  if (touch_counts.empty()) throw ConfigError("touch_counts must not be empty");
  for (std::size_t i = 0; i < touch_counts.size(); ++i) {
    if (touch_counts[i] == 0) throw ConfigError("touch counts must be >= 1");
    if (i > 0 && touch_counts[i] <= touch_counts[i - 1]) throw ConfigError("touch_counts must be strictly increasing");
  }
  if (seeds_per_shape == 0) throw ConfigError("seeds_per_shape must be >= 1");
  static const std::set<std::string> known{"sphere", "box", "cylinder", "capsule", "box-sphere-union",
                                           "box-minus-sphere"};
  if (corpus.families.empty()) throw ConfigError("corpus.families must not be empty");
  for (const auto& fam : corpus.families) {
    if (!known.count(fam)) throw ConfigError("unknown primitive family " + fam);
  }
  if (corpus.train == 0) throw ConfigError("corpus.train must be >= 1");
  if (corpus.segments < 3) throw ConfigError("corpus.segments must be >= 3");
  if (corpus.csg_resolution < 8) throw ConfigError("corpus.csg_resolution must be >= 8");
  try {
    sensor.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("sensor: ") + e.what());
  }
  if (touches.per_shape == 0 || touches.cloud_points == 0) throw ConfigError("touches counts must be >= 1");
  chart.validate();
  if (std::abs(chart.footprint_radius - sensor.footprint_radius) > 0) {
    throw ConfigError("chart footprint must match the sensor footprint");
  }
  if (chart_train.batch_size == 0 || chart_train.samples_per_chart == 0) throw ConfigError("chart batch sizes must be >= 1");
  if (sdf_data.n_surface + sdf_data.n_uniform == 0) throw ConfigError("sdf_data needs samples");
  if (!(sdf_data.sigma_near >= 0.0)) throw ConfigError("sdf_data.sigma_near must be >= 0");
  decoder.validate();
  decoder_train.validate();
  if (reconstruction.grid_resolution < 8) throw ConfigError("reconstruction.grid_resolution must be >= 8");
  if (!(reconstruction.grid_half_width > 0.0)) throw ConfigError("reconstruction.grid_half_width must be > 0");
  if (reconstruction.eval_points == 0) throw ConfigError("reconstruction.eval_points must be >= 1");
}

std::string ExperimentConfig::to_text() const {
  ExperimentConfig copy = *this;
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields(copy)) {
    if (f.section != section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << " = " << f.get() << '\n';
  }
  return out.str();
}

std::string ExperimentConfig::hash() const { return sha256_hex(to_text()); }

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("sha256 failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

}  // namespace touchsdf
